use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use cube_mixer::experiments::{describe, run_scenario, ExperimentConfig, Output, Overrides, Scenario};
use cube_mixer::simulate::with_pool;
use cube_mixer::{Error, Result};

/// Spectral mixing experiments for acceptance/rejection walks on {0,1}^N.
///
/// Exit codes: 0 success, 2 config error, 3 verification failure,
/// 4 capacity error, 1 anything else.
#[derive(Debug, Parser)]
#[command(name = "cube-mixer", version)]
struct Cli {
    /// Scenario to run (see --describe).
    scenario: Option<String>,

    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// CSV output; the JSON sidecar goes next to it. Defaults to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for grid cells and trajectories.
    #[arg(long, env = "CUBE_MIXER_WORKERS")]
    workers: Option<usize>,

    /// Scalar backend: exact or logfloat.
    #[arg(long, env = "CUBE_MIXER_MODE")]
    mode: Option<String>,

    /// Seed for scenarios that draw random numbers.
    #[arg(long)]
    seed: Option<u64>,

    /// Print the parameters and CSV columns of each scenario, then exit.
    #[arg(long)]
    describe: bool,
}

/// `results.csv` -> `results.json`; a `.json` output gets `.meta.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        out.with_extension("meta.json")
    } else {
        out.with_extension("json")
    }
}

fn write_outputs(output: &Output, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            output.write_csv(fs::File::create(path)?)?;
            fs::write(sidecar_path(path), output.sidecar()?)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            output.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let requested = cli.scenario.as_deref().map(str::parse::<Scenario>).transpose()?;
    if cli.describe {
        print!("{}", describe(requested));
        return Ok(());
    }
    let path = cli.config.ok_or_else(|| Error::config("--config", "required"))?;
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
    let config = ExperimentConfig::from_json(&text)?;
    let scenario = config.scenario(requested)?;
    let overrides = Overrides {
        mode: cli.mode,
        seed: cli.seed,
    };
    let workers = match cli.workers {
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let output = with_pool(workers, || run_scenario(scenario, &config, &overrides))?;
    let out = cli.out.or_else(|| config.output.as_ref().map(PathBuf::from));
    write_outputs(&output, out.as_deref())?;
    if let Some(o) = &out {
        eprintln!("{scenario}: {} rows -> {}", output.rows.len(), o.display());
    }
    if output.failures > 0 {
        return Err(Error::Verification(format!("{} of {} checks failed", output.failures, output.rows.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cube-mixer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
