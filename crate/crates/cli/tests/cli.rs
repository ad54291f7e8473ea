use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cube_mixer::experiments::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cube-mixer"));
    c.env_remove("CUBE_MIXER_WORKERS").env_remove("CUBE_MIXER_MODE");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cube-mixer-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn runs_and_writes_sidecar() {
    let dir = scratch("sidecar");
    let cfg = write_config(
        &dir,
        r#"{"parameters": {"n_grid": [4, 8], "law": {"type": "subset_uniform", "z": 2}, "t_grid": [1, 2, 3]}}"#,
    );
    let out = dir.join("curve.csv");
    let o = bin()
        .args(["chi2-curve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2", "--mode", "exact"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("n,law,start,metric,t,value,ln_value,formula\n"));
    assert_eq!(csv.lines().count(), 7);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("curve.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["mode"], "exact");
    assert_eq!(side["rows"], 6);

    // Same config, other worker count and mode from the environment.
    let out2 = dir.join("curve2.csv");
    let o = bin()
        .args(["chi2-curve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out2)
        .env("CUBE_MIXER_WORKERS", "1")
        .env("CUBE_MIXER_MODE", "exact")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
    assert_eq!(fs::read(dir.join("curve.json")).unwrap(), fs::read(dir.join("curve2.json")).unwrap());
}

#[test]
fn stdout_without_out() {
    let dir = scratch("stdout");
    let cfg = write_config(
        &dir,
        r#"{"scenario": "spectrum", "parameters": {"n": 2, "p": "1/2", "law": {"type": "subset_uniform", "z": 1}}}"#,
    );
    let o = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("kind,index,size,multiplicity,rho"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    let bad = write_config(&dir, r#"{"parameters": {"n": 4, "law": {"type": "never"}, "wat": 1}}"#);
    let o = bin().args(["spectrum", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("parameters.wat"));

    let o = bin().args(["spectrum", "--config", "/nonexistent/cfg.json"]).output().unwrap();
    assert_eq!(code(&o), 2);

    let o = bin().args(["nonsense", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);

    let big = write_config(&dir, r#"{"parameters": {"n": 20, "law": {"type": "subset_uniform", "z": 1}}}"#);
    let o = bin().args(["kernel", "--config"]).arg(&big).output().unwrap();
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    let mode = write_config(&dir, r#"{"parameters": {"n": 3, "law": {"type": "never"}}}"#);
    let o = bin().args(["spectrum", "--mode", "quad", "--config"]).arg(&mode).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_passes_on_small_grid() {
    let dir = scratch("verify");
    let cfg = write_config(&dir, r#"{"parameters": {"n_grid": [1, 2, 3], "t_max": 2}}"#);
    let o = bin().args(["verify", "--seed", "3", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(!text.contains(",false,"));
}

#[test]
fn describe_flag() {
    let o = bin().arg("--describe").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["verify:", "cutoff-scan:", "simulate:", "tv_within_bound"] {
        assert!(text.contains(name), "{name}");
    }
    let o = bin().args(["mixing-time", "--describe"]).output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("mixing-time:"));
    assert!(!text.contains("simulate:"));
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            cube_mixer_config_check(&text, &path);
            seen += 1;
        }
    }
    assert!(seen >= 12);
}

fn cube_mixer_config_check(text: &str, path: &Path) {
    let cfg = ExperimentConfig::from_json(text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let sc = cfg.scenario(None).unwrap();
    for key in cfg.parameters.keys() {
        assert!(sc.keys().contains(&key.as_str()), "{}: {key}", path.display());
    }
}
