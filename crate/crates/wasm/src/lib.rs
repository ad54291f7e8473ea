//! Bindings behind `www/index.html`. Every export returns a JSON string, or
//! an error message the page shows as is.

use serde_json::json;
use wasm_bindgen::prelude::*;

use cube_mixer::distances::{cutoff_window, distance_curve, Metric, Start};
use cube_mixer::experiments::exact_weight_law;
use cube_mixer::numerics::{parse_rational, SignedLogReal};
use cube_mixer::process::{ProcessSpec, UpdateLaw};
use cube_mixer::simulate::{compare_exact, run, tv_threshold, SimConfig};

/// Largest dimension the page accepts.
pub const MAX_N: u32 = 4096;
const MAX_POINTS: u32 = 2000;
const MAX_TRAJECTORIES: u32 = 200_000;

fn spec(n: u32, p: &str, z: u32) -> Result<ProcessSpec, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("N must lie in 1..={MAX_N}"));
    }
    let r = parse_rational(p).map_err(|e| e.to_string())?;
    let p = r.to_rational64().ok_or_else(|| format!("p = {r} has too many digits"))?;
    ProcessSpec::new(n as u64, p, UpdateLaw::SubsetUniform { z: z as u64 }).map_err(|e| e.to_string())
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

/// Distance from the origin at `t = 0, step, 2 step, ...` up to `t_max`.
/// `metric` is one of `chi2_full`, `chi2_hamming`, `tv_hamming`,
/// `tv_upper_bound`.
#[wasm_bindgen]
pub fn mixing_curve(n: u32, p: &str, z: u32, metric: &str, t_max: u32, step: u32) -> Result<String, String> {
    let s = spec(n, p, z)?;
    let metric: Metric = metric.parse().map_err(|e: cube_mixer::Error| e.to_string())?;
    if metric == Metric::TvFull && n > 12 {
        return Err("full TV is limited to N <= 12 here; use tv_hamming".into());
    }
    let step = step.max(1);
    if t_max / step > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} points; raise the step"));
    }
    let ts: Vec<u64> = (0..=t_max as u64).step_by(step as usize).collect();
    let curve = distance_curve::<SignedLogReal>(&s, metric, &Start::Weight(0), &ts).map_err(|e| e.to_string())?;
    let reference = n as f64 * s.p_f64() / (2.0 * z as f64) * (n as f64).ln();
    Ok(json!({
        "t": ts,
        "value": curve.samples.iter().map(|c| finite(c.value)).collect::<Vec<_>>(),
        "ln_value": curve.samples.iter().map(|c| finite(c.ln_value)).collect::<Vec<_>>(),
        "formula": curve.samples.first().map(|c| c.formula),
        "reference_time": reference,
    })
    .to_string())
}

/// Worst-case chi-squared at `t_C` for `c_steps` evenly spaced `C` in
/// `[c_min, c_max]`, with the sandwich bounds.
#[wasm_bindgen]
pub fn cutoff_profile(n: u32, p: &str, z: u32, c_min: f64, c_max: f64, c_steps: u32) -> Result<String, String> {
    let s = spec(n, p, z)?;
    if !(c_min.is_finite() && c_max.is_finite() && c_min <= c_max) || c_steps == 0 || c_steps > MAX_POINTS {
        return Err("need finite c_min <= c_max and 1..=2000 steps".into());
    }
    let grid: Vec<f64> = (0..c_steps)
        .map(|i| {
            if c_steps == 1 {
                c_min
            } else {
                c_min + (c_max - c_min) * i as f64 / (c_steps - 1) as f64
            }
        })
        .collect();
    let report = cutoff_window::<SignedLogReal>(&s, &grid).map_err(|e| e.to_string())?;
    let entries: Vec<_> = report
        .entries
        .iter()
        .map(|e| {
            json!({
                "c": e.c,
                "t_c": e.t_c,
                "chi2": finite(e.chi2),
                "lower": finite(e.lower_bound),
                "upper": finite(e.upper_bound),
            })
        })
        .collect();
    Ok(json!({ "entries": entries }).to_string())
}

/// Monte Carlo weight histogram after `horizon` steps from the origin,
/// next to the exact law.
#[wasm_bindgen]
pub fn simulate_histogram(n: u32, p: &str, z: u32, horizon: u32, trajectories: u32, seed: u32) -> Result<String, String> {
    let s = spec(n, p, z)?;
    if trajectories == 0 || trajectories > MAX_TRAJECTORIES {
        return Err(format!("trajectories must lie in 1..={MAX_TRAJECTORIES}"));
    }
    let cfg = SimConfig {
        spec: s.clone(),
        start: vec![false; n as usize],
        horizon: horizon as u64,
        n_trajectories: trajectories as u64,
        seed: seed as u64,
    };
    let emp = run(&cfg).map_err(|e| e.to_string())?;
    let exact = exact_weight_law(&s, &cfg.start, cfg.horizon)
        .map_err(|e| e.to_string())?
        .ok_or("no exact law for this configuration")?;
    let (tv, pass) = compare_exact(&emp, &exact).map_err(|e| e.to_string())?;
    Ok(json!({
        "counts": emp.counts,
        "empirical": emp.pmf(),
        "exact": exact,
        "tv": tv,
        "threshold": tv_threshold(n as usize + 1, emp.n),
        "pass": pass,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn curve_decreases() {
        let v = parse(&mixing_curve(64, "3/5", 1, "chi2_full", 400, 40).unwrap());
        let ln: Vec<f64> = v["ln_value"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(ln.len(), 11);
        assert!(ln.windows(2).all(|w| w[1] <= w[0]));
        assert!(mixing_curve(64, "3/5", 1, "bogus", 10, 1).is_err());
        assert!(mixing_curve(64, "0.4", 1, "chi2_full", 10, 1).is_err());
        assert!(mixing_curve(20, "3/5", 1, "tv_full", 10, 1).is_err());
        assert!(mixing_curve(64, "3/5", 1, "chi2_full", 100_000, 1).is_err());
    }

    #[test]
    fn profile_and_histogram() {
        let v = parse(&cutoff_profile(4096, "3/5", 1, -2.0, 4.0, 4).unwrap());
        let e = v["entries"].as_array().unwrap();
        assert_eq!(e.len(), 4);
        for x in e {
            assert!(x["lower"].as_f64().unwrap() <= x["chi2"].as_f64().unwrap());
        }
        let h = parse(&simulate_histogram(30, "0.6", 3, 10, 20_000, 1).unwrap());
        assert_eq!(h["counts"].as_array().unwrap().len(), 31);
        assert_eq!(h["pass"], true);
        assert!(simulate_histogram(0, "0.6", 1, 1, 10, 1).is_err());
    }
}
