use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::distances::{
    chi2_full_sup, contingency_constant, contingency_cutoff, contingency_law, critical_start_bound, cutoff_window,
    definetti_floor, distance_curve, hamming_curve, mixing_time, tv_full_sup, tv_upper_from_chi2_log, Metric, Start,
    TvHamming,
};
use crate::error::{Error, Result};
use crate::numerics::{binomial, ExactRational, Scalar, ScalarMode, SignedLogReal};
use crate::orthopoly::{check_orthogonality, check_symmetric_representation, h_weights, KrawtchoukBasis};
use crate::process::{
    checks, eigenvalues_hamming, kernel_bruteforce_exact, kernel_hamming, kernel_hamming_direct, kernel_hamming_t,
    kernel_spectral, kernel_spectral_exact, lump_to_hamming, random_explicit_law, rw_representation_with_sign,
    subset_spectrum, subset_spectrum_from_z, transition_row, vertex_bits, ProcessSpec, UpdateLaw, RW_SIGN,
};
use crate::simulate::{compare_exact, run as simulate_run, tv_threshold, SimConfig};

use super::params::{check_epsilon, check_p, Grid, IntOrRule, LawConfig, Num, Params};
use super::{Column, Output, ResultRow, Scenario, Value};

macro_rules! by_mode {
    ($mode:expr, $f:ident ( $($arg:expr),* )) => {
        match $mode {
            ScalarMode::Exact => $f::<ExactRational>($($arg),*),
            ScalarMode::LogFloat { .. } => $f::<SignedLogReal>($($arg),*),
        }
    };
}

const fn col(name: &'static str, description: &'static str) -> Column {
    Column { name, description }
}

const VERIFY: &[Column] = &[
    col("check", "oracle check name"),
    col("n", "dimension N"),
    col("p", "stationarity parameter"),
    col("law", "update law"),
    col("pass", "true when the check holds"),
    col("detail", "failure message or scope of the check"),
];
const KERNEL: &[Column] = &[
    col("t", "number of steps"),
    col("from", "start state (bit string, or weight for the Hamming level)"),
    col("to", "end state"),
    col("value", "transition probability"),
    col("exact", "the probability as a fraction in exact mode, else na"),
];
const SPECTRUM: &[Column] = &[
    col("kind", "degree (exchangeable) or subset"),
    col("index", "degree n, or subset mask A"),
    col("size", "|A|"),
    col("multiplicity", "number of subsets sharing the eigenvalue"),
    col("rho", "eigenvalue"),
    col("ln_abs_rho", "ln |rho|"),
    col("ln_h", "ln of the weight h (C(N,n) (p/q)^n, or (p/q)^|A| per subset)"),
    col("exact", "eigenvalue as a fraction in exact mode, else na"),
];
const CURVE: &[Column] = &[
    col("n", "dimension N"),
    col("law", "update law"),
    col("start", "start: sup, k=<weight> or x=<bits>"),
    col("metric", "distance"),
    col("t", "number of steps"),
    col("value", "distance at t"),
    col("ln_value", "ln of the distance, finite beyond the f64 range"),
    col("formula", "evaluation path"),
];
const MIXING: &[Column] = &[
    col("n", "dimension N"),
    col("law", "update law"),
    col("start", "start"),
    col("metric", "distance"),
    col("epsilon", "threshold"),
    col("t_mix", "first t with distance <= epsilon, or periodic / reducible / inf"),
    col("reference", "(N p / (2 z)) ln N for uniform subsets, else na"),
    col("ratio", "t_mix / reference"),
];
const CUTOFF: &[Column] = &[
    col("n", "dimension N"),
    col("z", "subset size"),
    col("c", "window constant C"),
    col("t_c", "round((N p / (2 z)) (ln N + C)), or na below one step"),
    col("chi2", "worst-case chi-squared at t_c"),
    col("ln_chi2", "ln chi2"),
    col("first_term", "degree-one term of the spectral sum"),
    col("lower_bound", "e^(-C) p/q"),
    col("upper_bound", "exp(e^(-C) p/q) - 1"),
    col("sandwich_holds", "lower_bound <= chi2 <= 1.1 upper_bound"),
];
const ALMOST: &[Column] = &[
    col("n", "dimension N"),
    col("z", "subset size"),
    col("t", "number of steps"),
    col("chi2", "sup over starts of chi-squared"),
    col("ln_chi2", "ln chi2"),
    col("tv_bound", "sqrt(chi2) / 2"),
    col("ln_tv_bound", "ln tv_bound"),
    col("tv_exact", "sup over starts of the exact TV for N <= 10, else na"),
    col("tv_within_bound", "tv_exact <= tv_bound, or na"),
];
const CRITICAL: &[Column] = &[
    col("n", "dimension N"),
    col("z", "subset size round(w N)"),
    col("k", "start weight"),
    col("t", "number of steps"),
    col("chi2", "Hamming chi-squared from weight k"),
    col("bound", "(1/2) (1 - w/p)^(2t) (p/q)"),
    col("below", "chi2 < bound"),
];
const DEFINETTI: &[Column] = &[
    col("n", "dimension N"),
    col("t", "floor(a N / ln N)"),
    col("ln_chi2", "ln chi-squared from the origin"),
    col("ln_floor", "ln of the single-term floor"),
    col("floor_holds", "ln_chi2 >= ln_floor"),
];
const CONTINGENCY: &[Column] = &[
    col("n", "dimension N"),
    col("rho", "correlation coefficient"),
    col("alpha", "update rate p (1 - rho)"),
    col("epsilon", "threshold"),
    col("c_star", "C solving exp(e^(-C)) - 1 = epsilon"),
    col("predicted_t", "(ln N + ln(p/q) + C*) / (-2 ln |rho|)"),
    col("measured_t", "first t with chi-squared <= epsilon"),
    col("chi2_at_measured", "chi-squared at measured_t"),
    col("within_one_step", "|measured_t - predicted_t| <= 1"),
];
const SIMULATE: &[Column] = &[
    col("weight", "Hamming weight after horizon steps"),
    col("count", "trajectories ending at this weight"),
    col("empirical", "count / n_trajectories"),
    col("exact", "exact probability, or na when unavailable"),
];

pub fn columns(scenario: Scenario) -> &'static [Column] {
    match scenario {
        Scenario::Verify => VERIFY,
        Scenario::Kernel => KERNEL,
        Scenario::Spectrum => SPECTRUM,
        Scenario::Chi2Curve | Scenario::TvCurve => CURVE,
        Scenario::MixingTime => MIXING,
        Scenario::CutoffScan => CUTOFF,
        Scenario::AlmostPerfect => ALMOST,
        Scenario::CriticalStart => CRITICAL,
        Scenario::DefinettiSlow => DEFINETTI,
        Scenario::Contingency => CONTINGENCY,
        Scenario::Simulate => SIMULATE,
    }
}

struct Table {
    rows: Vec<ResultRow>,
    resolved: serde_json::Value,
    summary: serde_json::Value,
    failures: usize,
}

impl Table {
    fn new(rows: Vec<ResultRow>, resolved: serde_json::Value) -> Self {
        Table {
            rows,
            resolved,
            summary: serde_json::Value::Null,
            failures: 0,
        }
    }

    fn summary(mut self, summary: serde_json::Value) -> Self {
        self.summary = summary;
        self
    }
}

fn row(values: Vec<Value>) -> ResultRow {
    ResultRow(values)
}

fn na() -> Value {
    Value::Text("na".into())
}

/// JSON number, with non-finite values spelled out.
fn jnum(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(super::fmt_float(x))
    }
}

/// Runs `f` on every grid cell in parallel; rows keep grid order.
fn cells<T: Sync>(items: &[T], f: impl Fn(&T) -> Result<Vec<ResultRow>> + Sync + Send) -> Result<Vec<ResultRow>> {
    let parts = items.par_iter().map(f).collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Least-squares fit `y = a + b x`: `(slope, intercept, R^2)`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn p_text(p: Rational64) -> String {
    p.to_string()
}

pub fn run(scenario: Scenario, params: &Params) -> Result<Output> {
    let t = match scenario {
        Scenario::Verify => verify(params)?,
        Scenario::Kernel => kernel(params)?,
        Scenario::Spectrum => spectrum(params)?,
        Scenario::Chi2Curve => curve(params, false)?,
        Scenario::TvCurve => curve(params, true)?,
        Scenario::MixingTime => mixing(params)?,
        Scenario::CutoffScan => cutoff(params)?,
        Scenario::AlmostPerfect => almost_perfect(params)?,
        Scenario::CriticalStart => critical(params)?,
        Scenario::DefinettiSlow => definetti(params)?,
        Scenario::Contingency => contingency(params)?,
        Scenario::Simulate => simulate(params)?,
    };
    Ok(Output {
        scenario,
        columns: columns(scenario).iter().map(|c| c.name).collect(),
        rows: t.rows,
        resolved: t.resolved,
        summary: t.summary,
        failures: t.failures,
    })
}

// ---- verify ---------------------------------------------------------------

fn verify_laws(n: u64, p_index: usize, seed: u64, explicit: u64) -> Vec<UpdateLaw> {
    let mut laws: Vec<UpdateLaw> = (1..=n).map(|z| UpdateLaw::SubsetUniform { z }).collect();
    for (a, b) in [(3, 10), (3, 5), (1, 1)] {
        laws.push(UpdateLaw::IidBernoulli {
            alpha: ExactRational::from_ratio(a, b),
        });
    }
    laws.extend((1..=n).filter(|b| n.is_multiple_of(*b)).map(|beta| UpdateLaw::BlockUpdate { beta }));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n * 16 + p_index as u64);
    laws.extend((0..explicit).map(|_| random_explicit_law(n, &mut rng)));
    laws
}

fn check_row(name: &str, spec: &ProcessSpec, outcome: std::result::Result<(), String>, scope: &str) -> ResultRow {
    let (pass, detail) = match outcome {
        Ok(()) => (true, scope.to_string()),
        Err(e) => (false, e),
    };
    row(vec![
        name.into(),
        spec.n.into(),
        p_text(spec.p).into(),
        spec.law.describe().into(),
        pass.into(),
        detail.into(),
    ])
}

fn verify_spec(spec: &ProcessSpec, t_max: u64) -> Result<Vec<ResultRow>> {
    let bf = kernel_bruteforce_exact(spec)?;
    let mut out = Vec::new();
    let mut exact = Ok(());
    let mut logf = Ok(());
    let mut worst = 0.0f64;
    for t in 1..=t_max {
        let pw = bf.power(t);
        if exact.is_ok() && !kernel_spectral_exact(spec, t)?.same_as(&pw) {
            exact = Err(format!("spectral and brute-force kernels differ at t = {t}"));
        }
        let d = pw.max_abs_diff(&kernel_spectral::<SignedLogReal>(spec, t)?);
        worst = worst.max(d);
        if logf.is_ok() && d > 1e-12 {
            logf = Err(format!("max abs difference {d:e} at t = {t}"));
        }
    }
    let scope = format!("t <= {t_max}");
    out.push(check_row("spectral_exact", spec, exact, &scope));
    out.push(check_row("spectral_logfloat", spec, logf, &format!("{scope}, max diff {worst:e}")));
    out.push(check_row("row_sums", spec, checks::row_sums_are_one(&bf), "exact"));
    out.push(check_row("nonnegative", spec, checks::nonnegative(&bf), "exact"));
    out.push(check_row("detailed_balance", spec, checks::detailed_balance(&bf, spec), "exact"));
    out.push(check_row(
        "restriction_principle",
        spec,
        checks::restriction_principle(&bf),
        "all coordinate sets",
    ));
    let eig = if subset_spectrum(spec)? == subset_spectrum_from_z(spec)? {
        Ok(())
    } else {
        Err("per-subset eigenvalues disagree with E[(-q/p)^|Z & A|]".into())
    };
    out.push(check_row("eigenvalues", spec, eig, "all subsets"));
    if spec.law.is_exchangeable() {
        let lumped = lump_to_hamming(&bf);
        let outcome = match lumped {
            Err(e) => Err(e),
            Ok(l) if l != kernel_hamming_direct(spec)? => Err("lumped kernel differs from the direct Hamming kernel".into()),
            Ok(l) if l != kernel_hamming::<ExactRational>(spec)? => {
                Err("lumped kernel differs from the spectral Hamming kernel".into())
            }
            Ok(_) => Ok(()),
        };
        out.push(check_row("lumpability", spec, outcome, "exact"));
    }
    if spec.n <= 3 {
        let mut outcome = Ok(());
        'outer: for t in 1..=2 {
            let pw = bf.power(t);
            for x in 0..1u64 << spec.n {
                let rw = rw_representation_with_sign(spec, x, t, RW_SIGN)?;
                let want: Vec<ExactRational> = (0..1u64 << spec.n).map(|y| pw.entry(x, y)).collect();
                if rw != want {
                    outcome = Err(format!("random-walk representation differs at x = {x:#b}, t = {t}"));
                    break 'outer;
                }
            }
        }
        out.push(check_row("rw_representation", spec, outcome, "t <= 2, sign -1"));
    }
    Ok(out)
}

fn verify(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[1, 2, 3, 4, 5, 6]))?;
    if let Some(n) = ns.iter().find(|&&n| n > 10) {
        return Err(Error::config("parameters.n_grid", format!("verify runs brute force; N = {n} exceeds 10")));
    }
    let ps_raw = params
        .p_grid
        .clone()
        .unwrap_or_else(|| vec!["1/2".into(), "3/5".into(), "3/4".into()]);
    if ps_raw.is_empty() {
        return Err(Error::config("parameters.p_grid", "grid is empty"));
    }
    let ps = ps_raw
        .iter()
        .map(|p| check_p(p, "parameters.p_grid").map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    let t_max = params.t_max.unwrap_or(3);
    if !(1..=6).contains(&t_max) {
        return Err(Error::config("parameters.t_max", "must lie in 1..=6"));
    }
    let seed = params.seed.unwrap_or(0);
    let explicit = params.explicit_per_cell.unwrap_or(3);
    let mut specs = Vec::new();
    let mut bases = Vec::new();
    for &n in &ns {
        for (i, &p) in ps.iter().enumerate() {
            bases.push((n, p));
            for law in verify_laws(n, i, seed, explicit) {
                specs.push(ProcessSpec::new(n, p, law)?);
            }
        }
    }
    let mut rows = cells(&bases, |&(n, p)| {
        let basis = KrawtchoukBasis::exact(n, p)?;
        let probe = ProcessSpec::new(n, p, UpdateLaw::SubsetUniform { z: 1 })?;
        let mut out = vec![check_row("krawtchouk_orthogonality", &probe, check_orthogonality(&basis), "exact")];
        out.push(check_row(
            "symmetric_representation",
            &probe,
            check_symmetric_representation(&basis),
            "all weight pairs",
        ));
        // The basis rows do not depend on the law.
        for r in &mut out {
            r.0[3] = "any".into();
        }
        Ok(out)
    })?;
    rows.extend(cells(&specs, |s| verify_spec(s, t_max))?);
    let failures = rows.iter().filter(|r| r.0[4] == Value::Bool(false)).count();
    let resolved = json!({
        "n_grid": ns,
        "p_grid": ps.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        "t_max": t_max,
        "seed": seed,
        "explicit_per_cell": explicit,
    });
    let summary = json!({ "checks": rows.len(), "failures": failures, "laws": specs.len() });
    let mut t = Table::new(rows, resolved).summary(summary);
    t.failures = failures;
    Ok(t)
}

// ---- kernel / spectrum ----------------------------------------------------

fn bits(n: u64, x: u64) -> String {
    vertex_bits(n, x).iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn kernel(params: &Params) -> Result<Table> {
    let n = params.single_n()?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, None)?;
    let mode = params.mode()?;
    let t = params.t.unwrap_or(1);
    let level = params.level.clone().unwrap_or_else(|| "full".into());
    let spec = plan.spec(n, p)?;
    let mut rows = Vec::new();
    match (level.as_str(), mode) {
        ("full", ScalarMode::Exact) => {
            let k = kernel_spectral_exact(&spec, t)?;
            for x in 0..k.states() as u64 {
                for y in 0..k.states() as u64 {
                    let e = k.entry(x, y);
                    rows.push(row(vec![t.into(), bits(n, x).into(), bits(n, y).into(), e.to_f64().into(), e.to_string().into()]));
                }
            }
        }
        ("full", _) => {
            let k = kernel_spectral::<SignedLogReal>(&spec, t)?;
            for x in 0..k.states() as u64 {
                for y in 0..k.states() as u64 {
                    rows.push(row(vec![t.into(), bits(n, x).into(), bits(n, y).into(), k.get(x, y).to_f64().into(), na()]));
                }
            }
        }
        ("hamming", ScalarMode::Exact) => {
            let k = kernel_hamming_t::<ExactRational>(&spec, t)?;
            for i in 0..=n {
                for j in 0..=n {
                    let e = k.get(i, j);
                    rows.push(row(vec![t.into(), i.into(), j.into(), e.to_f64().into(), e.to_string().into()]));
                }
            }
        }
        ("hamming", _) => {
            let k = kernel_hamming_t::<SignedLogReal>(&spec, t)?;
            for i in 0..=n {
                for j in 0..=n {
                    rows.push(row(vec![t.into(), i.into(), j.into(), k.get(i, j).to_f64().into(), na()]));
                }
            }
        }
        (other, _) => return Err(Error::config("parameters.level", format!("`{other}` is not full or hamming"))),
    }
    let resolved = json!({ "n": n, "p": p_text(p), "law": law, "t": t, "level": level, "mode": mode.name() });
    Ok(Table::new(rows, resolved))
}

fn spectrum_degrees<S: Scalar>(spec: &ProcessSpec) -> Result<Vec<ResultRow>> {
    let sp = eigenvalues_hamming::<S>(spec)?;
    let h = h_weights::<SignedLogReal>(&spec.exact_basis());
    let exact = if S::mode() == ScalarMode::Exact {
        Some(eigenvalues_hamming::<ExactRational>(spec)?)
    } else {
        None
    };
    Ok((0..=spec.n)
        .map(|d| {
            let rho = sp.with_zero()[d as usize].to_log();
            row(vec![
                "degree".into(),
                d.into(),
                d.into(),
                binomial(spec.n, d).to_string().into(),
                rho.to_f64().into(),
                rho.log_mag().into(),
                h[d as usize].log_mag().into(),
                exact.as_ref().map_or(na(), |e| e.with_zero()[d as usize].to_string().into()),
            ])
        })
        .collect())
}

fn spectrum(params: &Params) -> Result<Table> {
    let n = params.single_n()?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, None)?;
    let mode = params.mode()?;
    let spec = plan.spec(n, p)?;
    let rows = if spec.law.is_exchangeable() {
        by_mode!(mode, spectrum_degrees(&spec))?
    } else {
        let ln_pq = (spec.p_f64() / spec.q_f64()).ln();
        subset_spectrum(&spec)?
            .iter()
            .enumerate()
            .map(|(a, rho)| {
                let size = (a as u64).count_ones() as u64;
                let l = rho.to_log();
                row(vec![
                    "subset".into(),
                    (a as u64).into(),
                    size.into(),
                    "1".into(),
                    rho.to_f64().into(),
                    l.log_mag().into(),
                    (size as f64 * ln_pq).into(),
                    if mode == ScalarMode::Exact { rho.to_string().into() } else { na() },
                ])
            })
            .collect()
    };
    let resolved = json!({ "n": n, "p": p_text(p), "law": law, "mode": mode.name() });
    Ok(Table::new(rows, resolved))
}

// ---- curves and mixing times ---------------------------------------------

fn curve_cell<S: Scalar>(spec: &ProcessSpec, metric: Metric, start: &Start, ts: &[u64]) -> Result<Vec<ResultRow>> {
    let c = distance_curve::<S>(spec, metric, start, ts)?;
    Ok(c.samples
        .iter()
        .map(|s| {
            row(vec![
                spec.n.into(),
                spec.law.describe().into(),
                start.to_string().into(),
                metric.name().into(),
                s.t.into(),
                s.value.into(),
                s.ln_value.into(),
                s.formula.into(),
            ])
        })
        .collect())
}

fn curve(params: &Params, tv: bool) -> Result<Table> {
    let ns = params.n_grid(None)?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, None)?;
    let mode = params.mode()?;
    let (start_text, start) = params.start(&pe, "sup")?;
    let metric = params.metric.unwrap_or(if tv { Metric::TvFull } else { Metric::Chi2Full });
    let ok = if tv {
        matches!(metric, Metric::TvFull | Metric::TvHamming | Metric::TvUpperBound)
    } else {
        matches!(metric, Metric::Chi2Full | Metric::Chi2Hamming)
    };
    if !ok {
        return Err(Error::config(
            "parameters.metric",
            format!("`{metric}` does not belong to this scenario"),
        ));
    }
    let ts = params.t_grid(Grid::Range {
        from: 0,
        to: 20,
        step: None,
        geometric: false,
    })?;
    let specs = ns
        .iter()
        .map(|&n| Ok((plan.spec(n, p)?, start.resolve(n, &pe)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = cells(&specs, |(s, st)| by_mode!(mode, curve_cell(s, metric, st, &ts)))?;
    let resolved = json!({
        "n_grid": ns, "p": p_text(p), "law": law, "start": start_text,
        "metric": metric, "t_grid": ts, "mode": mode.name(),
    });
    Ok(Table::new(rows, resolved))
}

fn reference_time(spec: &ProcessSpec) -> Option<f64> {
    match spec.law {
        UpdateLaw::SubsetUniform { z } => {
            let n = spec.n as f64;
            Some(n * spec.p_f64() / (2.0 * z as f64) * n.ln())
        }
        _ => None,
    }
}

fn mixing_value(r: Result<u64>) -> Result<Value> {
    match r {
        Ok(t) => Ok(t.into()),
        Err(Error::Divergent { reason, .. }) => Ok(if reason.starts_with("periodic") {
            "periodic".into()
        } else if reason.starts_with("reducible") {
            "reducible".into()
        } else {
            "inf".into()
        }),
        Err(e) => Err(e),
    }
}

fn mixing_cell<S: Scalar>(spec: &ProcessSpec, metric: Metric, start: &Start, eps: &[f64]) -> Result<Vec<ResultRow>> {
    let reference = reference_time(spec);
    eps.iter()
        .map(|&e| {
            let t = mixing_value(mixing_time::<S>(spec, e, metric, start))?;
            let ratio = match (t.as_f64(), reference) {
                (Some(t), Some(r)) if r > 0.0 => Value::Float(t / r),
                _ => na(),
            };
            Ok(row(vec![
                spec.n.into(),
                spec.law.describe().into(),
                start.to_string().into(),
                metric.name().into(),
                e.into(),
                t,
                reference.filter(|r| *r > 0.0).map_or(na(), Value::Float),
                ratio,
            ]))
        })
        .collect()
}

fn mixing(params: &Params) -> Result<Table> {
    let ns = params.n_grid(None)?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, None)?;
    let mode = params.mode()?;
    let (start_text, start) = params.start(&pe, "sup")?;
    let metric = params.metric.unwrap_or(Metric::TvFull);
    let eps = params.epsilons(0.25)?;
    let specs = ns
        .iter()
        .map(|&n| Ok((plan.spec(n, p)?, start.resolve(n, &pe)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = cells(&specs, |(s, st)| by_mode!(mode, mixing_cell(s, metric, st, &eps)))?;
    let resolved = json!({
        "n_grid": ns, "p": p_text(p), "law": law, "start": start_text,
        "metric": metric, "epsilon_grid": eps, "mode": mode.name(),
    });
    Ok(Table::new(rows, resolved))
}

// ---- theorem-backed scans -------------------------------------------------

fn cutoff_cell<S: Scalar>(spec: &ProcessSpec, c_grid: &[f64]) -> Result<Vec<ResultRow>> {
    let z = match spec.law {
        UpdateLaw::SubsetUniform { z } => z,
        _ => return Err(Error::config("parameters.law", "cutoff-scan needs a subset_uniform law")),
    };
    let report = cutoff_window::<S>(spec, c_grid)?;
    Ok(report
        .entries
        .iter()
        .map(|e| {
            let holds = match e.t_c {
                Some(_) => Value::Bool(e.lower_bound <= e.chi2 && e.chi2 <= 1.1 * e.upper_bound),
                None => na(),
            };
            row(vec![
                spec.n.into(),
                z.into(),
                e.c.into(),
                e.t_c.map_or(na(), Value::from),
                e.chi2.into(),
                e.ln_chi2.into(),
                e.first_term.into(),
                e.lower_bound.into(),
                e.upper_bound.into(),
                holds,
            ])
        })
        .collect())
}

fn cutoff(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[4096]))?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, Some(LawConfig::SubsetUniform { z: IntOrRule::Int(1) }))?;
    if !matches!(law, LawConfig::SubsetUniform { .. }) {
        return Err(Error::config("parameters.law", "cutoff-scan needs a subset_uniform law"));
    }
    let mode = params.mode()?;
    let c_grid = params.c_grid.clone().unwrap_or_else(|| vec![-2.0, 0.0, 2.0, 4.0]);
    if c_grid.is_empty() || c_grid.iter().any(|c| !c.is_finite()) {
        return Err(Error::config("parameters.c_grid", "needs at least one finite value"));
    }
    let specs = ns.iter().map(|&n| plan.spec(n, p)).collect::<Result<Vec<_>>>()?;
    let rows = cells(&specs, |s| by_mode!(mode, cutoff_cell(s, &c_grid)))?;
    let holds: Vec<bool> = rows.iter().filter_map(|r| match r.0[9] {
        Value::Bool(b) => Some(b),
        _ => None,
    }).collect();
    let summary = json!({ "entries_checked": holds.len(), "all_hold": holds.iter().all(|&b| b) });
    let resolved = json!({ "n_grid": ns, "p": p_text(p), "law": law, "c_grid": c_grid, "mode": mode.name() });
    Ok(Table::new(rows, resolved).summary(summary))
}

/// Largest `N` for which the exact sup-TV column is filled in.
pub const ALMOST_PERFECT_EXACT_TV_N: u64 = 10;

fn almost_cell<S: Scalar>(spec: &ProcessSpec, ts: &[u64]) -> Result<Vec<ResultRow>> {
    let z = match spec.law {
        UpdateLaw::SubsetUniform { z } => Value::from(z),
        _ => na(),
    };
    ts.iter()
        .map(|&t| {
            let chi = chi2_full_sup::<S>(spec, t)?.to_log();
            let tvb = tv_upper_from_chi2_log(chi);
            let (exact, within) = if spec.n <= ALMOST_PERFECT_EXACT_TV_N {
                let e = tv_full_sup::<S>(spec, t)?.to_f64();
                (Value::Float(e), Value::Bool(e <= tvb.to_f64() * (1.0 + 1e-12)))
            } else {
                (na(), na())
            };
            Ok(row(vec![
                spec.n.into(),
                z.clone(),
                t.into(),
                chi.to_f64().into(),
                chi.log_mag().into(),
                tvb.to_f64().into(),
                tvb.log_mag().into(),
                exact,
                within,
            ]))
        })
        .collect()
}

fn almost_perfect(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[16, 32, 64, 128, 256, 512, 1024]))?;
    let (p, pe) = params.p()?;
    let default_law = LawConfig::SubsetUniform {
        z: IntOrRule::Rule("round(pN)".into()),
    };
    let (law, plan) = params.law(&pe, Some(default_law))?;
    let mode = params.mode()?;
    let ts = params.t_grid(Grid::List(vec![1, 2, 3]))?;
    let specs = ns.iter().map(|&n| plan.spec(n, p)).collect::<Result<Vec<_>>>()?;
    let rows = cells(&specs, |s| by_mode!(mode, almost_cell(s, &ts)))?;
    let mut fits = serde_json::Map::new();
    for &t in &ts {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.0[2] == Value::from(t))
            .filter_map(|r| Some((r.0[0].as_f64()?, r.0[6].as_f64()?)))
            .filter(|(_, y)| y.is_finite())
            .collect();
        if pts.len() >= 2 {
            let (slope, intercept, r2) = least_squares(&pts);
            fits.insert(
                format!("t={t}"),
                json!({
                    "slope": jnum(slope), "intercept": jnum(intercept), "r2": jnum(r2),
                    "geometric_decay": slope < 0.0 && r2 >= 0.95,
                }),
            );
        }
    }
    let resolved = json!({ "n_grid": ns, "p": p_text(p), "law": law, "t_grid": ts, "mode": mode.name() });
    let summary = json!({ "fit_ln_tv_bound_vs_n": fits });
    Ok(Table::new(rows, resolved).summary(summary))
}

struct CriticalCell {
    spec: ProcessSpec,
    k: u64,
}

/// Rows of one critical-start cell plus `(t_circ, t2_mix)`.
fn critical_cell<S: Scalar>(cell: &CriticalCell, w: f64, ts: &[u64], eps: f64) -> Result<(Vec<ResultRow>, Option<u64>, Value)> {
    let spec = &cell.spec;
    let UpdateLaw::SubsetUniform { z } = spec.law else {
        unreachable!("critical cells use subset laws")
    };
    let curve = hamming_curve::<S>(spec, cell.k)?;
    let p = spec.p_f64();
    let mut rows = Vec::new();
    let mut below = Vec::new();
    for &t in ts {
        let chi = curve.eval(t).to_f64();
        let bound = critical_start_bound(p, w, t);
        below.push(chi < bound);
        rows.push(row(vec![
            spec.n.into(),
            z.into(),
            cell.k.into(),
            t.into(),
            chi.into(),
            bound.into(),
            (chi < bound).into(),
        ]));
    }
    // Smallest grid t from which the bound holds through the end of the grid.
    let t_circ = below
        .iter()
        .rposition(|&b| !b)
        .map_or(Some(0), |i| (i + 1 < ts.len()).then_some(i + 1))
        .map(|i| ts[i]);
    let t2 = mixing_value(mixing_time::<S>(spec, eps, Metric::Chi2Hamming, &Start::Weight(cell.k)))?;
    Ok((rows, t_circ, t2))
}

fn critical(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[100, 1000]))?;
    let (p, pe) = params.p()?;
    let w_num = params.w.clone().unwrap_or_else(|| Num::Text("3/10".into()));
    let w = w_num.exact("parameters.w")?;
    if w <= ExactRational::zero() || w > ExactRational::one() {
        return Err(Error::config("parameters.w", format!("w = {w} outside (0, 1]")));
    }
    if w == pe {
        return Err(Error::config("parameters.w", "w = p is the critical rate itself"));
    }
    let (start_text, start) = params.start(&pe, "k=round(pN)")?;
    let ts = params.t_grid(Grid::Range {
        from: 1,
        to: 30,
        step: None,
        geometric: false,
    })?;
    let eps = check_epsilon(params.epsilon.unwrap_or(0.1), "parameters.epsilon")?;
    let mode = params.mode()?;
    let z_rule = super::ZRule::parse(&format!("round({w}N)"), &pe, "parameters.w")?;
    let cellv = ns
        .iter()
        .map(|&n| {
            let spec = ProcessSpec::new(n, p, UpdateLaw::SubsetUniform { z: z_rule.eval(n, &pe) })
                .map_err(|e| Error::config("parameters.w", format!("N = {n}: {e}")))?;
            let k = match start.resolve(n, &pe)? {
                Start::Weight(k) => k,
                _ => return Err(Error::config("parameters.start", "critical-start needs a weight start k=...")),
            };
            Ok(CriticalCell { spec, k })
        })
        .collect::<Result<Vec<_>>>()?;
    let wf = w.to_f64();
    let parts = cellv
        .par_iter()
        .map(|c| by_mode!(mode, critical_cell(c, wf, &ts, eps)))
        .collect::<Result<Vec<_>>>()?;
    let per_n: Vec<serde_json::Value> = cellv
        .iter()
        .zip(&parts)
        .map(|(c, (_, tc, t2))| json!({ "n": c.spec.n, "t_circ": tc, "t2_mix": t2 }))
        .collect();
    let t2s: Vec<&Value> = parts.iter().map(|(_, _, t2)| t2).collect();
    let summary = json!({
        "per_n": per_n,
        "t2_mix_n_independent": t2s.windows(2).all(|w| w[0] == w[1]),
    });
    let rows = parts.into_iter().flat_map(|(r, _, _)| r).collect();
    let resolved = json!({
        "n_grid": ns, "p": p_text(p), "w": w.to_string(), "start": start_text,
        "t_grid": ts, "epsilon": eps, "mode": mode.name(),
    });
    Ok(Table::new(rows, resolved).summary(summary))
}

fn definetti_cell<S: Scalar>(spec: &ProcessSpec, a: f64) -> Result<Vec<ResultRow>> {
    let f = definetti_floor::<S>(spec, a)?;
    Ok(vec![row(vec![
        spec.n.into(),
        f.t.into(),
        f.ln_chi2.into(),
        f.ln_floor.into(),
        (f.ln_chi2 >= f.ln_floor).into(),
    ])])
}

fn definetti(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[128, 512, 2048]))?;
    let (p, pe) = params.p()?;
    let a = params.a.unwrap_or(0.2);
    let mode = params.mode()?;
    let specs = ns
        .iter()
        .map(|&n| ProcessSpec::new(n, p, UpdateLaw::DeFinettiLebesgue))
        .collect::<Result<Vec<_>>>()?;
    // Regime violations are config problems here.
    let rows = cells(&specs, |s| by_mode!(mode, definetti_cell(s, a))).map_err(|e| match e {
        Error::Regime(m) => Error::config("parameters.a", m),
        other => other,
    })?;
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.0[0].as_f64()?, r.0[2].as_f64()?))).collect();
    let target = -(1.0 - pe.to_f64()).ln() - 2.0 * a;
    let summary = if pts.len() >= 2 {
        let (slope, _, r2) = least_squares(&pts);
        json!({
            "slope": jnum(slope), "r2": jnum(r2), "target_slope": jnum(target),
            "relative_deviation": jnum((slope / target - 1.0).abs()),
        })
    } else {
        json!({ "target_slope": jnum(target) })
    };
    let resolved = json!({ "n_grid": ns, "p": p_text(p), "a": a, "mode": mode.name() });
    Ok(Table::new(rows, resolved).summary(summary))
}

fn contingency_cell<S: Scalar>(spec: &ProcessSpec, rho: f64, alpha: &ExactRational, eps: f64) -> Result<Vec<ResultRow>> {
    let c_star = contingency_constant(eps);
    let predicted = contingency_cutoff(spec.n, spec.p_f64(), rho, c_star);
    let t = mixing_value(mixing_time::<S>(spec, eps, Metric::Chi2Full, &Start::Sup))?;
    let (chi, within) = match t.as_f64() {
        Some(tm) => {
            let chi = chi2_full_sup::<S>(spec, tm as u64)?.to_f64();
            (Value::Float(chi), Value::Bool((tm - predicted).abs() <= 1.0))
        }
        None => (na(), Value::Bool(false)),
    };
    Ok(vec![row(vec![
        spec.n.into(),
        rho.into(),
        alpha.to_f64().into(),
        eps.into(),
        c_star.into(),
        predicted.into(),
        t,
        chi,
        within,
    ])])
}

fn contingency(params: &Params) -> Result<Table> {
    let ns = params.n_grid(Some(&[4096]))?;
    let (p, pe) = params.p()?;
    let rho_num = params.rho.clone().unwrap_or_else(|| Num::Text("1/2".into()));
    let rho = rho_num.exact("parameters.rho")?;
    let law = contingency_law(&pe, &rho).map_err(|e| Error::config("parameters.rho", e.to_string()))?;
    let UpdateLaw::IidBernoulli { alpha } = law.clone() else {
        unreachable!("contingency laws are i.i.d.")
    };
    let eps = check_epsilon(params.epsilon.unwrap_or(0.1), "parameters.epsilon")?;
    let mode = params.mode()?;
    let rf = rho.to_f64();
    if rf == 0.0 {
        return Err(Error::config("parameters.rho", "rho = 0 mixes in one step; no crossing to predict"));
    }
    let specs = ns.iter().map(|&n| ProcessSpec::new(n, p, law.clone())).collect::<Result<Vec<_>>>()?;
    let rows = cells(&specs, |s| by_mode!(mode, contingency_cell(s, rf, &alpha, eps)))?;
    let resolved = json!({
        "n_grid": ns, "p": p_text(p), "rho": rho.to_string(), "epsilon": eps, "mode": mode.name(),
    });
    Ok(Table::new(rows, resolved))
}

// ---- simulate -------------------------------------------------------------

/// Exact law of the weight after `t` steps, when some exact path covers it.
pub fn exact_weight_law(spec: &ProcessSpec, x: &[bool], t: u64) -> Result<Option<Vec<f64>>> {
    let k = x.iter().filter(|&&b| b).count() as u64;
    if spec.law.is_exchangeable() {
        return Ok(Some(
            TvHamming::<SignedLogReal>::new(spec, k)?.row(t).iter().map(|v| v.to_f64().max(0.0)).collect(),
        ));
    }
    if spec.n > crate::process::MAX_BRUTEFORCE_N {
        return Ok(None);
    }
    let xi = crate::process::vertex_index(x);
    let mut out = vec![0.0; spec.n as usize + 1];
    if t == 0 {
        out[k as usize] = 1.0;
        return Ok(Some(out));
    }
    for (y, v) in transition_row::<SignedLogReal>(spec, xi, t)?.iter().enumerate() {
        out[(y as u64).count_ones() as usize] += v.to_f64();
    }
    Ok(Some(out))
}

fn simulate(params: &Params) -> Result<Table> {
    let n = params.single_n()?;
    let (p, pe) = params.p()?;
    let (law, plan) = params.law(&pe, None)?;
    let (start_text, start) = params.start(&pe, "origin")?;
    let horizon = params.horizon.unwrap_or(1);
    let trajectories = params.n_trajectories.unwrap_or(100_000);
    if trajectories == 0 {
        return Err(Error::config("parameters.n_trajectories", "must be at least 1"));
    }
    let seed = params.seed.unwrap_or(0);
    let spec = plan.spec(n, p)?;
    let x = start.vertex(n, &pe)?;
    let cfg = SimConfig {
        spec: spec.clone(),
        start: x.clone(),
        horizon,
        n_trajectories: trajectories,
        seed,
    };
    let emp = simulate_run(&cfg)?;
    let exact = exact_weight_law(&spec, &x, horizon)?;
    let rows = (0..=n as usize)
        .map(|j| {
            row(vec![
                (j as u64).into(),
                emp.counts[j].into(),
                (emp.counts[j] as f64 / trajectories as f64).into(),
                exact.as_ref().map_or(na(), |e| Value::Float(e[j])),
            ])
        })
        .collect();
    let threshold = tv_threshold(n as usize + 1, trajectories);
    let summary = match &exact {
        Some(e) => {
            let (tv, pass) = compare_exact(&emp, e)?;
            json!({ "tv": jnum(tv), "threshold": jnum(threshold), "pass": pass })
        }
        None => json!({ "tv": null, "threshold": jnum(threshold), "pass": null }),
    };
    let resolved = json!({
        "n": n, "p": p_text(p), "law": law, "start": start_text, "horizon": horizon,
        "n_trajectories": trajectories, "seed": seed,
    });
    Ok(Table::new(rows, resolved).summary(summary))
}
