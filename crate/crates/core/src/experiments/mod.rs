//! Scenario runner: JSON config in, CSV rows plus a JSON sidecar out.

mod params;
mod scenarios;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::{Grid, IntOrRule, LawConfig, LawPlan, Num, Params, StartRule, ZRule};
pub use scenarios::{exact_weight_law, least_squares, ALMOST_PERFECT_EXACT_TV_N};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Verify,
    Kernel,
    Spectrum,
    Chi2Curve,
    TvCurve,
    MixingTime,
    CutoffScan,
    AlmostPerfect,
    CriticalStart,
    DefinettiSlow,
    Contingency,
    Simulate,
}

impl Scenario {
    pub const ALL: [Scenario; 12] = [
        Scenario::Verify,
        Scenario::Kernel,
        Scenario::Spectrum,
        Scenario::Chi2Curve,
        Scenario::TvCurve,
        Scenario::MixingTime,
        Scenario::CutoffScan,
        Scenario::AlmostPerfect,
        Scenario::CriticalStart,
        Scenario::DefinettiSlow,
        Scenario::Contingency,
        Scenario::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Verify => "verify",
            Scenario::Kernel => "kernel",
            Scenario::Spectrum => "spectrum",
            Scenario::Chi2Curve => "chi2-curve",
            Scenario::TvCurve => "tv-curve",
            Scenario::MixingTime => "mixing-time",
            Scenario::CutoffScan => "cutoff-scan",
            Scenario::AlmostPerfect => "almost-perfect",
            Scenario::CriticalStart => "critical-start",
            Scenario::DefinettiSlow => "definetti-slow",
            Scenario::Contingency => "contingency",
            Scenario::Simulate => "simulate",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::Verify => "oracle suite: kernel equivalence, structure, lumpability, orthogonality, RW sign",
            Scenario::Kernel => "t-step transition kernel, full or Hamming",
            Scenario::Spectrum => "eigenvalues by degree (exchangeable) or by subset",
            Scenario::Chi2Curve => "chi-squared distance against t",
            Scenario::TvCurve => "total variation distance against t",
            Scenario::MixingTime => "first t with distance <= epsilon",
            Scenario::CutoffScan => "chi-squared at t_C with its sandwich bounds",
            Scenario::AlmostPerfect => "sup chi-squared and TV bound at small t over an N grid",
            Scenario::CriticalStart => "Hamming chi-squared from weight round(Np) against the critical bound",
            Scenario::DefinettiSlow => "chi-squared of the uniform rate mixture against its single-term floor",
            Scenario::Contingency => "measured chi-squared crossing against the closed-form prediction",
            Scenario::Simulate => "Monte Carlo weight histogram against the exact law",
        }
    }

    /// Parameter keys this scenario reads.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Scenario::Verify => &["n_grid", "p_grid", "t_max", "seed", "explicit_per_cell"],
            Scenario::Kernel => &["n", "p", "law", "t", "level", "mode"],
            Scenario::Spectrum => &["n", "p", "law", "mode"],
            Scenario::Chi2Curve | Scenario::TvCurve => &["n", "n_grid", "p", "law", "start", "metric", "t_grid", "mode"],
            Scenario::MixingTime => &["n", "n_grid", "p", "law", "start", "metric", "epsilon", "epsilon_grid", "mode"],
            Scenario::CutoffScan => &["n", "n_grid", "p", "law", "c_grid", "mode"],
            Scenario::AlmostPerfect => &["n", "n_grid", "p", "law", "t_grid", "mode"],
            Scenario::CriticalStart => &["n", "n_grid", "p", "w", "start", "t_grid", "epsilon", "mode"],
            Scenario::DefinettiSlow => &["n", "n_grid", "p", "a", "mode"],
            Scenario::Contingency => &["n", "n_grid", "p", "rho", "epsilon", "mode"],
            Scenario::Simulate => &["n", "p", "law", "start", "horizon", "n_trajectories", "seed"],
        }
    }

    pub fn columns(self) -> &'static [Column] {
        scenarios::columns(self)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub parameters: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))
    }

    /// The scenario to run, reconciling the command line with the file.
    pub fn scenario(&self, requested: Option<Scenario>) -> Result<Scenario> {
        match (requested, self.scenario) {
            (Some(a), Some(b)) if a != b => Err(Error::config(
                "scenario",
                format!("command line asks for `{a}` but the config is for `{b}`"),
            )),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(Error::config("scenario", "required")),
        }
    }
}

/// Best-effort field name for serde errors, which report unknown keys and
/// type mismatches in prose.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split_once(marker).map(|(_, r)| r) {
            if let Some((name, _)) = rest.split_once('`') {
                return format!("parameters.{name}");
            }
        }
    }
    "config".into()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => f.write_str(&fmt_float(*x)),
            Value::Text(s) => f.write_str(s),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}
impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub description: &'static str,
}

/// Rows of one scenario, aligned with its column manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow(pub Vec<Value>);

#[derive(Clone, Debug, Serialize)]
pub struct Output {
    pub scenario: Scenario,
    pub columns: Vec<&'static str>,
    pub rows: Vec<ResultRow>,
    /// Parameters after defaults were filled in.
    pub resolved: serde_json::Value,
    /// Scenario-level findings (fits, pass flags).
    pub summary: serde_json::Value,
    /// Failed checks; nonzero makes the runner exit with the verification code.
    pub failures: usize,
}

impl Output {
    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r.0[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.0.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Resolved config and build information; no timestamps, so reruns are
    /// byte-identical.
    pub fn sidecar(&self) -> Result<String> {
        let doc = serde_json::json!({
            "scenario": self.scenario,
            "version": env!("CARGO_PKG_VERSION"),
            "package": env!("CARGO_PKG_NAME"),
            "config": self.resolved,
            "columns": self.columns,
            "rows": self.rows.len(),
            "failures": self.failures,
            "summary": self.summary,
        });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }
}

/// Overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub seed: Option<u64>,
}

/// Validates the config for `scenario`, then runs it on the current rayon
/// pool. Rows come out in grid order.
pub fn run_scenario(scenario: Scenario, config: &ExperimentConfig, overrides: &Overrides) -> Result<Output> {
    let mut params = config.parameters.clone();
    if let Some(m) = &overrides.mode {
        params.mode = Some(m.clone());
    }
    if let Some(s) = overrides.seed {
        params.seed = Some(s);
    }
    let allowed = scenario.keys();
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            // A mode or seed override that the scenario ignores is harmless.
            let from_override = (key == "mode" && overrides.mode.is_some() && config.parameters.mode.is_none())
                || (key == "seed" && overrides.seed.is_some() && config.parameters.seed.is_none());
            if from_override {
                match key.as_str() {
                    "mode" => params.mode = None,
                    _ => params.seed = None,
                }
                continue;
            }
            return Err(Error::config(
                format!("parameters.{key}"),
                format!("not used by `{scenario}`; accepted keys: {}", allowed.join(", ")),
            ));
        }
    }
    scenarios::run(scenario, &params)
}

/// Column manifest of one scenario, or of all when `None`.
pub fn describe(scenario: Option<Scenario>) -> String {
    let mut out = String::new();
    for sc in Scenario::ALL.into_iter().filter(|s| scenario.is_none_or(|x| x == *s)) {
        out += &format!("{}: {}\n", sc.name(), sc.summary());
        out += &format!("  parameters: {}\n", sc.keys().join(", "));
        for c in sc.columns() {
            out += &format!("  {:<18} {}\n", c.name, c.description);
        }
        out.push('\n');
    }
    out
}
