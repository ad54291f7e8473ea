use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Rational64;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::distances::{Metric, Start};
use crate::error::{Error, Result};
use crate::numerics::{parse_rational, ExactRational, ScalarMode};
use crate::process::{random_explicit_law, ProcessSpec, UpdateLaw};

/// A rational written either as a JSON number or as a string like `"3/5"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Text(String),
    Number(serde_json::Number),
}

impl Num {
    pub fn exact(&self, field: &str) -> Result<ExactRational> {
        let text = match self {
            Num::Text(s) => s.clone(),
            Num::Number(n) => n.to_string(),
        };
        parse_rational(&text).map_err(|e| Error::config(field, e.to_string()))
    }

    pub fn f64(&self, field: &str) -> Result<f64> {
        Ok(self.exact(field)?.to_f64())
    }
}

impl From<&str> for Num {
    fn from(s: &str) -> Self {
        Num::Text(s.into())
    }
}

/// An explicit list, or an inclusive range: arithmetic with `step`
/// (default 1), or geometric with ratio `step` (default 2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<u64>),
    Range {
        from: u64,
        to: u64,
        #[serde(default)]
        step: Option<u64>,
        #[serde(default)]
        geometric: bool,
    },
}

const MAX_GRID: usize = 100_000;

impl Grid {
    pub fn expand(&self, field: &str) -> Result<Vec<u64>> {
        let out = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { from, to, step, geometric } => {
                if from > to {
                    return Err(Error::config(field, format!("range from {from} exceeds to {to}")));
                }
                let mut out = Vec::new();
                let mut x = *from;
                if *geometric {
                    let r = step.unwrap_or(2);
                    if r < 2 || x == 0 {
                        return Err(Error::config(field, "geometric ranges need from >= 1 and step >= 2"));
                    }
                    while x <= *to && out.len() <= MAX_GRID {
                        out.push(x);
                        x = x.saturating_mul(r);
                    }
                } else {
                    let s = step.unwrap_or(1);
                    if s == 0 {
                        return Err(Error::config(field, "step must be at least 1"));
                    }
                    while x <= *to && out.len() <= MAX_GRID {
                        out.push(x);
                        x = match x.checked_add(s) {
                            Some(v) => v,
                            None => break,
                        };
                    }
                }
                out
            }
        };
        if out.is_empty() {
            return Err(Error::config(field, "grid is empty"));
        }
        if out.len() > MAX_GRID {
            return Err(Error::config(field, format!("grid has more than {MAX_GRID} points")));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum ZKind {
    Const(u64),
    /// `round(alpha N)`
    Scale(ExactRational),
    /// `round(pN + v sqrt(Npq))`
    Hermite(f64),
}

/// Subset size as a function of `N`, from the menu `const k`, `round(aN)`
/// and `round(pN + v*sqrt(Npq))`. Rounding is half up.
#[derive(Clone, Debug, PartialEq)]
pub struct ZRule {
    text: String,
    kind: ZKind,
}

static HERMITE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^pN(?:([+-])(?:([0-9.eE]+)\*?)?sqrt\(Npq\))?$").expect("static regex"));

impl ZRule {
    pub fn parse(text: &str, p: &ExactRational, field: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || {
            Error::config(
                field,
                format!("`{text}` is not one of `const k`, `round(aN)`, `round(pN + v*sqrt(Npq))`"),
            )
        };
        let kind = if let Ok(k) = s.strip_prefix("const").unwrap_or(&s).parse::<u64>() {
            ZKind::Const(k)
        } else {
            let inner = s.strip_prefix("round(").and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
            if let Some(c) = HERMITE.captures(inner) {
                match c.get(1) {
                    None => ZKind::Scale(p.clone()),
                    Some(sign) => {
                        let v = c.get(2).map_or(Ok(1.0), |m| m.as_str().parse::<f64>().map_err(|_| bad()))?;
                        ZKind::Hermite(if sign.as_str() == "-" { -v } else { v })
                    }
                }
            } else {
                let coeff = inner.strip_suffix('N').ok_or_else(bad)?;
                let coeff = coeff.strip_suffix('*').unwrap_or(coeff);
                let alpha = if coeff.is_empty() {
                    ExactRational::one()
                } else {
                    parse_rational(coeff).map_err(|_| bad())?
                };
                if alpha <= ExactRational::zero() {
                    return Err(Error::config(field, format!("coefficient in `{text}` must be positive")));
                }
                ZKind::Scale(alpha)
            }
        };
        Ok(ZRule { text: text.into(), kind })
    }

    pub fn eval(&self, n: u64, p: &ExactRational) -> u64 {
        match &self.kind {
            ZKind::Const(k) => *k,
            ZKind::Scale(alpha) => {
                // floor(alpha N + 1/2) = floor((2 a N + b) / (2 b))
                let (a, b) = (alpha.numer(), alpha.denom());
                let num = BigInt::from(2) * a * BigInt::from(n) + b;
                let v = num.div_floor(&(BigInt::from(2) * b));
                u64::try_from(v).unwrap_or(0)
            }
            ZKind::Hermite(v) => {
                let (nf, pf) = (n as f64, p.to_f64());
                let x = nf * pf + v * (nf * pf * (1.0 - pf)).sqrt() + 0.5;
                if x <= 0.0 {
                    0
                } else {
                    x.floor() as u64
                }
            }
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// An integer or a z-rule string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntOrRule {
    Int(u64),
    Rule(String),
}

impl IntOrRule {
    pub fn rule(&self, p: &ExactRational, field: &str) -> Result<ZRule> {
        match self {
            IntOrRule::Int(k) => Ok(ZRule {
                text: k.to_string(),
                kind: ZKind::Const(*k),
            }),
            IntOrRule::Rule(s) => ZRule::parse(s, p, field),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    SubsetUniform {
        z: IntOrRule,
    },
    IidBernoulli {
        alpha: Num,
    },
    DefinettiDiscrete {
        /// `[rate, weight]` pairs.
        atoms: Vec<(Num, Num)>,
    },
    DefinettiLebesgue,
    BlockUpdate {
        beta: u64,
    },
    /// Either a pmf keyed by mask (decimal or `0b...`), or a random law.
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pmf: Option<BTreeMap<String, Num>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random_seed: Option<u64>,
    },
    Never,
}

/// A law template resolved against `p`, instantiated per `N`.
#[derive(Clone, Debug)]
pub enum LawPlan {
    Subset(ZRule),
    Fixed(UpdateLaw),
    RandomExplicit(u64),
}

impl LawConfig {
    pub fn plan(&self, p: &ExactRational) -> Result<LawPlan> {
        const F: &str = "parameters.law";
        Ok(match self {
            LawConfig::SubsetUniform { z } => LawPlan::Subset(z.rule(p, "parameters.law.z")?),
            LawConfig::IidBernoulli { alpha } => LawPlan::Fixed(UpdateLaw::IidBernoulli {
                alpha: alpha.exact("parameters.law.alpha")?,
            }),
            LawConfig::DefinettiDiscrete { atoms } => LawPlan::Fixed(UpdateLaw::DeFinettiDiscrete {
                atoms: atoms
                    .iter()
                    .map(|(a, w)| Ok((a.exact("parameters.law.atoms")?, w.exact("parameters.law.atoms")?)))
                    .collect::<Result<_>>()?,
            }),
            LawConfig::DefinettiLebesgue => LawPlan::Fixed(UpdateLaw::DeFinettiLebesgue),
            LawConfig::BlockUpdate { beta } => LawPlan::Fixed(UpdateLaw::BlockUpdate { beta: *beta }),
            LawConfig::Explicit { pmf, random_seed } => match (pmf, random_seed) {
                (Some(pmf), None) => {
                    let mut out = BTreeMap::new();
                    for (k, w) in pmf {
                        let mask = match k.strip_prefix("0b") {
                            Some(b) => u64::from_str_radix(b, 2),
                            None => k.parse::<u64>(),
                        }
                        .map_err(|_| Error::config("parameters.law.pmf", format!("bad mask `{k}`")))?;
                        out.insert(mask, w.exact("parameters.law.pmf")?);
                    }
                    LawPlan::Fixed(UpdateLaw::Explicit { pmf: out })
                }
                (None, Some(seed)) => LawPlan::RandomExplicit(*seed),
                _ => return Err(Error::config(F, "explicit laws need exactly one of `pmf`, `random_seed`")),
            },
            LawConfig::Never => LawPlan::Fixed(UpdateLaw::never()),
        })
    }
}

impl LawPlan {
    pub fn instantiate(&self, n: u64, p: &ExactRational) -> UpdateLaw {
        match self {
            LawPlan::Subset(rule) => UpdateLaw::SubsetUniform { z: rule.eval(n, p) },
            LawPlan::Fixed(law) => law.clone(),
            LawPlan::RandomExplicit(seed) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                random_explicit_law(n, &mut rng)
            }
        }
    }

    pub fn spec(&self, n: u64, p: Rational64) -> Result<ProcessSpec> {
        let pe = ExactRational::from_ratio(*p.numer(), *p.denom());
        ProcessSpec::new(n, p, self.instantiate(n, &pe)).map_err(|e| match e {
            Error::Domain(m) => Error::config("parameters.law", format!("N = {n}: {m}")),
            other => other,
        })
    }
}

/// Starting point written as `sup`, `origin`, `ones`, `k=<int or z-rule>`
/// or `x=<bits>`.
#[derive(Clone, Debug)]
pub enum StartRule {
    Sup,
    Ones,
    Weight(ZRule),
    Vertex(Vec<bool>),
}

impl StartRule {
    pub fn parse(text: &str, p: &ExactRational) -> Result<Self> {
        const F: &str = "parameters.start";
        let s = text.trim();
        Ok(match s {
            "sup" => StartRule::Sup,
            "origin" => StartRule::Weight(ZRule {
                text: "0".into(),
                kind: ZKind::Const(0),
            }),
            "ones" => StartRule::Ones,
            _ => {
                if let Some(k) = s.strip_prefix("k=") {
                    StartRule::Weight(ZRule::parse(k, p, F)?)
                } else if let Some(bits) = s.strip_prefix("x=") {
                    bits.chars()
                        .map(|c| match c {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => Err(Error::config(F, format!("`{bits}` is not a bit string"))),
                        })
                        .collect::<Result<Vec<_>>>()
                        .map(StartRule::Vertex)?
                } else {
                    return Err(Error::config(
                        F,
                        format!("`{text}` is not one of sup, origin, ones, k=<weight>, x=<bits>"),
                    ));
                }
            }
        })
    }

    pub fn resolve(&self, n: u64, p: &ExactRational) -> Result<Start> {
        const F: &str = "parameters.start";
        match self {
            StartRule::Sup => Ok(Start::Sup),
            StartRule::Ones => Ok(Start::Weight(n)),
            StartRule::Weight(rule) => {
                let k = rule.eval(n, p);
                if k > n {
                    return Err(Error::config(F, format!("weight {k} exceeds N = {n}")));
                }
                Ok(Start::Weight(k))
            }
            StartRule::Vertex(x) => {
                if x.len() as u64 != n {
                    return Err(Error::config(F, format!("{} bits given, N = {n}", x.len())));
                }
                Ok(Start::Vertex(x.clone()))
            }
        }
    }

    /// The vertex used by simulations; `sup` means the origin.
    pub fn vertex(&self, n: u64, p: &ExactRational) -> Result<Vec<bool>> {
        Ok(match self.resolve(n, p)? {
            Start::Vertex(x) => x,
            Start::Weight(k) => (0..n).map(|j| j < k).collect(),
            Start::Sup => vec![false; n as usize],
        })
    }
}

/// Scenario parameters as written in the config file. Each scenario accepts
/// a subset of these keys; anything else is rejected before computing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_per_cell: Option<u64>,
}

pub const DEFAULT_P: &str = "3/5";

impl Params {
    /// Names of the keys that are set.
    pub fn keys(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    pub fn p(&self) -> Result<(Rational64, ExactRational)> {
        let p = self.p.clone().unwrap_or_else(|| DEFAULT_P.into());
        check_p(&p, "parameters.p")
    }

    pub fn mode(&self) -> Result<ScalarMode> {
        match &self.mode {
            None => Ok(ScalarMode::LOG_FLOAT),
            Some(m) => m.parse::<ScalarMode>().map_err(|e| Error::config("parameters.mode", e.to_string())),
        }
    }

    /// `n_grid`, or the single `n`, or the default.
    pub fn n_grid(&self, default: Option<&[u64]>) -> Result<Vec<u64>> {
        let ns = match (&self.n, &self.n_grid) {
            (Some(_), Some(_)) => return Err(Error::config("parameters.n", "give either `n` or `n_grid`, not both")),
            (Some(n), None) => vec![*n],
            (None, Some(g)) => g.expand("parameters.n_grid")?,
            (None, None) => match default {
                Some(d) => d.to_vec(),
                None => return Err(Error::config("parameters.n", "required")),
            },
        };
        if let Some(bad) = ns.iter().find(|&&n| n == 0) {
            return Err(Error::config("parameters.n_grid", format!("N = {bad} must be at least 1")));
        }
        Ok(ns)
    }

    pub fn single_n(&self) -> Result<u64> {
        if self.n_grid.is_some() {
            return Err(Error::config("parameters.n_grid", "this scenario takes a single `n`"));
        }
        let n = self.n.ok_or_else(|| Error::config("parameters.n", "required"))?;
        if n == 0 {
            return Err(Error::config("parameters.n", "must be at least 1"));
        }
        Ok(n)
    }

    pub fn law(&self, p: &ExactRational, default: Option<LawConfig>) -> Result<(LawConfig, LawPlan)> {
        let law = self
            .law
            .clone()
            .or(default)
            .ok_or_else(|| Error::config("parameters.law", "required"))?;
        let plan = law.plan(p)?;
        Ok((law, plan))
    }

    pub fn t_grid(&self, default: Grid) -> Result<Vec<u64>> {
        self.t_grid.clone().unwrap_or(default).expand("parameters.t_grid")
    }

    pub fn start(&self, p: &ExactRational, default: &str) -> Result<(String, StartRule)> {
        let s = self.start.clone().unwrap_or_else(|| default.into());
        let rule = StartRule::parse(&s, p)?;
        Ok((s, rule))
    }

    pub fn epsilons(&self, default: f64) -> Result<Vec<f64>> {
        let eps = match (&self.epsilon, &self.epsilon_grid) {
            (Some(_), Some(_)) => {
                return Err(Error::config("parameters.epsilon", "give either `epsilon` or `epsilon_grid`, not both"))
            }
            (Some(e), None) => vec![*e],
            (None, Some(g)) if g.is_empty() => return Err(Error::config("parameters.epsilon_grid", "grid is empty")),
            (None, Some(g)) => g.clone(),
            (None, None) => vec![default],
        };
        for &e in &eps {
            check_epsilon(e, "parameters.epsilon")?;
        }
        Ok(eps)
    }
}

pub fn check_p(p: &Num, field: &str) -> Result<(Rational64, ExactRational)> {
    let exact = p.exact(field)?;
    let r = exact
        .to_rational64()
        .ok_or_else(|| Error::config(field, format!("{exact} does not fit a 64-bit rational")))?;
    let half = ExactRational::from_ratio(1, 2);
    if exact < half || exact >= ExactRational::one() {
        return Err(Error::config(field, format!("p = {exact} outside [1/2, 1)")));
    }
    Ok((r, exact))
}

pub fn check_epsilon(e: f64, field: &str) -> Result<f64> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::config(field, format!("epsilon = {e} must be positive and finite")));
    }
    Ok(e)
}

impl fmt::Display for ZRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
