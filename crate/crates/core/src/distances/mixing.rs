use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, ScalarMode, SignedLogReal};
use crate::process::{vertex_bits, ProcessSpec};

use super::chi2::{full_curve, hamming_curve, SpectralChi2};
use super::tv::{start_representatives, tv_upper_from_chi2_log, TvFull, TvHamming};

/// Step ceiling of the mixing-time search.
pub const MIXING_CEILING: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Chi2Full,
    Chi2Hamming,
    TvFull,
    TvHamming,
    TvUpperBound,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Chi2Full,
        Metric::Chi2Hamming,
        Metric::TvFull,
        Metric::TvHamming,
        Metric::TvUpperBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Chi2Full => "chi2_full",
            Metric::Chi2Hamming => "chi2_hamming",
            Metric::TvFull => "tv_full",
            Metric::TvHamming => "tv_hamming",
            Metric::TvUpperBound => "tv_upper_bound",
        }
    }

    fn is_tv(self) -> bool {
        matches!(self, Metric::TvFull | Metric::TvHamming)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("metric", format!("unknown metric `{s}`")))
    }
}

/// Where a distance curve starts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Vertex(Vec<bool>),
    Weight(u64),
    /// Worst case over all starting vertices.
    Sup,
}

impl Start {
    fn vertex(&self, n: u64) -> Result<Vec<bool>> {
        match self {
            Start::Vertex(x) => Ok(x.clone()),
            Start::Weight(k) if *k <= n => Ok((0..n).map(|j| j < *k).collect()),
            Start::Weight(k) => Err(Error::Domain(format!("Hamming weight {k} exceeds N = {n}"))),
            Start::Sup => Ok(vec![false; n as usize]),
        }
    }

    fn weight(&self) -> u64 {
        match self {
            Start::Vertex(x) => x.iter().filter(|&&b| b).count() as u64,
            Start::Weight(k) => *k,
            Start::Sup => 0,
        }
    }
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Start::Vertex(x) => {
                let s: String = x.iter().map(|&b| if b { '1' } else { '0' }).collect();
                write!(f, "x={s}")
            }
            Start::Weight(k) => write!(f, "k={k}"),
            Start::Sup => f.write_str("sup"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveSample {
    pub t: u64,
    pub value: f64,
    /// Natural log of the value; keeps magnitudes outside the f64 range.
    pub ln_value: f64,
    pub formula: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceCurve {
    pub spec_id: String,
    pub metric: Metric,
    pub start: Start,
    pub mode: ScalarMode,
    pub samples: Vec<CurveSample>,
}

enum Inner<S> {
    Chi2(SpectralChi2<S>),
    Upper(SpectralChi2<S>),
    Full(Vec<TvFull<S>>),
    Hamming(Vec<TvHamming<S>>),
}

/// A distance curve ready for repeated evaluation.
pub struct Evaluator<S> {
    inner: Inner<S>,
    /// Chi-squared curve whose unit modes decide convergence.
    witness: SpectralChi2<S>,
    formula: &'static str,
}

impl<S: Scalar> Evaluator<S> {
    pub fn new(spec: &ProcessSpec, metric: Metric, start: &Start) -> Result<Self> {
        let n = spec.n;
        let hamming = matches!(metric, Metric::Chi2Hamming | Metric::TvHamming);
        // For `Sup` both witnesses sit at the all-zero start, the worst case.
        let witness = if hamming {
            hamming_curve::<S>(spec, start.weight())?
        } else {
            full_curve::<S>(spec, &start.vertex(n)?)?
        };
        let (inner, formula) = match metric {
            Metric::Chi2Full | Metric::Chi2Hamming => {
                let f = witness.formula();
                (Inner::Chi2(witness.clone()), f)
            }
            Metric::TvUpperBound => (Inner::Upper(witness.clone()), "chi2-sqrt"),
            Metric::TvFull => {
                let starts = match start {
                    Start::Sup => start_representatives(spec),
                    other => vec![other.vertex(n)?],
                };
                let evals = TvFull::for_starts(spec, &starts)?;
                (Inner::Full(evals), "kernel-row")
            }
            Metric::TvHamming => {
                let ks: Vec<u64> = match start {
                    Start::Sup => (0..=n).collect(),
                    other => vec![other.weight()],
                };
                let evals = ks.iter().map(|&k| TvHamming::new(spec, k)).collect::<Result<_>>()?;
                (Inner::Hamming(evals), "hamming-kernel")
            }
        };
        Ok(Evaluator { inner, witness, formula })
    }

    pub fn formula(&self) -> &'static str {
        self.formula
    }

    /// The distance at step `t`, in the log domain.
    pub fn eval(&self, t: u64) -> Result<SignedLogReal> {
        let max = |vals: Vec<SignedLogReal>| vals.into_iter().fold(SignedLogReal::ZERO, |a, b| if b > a { b } else { a });
        match &self.inner {
            Inner::Chi2(c) => Ok(c.eval(t).to_log()),
            Inner::Upper(c) => Ok(tv_upper_from_chi2_log(c.eval(t).to_log())),
            Inner::Full(evals) => Ok(max(evals.iter().map(|e| e.eval(t).map(|v| v.to_log())).collect::<Result<_>>()?)),
            Inner::Hamming(evals) => Ok(max(evals.iter().map(|e| e.eval(t).to_log()).collect())),
        }
    }

    /// `Some(reason)` when an eigenvalue of modulus one carries weight, so
    /// the distribution never converges to `pi`.
    pub fn nonconvergence(&self) -> Option<&'static str> {
        let (plus, minus) = self.witness.unit_modes();
        if !minus.is_zero() {
            Some("periodic: eigenvalue -1 carries weight")
        } else if !plus.is_zero() {
            Some("reducible: eigenvalue 1 carries weight")
        } else {
            None
        }
    }

    /// The value a chi-squared curve cannot drop below.
    fn floor(&self) -> Option<SignedLogReal> {
        let (a, b) = self.witness.unit_modes();
        let chi = (a + b).to_log();
        match &self.inner {
            Inner::Chi2(_) => Some(chi),
            Inner::Upper(_) => Some(tv_upper_from_chi2_log(chi)),
            _ => None,
        }
    }
}

fn at_most(v: &SignedLogReal, eps: f64) -> bool {
    v.is_zero() || v.log_mag() <= eps.ln()
}

pub fn distance_at<S: Scalar>(spec: &ProcessSpec, metric: Metric, start: &Start, t: u64) -> Result<SignedLogReal> {
    Evaluator::<S>::new(spec, metric, start)?.eval(t)
}

/// Samples a distance curve at the given step counts, in parallel.
pub fn distance_curve<S: Scalar>(spec: &ProcessSpec, metric: Metric, start: &Start, ts: &[u64]) -> Result<DistanceCurve> {
    let eval = Evaluator::<S>::new(spec, metric, start)?;
    let samples = ts
        .par_iter()
        .map(|&t| {
            let v = eval.eval(t)?;
            Ok(CurveSample {
                t,
                value: v.to_f64(),
                ln_value: v.log_mag(),
                formula: eval.formula(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceCurve {
        spec_id: spec.id(),
        metric,
        start: start.clone(),
        mode: S::mode(),
        samples,
    })
}

/// Smallest `t >= 0` with `d(t) <= eps` for a nonincreasing curve: doubling
/// probes, then bisection.
pub fn search_first_below(eps: f64, ceiling: u64, mut d: impl FnMut(u64) -> Result<SignedLogReal>) -> Result<u64> {
    if at_most(&d(0)?, eps) {
        return Ok(0);
    }
    let (mut lo, mut hi) = (0u64, 1u64);
    loop {
        if at_most(&d(hi)?, eps) {
            break;
        }
        if hi >= ceiling {
            return Err(Error::Divergent {
                epsilon: eps,
                ceiling,
                reason: "distance still above epsilon at the ceiling".into(),
            });
        }
        lo = hi;
        hi = (hi * 2).min(ceiling);
    }
    // d(lo) > eps >= d(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at_most(&d(mid)?, eps) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `t_mix(eps, start) = inf { t : d(t) <= eps }` under the given metric.
pub fn mixing_time<S: Scalar>(spec: &ProcessSpec, epsilon: f64, metric: Metric, start: &Start) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    let eval = Evaluator::<S>::new(spec, metric, start)?;
    if let Some(reason) = eval.nonconvergence() {
        let blocked = metric.is_tv()
            || eval.floor().is_some_and(|f| !at_most(&f, epsilon));
        if blocked {
            return Err(Error::Divergent {
                epsilon,
                ceiling: MIXING_CEILING,
                reason: reason.into(),
            });
        }
    }
    search_first_below(epsilon, MIXING_CEILING, |t| eval.eval(t))
}

/// TV mixing time and the chi-squared mixing time at `4 eps^2`; since
/// `TV <= sqrt(chi^2)/2` the first never exceeds the second.
pub fn corollary_pair<S: Scalar>(spec: &ProcessSpec, epsilon: f64, start: &Start) -> Result<(u64, u64)> {
    let tv = mixing_time::<S>(spec, epsilon, Metric::TvFull, start)?;
    let chi = mixing_time::<S>(spec, 4.0 * epsilon * epsilon, Metric::Chi2Full, start)?;
    Ok((tv, chi))
}

/// All-zero and all-one starts as vertex vectors.
pub fn corner(n: u64, ones: bool) -> Vec<bool> {
    vertex_bits(n, if ones { (1u64 << n) - 1 } else { 0 })
}
