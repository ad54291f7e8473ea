use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{log_binomial, ExactRational, Scalar, SignedLogReal};
use crate::process::{eigenvalues_hamming, pick_probabilities, ProcessSpec, UpdateLaw};

use super::chi2::{chi2_hamming, pointwise_curve};

/// `(1 + (p/q) rho^(2t))^N - 1`: chi-squared from the origin when
/// `rho_n = rho^n`.
pub fn chi2_product_closed_form(n: u64, p: f64, rho: f64, t: u64) -> SignedLogReal {
    let q = 1.0 - p;
    if rho == 0.0 && t > 0 {
        return SignedLogReal::ZERO;
    }
    let ln_x = (p / q).ln() + 2.0 * t as f64 * rho.abs().ln();
    // N ln(1 + x), then expm1 in the log domain.
    let a = n as f64 * ln_1p_exp(ln_x);
    if a < 0.5 {
        SignedLogReal::from_f64(a.exp_m1())
    } else {
        SignedLogReal::from_ln(a + (-(-a).exp()).ln_1p())
    }
}

/// `ln(1 + e^y)` without overflow.
fn ln_1p_exp(y: f64) -> f64 {
    if y > 35.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// Product-form chi-squared for an i.i.d. law: `rho = 1 - alpha/p`.
pub fn chi2_iid_closed_form(n: u64, p: f64, alpha: f64, t: u64) -> SignedLogReal {
    chi2_product_closed_form(n, p, 1.0 - alpha / p, t)
}

/// The i.i.d. law whose eigenvalues are `rho^n`: `alpha = p (1 - rho)`.
pub fn contingency_law(p: &ExactRational, rho: &ExactRational) -> Result<UpdateLaw> {
    let alpha = p.clone() * (ExactRational::one() - rho.clone());
    if alpha <= ExactRational::zero() || alpha > ExactRational::one() {
        return Err(Error::Regime(format!(
            "correlation {rho} gives update rate {alpha} outside (0, 1]"
        )));
    }
    Ok(UpdateLaw::IidBernoulli { alpha })
}

/// Predicted chi-squared cutoff `(ln N + ln(p/q) + C) / (-2 ln |rho|)`.
pub fn contingency_cutoff(n: u64, p: f64, rho: f64, c: f64) -> f64 {
    ((n as f64).ln() + (p / (1.0 - p)).ln() + c) / (-2.0 * rho.abs().ln())
}

/// The constant solving `exp(e^(-C)) - 1 = eps`.
pub fn contingency_constant(eps: f64) -> f64 {
    -(eps.ln_1p()).ln()
}

/// `1/2 (1 - w/p)^(2t) (p/q)`.
pub fn critical_start_bound(p: f64, w: f64, t: u64) -> f64 {
    0.5 * (1.0 - w / p).powf(2.0 * t as f64) * p / (1.0 - p)
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffEntry {
    pub c: f64,
    /// `None` when the rounded time is below one step.
    pub t_c: Option<u64>,
    pub chi2: f64,
    pub ln_chi2: f64,
    /// `rho_1^(2 t_C) N (p/q)`, the degree-one term of the sum.
    pub first_term: f64,
    /// `e^(-C) p/q`.
    pub lower_bound: f64,
    /// `exp(e^(-C) p/q) - 1`.
    pub upper_bound: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffReport {
    pub n: u64,
    pub p: f64,
    pub z: u64,
    pub entries: Vec<CutoffEntry>,
}

/// `round((N p / (2 z)) (ln N + C))`, half up.
pub fn cutoff_time(n: u64, p: f64, z: u64, c: f64) -> f64 {
    (n as f64 * p / (2.0 * z as f64) * ((n as f64).ln() + c) + 0.5).floor()
}

/// Worst-case chi-squared at `t_C` for each `C`, with the sandwich bounds.
pub fn cutoff_window<S: Scalar>(spec: &ProcessSpec, c_grid: &[f64]) -> Result<CutoffReport> {
    let UpdateLaw::SubsetUniform { z } = spec.law else {
        return Err(Error::Regime("the cutoff window needs a uniform-subset law".into()));
    };
    let n = spec.n;
    let (p, q) = (spec.p_f64(), spec.q_f64());
    let curve = pointwise_curve::<S>(spec, 0)?;
    let rho1 = 1.0 - z as f64 / (n as f64 * p);
    let entries = c_grid
        .par_iter()
        .map(|&c| {
            let t = cutoff_time(n, p, z, c);
            let lower_bound = (-c).exp() * p / q;
            let upper_bound = lower_bound.exp_m1();
            if t < 1.0 {
                return CutoffEntry {
                    c,
                    t_c: None,
                    chi2: f64::NAN,
                    ln_chi2: f64::NAN,
                    first_term: f64::NAN,
                    lower_bound,
                    upper_bound,
                    error: Some(format!("t_C = {t} < 1: C too negative for N = {n}")),
                };
            }
            let t = t as u64;
            let chi = curve.eval(t).to_log();
            let first = (2.0 * t as f64 * rho1.abs().ln() + (n as f64).ln() + (p / q).ln()).exp();
            CutoffEntry {
                c,
                t_c: Some(t),
                chi2: chi.to_f64(),
                ln_chi2: chi.log_mag(),
                first_term: if rho1 == 0.0 { 0.0 } else { first },
                lower_bound,
                upper_bound,
                error: None,
            }
        })
        .collect();
    Ok(CutoffReport { n, p, z, entries })
}

#[derive(Clone, Debug, Serialize)]
pub struct WilsonBound {
    pub lambda: f64,
    pub phi0_sq: f64,
    /// Uniform bound on `E_x[(Phi(X_1) - Phi(x))^2]`: at most `z` coordinates move.
    pub r: f64,
    /// `(1 - 1/N) z^2 + z`, the moment-based value.
    pub r_moment: f64,
    pub bound: f64,
    pub bound_moment: f64,
}

fn wilson_formula(lambda: f64, phi_sq: f64, r: f64, eps: f64) -> f64 {
    ((((1.0 - lambda) * phi_sq) / (2.0 * r)).ln() + ((1.0 - eps) / eps).ln()) / (2.0 * (1.0 / lambda).ln())
}

/// Eigenfunction lower bound on `t_mix(eps)` with `Phi(x) = |x| - N p`,
/// `lambda = 1 - z/(N p)`, evaluated at the origin.
pub fn wilson_lower_bound(spec: &ProcessSpec, epsilon: f64) -> Result<WilsonBound> {
    let UpdateLaw::SubsetUniform { z } = spec.law else {
        return Err(Error::Regime("the eigenfunction bound needs a uniform-subset law".into()));
    };
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let (n, zf) = (spec.n as f64, z as f64);
    let p = spec.p_f64();
    let lambda = 1.0 - zf / (n * p);
    if !(lambda > 0.5 && lambda < 1.0) {
        return Err(Error::Regime(format!(
            "lambda = {lambda} outside (1/2, 1); needs z/N < p/2"
        )));
    }
    let phi0_sq = (n * p) * (n * p);
    let r = zf * zf;
    let r_moment = (1.0 - 1.0 / n) * zf * zf + zf;
    Ok(WilsonBound {
        lambda,
        phi0_sq,
        r,
        r_moment,
        bound: wilson_formula(lambda, phi0_sq, r, epsilon),
        bound_moment: wilson_formula(lambda, phi0_sq, r_moment, epsilon),
    })
}

/// The origin moment `E_0[X_1(X_1 - 1) + X_1]` from the degree-two
/// expansion, once with the true `rho_2` and once with `rho_2 -> rho_1^2`.
pub fn wilson_moment_from_origin(spec: &ProcessSpec) -> Result<(ExactRational, ExactRational)> {
    let spectrum = eigenvalues_hamming::<ExactRational>(spec)?;
    let n = ExactRational::from(spec.n as i64);
    let p = spec.p_exact();
    let one = ExactRational::one();
    let two = ExactRational::from(2);
    let r1 = spectrum.rho(1).clone();
    let moment = |r2: ExactRational| {
        n.clone() * (n.clone() - one.clone()) * p.clone() * p.clone() * (r2 - two.clone() * r1.clone() + one.clone())
            + n.clone() * p.clone() * (one.clone() - r1.clone())
    };
    let r2 = spectrum.rho(2.min(spec.n)).clone();
    Ok((moment(r2), moment(r1.clone() * r1.clone())))
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaBound {
    /// `min_j P(Z[j] = 1)`.
    pub theta: f64,
    /// `ln(1 - p/2) / ln(1 - theta)`; infinite when `theta = 0`.
    pub bound: f64,
}

/// General lower bound on `t_mix(eps)` from the least-picked coordinate. Up
/// to `t` steps that coordinate is never picked with probability at least
/// `(1 - theta)^t`, so for `t < bound` the TV exceeds `p/2 >= eps`.
pub fn theta_lower_bound(spec: &ProcessSpec, epsilon: f64) -> Result<ThetaBound> {
    let p = spec.p_f64();
    if !(epsilon > 0.0 && epsilon <= p / 2.0) {
        return Err(Error::Regime(format!("epsilon = {epsilon} outside (0, p/2]")));
    }
    let theta = pick_probabilities(spec)
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::INFINITY, f64::min);
    let bound = if theta <= 0.0 {
        f64::INFINITY
    } else if theta >= 1.0 {
        0.0
    } else {
        (1.0 - p / 2.0).ln() / (1.0 - theta).ln()
    };
    Ok(ThetaBound { theta, bound })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeFinettiFloor {
    pub t: u64,
    pub ln_chi2: f64,
    /// Log of the single degree-`floor(pN)` term of the sum.
    pub ln_floor: f64,
}

/// `chi^2_H(0, t)` at `t = floor(a N / ln N)` for the uniform rate mixture,
/// against its degree-`floor(pN)` term.
pub fn definetti_floor<S: Scalar>(spec: &ProcessSpec, a: f64) -> Result<DeFinettiFloor> {
    if spec.law != UpdateLaw::DeFinettiLebesgue {
        return Err(Error::Regime("needs the uniform rate mixture".into()));
    }
    let (p, q) = (spec.p_f64(), spec.q_f64());
    if p <= 0.5 {
        return Err(Error::Regime("needs p > 1/2".into()));
    }
    if !(a > 0.0 && a < -q.ln() / 2.0) {
        return Err(Error::Regime(format!("a = {a} outside (0, -ln(q)/2)")));
    }
    let n = spec.n;
    let nf = n as f64;
    let t = (a * nf / nf.ln()).floor() as u64;
    let chi = chi2_hamming::<S>(spec, 0, t)?.to_log();
    let m = (*spec.p.numer() as u64 * n) / *spec.p.denom() as u64;
    let r = q / p;
    // (-q/p)^(m+1)
    let alt = if (m + 1).is_multiple_of(2) { r.powf((m + 1) as f64) } else { -r.powf((m + 1) as f64) };
    let ln_floor = -nf * q.ln() - 2.0 * t as f64 * nf.ln()
        + log_binomial(n, m)?
        + m as f64 * p.ln()
        + (nf - m as f64) * q.ln()
        + 2.0 * t as f64 * (nf * p / (m as f64 + 1.0)).ln()
        + 2.0 * t as f64 * (-alt).ln_1p();
    Ok(DeFinettiFloor {
        t,
        ln_chi2: chi.log_mag(),
        ln_floor,
    })
}
