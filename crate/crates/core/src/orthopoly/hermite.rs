use crate::error::{Error, Result};

use super::{h_weight, krawtchouk_prefix, KrawtchoukBasis};

/// Probabilists' Hermite polynomials, `exp(psi v - psi^2/2) = sum H_n(v) psi^n / n!`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HermiteEval {
    pub max_degree: usize,
}

impl HermiteEval {
    pub fn new(max_degree: usize) -> Self {
        HermiteEval { max_degree }
    }

    /// `H_0(v), ..., H_max(v)`.
    pub fn values(&self, v: f64) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.max_degree + 1);
        h.push(1.0);
        if self.max_degree >= 1 {
            h.push(v);
        }
        for n in 1..self.max_degree {
            let next = v * h[n] - n as f64 * h[n - 1];
            h.push(next);
        }
        h
    }
}

pub fn hermite(n: usize, v: f64) -> f64 {
    HermiteEval::new(n).values(v)[n]
}

/// `(h_n^{1/2} Q_n(z_N), (-1)^n H_n(v) / sqrt(n!))` with
/// `z_N = round(Np + v sqrt(Npq))`.
pub fn hermite_limit_check(basis: &KrawtchoukBasis, n: u64, v: f64) -> Result<(f64, f64)> {
    let nf = basis.n() as f64;
    let (p, q) = (basis.p_f64(), basis.q_f64());
    let target = nf * p + v * (nf * p * q).sqrt();
    let z = (target + 0.5).floor();
    if !(0.0..=nf).contains(&z) {
        return Err(Error::Domain(format!("z_N = {z} outside [0, {}]", basis.n())));
    }
    let qn = krawtchouk_prefix(basis, z as u64, n)?;
    let qn = qn
        .get(n as usize)
        .ok_or_else(|| Error::Domain(format!("degree {n} exceeds N = {}", basis.n())))?;
    let h = h_weight::<crate::numerics::SignedLogReal>(basis, n)?;
    let lhs = (h.sqrt() * qn.to_log()).to_f64();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let rhs = sign * hermite(n as usize, v) / fact.sqrt();
    Ok((lhs, rhs))
}
