use crate::error::{Error, Result};
use crate::numerics::{ExactRational, Scalar, ScalarMode};
use crate::orthopoly::{krawtchouk_row, KrawtchoukBasis};

use super::law::{z_distribution, ProcessSpec, UpdateLaw, MAX_DENSE_N, MAX_EXPLICIT_N};

/// Degree-indexed eigenvalues of an exchangeable chain.
#[derive(Clone, Debug, PartialEq)]
pub struct HammingSpectrum<S> {
    /// `rho[0] = 1`, then `rho_1, ..., rho_N`.
    rho: Vec<S>,
    basis: KrawtchoukBasis,
}

impl<S: Scalar> HammingSpectrum<S> {
    pub fn rho(&self, n: u64) -> &S {
        &self.rho[n as usize]
    }

    /// `rho_1, ..., rho_N`.
    pub fn eigenvalues(&self) -> &[S] {
        &self.rho[1..]
    }

    pub fn with_zero(&self) -> &[S] {
        &self.rho
    }

    pub fn basis(&self) -> &KrawtchoukBasis {
        &self.basis
    }

    pub fn n(&self) -> u64 {
        self.basis.n()
    }

    pub fn mode(&self) -> ScalarMode {
        S::mode()
    }
}

/// `rho_n = E[Q_n(|Z|)]` in closed form for each exchangeable law.
pub fn eigenvalues_hamming<S: Scalar>(spec: &ProcessSpec) -> Result<HammingSpectrum<S>> {
    spec.require_exchangeable()?;
    let n = spec.n;
    let basis = spec.basis(S::mode())?;
    let p = spec.p_exact();
    let one = ExactRational::one();
    let geometric = |alpha: &ExactRational| -> Vec<S> {
        let ratio = S::from_rational(&(one.clone() - alpha.clone() / p.clone()));
        (0..=n).map(|k| ratio.pow(k)).collect()
    };
    let rho = match &spec.law {
        UpdateLaw::SubsetUniform { z } => krawtchouk_row::<S>(&basis, *z)?,
        UpdateLaw::IidBernoulli { alpha } => geometric(alpha),
        UpdateLaw::DeFinettiDiscrete { atoms } => {
            let parts: Vec<(S, Vec<S>)> = atoms
                .iter()
                .map(|(a, w)| (S::from_rational(w), geometric(a)))
                .collect();
            (0..=n as usize)
                .map(|k| S::sum(parts.iter().map(|(w, g)| w.clone() * g[k].clone()).collect()))
                .collect()
        }
        UpdateLaw::DeFinettiLebesgue => {
            // (p / (n+1)) (1 - (-q/p)^(n+1))
            let r = S::from_rational(&-(spec.q_exact() / p.clone()));
            let ps = S::from_rational(&p);
            (0..=n)
                .map(|k| {
                    let scale = ps.clone() / S::from_i64(k as i64 + 1);
                    scale * (S::one() - r.pow(k + 1))
                })
                .collect()
        }
        _ => unreachable!("exchangeable laws only"),
    };
    Ok(HammingSpectrum { rho, basis })
}

/// `rho_A = E[prod_{j in A} (1 - Z[j]/p)]` for a coordinate subset given as
/// a mask; `rho_{empty} = 1`.
pub fn eigenvalues_general(spec: &ProcessSpec, a: u64) -> Result<ExactRational> {
    if a >> spec.n != 0 {
        return Err(Error::Domain(format!("subset mask {a:#b} has more than N bits")));
    }
    if a == 0 {
        return Ok(ExactRational::one());
    }
    let r = -(spec.q_exact() / spec.p_exact());
    match &spec.law {
        UpdateLaw::BlockUpdate { beta } => {
            let blocks = spec.blocks().expect("block law");
            let sum = blocks
                .iter()
                .fold(ExactRational::zero(), |acc, b| acc + r.pow((a & b).count_ones() as u64));
            Ok(ExactRational::from_ratio(*beta as i64, spec.n as i64) * sum)
        }
        UpdateLaw::Explicit { pmf } => Ok(pmf
            .iter()
            .fold(ExactRational::zero(), |acc, (z, w)| acc + w.clone() * r.pow((z & a).count_ones() as u64))),
        _ => {
            let spectrum = eigenvalues_hamming::<ExactRational>(spec)?;
            Ok(spectrum.rho(a.count_ones() as u64).clone())
        }
    }
}

/// `rho_A` for every mask `A` in `0..2^N`.
pub fn subset_spectrum(spec: &ProcessSpec) -> Result<Vec<ExactRational>> {
    if spec.n > MAX_DENSE_N {
        return Err(Error::Capacity(format!(
            "per-subset spectrum needs N <= {MAX_DENSE_N}, got {}",
            spec.n
        )));
    }
    let size = 1u64 << spec.n;
    if spec.law.is_exchangeable() {
        let spectrum = eigenvalues_hamming::<ExactRational>(spec)?;
        return Ok((0..size).map(|a| spectrum.rho(a.count_ones() as u64).clone()).collect());
    }
    if let UpdateLaw::Explicit { .. } = spec.law {
        if spec.n > MAX_EXPLICIT_N {
            return Err(Error::Capacity("explicit law too large".into()));
        }
    }
    (0..size).map(|a| eigenvalues_general(spec, a)).collect()
}

/// Oracle for [`subset_spectrum`] straight from the pmf of `Z`:
/// `rho_A = E[(-q/p)^{|Z & A|}]`.
pub fn subset_spectrum_from_z(spec: &ProcessSpec) -> Result<Vec<ExactRational>> {
    if spec.n > MAX_DENSE_N {
        return Err(Error::Capacity(format!("N = {} too large", spec.n)));
    }
    let zs = z_distribution(spec)?;
    let r = -(spec.q_exact() / spec.p_exact());
    let pows: Vec<ExactRational> = (0..=spec.n).map(|k| r.pow(k)).collect();
    Ok((0..1u64 << spec.n)
        .map(|a| {
            zs.iter().fold(ExactRational::zero(), |acc, (z, w)| {
                acc + w.clone() * pows[(z & a).count_ones() as usize].clone()
            })
        })
        .collect())
}
