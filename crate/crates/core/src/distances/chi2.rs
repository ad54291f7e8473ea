use crate::error::{Error, Result};
use crate::numerics::{binomial_row, ExactRational, Scalar};
use crate::orthopoly::{h_weights, krawtchouk_row};
use crate::process::{
    eigenvalues_hamming, kernel_bruteforce_exact, subset_spectrum, vertex_index, ProcessSpec, MAX_BRUTEFORCE_N,
};

/// A chi-squared curve `t -> sum_i w_i rho_i^(2t)` with nonnegative weights.
#[derive(Clone, Debug)]
pub struct SpectralChi2<S> {
    /// `(w_i, rho_i)`, zero weights dropped.
    terms: Vec<(S, S)>,
    formula: &'static str,
}

impl<S: Scalar> SpectralChi2<S> {
    fn new(terms: impl IntoIterator<Item = (S, S)>, formula: &'static str) -> Self {
        SpectralChi2 {
            terms: terms.into_iter().filter(|(w, _)| !w.is_zero()).collect(),
            formula,
        }
    }

    pub fn eval(&self, t: u64) -> S {
        S::sum(
            self.terms
                .iter()
                .map(|(w, rho)| w.clone() * rho.pow(2 * t))
                .collect(),
        )
    }

    pub fn terms(&self) -> &[(S, S)] {
        &self.terms
    }

    pub fn formula(&self) -> &'static str {
        self.formula
    }

    /// Weights carried by eigenvalues `+1` and `-1`. The curve never drops
    /// below their sum.
    pub fn unit_modes(&self) -> (S, S) {
        let one = S::one();
        let minus = -S::one();
        let pick = |target: &S| {
            S::sum(
                self.terms
                    .iter()
                    .filter(|(_, r)| r == target)
                    .map(|(w, _)| w.clone())
                    .collect(),
            )
        };
        (pick(&one), pick(&minus))
    }
}

fn check_weight(spec: &ProcessSpec, k: u64) -> Result<()> {
    if k > spec.n {
        return Err(Error::Domain(format!("Hamming weight {k} exceeds N = {}", spec.n)));
    }
    Ok(())
}

/// Curve of the Hamming-chain chi-squared distance from weight `k`:
/// weights `h_n Q_n(k)^2`.
pub fn hamming_curve<S: Scalar>(spec: &ProcessSpec, k: u64) -> Result<SpectralChi2<S>> {
    check_weight(spec, k)?;
    let spectrum = eigenvalues_hamming::<S>(spec)?;
    let basis = spectrum.basis();
    let h = h_weights::<S>(basis);
    let q = if k == 0 {
        vec![S::one(); spec.n as usize + 1]
    } else {
        krawtchouk_row::<S>(basis, k)?
    };
    let terms = (1..=spec.n as usize).map(|n| (h[n].clone() * q[n].clone() * q[n].clone(), spectrum.with_zero()[n].clone()));
    Ok(SpectralChi2::new(terms, "spectral-hamming"))
}

/// Curve of the full-cube chi-squared distance from a vertex of weight `w`
/// under an exchangeable law. The degree-`n` symmetric sum of
/// `prod_{j in A} (1 - x_j/p)^2` is the coefficient of `s^n` in
/// `(1 + (q/p)^2 s)^w (1 + s)^(N-w)`.
pub fn pointwise_curve<S: Scalar>(spec: &ProcessSpec, w: u64) -> Result<SpectralChi2<S>> {
    check_weight(spec, w)?;
    let spectrum = eigenvalues_hamming::<S>(spec)?;
    let n = spec.n;
    let h = h_weights::<S>(spectrum.basis());
    let cn = binomial_row(n);
    let qp = spec.q_exact() / spec.p_exact();
    let r2 = S::from_rational(&(qp.clone() * qp));
    let cw: Vec<S> = binomial_row(w)
        .iter()
        .enumerate()
        .map(|(i, c)| S::from_biguint(c) * r2.pow(i as u64))
        .collect();
    let crest: Vec<S> = binomial_row(n - w).iter().map(S::from_biguint).collect();
    let terms = (1..=n as usize).map(|deg| {
        let lo = deg.saturating_sub((n - w) as usize);
        let hi = deg.min(w as usize);
        let coeff = S::sum((lo..=hi).map(|i| cw[i].clone() * crest[deg - i].clone()).collect());
        let weight = h[deg].clone() * coeff / S::from_biguint(&cn[deg]);
        (weight, spectrum.with_zero()[deg].clone())
    });
    Ok(SpectralChi2::new(terms, "symmetric-genfn"))
}

/// Full-cube chi-squared curve from `x` for any law, one term per subset:
/// weight `(p/q)^|A| (q/p)^(2 |A & x|)` against `rho_A`.
pub fn subset_curve<S: Scalar>(spec: &ProcessSpec, x: u64) -> Result<SpectralChi2<S>> {
    if spec.n > MAX_BRUTEFORCE_N {
        return Err(Error::Capacity(format!(
            "per-subset chi-squared needs N <= {MAX_BRUTEFORCE_N}, got {}",
            spec.n
        )));
    }
    let rho = subset_spectrum(spec)?;
    let pq = spec.p_exact() / spec.q_exact();
    let qp = spec.q_exact() / spec.p_exact();
    let terms = rho.iter().enumerate().skip(1).map(|(a, r)| {
        let a = a as u64;
        let w = pq.pow(a.count_ones() as u64) * qp.pow(2 * (a & x).count_ones() as u64);
        (S::from_rational(&w), S::from_rational(r))
    });
    Ok(SpectralChi2::new(terms, "spectral-subset"))
}

/// `chi^2_H(k, t) = sum_{n >= 1} h_n rho_n^(2t) Q_n(k)^2`.
pub fn chi2_hamming<S: Scalar>(spec: &ProcessSpec, k: u64, t: u64) -> Result<S> {
    Ok(hamming_curve::<S>(spec, k)?.eval(t))
}

/// `sup_x chi^2(x, t) = chi^2(0, t) = sum_n h_n rho_n^(2t)`.
pub fn chi2_full_sup<S: Scalar>(spec: &ProcessSpec, t: u64) -> Result<S> {
    Ok(pointwise_curve::<S>(spec, 0)?.eval(t))
}

/// Full-cube chi-squared distance of `P_t(.|x)` from `pi`.
pub fn chi2_full_pointwise<S: Scalar>(spec: &ProcessSpec, x: &[bool], t: u64) -> Result<S> {
    Ok(full_curve::<S>(spec, x)?.eval(t))
}

/// Symmetric-sum path for exchangeable laws, per-subset path otherwise.
pub fn full_curve<S: Scalar>(spec: &ProcessSpec, x: &[bool]) -> Result<SpectralChi2<S>> {
    if x.len() as u64 != spec.n {
        return Err(Error::Domain(format!("start has {} coordinates, N = {}", x.len(), spec.n)));
    }
    if spec.law.is_exchangeable() {
        pointwise_curve(spec, x.iter().filter(|&&b| b).count() as u64)
    } else {
        subset_curve(spec, vertex_index(x))
    }
}

/// Oracle: `sum_y (P_t(y|x) - pi(y))^2 / pi(y)` from the brute-force kernel.
pub fn chi2_bruteforce(spec: &ProcessSpec, x: u64, t: u64) -> Result<ExactRational> {
    let k = kernel_bruteforce_exact(spec)?;
    let k = if t == 1 { k } else { k.power(t) };
    Ok((0..1u64 << spec.n).fold(ExactRational::zero(), |acc, y| {
        let pi = spec.stationary_weight(y.count_ones() as u64);
        let d = k.entry(x, y) - pi.clone();
        acc + d.clone() * d / pi
    }))
}
