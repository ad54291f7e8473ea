use crate::error::{Error, Result};
use crate::numerics::{binomial_row, ExactRational, Scalar, SignedLogReal};
use crate::orthopoly::{h_weights, krawtchouk_row};
use std::sync::Arc;

use crate::process::{
    eigenvalues_hamming, spectral_row, subset_spectrum, vertex_index, ProcessSpec, UpdateLaw, MAX_BRUTEFORCE_N,
};

fn half_l1<S: Scalar>(row: impl Iterator<Item = (S, S)>) -> S {
    let half = S::from_rational(&ExactRational::from_ratio(1, 2));
    half * S::sum(row.map(|(a, b)| (a - b).abs()).collect())
}

/// TV distance between the distribution of `X_t` started at a vertex and
/// `pi`, over all `2^N` states.
#[derive(Clone, Debug)]
pub struct TvFull<S> {
    kind: FullKind<S>,
}

#[derive(Clone, Debug)]
enum FullKind<S> {
    Dense {
        spec: ProcessSpec,
        x: u64,
        pi: Arc<Vec<S>>,
        /// Per-subset eigenvalues, shared between starts.
        rho: Arc<Vec<S>>,
    },
    /// Symmetric starts of an exchangeable chain: the law of `X_t` is uniform
    /// within weight classes, so the Hamming TV is the full TV.
    Lumped(TvHamming<S>),
}

impl<S: Scalar> TvFull<S> {
    pub fn new(spec: &ProcessSpec, x: &[bool]) -> Result<Self> {
        Ok(Self::for_starts(spec, std::slice::from_ref(&x.to_vec()))?.remove(0))
    }

    /// One evaluator per start, sharing the spectrum.
    pub fn for_starts(spec: &ProcessSpec, starts: &[Vec<bool>]) -> Result<Vec<Self>> {
        if let Some(x) = starts.iter().find(|x| x.len() as u64 != spec.n) {
            return Err(Error::Domain(format!("start has {} coordinates, N = {}", x.len(), spec.n)));
        }
        if spec.n > MAX_BRUTEFORCE_N {
            return starts
                .iter()
                .map(|x| {
                    let corner = x.iter().all(|&b| b) || x.iter().all(|&b| !b);
                    if corner && spec.law.is_exchangeable() {
                        let k = x.iter().filter(|&&b| b).count() as u64;
                        return Ok(TvFull {
                            kind: FullKind::Lumped(TvHamming::new(spec, k)?),
                        });
                    }
                    Err(Error::Capacity(format!(
                        "full-state TV needs N <= {MAX_BRUTEFORCE_N} or a symmetric start, got N = {}; use the chi-squared upper bound",
                        spec.n
                    )))
                })
                .collect();
        }
        let by_weight: Vec<S> = (0..=spec.n).map(|w| S::from_rational(&spec.stationary_weight(w))).collect();
        let pi: Arc<Vec<S>> = Arc::new((0..1u64 << spec.n).map(|y| by_weight[y.count_ones() as usize].clone()).collect());
        let rho: Arc<Vec<S>> = Arc::new(subset_spectrum(spec)?.iter().map(S::from_rational).collect());
        Ok(starts
            .iter()
            .map(|x| TvFull {
                kind: FullKind::Dense {
                    spec: spec.clone(),
                    x: vertex_index(x),
                    pi: pi.clone(),
                    rho: rho.clone(),
                },
            })
            .collect())
    }

    pub fn eval(&self, t: u64) -> Result<S> {
        let (spec, x, pi, rho) = match &self.kind {
            FullKind::Lumped(h) => return Ok(h.eval(t)),
            FullKind::Dense { spec, x, pi, rho } => (spec, *x, pi, rho),
        };
        let row: Vec<S> = if t == 0 {
            (0..pi.len() as u64).map(|y| if y == x { S::one() } else { S::zero() }).collect()
        } else {
            spectral_row::<S>(spec, rho, x, t)
        };
        Ok(half_l1(row.into_iter().zip(pi.iter().cloned())))
    }
}

/// TV distance of the Hamming-weight chain from weight `k` against
/// Binomial(N, p), through `K_t(k, j) = b_j sum_n rho_n^t h_n Q_n(k) Q_n(j)`.
#[derive(Clone, Debug)]
pub struct TvHamming<S> {
    k: usize,
    pmf: Vec<S>,
    /// `h_n Q_n(k)` by degree.
    left: Vec<S>,
    rho: Vec<S>,
    /// `Q_n(j)`, row `j`.
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> TvHamming<S> {
    pub fn new(spec: &ProcessSpec, k: u64) -> Result<Self> {
        if k > spec.n {
            return Err(Error::Domain(format!("Hamming weight {k} exceeds N = {}", spec.n)));
        }
        let n = spec.n;
        let spectrum = eigenvalues_hamming::<S>(spec)?;
        let basis = spectrum.basis().clone();
        let h = h_weights::<S>(&basis);
        let rows: Vec<Vec<S>> = (0..=n).map(|j| krawtchouk_row::<S>(&basis, j)).collect::<Result<_>>()?;
        let left = (0..=n as usize).map(|d| h[d].clone() * rows[k as usize][d].clone()).collect();
        let p = S::from_rational(&spec.p_exact());
        let q = S::from_rational(&spec.q_exact());
        let pmf = binomial_row(n)
            .iter()
            .enumerate()
            .map(|(j, c)| S::from_biguint(c) * p.pow(j as u64) * q.pow(n - j as u64))
            .collect();
        Ok(TvHamming {
            k: k as usize,
            pmf,
            left,
            rho: spectrum.with_zero().to_vec(),
            rows,
        })
    }

    /// Distribution of the weight after `t` steps.
    pub fn row(&self, t: u64) -> Vec<S> {
        if t == 0 {
            return (0..self.pmf.len())
                .map(|j| if j == self.k { S::one() } else { S::zero() })
                .collect();
        }
        let coeff: Vec<S> = self
            .left
            .iter()
            .zip(&self.rho)
            .map(|(l, r)| l.clone() * r.pow(t))
            .collect();
        self.rows
            .iter()
            .zip(&self.pmf)
            .map(|(qj, b)| {
                let terms = coeff.iter().zip(qj).map(|(c, q)| c.clone() * q.clone()).collect();
                b.clone() * S::sum(terms)
            })
            .collect()
    }

    pub fn eval(&self, t: u64) -> S {
        half_l1(self.row(t).into_iter().zip(self.pmf.iter().cloned()))
    }
}

pub fn tv_full<S: Scalar>(spec: &ProcessSpec, x: &[bool], t: u64) -> Result<S> {
    TvFull::<S>::new(spec, x)?.eval(t)
}

pub fn tv_hamming<S: Scalar>(spec: &ProcessSpec, k: u64, t: u64) -> Result<S> {
    Ok(TvHamming::<S>::new(spec, k)?.eval(t))
}

/// Starting vertices that cover every start up to symmetry: one per weight
/// for exchangeable laws, one per multiset of block weights for block laws,
/// every vertex otherwise.
pub fn start_representatives(spec: &ProcessSpec) -> Vec<Vec<bool>> {
    let n = spec.n as usize;
    if spec.law.is_exchangeable() {
        return (0..=n).map(|k| (0..n).map(|j| j < k).collect()).collect();
    }
    if let UpdateLaw::BlockUpdate { beta } = spec.law {
        // Coordinates within a block and the blocks themselves are
        // interchangeable.
        let beta = beta as usize;
        let mut out = Vec::new();
        let mut weights = Vec::new();
        block_weights(n / beta, beta, &mut weights, &mut out);
        return out
            .into_iter()
            .map(|ws: Vec<usize>| ws.iter().flat_map(|&w| (0..beta).map(move |i| i < w)).collect())
            .collect();
    }
    (0..1u64 << n).map(|x| crate::process::vertex_bits(spec.n, x)).collect()
}

/// Nonincreasing sequences of `blocks` weights in `0..=max`.
fn block_weights(blocks: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == blocks {
        out.push(cur.clone());
        return;
    }
    let top = cur.last().copied().unwrap_or(max);
    for w in 0..=top {
        cur.push(w);
        block_weights(blocks, max, cur, out);
        cur.pop();
    }
}

/// `sup_x ||P_t(.|x) - pi||_TV`.
pub fn tv_full_sup<S: Scalar>(spec: &ProcessSpec, t: u64) -> Result<S> {
    let mut best = S::zero();
    for e in TvFull::<S>::for_starts(spec, &start_representatives(spec))? {
        let v = e.eval(t)?;
        if v.to_log() > best.to_log() {
            best = v;
        }
    }
    Ok(best)
}

/// `4 TV^2 <= chi^2`, so `TV <= sqrt(chi^2) / 2`.
pub fn tv_upper_from_chi2(chi2: f64) -> f64 {
    0.5 * chi2.max(0.0).sqrt()
}

pub fn tv_upper_from_chi2_log(chi2: SignedLogReal) -> SignedLogReal {
    if chi2.is_zero() {
        return SignedLogReal::ZERO;
    }
    SignedLogReal::from_ln(0.5 * chi2.log_mag() - std::f64::consts::LN_2)
}
