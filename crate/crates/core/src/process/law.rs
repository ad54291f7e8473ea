use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::One;

use crate::error::{Error, Result};
use crate::numerics::{binomial, binomial_row, ExactRational, ScalarMode};
use crate::orthopoly::KrawtchoukBasis;

/// The law of the update set `Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum UpdateLaw {
    /// `Z` is a uniformly random `z`-subset.
    SubsetUniform { z: u64 },
    /// Each coordinate is picked independently with probability `alpha`.
    IidBernoulli { alpha: ExactRational },
    /// A rate `alpha_k` is drawn with probability `weight_k`, then i.i.d. picks.
    DeFinettiDiscrete { atoms: Vec<(ExactRational, ExactRational)> },
    /// The rate is uniform on (0, 1).
    DeFinettiLebesgue,
    /// One block of the partition `{0..beta}, {beta..2 beta}, ...` is picked uniformly.
    BlockUpdate { beta: u64 },
    /// Arbitrary pmf over update masks (bit `N-1-j` is coordinate `j`).
    Explicit { pmf: BTreeMap<u64, ExactRational> },
}

impl UpdateLaw {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateLaw::SubsetUniform { .. } => "subset_uniform",
            UpdateLaw::IidBernoulli { .. } => "iid_bernoulli",
            UpdateLaw::DeFinettiDiscrete { .. } => "definetti_discrete",
            UpdateLaw::DeFinettiLebesgue => "definetti_lebesgue",
            UpdateLaw::BlockUpdate { .. } => "block_update",
            UpdateLaw::Explicit { .. } => "explicit",
        }
    }

    pub fn is_exchangeable(&self) -> bool {
        matches!(
            self,
            UpdateLaw::SubsetUniform { .. }
                | UpdateLaw::IidBernoulli { .. }
                | UpdateLaw::DeFinettiDiscrete { .. }
                | UpdateLaw::DeFinettiLebesgue
        )
    }

    /// Short parameterized label such as `subset_uniform(z=3)`.
    pub fn describe(&self) -> String {
        match self {
            UpdateLaw::SubsetUniform { z } => format!("subset_uniform(z={z})"),
            UpdateLaw::IidBernoulli { alpha } => format!("iid_bernoulli(alpha={alpha})"),
            UpdateLaw::DeFinettiDiscrete { atoms } => {
                let parts: Vec<String> = atoms.iter().map(|(a, w)| format!("{a}@{w}")).collect();
                format!("definetti_discrete({})", parts.join(","))
            }
            UpdateLaw::DeFinettiLebesgue => "definetti_lebesgue".into(),
            UpdateLaw::BlockUpdate { beta } => format!("block_update(beta={beta})"),
            UpdateLaw::Explicit { pmf } => format!("explicit(support={})", pmf.len()),
        }
    }

    /// Never updates: the identity chain.
    pub fn never() -> Self {
        UpdateLaw::Explicit {
            pmf: BTreeMap::from([(0, ExactRational::one())]),
        }
    }
}

pub const MAX_EXPLICIT_N: u64 = 20;
/// Largest dimension for which kernels over all `2^N` states are built.
pub const MAX_DENSE_N: u64 = 14;
pub const MAX_BRUTEFORCE_N: u64 = 12;

/// A chain in the class: dimension, stationarity parameter and update law.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSpec {
    pub n: u64,
    pub p: Rational64,
    pub law: UpdateLaw,
}

impl ProcessSpec {
    pub fn new(n: u64, p: Rational64, law: UpdateLaw) -> Result<Self> {
        let spec = ProcessSpec { n, p, law };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        KrawtchoukBasis::exact(self.n, self.p)?;
        let zero = ExactRational::zero();
        let one = ExactRational::one();
        let prob = |x: &ExactRational, what: &str| -> Result<()> {
            if *x < zero || *x > one {
                return Err(Error::Domain(format!("{what} = {x} is not a probability")));
            }
            Ok(())
        };
        match &self.law {
            UpdateLaw::SubsetUniform { z } => {
                if *z < 1 || *z > self.n {
                    return Err(Error::Domain(format!("subset size z = {z} outside [1, {}]", self.n)));
                }
            }
            UpdateLaw::IidBernoulli { alpha } => {
                if *alpha <= zero || *alpha > one {
                    return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1]")));
                }
            }
            UpdateLaw::DeFinettiDiscrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Domain("mixing measure has no atoms".into()));
                }
                let mut total = ExactRational::zero();
                for (a, w) in atoms {
                    prob(a, "atom rate")?;
                    prob(w, "atom weight")?;
                    total = total + w.clone();
                }
                if total != one {
                    return Err(Error::Domain(format!("atom weights sum to {total}, not 1")));
                }
            }
            UpdateLaw::DeFinettiLebesgue => {}
            UpdateLaw::BlockUpdate { beta } => {
                if *beta < 1 || !self.n.is_multiple_of(*beta) {
                    return Err(Error::Domain(format!("block size {beta} does not divide N = {}", self.n)));
                }
            }
            UpdateLaw::Explicit { pmf } => {
                if self.n > MAX_EXPLICIT_N {
                    return Err(Error::Capacity(format!(
                        "explicit laws are limited to N <= {MAX_EXPLICIT_N}, got {}",
                        self.n
                    )));
                }
                let mut total = ExactRational::zero();
                for (mask, w) in pmf {
                    if *mask >> self.n != 0 {
                        return Err(Error::Domain(format!("update mask {mask:#b} has more than N bits")));
                    }
                    prob(w, "update probability")?;
                    total = total + w.clone();
                }
                if total != one {
                    return Err(Error::Domain(format!("explicit pmf sums to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("N={};p={};{}", self.n, self.p, self.law.describe())
    }

    pub fn basis(&self, mode: ScalarMode) -> Result<KrawtchoukBasis> {
        KrawtchoukBasis::new(self.n, self.p, mode)
    }

    pub fn exact_basis(&self) -> KrawtchoukBasis {
        KrawtchoukBasis::exact(self.n, self.p).expect("validated spec")
    }

    pub fn q(&self) -> Rational64 {
        Rational64::one() - self.p
    }

    pub fn p_exact(&self) -> ExactRational {
        self.p.into()
    }

    pub fn q_exact(&self) -> ExactRational {
        self.q().into()
    }

    /// `(u, v)` with `q/p = u/v` in lowest terms.
    pub fn ratio_qp(&self) -> (i64, i64) {
        (*self.p.denom() - *self.p.numer(), *self.p.numer())
    }

    pub fn p_f64(&self) -> f64 {
        *self.p.numer() as f64 / *self.p.denom() as f64
    }

    pub fn q_f64(&self) -> f64 {
        1.0 - self.p_f64()
    }

    pub fn require_exchangeable(&self) -> Result<()> {
        if self.law.is_exchangeable() {
            Ok(())
        } else {
            Err(Error::NotExchangeable(self.law.name()))
        }
    }

    /// `pi(y) = p^|y| q^(N-|y|)` for a state of Hamming weight `w`.
    pub fn stationary_weight(&self, w: u64) -> ExactRational {
        self.p_exact().pow(w) * self.q_exact().pow(self.n - w)
    }

    /// The Binomial(N, p) pmf of the stationary Hamming weight.
    pub fn stationary_hamming(&self) -> Vec<ExactRational> {
        binomial_row(self.n)
            .into_iter()
            .enumerate()
            .map(|(w, c)| ExactRational::from(c) * self.stationary_weight(w as u64))
            .collect()
    }

    pub fn blocks(&self) -> Option<Vec<u64>> {
        match self.law {
            UpdateLaw::BlockUpdate { beta } => Some(
                (0..self.n / beta)
                    .map(|b| {
                        (0..beta).fold(0u64, |m, i| m | coord_bit(self.n, b * beta + i))
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Mask bit of coordinate `j` in dimension `n`.
pub fn coord_bit(n: u64, j: u64) -> u64 {
    1u64 << (n - 1 - j)
}

/// State index of a binary vector: coordinate `j` sits at bit `N-1-j`, so
/// numeric order is lexicographic order.
pub fn vertex_index(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

pub fn vertex_bits(n: u64, index: u64) -> Vec<bool> {
    (0..n).map(|j| index & coord_bit(n, j) != 0).collect()
}

/// The pmf of `|Z|` for an exchangeable law.
pub fn size_distribution(spec: &ProcessSpec) -> Result<Vec<ExactRational>> {
    spec.require_exchangeable()?;
    let n = spec.n;
    let binoms = binomial_row(n);
    let iid = |alpha: &ExactRational| -> Vec<ExactRational> {
        let beta = ExactRational::one() - alpha.clone();
        binoms
            .iter()
            .enumerate()
            .map(|(m, c)| ExactRational::from(c.clone()) * alpha.pow(m as u64) * beta.pow(n - m as u64))
            .collect()
    };
    Ok(match &spec.law {
        UpdateLaw::SubsetUniform { z } => (0..=n)
            .map(|m| if m == *z { ExactRational::one() } else { ExactRational::zero() })
            .collect(),
        UpdateLaw::IidBernoulli { alpha } => iid(alpha),
        UpdateLaw::DeFinettiDiscrete { atoms } => {
            let mut out = vec![ExactRational::zero(); n as usize + 1];
            for (a, w) in atoms {
                for (o, v) in out.iter_mut().zip(iid(a)) {
                    *o = o.clone() + w.clone() * v;
                }
            }
            out
        }
        UpdateLaw::DeFinettiLebesgue => vec![ExactRational::from_ratio(1, n as i64 + 1); n as usize + 1],
        _ => unreachable!("exchangeable laws only"),
    })
}

/// The full pmf of `Z` as `(mask, probability)` pairs with positive mass.
pub fn z_distribution(spec: &ProcessSpec) -> Result<Vec<(u64, ExactRational)>> {
    let n = spec.n;
    let enumerable = match spec.law {
        UpdateLaw::Explicit { .. } | UpdateLaw::BlockUpdate { .. } => true,
        UpdateLaw::SubsetUniform { z } => binomial(n, z) <= num_bigint::BigUint::from(1u64 << 22),
        _ => n <= MAX_EXPLICIT_N,
    };
    if !enumerable {
        return Err(Error::Capacity(format!(
            "the update law {} at N = {n} has too large a support to enumerate",
            spec.law.name()
        )));
    }
    Ok(match &spec.law {
        UpdateLaw::Explicit { pmf } => pmf
            .iter()
            .filter(|(_, w)| !w.is_zero())
            .map(|(m, w)| (*m, w.clone()))
            .collect(),
        UpdateLaw::BlockUpdate { .. } => {
            let blocks = spec.blocks().expect("block law");
            let w = ExactRational::from_ratio(1, blocks.len() as i64);
            blocks.into_iter().map(|b| (b, w.clone())).collect()
        }
        UpdateLaw::SubsetUniform { z } => {
            let w = ExactRational::one() / ExactRational::from(binomial(n, *z));
            subsets_of_size(n, *z).into_iter().map(|m| (m, w.clone())).collect()
        }
        _ => {
            let sizes = size_distribution(spec)?;
            let binoms = binomial_row(n);
            let per: Vec<ExactRational> = sizes
                .into_iter()
                .zip(binoms)
                .map(|(s, c)| s / ExactRational::from(c))
                .collect();
            (0..1u64 << n)
                .map(|m| (m, per[m.count_ones() as usize].clone()))
                .filter(|(_, w)| !w.is_zero())
                .collect()
        }
    })
}

/// All `n`-bit masks with exactly `k` bits set, in increasing order.
pub fn subsets_of_size(n: u64, k: u64) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut m: u64 = (1u64 << k) - 1;
    let limit = 1u64 << n;
    while m < limit {
        out.push(m);
        // Gosper's hack
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

/// `P(Z[j] = 1)` for each coordinate.
pub fn pick_probabilities(spec: &ProcessSpec) -> Vec<ExactRational> {
    let n = spec.n;
    let same = |v: ExactRational| vec![v; n as usize];
    match &spec.law {
        UpdateLaw::SubsetUniform { z } => same(ExactRational::from_ratio(*z as i64, n as i64)),
        UpdateLaw::IidBernoulli { alpha } => same(alpha.clone()),
        UpdateLaw::DeFinettiDiscrete { atoms } => same(
            atoms
                .iter()
                .fold(ExactRational::zero(), |acc, (a, w)| acc + a.clone() * w.clone()),
        ),
        UpdateLaw::DeFinettiLebesgue => same(ExactRational::from_ratio(1, 2)),
        UpdateLaw::BlockUpdate { beta } => same(ExactRational::from_ratio(*beta as i64, n as i64)),
        UpdateLaw::Explicit { pmf } => (0..n)
            .map(|j| {
                pmf.iter()
                    .filter(|(m, _)| *m & coord_bit(n, j) != 0)
                    .fold(ExactRational::zero(), |acc, (_, w)| acc + w.clone())
            })
            .collect(),
    }
}

/// A random explicit law for oracle grids: up to six masks with small
/// integer weights.
pub fn random_explicit_law<R: rand::Rng>(n: u64, rng: &mut R) -> UpdateLaw {
    let support = rng.random_range(1..=6usize);
    let mut raw: BTreeMap<u64, i64> = BTreeMap::new();
    for _ in 0..support {
        let mask = rng.random_range(0..1u64 << n);
        *raw.entry(mask).or_default() += rng.random_range(1..=9i64);
    }
    let total: i64 = raw.values().sum();
    UpdateLaw::Explicit {
        pmf: raw
            .into_iter()
            .map(|(m, w)| (m, ExactRational::from_ratio(w, total)))
            .collect(),
    }
}
