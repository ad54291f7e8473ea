use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{binomial, binomial_row, CompensatedSum, ExactRational, Scalar};
use crate::orthopoly::{h_weights, krawtchouk_row};

use super::law::{
    size_distribution, vertex_index, z_distribution, ProcessSpec, MAX_BRUTEFORCE_N, MAX_DENSE_N,
};
use super::spectrum::{eigenvalues_hamming, subset_spectrum};

/// Transition matrix over all `2^N` states, row = from-state.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDense<S> {
    n: u64,
    data: Vec<S>,
}

impl<S: Scalar> KernelDense<S> {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn states(&self) -> usize {
        1usize << self.n
    }

    pub fn get(&self, x: u64, y: u64) -> &S {
        &self.data[x as usize * self.states() + y as usize]
    }

    pub fn row(&self, x: u64) -> &[S] {
        let s = self.states();
        &self.data[x as usize * s..(x as usize + 1) * s]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }
}

/// Transition matrix of the Hamming-weight chain, `(N+1) x (N+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelHamming<S> {
    n: u64,
    data: Vec<S>,
}

impl<S: Scalar> KernelHamming<S> {
    pub fn from_rows(n: u64, rows: Vec<Vec<S>>) -> Self {
        KernelHamming {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, i: u64, j: u64) -> &S {
        &self.data[i as usize * (self.n as usize + 1) + j as usize]
    }

    pub fn row(&self, i: u64) -> &[S] {
        let s = self.n as usize + 1;
        &self.data[i as usize * s..(i as usize + 1) * s]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    /// Distribution of the weight after `t` steps from weight `start`,
    /// propagated in double precision with compensated sums.
    pub fn propagate_f64(&self, start: u64, t: u64) -> Vec<f64> {
        let s = self.n as usize + 1;
        let m = self.to_f64();
        let mut v = vec![0.0; s];
        v[start as usize] = 1.0;
        for _ in 0..t {
            v = (0..s)
                .map(|j| {
                    (0..s)
                        .filter(|&i| v[i] != 0.0)
                        .map(|i| v[i] * m[i * s + j])
                        .collect::<CompensatedSum>()
                        .value()
                })
                .collect();
        }
        v
    }
}

/// An exact kernel with one common denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalKernel {
    n: u64,
    denom: BigInt,
    numer: Vec<BigInt>,
    small: Option<Vec<i128>>,
}

const SMALL_BITS: u64 = 100;

impl RationalKernel {
    fn from_parts(n: u64, denom: BigInt, numer: Vec<BigInt>) -> Self {
        debug_assert!(denom.is_positive());
        let small = if numer.iter().all(|v| v.bits() <= SMALL_BITS) {
            Some(numer.iter().map(|v| v.to_i128().expect("fits")).collect())
        } else {
            None
        };
        RationalKernel {
            n,
            denom,
            numer,
            small,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn states(&self) -> usize {
        1usize << self.n
    }

    pub fn denom(&self) -> &BigInt {
        &self.denom
    }

    pub fn numer(&self, x: u64, y: u64) -> &BigInt {
        &self.numer[x as usize * self.states() + y as usize]
    }

    pub fn entry(&self, x: u64, y: u64) -> ExactRational {
        ExactRational::new(self.numer(x, y).clone(), self.denom.clone())
    }

    pub fn to_dense<S: Scalar>(&self) -> KernelDense<S> {
        let d = self.denom.magnitude();
        KernelDense {
            n: self.n,
            data: self.numer.iter().map(|v| S::from_big_fraction(v, d)).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.to_dense::<crate::numerics::SignedLogReal>().to_f64()
    }

    /// Exact entrywise equality of the represented rationals.
    pub fn same_as(&self, other: &RationalKernel) -> bool {
        if self.n != other.n {
            return false;
        }
        if self.denom == other.denom {
            return self.numer == other.numer;
        }
        let g = self.denom.gcd(&other.denom);
        let (fa, fb) = (&other.denom / &g, &self.denom / &g);
        if let (Some(a), Some(b), Some(fa), Some(fb)) = (&self.small, &other.small, fa.to_i128(), fb.to_i128()) {
            if fa.unsigned_abs() < 1 << 26 && fb.unsigned_abs() < 1 << 26 {
                return a.iter().zip(b).all(|(x, y)| x * fa == y * fb);
            }
        }
        self.numer.iter().zip(&other.numer).all(|(x, y)| x * &fa == y * &fb)
    }

    /// Matrix power by repeated multiplication.
    pub fn power(&self, t: u64) -> RationalKernel {
        assert!(t >= 1, "power needs t >= 1");
        let s = self.states();
        let nonneg = self.numer.iter().all(|v| !v.is_negative());
        // Entries of a nonnegative kernel power are bounded by denom^t.
        let fits = nonneg && self.small.is_some() && self.denom.bits() * t <= 125;
        if fits {
            let base = self.small.as_ref().expect("small entries");
            let mut acc = base.clone();
            for _ in 1..t {
                acc = matmul_i128(&acc, base, s);
            }
            let numer = acc.into_iter().map(BigInt::from).collect();
            return RationalKernel::from_parts(self.n, num_traits::pow(self.denom.clone(), t as usize), numer);
        }
        let mut acc = self.numer.clone();
        for _ in 1..t {
            acc = matmul_big(&acc, &self.numer, s);
        }
        RationalKernel::from_parts(self.n, num_traits::pow(self.denom.clone(), t as usize), acc)
    }

    /// Largest absolute entrywise difference against a floating kernel.
    pub fn max_abs_diff<S: Scalar>(&self, other: &KernelDense<S>) -> f64 {
        self.to_f64()
            .iter()
            .zip(other.to_f64())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn small_or_big(&self) -> std::result::Result<&[i128], &[BigInt]> {
        match &self.small {
            Some(v) => Ok(v),
            None => Err(&self.numer),
        }
    }
}

fn matmul_i128(a: &[i128], b: &[i128], s: usize) -> Vec<i128> {
    let mut out = vec![0i128; s * s];
    for x in 0..s {
        let row = &mut out[x * s..(x + 1) * s];
        for y in 0..s {
            let v = a[x * s + y];
            if v == 0 {
                continue;
            }
            for (o, w) in row.iter_mut().zip(&b[y * s..(y + 1) * s]) {
                *o += v * w;
            }
        }
    }
    out
}

fn matmul_big(a: &[BigInt], b: &[BigInt], s: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); s * s];
    for x in 0..s {
        for y in 0..s {
            let v = &a[x * s + y];
            if v.is_zero() {
                continue;
            }
            for z in 0..s {
                let w = &b[y * s + z];
                if !w.is_zero() {
                    out[x * s + z] += v * w;
                }
            }
        }
    }
    out
}

/// In-place tensor transform: along every bit `b`, the pair
/// `(c[a_b = 0], c[a_b = 1])` becomes `(m0 c0 + m1 c1, m2 c0 + m3 c1)` with
/// the matrix chosen by bit `b` of `x`.
fn tensor_transform<T: Clone>(
    c: &mut [T],
    n: u64,
    x: u64,
    m_zero: &[T; 4],
    m_one: &[T; 4],
    lin: impl Fn(&T, &T, &T, &T) -> T,
) {
    let size = c.len();
    for b in 0..n {
        let stride = 1usize << b;
        let m = if x >> b & 1 == 1 { m_one } else { m_zero };
        for base in (0..size).step_by(2 * stride) {
            for i in base..base + stride {
                let (c0, c1) = (c[i].clone(), c[i + stride].clone());
                c[i] = lin(&m[0], &c0, &m[1], &c1);
                c[i + stride] = lin(&m[2], &c0, &m[3], &c1);
            }
        }
    }
}

fn check_dense(spec: &ProcessSpec) -> Result<()> {
    if spec.n > MAX_DENSE_N {
        return Err(Error::Capacity(format!(
            "dense kernels need N <= {MAX_DENSE_N}, got {}",
            spec.n
        )));
    }
    Ok(())
}

/// Integer ingredients of the spectral formula: per-subset `rho_A^t` scaled
/// by a common denominator `d^t`.
struct ScaledSpectrum {
    coeffs: Vec<BigInt>,
    d_pow_t: BigInt,
}

fn scaled_spectrum(spec: &ProcessSpec, t: u64) -> Result<ScaledSpectrum> {
    let rho = subset_spectrum(spec)?;
    let d = rho.iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    let coeffs = rho
        .iter()
        .map(|r| num_traits::pow(r.numer() * (&d / r.denom()), t as usize))
        .collect();
    Ok(ScaledSpectrum {
        coeffs,
        d_pow_t: num_traits::pow(d, t as usize),
    })
}

/// Exact `t`-step kernel from the spectral formula
/// `P_t(y|x) = pi(y) sum_A rho_A^t (p/q)^|A| prod_{j in A} (1 - x_j/p)(1 - y_j/p)`,
/// evaluated row by row with a fast subset transform in integers.
pub fn kernel_spectral_exact(spec: &ProcessSpec, t: u64) -> Result<RationalKernel> {
    check_dense(spec)?;
    let n = spec.n;
    let size = 1usize << n;
    let (u, v) = spec.ratio_qp();
    let dp = *spec.p.denom();
    let sc = scaled_spectrum(spec, t)?;
    let pi_num: Vec<BigInt> = (0..size as u64)
        .map(|y| {
            let w = y.count_ones() as usize;
            num_traits::pow(BigInt::from(v), w) * num_traits::pow(BigInt::from(u), n as usize - w)
        })
        .collect();
    let denom = num_traits::pow(BigInt::from(dp) * BigInt::from(u) * BigInt::from(v), n as usize) * &sc.d_pow_t;
    let max_c = sc.coeffs.iter().map(|c| c.bits()).max().unwrap_or(0) as f64;
    let growth = ((u * v + v * v) as f64).log2() * n as f64 + (v as f64).log2() * n as f64;
    let mut numer = Vec::with_capacity(size * size);
    if max_c + growth + 2.0 < 126.0 {
        let c: Vec<i128> = sc.coeffs.iter().map(|c| c.to_i128().expect("fits")).collect();
        let pi: Vec<i128> = pi_num.iter().map(|c| c.to_i128().expect("fits")).collect();
        let (u, v) = (u as i128, v as i128);
        let m0 = [u * v, v * v, u * v, -u * v];
        let m1 = [u * v, -u * v, u * v, u * u];
        for x in 0..size as u64 {
            let mut row = c.clone();
            tensor_transform(&mut row, n, x, &m0, &m1, |a, c0, b, c1| a * c0 + b * c1);
            numer.extend(row.iter().zip(&pi).map(|(r, w)| BigInt::from(r * w)));
        }
    } else {
        let (u, v) = (BigInt::from(u), BigInt::from(v));
        let uv = &u * &v;
        let m0 = [uv.clone(), &v * &v, uv.clone(), -uv.clone()];
        let m1 = [uv.clone(), -uv.clone(), uv.clone(), &u * &u];
        for x in 0..size as u64 {
            let mut row = sc.coeffs.clone();
            tensor_transform(&mut row, n, x, &m0, &m1, |a, c0, b, c1| a * c0 + b * c1);
            numer.extend(row.into_iter().zip(&pi_num).map(|(r, w)| r * w));
        }
    }
    Ok(RationalKernel::from_parts(n, denom, numer))
}

/// One row of the spectral `t`-step kernel in the scalar backend `S`.
pub fn transition_row<S: Scalar>(spec: &ProcessSpec, x: u64, t: u64) -> Result<Vec<S>> {
    check_dense(spec)?;
    let rho: Vec<S> = subset_spectrum(spec)?.iter().map(S::from_rational).collect();
    Ok(spectral_row(spec, &rho, x, t))
}

/// [`transition_row`] with the per-subset spectrum already converted.
pub(crate) fn spectral_row<S: Scalar>(spec: &ProcessSpec, rho: &[S], x: u64, t: u64) -> Vec<S> {
    let n = spec.n;
    let pq = S::from_rational(&(spec.p_exact() / spec.q_exact()));
    let qp = S::from_rational(&(spec.q_exact() / spec.p_exact()));
    let one = S::one();
    let m0 = [one.clone(), pq, one.clone(), -one.clone()];
    let m1 = [one.clone(), -one.clone(), one.clone(), qp];
    let mut row: Vec<S> = rho.iter().map(|r| r.pow(t)).collect();
    tensor_transform(&mut row, n, x, &m0, &m1, |a, c0, b, c1| {
        a.clone() * c0.clone() + b.clone() * c1.clone()
    });
    let p = S::from_rational(&spec.p_exact());
    let q = S::from_rational(&spec.q_exact());
    row.into_iter()
        .enumerate()
        .map(|(y, v)| {
            let w = (y as u64).count_ones() as u64;
            v * p.pow(w) * q.pow(n - w)
        })
        .collect()
}

/// The spectral `t`-step kernel in backend `S`. Exact mode goes through the
/// integer evaluator.
pub fn kernel_spectral<S: Scalar>(spec: &ProcessSpec, t: u64) -> Result<KernelDense<S>> {
    check_dense(spec)?;
    if t == 0 {
        return Err(Error::Domain("step count t must be positive".into()));
    }
    if S::mode() == crate::numerics::ScalarMode::Exact {
        return Ok(kernel_spectral_exact(spec, t)?.to_dense());
    }
    let rho: Vec<S> = subset_spectrum(spec)?.iter().map(S::from_rational).collect();
    let data = (0..1u64 << spec.n)
        .flat_map(|x| spectral_row::<S>(spec, &rho, x, t))
        .collect();
    Ok(KernelDense { n: spec.n, data })
}

/// One-step kernel built straight from the acceptance/rejection rules by
/// summing over the support of `Z` and every accept/reject outcome.
pub fn kernel_bruteforce_exact(spec: &ProcessSpec) -> Result<RationalKernel> {
    if spec.n > MAX_BRUTEFORCE_N {
        return Err(Error::Capacity(format!(
            "brute-force kernel needs N <= {MAX_BRUTEFORCE_N}, got {}",
            spec.n
        )));
    }
    let n = spec.n;
    let size = 1usize << n;
    let zs = z_distribution(spec)?;
    let dz = zs.iter().fold(BigInt::one(), |acc, (_, w)| acc.lcm(w.denom()));
    let weights: Vec<(u64, BigInt)> = zs
        .iter()
        .map(|(z, w)| (*z, w.numer() * (&dz / w.denom())))
        .collect();
    let (u, v) = spec.ratio_qp();
    let denom = &dz * num_traits::pow(BigInt::from(v), n as usize);
    // Outcome weight for m picked ones of which f fall back to zero:
    // u^f (v-u)^(m-f) v^(N-m).
    let outcome = |m: u32, f: u32| -> BigInt {
        num_traits::pow(BigInt::from(u), f as usize)
            * num_traits::pow(BigInt::from(v - u), (m - f) as usize)
            * num_traits::pow(BigInt::from(v), (n as u32 - m) as usize)
    };
    let table: Vec<Vec<BigInt>> = (0..=n as u32).map(|m| (0..=m).map(|f| outcome(m, f)).collect()).collect();
    if denom.bits() <= 120 {
        let table: Vec<Vec<i128>> = table
            .iter()
            .map(|r| r.iter().map(|v| v.to_i128().expect("fits")).collect())
            .collect();
        let weights: Vec<(u64, i128)> = weights.iter().map(|(z, w)| (*z, w.to_i128().expect("fits"))).collect();
        let mut numer = vec![0i128; size * size];
        for x in 0..size as u64 {
            let row = &mut numer[x as usize * size..(x as usize + 1) * size];
            for &(z, w) in &weights {
                bruteforce_outcomes(x, z, |y, m, f| {
                    let o = table[m as usize][f as usize];
                    if o != 0 {
                        row[y as usize] += w * o;
                    }
                });
            }
        }
        return Ok(RationalKernel::from_parts(n, denom, numer.into_iter().map(BigInt::from).collect()));
    }
    let mut numer = vec![BigInt::zero(); size * size];
    for x in 0..size as u64 {
        for (z, w) in &weights {
            bruteforce_outcomes(x, *z, |y, m, f| {
                let o = &table[m as usize][f as usize];
                if !o.is_zero() {
                    numer[x as usize * size + y as usize] += w * o;
                }
            });
        }
    }
    Ok(RationalKernel::from_parts(n, denom, numer))
}

/// Visits every outcome of one update from `x` with picked set `z`:
/// `(y, picked ones, ones that fell back)`.
fn bruteforce_outcomes(x: u64, z: u64, mut visit: impl FnMut(u64, u32, u32)) {
    let ones = z & x;
    let base = x | z;
    let m = ones.count_ones();
    let mut f = ones;
    loop {
        visit(base & !f, m, f.count_ones());
        if f == 0 {
            break;
        }
        f = (f - 1) & ones;
    }
}

pub fn kernel_bruteforce<S: Scalar>(spec: &ProcessSpec) -> Result<KernelDense<S>> {
    Ok(kernel_bruteforce_exact(spec)?.to_dense())
}

/// Hamming-chain kernel from the Krawtchouk expansion
/// `K_t(i,j) = C(N,j) p^j q^(N-j) {1 + sum_n rho_n^t h_n Q_n(i) Q_n(j)}`.
pub fn kernel_hamming_t<S: Scalar>(spec: &ProcessSpec, t: u64) -> Result<KernelHamming<S>> {
    spec.require_exchangeable()?;
    let n = spec.n;
    let spectrum = eigenvalues_hamming::<S>(spec)?;
    let basis = spectrum.basis().clone();
    let h = h_weights::<S>(&basis);
    let rows: Vec<Vec<S>> = (0..=n).map(|i| krawtchouk_row::<S>(&basis, i)).collect::<Result<_>>()?;
    let p = S::from_rational(&spec.p_exact());
    let q = S::from_rational(&spec.q_exact());
    let pmf: Vec<S> = binomial_row(n)
        .iter()
        .enumerate()
        .map(|(j, c)| S::from_biguint(c) * p.pow(j as u64) * q.pow(n - j as u64))
        .collect();
    let coeff: Vec<S> = (0..=n as usize)
        .map(|k| spectrum.rho(k as u64).pow(t) * h[k].clone())
        .collect();
    let out = (0..=n as usize)
        .map(|i| {
            let g: Vec<S> = (0..=n as usize).map(|k| coeff[k].clone() * rows[i][k].clone()).collect();
            (0..=n as usize)
                .map(|j| {
                    let terms = (0..=n as usize).map(|k| g[k].clone() * rows[j][k].clone()).collect();
                    pmf[j].clone() * S::sum(terms)
                })
                .collect()
        })
        .collect();
    Ok(KernelHamming::from_rows(n, out))
}

pub fn kernel_hamming<S: Scalar>(spec: &ProcessSpec) -> Result<KernelHamming<S>> {
    kernel_hamming_t(spec, 1)
}

/// Exact one-step Hamming kernel built directly from the update rules: the
/// picked ones are hypergeometric, and each falls back with probability `q/p`.
pub fn kernel_hamming_direct(spec: &ProcessSpec) -> Result<KernelHamming<ExactRational>> {
    let n = spec.n;
    let sizes = size_distribution(spec)?;
    let r = spec.q_exact() / spec.p_exact();
    let s = ExactRational::one() - r.clone();
    let rp: Vec<ExactRational> = (0..=n).map(|k| r.pow(k)).collect();
    let sp: Vec<ExactRational> = (0..=n).map(|k| s.pow(k)).collect();
    let cn: Vec<BigUint> = binomial_row(n);
    let mut rows = vec![vec![ExactRational::zero(); n as usize + 1]; n as usize + 1];
    for (i, row) in rows.iter_mut().enumerate() {
        let i = i as u64;
        for (m, pm) in sizes.iter().enumerate() {
            if pm.is_zero() {
                continue;
            }
            let m = m as u64;
            let pm = pm.clone() / ExactRational::from(cn[m as usize].clone());
            for k in m.saturating_sub(n - i)..=m.min(i) {
                let hyper = ExactRational::from(binomial(i, k) * binomial(n - i, m - k)) * pm.clone();
                let ck = binomial_row(k);
                for f in 0..=k {
                    let w = hyper.clone()
                        * ExactRational::from(ck[f as usize].clone())
                        * rp[f as usize].clone()
                        * sp[(k - f) as usize].clone();
                    if w.is_zero() {
                        continue;
                    }
                    let j = (i + (m - k) - f) as usize;
                    row[j] = row[j].clone() + w;
                }
            }
        }
    }
    Ok(KernelHamming::from_rows(n, rows))
}

/// Aggregates a dense kernel over Hamming classes, checking that every
/// state of a class has the same class-to-class row.
pub fn lump_to_hamming(k: &RationalKernel) -> std::result::Result<KernelHamming<ExactRational>, String> {
    let n = k.n();
    let size = k.states() as u64;
    let mut reps: Vec<Option<Vec<BigInt>>> = vec![None; n as usize + 1];
    for x in 0..size {
        let mut agg = vec![BigInt::zero(); n as usize + 1];
        for y in 0..size {
            agg[y.count_ones() as usize] += k.numer(x, y);
        }
        let w = x.count_ones() as usize;
        match &reps[w] {
            None => reps[w] = Some(agg),
            Some(r) if *r == agg => {}
            Some(_) => return Err(format!("weight class {w} is not lumpable at state {x:#b}")),
        }
    }
    let rows = reps
        .into_iter()
        .map(|r| {
            r.expect("every weight occurs")
                .into_iter()
                .map(|v| ExactRational::new(v, k.denom().clone()))
                .collect()
        })
        .collect();
    Ok(KernelHamming::from_rows(n, rows))
}

/// Sign in the random-walk representation
/// `P_t(y|x) = pi(y) E[prod_j (1 + RW_SIGN (-q/p)^S_j)]`,
/// `S_j = x_j + y_j - 1 + sum_k Z_k[j]`. Fixed against the brute-force
/// kernel; see the `rw_sign_is_resolved` test.
pub const RW_SIGN: i8 = -1;

/// How the random-walk expectation may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RwBudget {
    /// Largest joint support `|supp Z|^t` summed exactly.
    pub max_exact_support: u64,
    /// Monte Carlo sample count used when the support is too large; `None`
    /// makes that case a capacity error.
    pub monte_carlo_samples: Option<u64>,
    pub seed: u64,
}

impl Default for RwBudget {
    fn default() -> Self {
        RwBudget {
            max_exact_support: 1 << 20,
            monte_carlo_samples: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RwKernelRow {
    Exact(Vec<ExactRational>),
    MonteCarlo {
        estimate: Vec<f64>,
        std_error: Vec<f64>,
        samples: u64,
    },
}

impl RwKernelRow {
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            RwKernelRow::Exact(v) => v.iter().map(|x| x.to_f64()).collect(),
            RwKernelRow::MonteCarlo { estimate, .. } => estimate.clone(),
        }
    }
}

/// The `t`-step row from `x` through the random-walk representation.
pub fn kernel_rw_representation(spec: &ProcessSpec, x: &[bool], t: u64, budget: RwBudget) -> Result<RwKernelRow> {
    if x.len() as u64 != spec.n {
        return Err(Error::Domain(format!("start vector has {} coordinates, N = {}", x.len(), spec.n)));
    }
    if spec.n > MAX_DENSE_N || t > 4 {
        return Err(Error::Capacity(format!(
            "random-walk representation needs N <= {MAX_DENSE_N} and t <= 4, got N = {}, t = {t}",
            spec.n
        )));
    }
    let xm = vertex_index(x);
    let zs = z_distribution(spec)?;
    let joint = (zs.len() as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if joint <= budget.max_exact_support as u128 {
        return Ok(RwKernelRow::Exact(rw_exact(spec, &zs, xm, t, RW_SIGN)));
    }
    let samples = budget.monte_carlo_samples.ok_or_else(|| {
        Error::Capacity(format!(
            "joint update support {joint} exceeds the exact budget {} and Monte Carlo is disabled",
            budget.max_exact_support
        ))
    })?;
    Ok(rw_monte_carlo(spec, xm, t, samples, budget.seed))
}

/// Exact random-walk representation with an explicit sign, for resolving
/// the convention.
pub fn rw_representation_with_sign(spec: &ProcessSpec, x: u64, t: u64, sign: i8) -> Result<Vec<ExactRational>> {
    let zs = z_distribution(spec)?;
    Ok(rw_exact(spec, &zs, x, t, sign))
}

fn rw_factor_table(spec: &ProcessSpec, t: u64, sign: i8) -> Vec<ExactRational> {
    // Index s + 1 for s in -1..=t+1.
    let r = -(spec.q_exact() / spec.p_exact());
    let sg = ExactRational::from(sign as i64);
    (-1..=t as i64 + 1)
        .map(|s| {
            let pw = if s < 0 {
                ExactRational::one() / r.clone()
            } else {
                r.pow(s as u64)
            };
            ExactRational::one() + sg.clone() * pw
        })
        .collect()
}

fn rw_exact(spec: &ProcessSpec, zs: &[(u64, ExactRational)], x: u64, t: u64, sign: i8) -> Vec<ExactRational> {
    let n = spec.n;
    // Group joint draws by their per-coordinate pick counts.
    let mut counts: BTreeMap<Vec<u8>, ExactRational> = BTreeMap::new();
    counts.insert(vec![0; n as usize], ExactRational::one());
    for _ in 0..t {
        let mut next: BTreeMap<Vec<u8>, ExactRational> = BTreeMap::new();
        for (c, w) in &counts {
            for (z, pz) in zs {
                let mut c2 = c.clone();
                for (j, cj) in c2.iter_mut().enumerate() {
                    if z >> (n - 1 - j as u64) & 1 == 1 {
                        *cj += 1;
                    }
                }
                let e = next.entry(c2).or_insert_with(ExactRational::zero);
                *e = e.clone() + w.clone() * pz.clone();
            }
        }
        counts = next;
    }
    let table = rw_factor_table(spec, t, sign);
    let size = 1u64 << n;
    (0..size)
        .map(|y| {
            let mut acc = ExactRational::zero();
            for (c, w) in &counts {
                let mut prod = w.clone();
                for (j, cj) in c.iter().enumerate() {
                    let bit = n - 1 - j as u64;
                    let s = (x >> bit & 1) as i64 + (y >> bit & 1) as i64 - 1 + *cj as i64;
                    prod = prod * table[(s + 1) as usize].clone();
                    if prod.is_zero() {
                        break;
                    }
                }
                acc = acc + prod;
            }
            acc * spec.stationary_weight(y.count_ones() as u64)
        })
        .collect()
}

fn rw_monte_carlo(spec: &ProcessSpec, x: u64, t: u64, samples: u64, seed: u64) -> RwKernelRow {
    let n = spec.n;
    let size = 1usize << n;
    let table: Vec<f64> = rw_factor_table(spec, t, RW_SIGN).iter().map(|v| v.to_f64()).collect();
    let pi: Vec<f64> = (0..size as u64)
        .map(|y| spec.stationary_weight(y.count_ones() as u64).to_f64())
        .collect();
    let sampler = super::sample::StepSampler::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; size];
    let mut sum_sq = vec![0.0; size];
    let mut picked = Vec::new();
    let mut c = vec![0i64; n as usize];
    for _ in 0..samples {
        c.iter_mut().for_each(|v| *v = 0);
        for _ in 0..t {
            sampler.sample_z(&mut rng, &mut picked);
            for &j in &picked {
                c[j] += 1;
            }
        }
        for y in 0..size as u64 {
            let mut prod = 1.0;
            for (j, cj) in c.iter().enumerate() {
                let bit = n - 1 - j as u64;
                let s = (x >> bit & 1) as i64 + (y >> bit & 1) as i64 - 1 + cj;
                prod *= table[(s + 1) as usize];
            }
            let v = prod * pi[y as usize];
            sum[y as usize] += v;
            sum_sq[y as usize] += v * v;
        }
    }
    let m = samples as f64;
    let estimate: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_error = sum_sq
        .iter()
        .zip(&estimate)
        .map(|(sq, e)| ((sq / m - e * e).max(0.0) / m).sqrt())
        .collect();
    RwKernelRow::MonteCarlo {
        estimate,
        std_error,
        samples,
    }
}

/// Exact structural checks on an oracle kernel.
pub mod checks {
    use super::*;

    pub fn row_sums_are_one(k: &RationalKernel) -> std::result::Result<(), String> {
        let s = k.states();
        for x in 0..s {
            let total: BigInt = k.numer[x * s..(x + 1) * s].iter().sum();
            if total != k.denom {
                return Err(format!("row {x:#b} sums to {}", ExactRational::new(total, k.denom.clone())));
            }
        }
        Ok(())
    }

    pub fn nonnegative(k: &RationalKernel) -> std::result::Result<(), String> {
        match k.numer.iter().position(|v| v.sign() == Sign::Minus) {
            Some(i) => Err(format!("negative entry at flat index {i}")),
            None => Ok(()),
        }
    }

    /// `pi(x) K(x,y) = pi(y) K(y,x)` for all `x, y`.
    pub fn detailed_balance(k: &RationalKernel, spec: &ProcessSpec) -> std::result::Result<(), String> {
        let n = spec.n as usize;
        let (u, v) = spec.ratio_qp();
        let w: Vec<BigInt> = (0..=n)
            .map(|h| num_traits::pow(BigInt::from(v), h) * num_traits::pow(BigInt::from(u), n - h))
            .collect();
        let s = k.states() as u64;
        let small_w: Option<Vec<i128>> = w.iter().map(|x| x.to_i128().filter(|_| x.bits() < 26)).collect();
        for x in 0..s {
            for y in x + 1..s {
                let (wx, wy) = (x.count_ones() as usize, y.count_ones() as usize);
                let ok = match (k.small_or_big(), &small_w) {
                    (Ok(a), Some(sw)) => {
                        a[(x * s + y) as usize] * sw[wx] == a[(y * s + x) as usize] * sw[wy]
                    }
                    _ => k.numer(x, y) * &w[wx] == k.numer(y, x) * &w[wy],
                };
                if !ok {
                    return Err(format!("detailed balance fails for x = {x:#b}, y = {y:#b}"));
                }
            }
        }
        Ok(())
    }

    /// The marginal of `X_1` on every coordinate set `B` depends on `x` only
    /// through `x & B`.
    pub fn restriction_principle(k: &RationalKernel) -> std::result::Result<(), String> {
        let s = k.states() as u64;
        let numer: Vec<BigInt>;
        let flat: &[i128] = match k.small_or_big() {
            Ok(v) => v,
            Err(big) => {
                numer = big.to_vec();
                return restriction_big(&numer, s);
            }
        };
        let mut reference = vec![0i128; s as usize];
        let mut current = vec![0i128; s as usize];
        for b in 1..s - 1 {
            for x in 0..s {
                let rep = x & b;
                let fill = |out: &mut Vec<i128>, from: u64| {
                    out.iter_mut().for_each(|v| *v = 0);
                    for y in 0..s {
                        out[(y & b) as usize] += flat[(from * s + y) as usize];
                    }
                };
                if x == rep {
                    continue;
                }
                fill(&mut reference, rep);
                fill(&mut current, x);
                if reference != current {
                    return Err(format!("marginal on B = {b:#b} differs between x = {x:#b} and {rep:#b}"));
                }
            }
        }
        Ok(())
    }

    fn restriction_big(flat: &[BigInt], s: u64) -> std::result::Result<(), String> {
        for b in 1..s - 1 {
            for x in 0..s {
                let rep = x & b;
                if x == rep {
                    continue;
                }
                let marg = |from: u64| {
                    let mut out = vec![BigInt::zero(); s as usize];
                    for y in 0..s {
                        out[(y & b) as usize] += &flat[(from * s + y) as usize];
                    }
                    out
                };
                if marg(rep) != marg(x) {
                    return Err(format!("marginal on B = {b:#b} differs between x = {x:#b} and {rep:#b}"));
                }
            }
        }
        Ok(())
    }
}
