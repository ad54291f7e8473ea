use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::numerics::{
    binomial, binomial_row, stable_sum, ExactRational, LogBinomialTable, Scalar, ScalarMode, SignedLogReal,
};

/// Krawtchouk polynomials `Q_n(x; N, p)` with `Q_n(0) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrawtchoukBasis {
    n: u64,
    p: Rational64,
    mode: ScalarMode,
}

impl KrawtchoukBasis {
    pub fn new(n: u64, p: Rational64, mode: ScalarMode) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension N must be positive".into()));
        }
        if *p.denom() <= 0 || 2 * *p.numer() < *p.denom() || p.numer() >= p.denom() {
            return Err(Error::Domain(format!("p = {p} must lie in [1/2, 1)")));
        }
        Ok(KrawtchoukBasis {
            n,
            p,
            mode: mode.validate()?,
        })
    }

    pub fn exact(n: u64, p: Rational64) -> Result<Self> {
        Self::new(n, p, ScalarMode::Exact)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> Rational64 {
        self.p
    }

    pub fn q(&self) -> Rational64 {
        Rational64::one() - self.p
    }

    pub fn mode(&self) -> ScalarMode {
        self.mode
    }

    pub fn with_mode(&self, mode: ScalarMode) -> Result<Self> {
        Self::new(self.n, self.p, mode)
    }

    pub fn p_exact(&self) -> ExactRational {
        self.p.into()
    }

    pub fn q_exact(&self) -> ExactRational {
        self.q().into()
    }

    /// `(u, v)` in lowest terms with `q/p = u/v`.
    pub fn ratio_qp(&self) -> (i64, i64) {
        (*self.p.denom() - *self.p.numer(), *self.p.numer())
    }

    /// `q/p` as an exact rational.
    pub fn r_exact(&self) -> ExactRational {
        let (u, v) = self.ratio_qp();
        ExactRational::from_ratio(u, v)
    }

    pub fn p_f64(&self) -> f64 {
        *self.p.numer() as f64 / *self.p.denom() as f64
    }

    pub fn q_f64(&self) -> f64 {
        let (u, _) = self.ratio_qp();
        u as f64 / *self.p.denom() as f64
    }

    fn check_x(&self, x: u64) -> Result<()> {
        if x > self.n {
            return Err(Error::Domain(format!("x = {x} outside [0, {}]", self.n)));
        }
        Ok(())
    }
}

/// Integer coefficients `e_n` of `(v - u s)^x (1 + s)^(N - x)`, so that
/// `Q_n(x) = e_n / (v^x C(N, n))`.
pub fn krawtchouk_numerators(basis: &KrawtchoukBasis, x: u64) -> Result<Vec<BigInt>> {
    basis.check_x(x)?;
    let n_dim = basis.n;
    let (u, v) = basis.ratio_qp();
    let (u, v) = (BigInt::from(u), BigInt::from(v));
    let mut e = Vec::with_capacity(n_dim as usize + 1);
    e.push(num_traits::pow(v.clone(), x as usize));
    if n_dim == 0 {
        return Ok(e);
    }
    // e_1 = v^(x-1) ((N-x) v - u x)
    let lead = BigInt::from(n_dim - x) * &v - &u * BigInt::from(x);
    let e1 = if x == 0 {
        BigInt::from(n_dim)
    } else {
        num_traits::pow(v.clone(), x as usize - 1) * lead
    };
    e.push(e1);
    let base = BigInt::from(n_dim - x) * &v - &u * BigInt::from(x);
    let dv = &v - &u;
    for k in 1..n_dim {
        let kb = BigInt::from(k);
        let a = &base - &dv * &kb;
        let b = &u * BigInt::from(n_dim - k + 1);
        let num = a * &e[k as usize] - b * &e[k as usize - 1];
        let den = &v * BigInt::from(k + 1);
        let (quot, rem) = num.div_rem(&den);
        debug_assert!(rem.is_zero(), "inexact Krawtchouk recurrence step");
        e.push(quot);
    }
    Ok(e)
}

/// `(Q_0(x), ..., Q_N(x))`.
pub fn krawtchouk_row<S: Scalar>(basis: &KrawtchoukBasis, x: u64) -> Result<Vec<S>> {
    let e = krawtchouk_numerators(basis, x)?;
    let n_dim = basis.n;
    let (_, v) = basis.ratio_qp();
    let mut denom: BigUint = num_traits::pow(BigUint::from(v as u64), x as usize);
    let mut row = Vec::with_capacity(e.len());
    for (k, ek) in e.iter().enumerate() {
        if k > 0 {
            denom = denom * (n_dim - k as u64 + 1) / k as u64;
        }
        row.push(S::from_big_fraction(ek, &denom));
    }
    Ok(row)
}

/// Oracle: expands the generating function by exact polynomial
/// multiplication.
pub fn krawtchouk_row_by_expansion(basis: &KrawtchoukBasis, x: u64) -> Result<Vec<ExactRational>> {
    basis.check_x(x)?;
    let n_dim = basis.n;
    let r = basis.r_exact();
    let mut poly = vec![ExactRational::one()];
    let factors = std::iter::repeat_n(-r, x as usize)
        .chain(std::iter::repeat_n(ExactRational::one(), (n_dim - x) as usize));
    for c in factors {
        let mut next = vec![ExactRational::zero(); poly.len() + 1];
        for (i, a) in poly.iter().enumerate() {
            next[i] = &next[i] + a;
            next[i + 1] = &next[i + 1] + &(a * &c);
        }
        poly = next;
    }
    let binoms = binomial_row(n_dim);
    Ok(poly
        .into_iter()
        .zip(binoms)
        .map(|(c, b)| c / ExactRational::from(b))
        .collect())
}

/// The generating-function convolution carried out in the log domain:
/// `C(N,n) Q_n(x) = sum_i C(x,i) (-q/p)^i C(N-x, n-i)`. Quadratic in `N`.
pub fn krawtchouk_row_convolution(basis: &KrawtchoukBasis, x: u64) -> Result<Vec<SignedLogReal>> {
    basis.check_x(x)?;
    let n_dim = basis.n;
    let lx = LogBinomialTable::new(x);
    let ly = LogBinomialTable::new(n_dim - x);
    let ln_all = LogBinomialTable::new(n_dim);
    let ln_r = basis.r_exact().to_log().log_mag();
    let mut row = Vec::with_capacity(n_dim as usize + 1);
    for k in 0..=n_dim {
        let lo = k.saturating_sub(n_dim - x);
        let hi = k.min(x);
        let terms: Vec<SignedLogReal> = (lo..=hi)
            .map(|i| {
                let sign = if i % 2 == 0 { 1 } else { -1 };
                SignedLogReal::new(sign, lx.get(i) + i as f64 * ln_r + ly.get(k - i))
            })
            .collect();
        let s = stable_sum(&terms).value;
        row.push(s / SignedLogReal::from_ln(ln_all.get(k)));
    }
    Ok(row)
}

/// `Q_0(x), ..., Q_d(x)` by the rational three-term recurrence; cheap for
/// small `d` at any `N`.
pub fn krawtchouk_prefix(basis: &KrawtchoukBasis, x: u64, max_degree: u64) -> Result<Vec<ExactRational>> {
    basis.check_x(x)?;
    let n_dim = basis.n;
    let d = max_degree.min(n_dim);
    let (u, v) = basis.ratio_qp();
    let mut q = vec![ExactRational::one()];
    if d == 0 {
        return Ok(q);
    }
    // Q_1 = 1 - x / (N p)
    let np = basis.p_exact() * ExactRational::from(n_dim as i64);
    q.push(ExactRational::one() - ExactRational::from(x as i64) / np);
    let base = (n_dim - x) as i64 as i128 * v as i128 - u as i128 * x as i128;
    for k in 1..d {
        let a = base - (v - u) as i128 * k as i128;
        let b = ExactRational::from_integer(BigInt::from(u) * BigInt::from(k));
        let den = ExactRational::from_integer(BigInt::from(v) * BigInt::from(n_dim - k));
        let next = (ExactRational::from_integer(BigInt::from(a)) * q[k as usize].clone()
            - b * q[k as usize - 1].clone())
            / den;
        q.push(next);
    }
    Ok(q)
}

/// `h_n = C(N, n) (p/q)^n`, the inverse squared norm of `Q_n`.
pub fn h_weight<S: Scalar>(basis: &KrawtchoukBasis, n: u64) -> Result<S> {
    if n > basis.n {
        return Err(Error::Domain(format!("degree {n} exceeds N = {}", basis.n)));
    }
    let pq = S::from_rational(&(basis.p_exact() / basis.q_exact()));
    Ok(S::from_biguint(&binomial(basis.n, n)) * pq.pow(n))
}

/// `h_0, ..., h_N`.
pub fn h_weights<S: Scalar>(basis: &KrawtchoukBasis) -> Vec<S> {
    let pq = S::from_rational(&(basis.p_exact() / basis.q_exact()));
    binomial_row(basis.n)
        .iter()
        .enumerate()
        .map(|(k, c)| S::from_biguint(c) * pq.pow(k as u64))
        .collect()
}

/// Which closed form produced a [`CriticalValue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticalForm {
    /// `(-1)^m C(N/2, m) / C(N, 2m)` at `p = 1/2`; odd degrees vanish exactly.
    ExactIdentity,
    /// `Q_2m ~ (-q/p)^m (2m)! / (m! (2N)^m)` and `Q_odd ~ 0`, valid as `N` grows.
    Asymptotic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalValue {
    pub degree: u64,
    pub value: ExactRational,
    pub form: CriticalForm,
}

/// `Q_d(Np; N, p)` from its closed form. Needs `Np` to be an integer.
pub fn krawtchouk_at_critical(basis: &KrawtchoukBasis, degree: u64) -> Result<CriticalValue> {
    let (a, d) = (*basis.p.numer() as i128, *basis.p.denom() as i128);
    if (basis.n as i128 * a) % d != 0 {
        return Err(Error::Domain(format!(
            "N p = {} * {} is not an integer; round it and use krawtchouk_row",
            basis.n, basis.p
        )));
    }
    if degree > basis.n {
        return Err(Error::Domain(format!("degree {degree} exceeds N = {}", basis.n)));
    }
    let half = basis.p == Rational64::new(1, 2);
    let form = if half {
        CriticalForm::ExactIdentity
    } else {
        CriticalForm::Asymptotic
    };
    if degree % 2 == 1 {
        return Ok(CriticalValue {
            degree,
            value: ExactRational::zero(),
            form,
        });
    }
    let m = degree / 2;
    let value = if half {
        let sign = if m.is_multiple_of(2) { 1 } else { -1 };
        ExactRational::from_integer(BigInt::from(binomial(basis.n / 2, m)) * sign)
            / ExactRational::from(binomial(basis.n, degree))
    } else {
        let r = -basis.r_exact();
        let fact = |k: u64| -> BigUint { (1..=k).fold(BigUint::one(), |acc, i| acc * i) };
        let den = ExactRational::from(fact(m)) * ExactRational::from_integer(2 * basis.n as i64).pow(m);
        r.pow(m) * ExactRational::from(fact(degree)) / den
    };
    Ok(CriticalValue { degree, value, form })
}

/// Coefficient of `C(N,n) s^n` in
/// `(1+s)^N00 (1 - s q/p)^(N01+N10) (1 + s q^2/p^2)^N11`, with
/// `N00 = N - |x| - |y| + <x,y>` so that the four counts sum to `N`.
pub fn rn_coefficient(basis: &KrawtchoukBasis, n: u64, hx: u64, hy: u64, inner: u64) -> Result<ExactRational> {
    let nn = basis.n as i64;
    let (hx_, hy_, in_) = (hx as i64, hy as i64, inner as i64);
    let n00 = nn - hx_ - hy_ + in_;
    let n_mixed = hx_ + hy_ - 2 * in_;
    let n11 = in_;
    if n00 < 0 || n_mixed < 0 || inner > hx.min(hy) || hx > basis.n || hy > basis.n {
        return Err(Error::Domain(format!(
            "inconsistent overlap counts: N = {nn}, |x| = {hx}, |y| = {hy}, <x,y> = {inner}"
        )));
    }
    if n > basis.n {
        return Err(Error::Domain(format!("degree {n} exceeds N = {}", basis.n)));
    }
    let r = basis.r_exact();
    let trunc = n as usize + 1;
    let binom_poly = |m: u64, c: &ExactRational| -> Vec<ExactRational> {
        let mut out = vec![ExactRational::zero(); trunc];
        for (i, b) in binomial_row(m).into_iter().enumerate() {
            if i >= trunc {
                break;
            }
            out[i] = ExactRational::from(b) * c.pow(i as u64);
        }
        out
    };
    let mul = |a: &[ExactRational], b: &[ExactRational]| -> Vec<ExactRational> {
        let mut out = vec![ExactRational::zero(); trunc];
        for (i, x) in a.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            for (j, y) in b.iter().enumerate().take(trunc - i) {
                out[i + j] = &out[i + j] + &(x * y);
            }
        }
        out
    };
    let f00 = binom_poly(n00 as u64, &ExactRational::one());
    let f01 = binom_poly(n_mixed as u64, &-r.clone());
    let f11 = binom_poly(n11 as u64, &(&r * &r));
    let prod = mul(&mul(&f00, &f01), &f11);
    Ok(prod[n as usize].clone() / ExactRational::from(binomial(basis.n, n)))
}

/// Both sides of `x(x-1) = N(N-1) p^2 (Q_2(x) - 2 Q_1(x) + 1)`.
pub fn xxm1_expansion_check(basis: &KrawtchoukBasis, x: u64) -> Result<(ExactRational, ExactRational)> {
    let q = krawtchouk_prefix(basis, x, 2)?;
    let xi = x as i64;
    let lhs = ExactRational::from(xi * (xi - 1));
    let nn = basis.n as i64;
    let p = basis.p_exact();
    let q2 = q.get(2).cloned().unwrap_or_else(ExactRational::zero);
    let rhs = ExactRational::from(nn * (nn - 1)) * p.clone() * p
        * (q2 - ExactRational::from(2) * q[1].clone() + ExactRational::one());
    Ok((lhs, rhs))
}

/// Exact check of `E[Q_n Q_m] = delta_nm / h_n` under Binomial(N, p), done in
/// integers after clearing every denominator.
pub fn check_orthogonality(basis: &KrawtchoukBasis) -> std::result::Result<(), String> {
    let n_dim = basis.n;
    let (u, v) = basis.ratio_qp();
    let d = *basis.p.denom();
    let (ub, vb) = (BigInt::from(u), BigInt::from(v));
    let rows: Vec<Vec<BigInt>> = (0..=n_dim)
        .map(|x| krawtchouk_numerators(basis, x).map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    let binoms: Vec<BigInt> = binomial_row(n_dim).into_iter().map(BigInt::from).collect();
    let uv = &ub * &vb;
    let weights: Vec<BigInt> = (0..=n_dim)
        .map(|x| &binoms[x as usize] * num_traits::pow(uv.clone(), (n_dim - x) as usize))
        .collect();
    let dn = num_traits::pow(BigInt::from(d), n_dim as usize);
    for n in 0..=n_dim as usize {
        let want_diag =
            &binoms[n] * &dn * num_traits::pow(vb.clone(), n_dim as usize - n) * num_traits::pow(ub.clone(), n);
        for m in n..=n_dim as usize {
            let mut g = BigInt::zero();
            for x in 0..=n_dim as usize {
                g += &weights[x] * &rows[x][n] * &rows[x][m];
            }
            let want = if n == m { want_diag.clone() } else { BigInt::zero() };
            if g != want {
                return Err(format!("orthogonality fails at N = {n_dim}, p = {}, n = {n}, m = {m}", basis.p));
            }
        }
    }
    Ok(())
}

/// Exact check of `C(N,n) Q_n(|x|) = sum_{|A|=n} prod_{j in A} (1 - x_j/p)`
/// over all binary vectors `x` and all `n`. Exponential in `N`.
pub fn check_symmetric_representation(basis: &KrawtchoukBasis) -> std::result::Result<(), String> {
    let n_dim = basis.n;
    if n_dim > 12 {
        return Err(format!("symmetric representation check needs N <= 12, got {n_dim}"));
    }
    let (u, v) = basis.ratio_qp();
    let size = 1u64 << n_dim;
    // v^n * sum over |A| = n of (-u/v)^{|A & x|}, bucketed by n.
    let pow_u: Vec<i128> = (0..=n_dim).map(|k| (-(u as i128)).pow(k as u32)).collect();
    let pow_v: Vec<i128> = (0..=n_dim).map(|k| (v as i128).pow(k as u32)).collect();
    let rows: Vec<Vec<BigInt>> = (0..=n_dim)
        .map(|x| krawtchouk_numerators(basis, x).map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    for x in 0..size {
        let mut sums = vec![0i128; n_dim as usize + 1];
        for a in 0..size {
            let n = a.count_ones() as usize;
            let k = (a & x).count_ones() as usize;
            sums[n] += pow_u[k] * pow_v[n - k];
        }
        let w = x.count_ones() as u64;
        for (n, s) in sums.iter().enumerate() {
            // C(N,n) Q_n(w) v^n = e_n(w) v^(n - w); compare after scaling by v^w.
            let lhs = &rows[w as usize][n] * BigInt::from(pow_v[n]);
            let rhs = BigInt::from(*s) * num_traits::pow(BigInt::from(v), w as usize);
            if lhs != rhs {
                return Err(format!("symmetric representation fails at N = {n_dim}, x = {x:#b}, n = {n}"));
            }
        }
    }
    Ok(())
}
