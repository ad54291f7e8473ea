//! Krawtchouk polynomials on the Binomial(N, p) weight, and Hermite
//! polynomials for their Gaussian limit.

mod hermite;
mod krawtchouk;

pub use hermite::{hermite, hermite_limit_check, HermiteEval};
pub use krawtchouk::{
    check_orthogonality, check_symmetric_representation, h_weight, h_weights, krawtchouk_at_critical,
    krawtchouk_numerators, krawtchouk_prefix, krawtchouk_row, krawtchouk_row_by_expansion,
    krawtchouk_row_convolution, rn_coefficient, xxm1_expansion_check, CriticalForm, CriticalValue,
    KrawtchoukBasis,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ExactRational, ScalarMode, SignedLogReal};
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn basis(n: u64, a: i64, b: i64) -> KrawtchoukBasis {
        KrawtchoukBasis::exact(n, Rational64::new(a, b)).unwrap()
    }

    fn r(a: i64, b: i64) -> ExactRational {
        ExactRational::from_ratio(a, b)
    }

    #[test]
    fn row_examples() {
        let row: Vec<ExactRational> = krawtchouk_row(&basis(4, 1, 2), 2).unwrap();
        assert_eq!(row, vec![r(1, 1), r(0, 1), r(-1, 3), r(0, 1), r(1, 1)]);
        let row: Vec<ExactRational> = krawtchouk_row(&basis(6, 1, 2), 3).unwrap();
        assert_eq!(row[1], r(0, 1));
        for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
            let row: Vec<ExactRational> = krawtchouk_row(&basis(9, a, b), 0).unwrap();
            assert!(row.iter().all(|q| *q == r(1, 1)));
        }
        assert!(krawtchouk_row::<ExactRational>(&basis(4, 1, 2), 5).is_err());
    }

    #[test]
    fn row_matches_expansion_and_prefix() {
        for &(a, b) in &[(1, 2), (3, 5), (3, 4), (7, 10)] {
            for n in [1u64, 2, 5, 11, 17] {
                let bs = basis(n, a, b);
                for x in 0..=n {
                    let fast: Vec<ExactRational> = krawtchouk_row(&bs, x).unwrap();
                    assert_eq!(fast, krawtchouk_row_by_expansion(&bs, x).unwrap(), "N={n} x={x}");
                    assert_eq!(fast, krawtchouk_prefix(&bs, x, n).unwrap(), "N={n} x={x}");
                }
            }
        }
    }

    #[test]
    fn q1_closed_form() {
        let bs = basis(30, 3, 5);
        for x in 0..=30 {
            let row: Vec<ExactRational> = krawtchouk_row(&bs, x).unwrap();
            assert_eq!(row[1], r(1, 1) - r(x as i64, 1) / r(18, 1));
        }
    }

    #[test]
    fn log_rows_track_exact_rows() {
        let bs = KrawtchoukBasis::new(300, Rational64::new(3, 5), ScalarMode::LOG_FLOAT).unwrap();
        for x in [0u64, 1, 97, 180, 181, 299, 300] {
            let exact: Vec<ExactRational> = krawtchouk_row(&bs, x).unwrap();
            let lg: Vec<SignedLogReal> = krawtchouk_row(&bs, x).unwrap();
            let conv = krawtchouk_row_convolution(&bs, x).unwrap();
            for (k, (e, l)) in exact.iter().zip(&lg).enumerate() {
                let el = e.to_log();
                assert_eq!(el.sign(), l.sign(), "x={x} n={k}");
                if !e.is_zero() {
                    let rel = (el.log_mag() - l.log_mag()).abs();
                    assert!(rel < 1e-12, "x={x} n={k} rel={rel}");
                }
            }
            // The convolution cancels heavily near x = Np and is only a loose cross-check.
            for (k, (e, c)) in exact.iter().zip(&conv).enumerate() {
                let ev = e.to_f64();
                assert!((ev - c.to_f64()).abs() <= 1e-6 * ev.abs().max(1e-3), "x={x} n={k}");
            }
        }
    }

    #[test]
    fn log_rows_at_large_n() {
        let bs = KrawtchoukBasis::new(1 << 14, Rational64::new(3, 5), ScalarMode::LOG_FLOAT).unwrap();
        let row: Vec<SignedLogReal> = krawtchouk_row(&bs, 1).unwrap();
        // Q_n(1) = 1 - n / (N p).
        for n in [0u64, 1, 5000, 9830, 16384] {
            let want = 1.0 - n as f64 / (16384.0 * 0.6);
            let got = row[n as usize].to_f64();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300), "n={n} {got} vs {want}");
        }
    }

    #[test]
    fn h_weight_examples() {
        assert_eq!(h_weight::<ExactRational>(&basis(4, 1, 2), 1).unwrap(), r(4, 1));
        assert_eq!(h_weight::<ExactRational>(&basis(7, 3, 4), 0).unwrap(), r(1, 1));
        assert_eq!(h_weight::<ExactRational>(&basis(2, 3, 5), 2).unwrap(), r(9, 4));
        let lg = h_weight::<SignedLogReal>(&basis(2, 3, 5), 2).unwrap().to_f64();
        assert!((lg - 2.25).abs() < 1e-15);
        assert_eq!(h_weights::<ExactRational>(&basis(2, 3, 5)), vec![r(1, 1), r(3, 1), r(9, 4)]);
    }

    #[test]
    fn orthogonality_small() {
        for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
            for n in 1..=12 {
                check_orthogonality(&basis(n, a, b)).unwrap();
            }
        }
    }

    #[test]
    fn symmetric_representation_small() {
        for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
            for n in 1..=6 {
                check_symmetric_representation(&basis(n, a, b)).unwrap();
            }
        }
    }

    #[test]
    fn critical_values() {
        let b10 = basis(10, 1, 2);
        let odd = krawtchouk_at_critical(&b10, 3).unwrap();
        assert_eq!(odd.value, r(0, 1));
        let two = krawtchouk_at_critical(&b10, 2).unwrap();
        assert_eq!(two.form, CriticalForm::ExactIdentity);
        assert_eq!(two.value, r(-1, 9));
        let row: Vec<ExactRational> = krawtchouk_row(&b10, 5).unwrap();
        assert_eq!(row[2], r(-1, 9));
        assert_eq!(krawtchouk_at_critical(&basis(4, 1, 2), 4).unwrap().value, r(1, 1));
        // Asymptotic form at p = 3/5, N = 10: (-2/3) 2 / 20.
        let asym = krawtchouk_at_critical(&basis(10, 3, 5), 2).unwrap();
        assert_eq!(asym.form, CriticalForm::Asymptotic);
        assert_eq!(asym.value, r(-1, 15));
        assert!(krawtchouk_at_critical(&basis(7, 3, 5), 2).is_err());
    }

    #[test]
    fn critical_identity_matches_rows() {
        for n in (2..=30).step_by(2) {
            let bs = basis(n, 1, 2);
            let row: Vec<ExactRational> = krawtchouk_row(&bs, n / 2).unwrap();
            for (d, q) in row.iter().enumerate() {
                assert_eq!(krawtchouk_at_critical(&bs, d as u64).unwrap().value, *q);
            }
        }
    }

    #[test]
    fn critical_asymptotic_converges() {
        let bs = KrawtchoukBasis::exact(100_000, Rational64::new(3, 5)).unwrap();
        let exact = krawtchouk_prefix(&bs, 60_000, 4).unwrap();
        for d in [2u64, 4] {
            let asym = krawtchouk_at_critical(&bs, d).unwrap().value.to_f64();
            let e = exact[d as usize].to_f64();
            assert!((asym - e).abs() <= 1e-3 * e.abs(), "d={d}: {asym} vs {e}");
        }
        assert_eq!(exact[1], r(0, 1));
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite(2, 0.0), -1.0);
        assert_eq!(hermite(3, 0.0), 0.0);
        assert_eq!(hermite(2, 1.0), 0.0);
        assert_eq!(hermite(4, 1.0), -2.0);
        assert_eq!(hermite(0, 3.0), 1.0);
        assert_eq!(hermite(1, 3.0), 3.0);
    }

    #[test]
    fn hermite_generating_function() {
        let he = HermiteEval::new(30);
        for &v in &[-2.0, -1.3, 0.0, 0.7, 2.0] {
            let h = he.values(v);
            for &psi in &[-0.5, -0.2, 0.1, 0.5] {
                let mut term = 1.0;
                let mut sum = 0.0;
                for (n, hn) in h.iter().enumerate() {
                    if n > 0 {
                        term *= psi / n as f64;
                    }
                    sum += hn * term;
                }
                let want = (psi * v - psi * psi / 2.0f64).exp();
                assert!((sum - want).abs() <= 1e-8, "v={v} psi={psi}");
            }
        }
    }

    #[test]
    fn hermite_limit_examples() {
        let bs = KrawtchoukBasis::exact(1_000_000, Rational64::new(3, 5)).unwrap();
        let (l, rr) = hermite_limit_check(&bs, 1, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(rr, 0.0);
        let (l, rr) = hermite_limit_check(&bs, 2, 0.0).unwrap();
        assert!((rr + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((l - rr).abs() <= 1e-2, "{l} vs {rr}");
        let (l, rr) = hermite_limit_check(&bs, 4, 1.0).unwrap();
        assert!((rr + 2.0 / 24f64.sqrt()).abs() < 1e-15);
        assert!((l - rr).abs() <= 1e-2 * rr.abs(), "{l} vs {rr}");
    }

    #[test]
    fn rn_examples() {
        for &(a, b) in &[(1, 2), (3, 5)] {
            let bs = basis(5, a, b);
            for n in 0..=5 {
                assert_eq!(rn_coefficient(&bs, n, 0, 0, 0).unwrap(), r(1, 1));
            }
        }
        assert_eq!(rn_coefficient(&basis(2, 1, 2), 1, 1, 1, 1).unwrap(), r(1, 1));
        assert_eq!(rn_coefficient(&basis(2, 1, 2), 2, 1, 1, 0).unwrap(), r(1, 1));
        assert!(rn_coefficient(&basis(2, 1, 2), 1, 2, 2, 0).is_err());
        assert!(rn_coefficient(&basis(3, 1, 2), 1, 1, 1, 2).is_err());
    }

    #[test]
    fn rn_is_product_of_rows_in_average() {
        // sum over |A| = n of prod (1 - x_j/p)(1 - y_j/p), divided by C(N,n).
        let bs = basis(6, 3, 5);
        let rr = bs.r_exact();
        let x: u32 = 0b110100;
        let y: u32 = 0b100110;
        for n in 0..=6u32 {
            let mut sum = r(0, 1);
            for a in 0u32..64 {
                if a.count_ones() != n {
                    continue;
                }
                let mut prod = r(1, 1);
                for j in 0..6 {
                    if a >> j & 1 == 1 {
                        let f = |b: u32| if b >> j & 1 == 1 { -rr.clone() } else { r(1, 1) };
                        prod = prod * f(x) * f(y);
                    }
                }
                sum = sum + prod;
            }
            let c = ExactRational::from(crate::numerics::binomial(6, n as u64));
            let want = sum / c;
            assert_eq!(rn_coefficient(&bs, n as u64, 3, 3, 2).unwrap(), want, "n={n}");
        }
    }

    #[test]
    fn xxm1_examples() {
        let (l, rr) = xxm1_expansion_check(&basis(2, 1, 2), 2).unwrap();
        assert_eq!((l.clone(), rr), (r(2, 1), r(2, 1)));
        let (l, rr) = xxm1_expansion_check(&basis(4, 3, 5), 3).unwrap();
        assert_eq!(l, r(6, 1));
        assert_eq!(rr, r(6, 1));
        for x in 0..=9 {
            let (l, rr) = xxm1_expansion_check(&basis(9, 3, 4), x).unwrap();
            assert_eq!(l, rr);
        }
        let (l, rr) = xxm1_expansion_check(&basis(9, 3, 4), 0).unwrap();
        assert_eq!((l, rr), (r(0, 1), r(0, 1)));
    }

    fn asymptotic_rel_err(n_dim: u64, x: u64, p: Rational64, deg: usize) -> f64 {
        let bs = KrawtchoukBasis::exact(n_dim, p).unwrap();
        let q = krawtchouk_prefix(&bs, x, 4).unwrap();
        let base = ExactRational::from_ratio(1, 1)
            - ExactRational::from(x as i64) / (bs.p_exact() * ExactRational::from(n_dim as i64));
        let approx = base.pow(deg as u64);
        ((q[deg].clone() - approx.clone()) / approx).to_f64().abs()
    }

    #[test]
    fn asymptotic_power_law() {
        let p = Rational64::new(3, 5);
        for &n_dim in &[1000u64, 10_000] {
            for deg in 1..=4 {
                let e = asymptotic_rel_err(n_dim, n_dim / 10, p, deg);
                assert!(e <= 5.0 / n_dim as f64, "N={n_dim} n={deg} err={e}");
            }
        }
        // Closer to x = Np the constant grows but the error stays O(1/N).
        for &(num, den) in &[(3u64, 10u64), (1, 2), (9, 10)] {
            for deg in 2..=4 {
                let a = 1000.0 * asymptotic_rel_err(1000, 1000 * num / den, p, deg);
                let b = 10_000.0 * asymptotic_rel_err(10_000, 10_000 * num / den, p, deg);
                assert!((a - b).abs() <= 0.05 * b, "x/N={num}/{den} n={deg}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn orthogonality_exact(n in 1u64..=40, pi in 0usize..3) {
            let (a, b) = [(1, 2), (3, 5), (3, 4)][pi];
            prop_assert!(check_orthogonality(&basis(n, a, b)).is_ok());
        }

        #[test]
        fn q_at_zero_is_one(n in 1u64..200, a in 50i64..99) {
            let bs = basis(n, a, 100);
            let row: Vec<ExactRational> = krawtchouk_row(&bs, 0).unwrap();
            prop_assert!(row.iter().all(|q| *q == r(1, 1)));
        }

        #[test]
        fn modes_agree(n in 1u64..120, a in 50i64..99, xs in 0.0f64..=1.0) {
            let bs = basis(n, a, 100);
            let x = (xs * n as f64).round() as u64;
            let exact: Vec<ExactRational> = krawtchouk_row(&bs, x).unwrap();
            let lg: Vec<SignedLogReal> = krawtchouk_row(&bs, x).unwrap();
            for (e, l) in exact.iter().zip(&lg) {
                let el = e.to_log();
                prop_assert_eq!(el.sign(), l.sign());
                if !e.is_zero() {
                    prop_assert!((el.log_mag() - l.log_mag()).abs() <= 1e-10);
                }
            }
        }
    }
}
