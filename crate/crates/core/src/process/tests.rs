use std::collections::BTreeMap;

use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{ExactRational, SignedLogReal};

fn r(a: i64, b: i64) -> ExactRational {
    ExactRational::from_ratio(a, b)
}

fn spec(n: u64, a: i64, b: i64, law: UpdateLaw) -> ProcessSpec {
    ProcessSpec::new(n, Rational64::new(a, b), law).unwrap()
}

fn subset(z: u64) -> UpdateLaw {
    UpdateLaw::SubsetUniform { z }
}

fn iid(a: i64, b: i64) -> UpdateLaw {
    UpdateLaw::IidBernoulli { alpha: r(a, b) }
}

fn sample_laws(n: u64, rng: &mut ChaCha8Rng) -> Vec<UpdateLaw> {
    let mut laws: Vec<UpdateLaw> = (1..=n).map(subset).collect();
    laws.extend([iid(3, 10), iid(3, 5), iid(1, 1)]);
    laws.extend((1..=n).filter(|b| n.is_multiple_of(*b)).map(|beta| UpdateLaw::BlockUpdate { beta }));
    laws.push(UpdateLaw::DeFinettiLebesgue);
    laws.push(UpdateLaw::DeFinettiDiscrete {
        atoms: vec![(r(1, 4), r(1, 3)), (r(9, 10), r(2, 3))],
    });
    laws.extend((0..3).map(|_| random_explicit_law(n, rng)));
    laws
}

#[test]
fn one_dimensional_example() {
    let s = spec(1, 3, 5, subset(1));
    let want = [r(0, 1), r(1, 1), r(2, 3), r(1, 3)];
    let bf = kernel_bruteforce_exact(&s).unwrap();
    let sp = kernel_spectral_exact(&s, 1).unwrap();
    for (i, w) in want.iter().enumerate() {
        let (x, y) = (i as u64 / 2, i as u64 % 2);
        assert_eq!(bf.entry(x, y), *w);
        assert_eq!(sp.entry(x, y), *w);
    }
    let rho = eigenvalues_hamming::<ExactRational>(&s).unwrap();
    assert_eq!(*rho.rho(1), r(-2, 3));
    let kh = kernel_hamming::<ExactRational>(&s).unwrap();
    assert_eq!(kh.row(0), &[r(0, 1), r(1, 1)]);
    assert_eq!(kh.row(1), &[r(2, 3), r(1, 3)]);
}

#[test]
fn independence_chain_mixes_in_one_step() {
    for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
        let s = spec(4, a, b, UpdateLaw::IidBernoulli { alpha: r(a, b) });
        let rho = eigenvalues_hamming::<ExactRational>(&s).unwrap();
        assert!(rho.eigenvalues().iter().all(|v| v.is_zero()));
        let k = kernel_spectral_exact(&s, 1).unwrap();
        for x in 0..16 {
            for y in 0..16u64 {
                assert_eq!(k.entry(x, y), s.stationary_weight(y.count_ones() as u64));
            }
        }
    }
}

#[test]
fn hypergeometric_eigenvalues() {
    let s = spec(4, 1, 2, subset(2));
    let rho = eigenvalues_hamming::<ExactRational>(&s).unwrap();
    assert_eq!(rho.eigenvalues(), &[r(0, 1), r(-1, 3), r(0, 1), r(1, 1)]);
}

#[test]
fn lebesgue_eigenvalues() {
    let s = spec(6, 3, 5, UpdateLaw::DeFinettiLebesgue);
    let rho = eigenvalues_hamming::<ExactRational>(&s).unwrap();
    assert_eq!(*rho.rho(1), r(1, 6));
    // Midpoint rule for the integral over the rate of (1 - a/p)^n.
    let m = 200_000;
    for n in 1..=6u64 {
        let integral: f64 = (0..m)
            .map(|i| (1.0 - (i as f64 + 0.5) / m as f64 / 0.6).powi(n as i32))
            .sum::<f64>()
            / m as f64;
        assert!((integral - rho.rho(n).to_f64()).abs() < 1e-9, "n={n}");
    }
    // The closed form also matches E[Q_n(|Z|)] under P(|Z| = m) = 1/(N+1).
    let basis = s.exact_basis();
    for n in 1..=6usize {
        let mean = (0..=6u64).fold(r(0, 1), |acc, m| {
            acc + crate::orthopoly::krawtchouk_row::<ExactRational>(&basis, m).unwrap()[n].clone() * r(1, 7)
        });
        assert_eq!(mean, *rho.rho(n as u64));
    }
}

#[test]
fn block_eigenvalues() {
    let s = spec(4, 1, 2, UpdateLaw::BlockUpdate { beta: 2 });
    assert_eq!(eigenvalues_general(&s, 0b1100).unwrap(), r(1, 1));
    assert_eq!(eigenvalues_general(&s, 0b1010).unwrap(), r(-1, 1));
    assert_eq!(eigenvalues_general(&s, 0).unwrap(), r(1, 1));
    assert!(eigenvalues_hamming::<ExactRational>(&s).is_err());
    let never = spec(5, 3, 5, UpdateLaw::never());
    assert!(subset_spectrum(&never).unwrap().iter().all(|v| *v == r(1, 1)));
}

#[test]
fn subset_spectrum_matches_z_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for law in sample_laws(n, &mut rng) {
            for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
                let s = spec(n, a, b, law.clone());
                let fast = subset_spectrum(&s).unwrap();
                assert_eq!(fast, subset_spectrum_from_z(&s).unwrap(), "{s:?}");
                assert!(fast.iter().all(|v| v.abs() <= r(1, 1)));
            }
        }
    }
}

#[test]
fn spectral_equals_bruteforce_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=5 {
        for law in sample_laws(n, &mut rng) {
            for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
                let s = spec(n, a, b, law.clone());
                let bf = kernel_bruteforce_exact(&s).unwrap();
                let sp = kernel_spectral_exact(&s, 1).unwrap();
                assert!(sp.same_as(&bf), "{s:?}");
                for t in 2..=4 {
                    assert!(kernel_spectral_exact(&s, t).unwrap().same_as(&bf.power(t)), "{s:?} t={t}");
                }
                let lg = kernel_spectral::<SignedLogReal>(&s, 1).unwrap();
                assert!(bf.max_abs_diff(&lg) <= 1e-12, "{s:?}");
                checks::row_sums_are_one(&bf).unwrap();
                checks::nonnegative(&bf).unwrap();
                checks::detailed_balance(&bf, &s).unwrap();
                checks::restriction_principle(&bf).unwrap();
            }
        }
    }
}

#[test]
fn dense_kernel_examples() {
    let s = spec(4, 1, 2, subset(4));
    let k = kernel_hamming::<ExactRational>(&s).unwrap();
    let mut want = vec![r(0, 1); 5];
    want[4] = r(1, 1);
    assert_eq!(k.row(0), want.as_slice());
    let d = kernel_hamming_direct(&s).unwrap();
    assert_eq!(d, k);
    // Rows converge to pi when every |rho_A| < 1.
    let s = spec(3, 3, 5, subset(2));
    let k = kernel_spectral::<SignedLogReal>(&s, 200).unwrap();
    for x in 0..8 {
        for y in 0..8u64 {
            let pi = s.stationary_weight(y.count_ones() as u64).to_f64();
            assert!((k.get(x, y).to_f64() - pi).abs() < 1e-12);
        }
    }
    assert!(kernel_spectral::<ExactRational>(&spec(15, 3, 5, subset(1)), 1).is_err());
}

#[test]
fn hamming_kernel_is_lumped_dense_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=6 {
        for law in sample_laws(n, &mut rng).into_iter().filter(|l| l.is_exchangeable()) {
            for &(a, b) in &[(1, 2), (3, 5), (3, 4)] {
                let s = spec(n, a, b, law.clone());
                let lumped = lump_to_hamming(&kernel_bruteforce_exact(&s).unwrap()).unwrap();
                assert_eq!(lumped, kernel_hamming::<ExactRational>(&s).unwrap(), "{s:?}");
                assert_eq!(lumped, kernel_hamming_direct(&s).unwrap(), "{s:?}");
            }
        }
    }
    let s = spec(4, 3, 5, UpdateLaw::BlockUpdate { beta: 2 });
    assert!(kernel_hamming::<ExactRational>(&s).is_err());
}

#[test]
fn hamming_t_step_matches_power() {
    let s = spec(7, 3, 5, subset(3));
    let one = kernel_hamming_direct(&s).unwrap();
    let t3 = kernel_hamming_t::<ExactRational>(&s, 3).unwrap();
    let n = 8usize;
    let mut pw = one.clone();
    for _ in 1..3 {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n).fold(r(0, 1), |acc, k| {
                            acc + pw.get(i as u64, k as u64).clone() * one.get(k as u64, j as u64).clone()
                        })
                    })
                    .collect()
            })
            .collect();
        pw = KernelHamming::from_rows(7, rows);
    }
    assert_eq!(pw, t3);
}

#[test]
fn rw_sign_is_resolved() {
    // Z = all coordinates, p = 1/2: every coordinate flips, so the walk
    // never stays at the origin.
    let all_ones = UpdateLaw::Explicit {
        pmf: BTreeMap::from([(0b111, r(1, 1))]),
    };
    let s = spec(3, 1, 2, all_ones);
    let row = kernel_rw_representation(&s, &[false; 3], 1, RwBudget::default()).unwrap();
    match row {
        RwKernelRow::Exact(v) => {
            assert_eq!(v[0], r(0, 1));
            assert_eq!(v[7], r(1, 1));
        }
        _ => panic!("expected the exact path"),
    }
    let plus = rw_representation_with_sign(&s, 0, 1, 1).unwrap();
    assert_ne!(plus[0], r(0, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 1..=4 {
        for law in sample_laws(n, &mut rng) {
            let s = spec(n, 3, 5, law);
            let bf = kernel_bruteforce_exact(&s).unwrap();
            for t in 1..=2 {
                let pw = bf.power(t);
                for x in 0..1u64 << n {
                    let minus = rw_representation_with_sign(&s, x, t, RW_SIGN).unwrap();
                    let want: Vec<ExactRational> = (0..1u64 << n).map(|y| pw.entry(x, y)).collect();
                    assert_eq!(minus, want, "{s:?} t={t} x={x}");
                }
            }
        }
    }
    // The other sign disagrees on a generic chain.
    let s = spec(3, 3, 5, subset(1));
    let bf = kernel_bruteforce_exact(&s).unwrap();
    let plus = rw_representation_with_sign(&s, 0, 1, 1).unwrap();
    assert!((0..8).any(|y| plus[y as usize] != bf.entry(0, y)));
}

#[test]
fn rw_representation_rows() {
    let s = spec(6, 3, 5, subset(3));
    let bf = kernel_bruteforce_exact(&s).unwrap();
    let x = [true, false, true, true, false, false];
    let xi = vertex_index(&x);
    let row = kernel_rw_representation(&s, &x, 1, RwBudget::default()).unwrap();
    let RwKernelRow::Exact(v) = row else { panic!() };
    assert_eq!(v.iter().fold(r(0, 1), |a, b| a + b.clone()), r(1, 1));
    for y in 0..64 {
        assert_eq!(v[y as usize], bf.entry(xi, y));
    }
    let tight = RwBudget {
        max_exact_support: 10,
        monte_carlo_samples: None,
        seed: 1,
    };
    assert!(matches!(kernel_rw_representation(&s, &x, 1, tight), Err(crate::Error::Capacity(_))));
    let mc = RwBudget {
        monte_carlo_samples: Some(20_000),
        ..tight
    };
    let RwKernelRow::MonteCarlo { estimate, std_error, .. } = kernel_rw_representation(&s, &x, 1, mc).unwrap() else {
        panic!()
    };
    assert!((estimate.iter().sum::<f64>() - 1.0).abs() < 0.05);
    for y in 0..64 {
        let e = bf.entry(xi, y).to_f64();
        assert!((estimate[y as usize] - e).abs() <= 6.0 * std_error[y as usize] + 1e-12, "y={y}");
    }
}

#[test]
fn step_sample_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let never = spec(5, 3, 5, UpdateLaw::never());
    let x = vec![true, false, true, true, false];
    assert_eq!(step_sample(&never, &x, &mut rng), x);

    let s = spec(8, 3, 5, subset(3));
    let sampler = StepSampler::new(&s);
    let mut picked = Vec::new();
    for _ in 0..50 {
        sampler.sample_z(&mut rng, &mut picked);
        assert_eq!(picked.len(), 3);
        let mut y = vec![false; 8];
        sampler.apply(&mut y, &picked, &mut rng);
        let ones: Vec<usize> = (0..8).filter(|&j| y[j]).collect();
        let mut sorted = picked.clone();
        sorted.sort();
        assert_eq!(ones, sorted);
    }
    let half = spec(4, 1, 2, subset(4));
    for _ in 0..20 {
        assert_eq!(step_sample(&half, &[true; 4], &mut rng), vec![false; 4]);
    }
}

#[test]
fn sampler_matches_kernel_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut laws = sample_laws(3, &mut rng);
    laws.retain(|l| !matches!(l, UpdateLaw::SubsetUniform { z } if *z > 2));
    for law in laws {
        let s = spec(3, 3, 4, law);
        let bf = kernel_bruteforce_exact(&s).unwrap();
        let x = vertex_bits(3, 0b101);
        let trials = 40_000;
        let mut counts = [0u32; 8];
        for _ in 0..trials {
            counts[vertex_index(&step_sample(&s, &x, &mut rng)) as usize] += 1;
        }
        for y in 0..8 {
            let p = bf.entry(0b101, y).to_f64();
            let f = counts[y as usize] as f64 / trials as f64;
            let sd = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((f - p).abs() <= 5.0 * sd + 1e-9, "{s:?} y={y}: {f} vs {p}");
        }
    }
}

#[test]
fn law_validation() {
    let p = Rational64::new(3, 5);
    assert!(ProcessSpec::new(4, p, subset(0)).is_err());
    assert!(ProcessSpec::new(4, p, subset(5)).is_err());
    assert!(ProcessSpec::new(4, p, UpdateLaw::BlockUpdate { beta: 3 }).is_err());
    assert!(ProcessSpec::new(4, p, iid(0, 1)).is_err());
    assert!(ProcessSpec::new(4, Rational64::new(2, 5), subset(1)).is_err());
    assert!(ProcessSpec::new(4, Rational64::new(1, 1), subset(1)).is_err());
    let bad = UpdateLaw::Explicit {
        pmf: BTreeMap::from([(1, r(1, 2))]),
    };
    assert!(ProcessSpec::new(4, p, bad).is_err());
    let probs = pick_probabilities(&spec(6, 3, 5, UpdateLaw::BlockUpdate { beta: 2 }));
    assert!(probs.iter().all(|v| *v == r(1, 3)));
}
