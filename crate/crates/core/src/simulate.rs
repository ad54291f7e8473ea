//! Monte Carlo forward simulation of the acceptance/rejection dynamics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{vertex_index, ProcessSpec, StepSampler, MAX_BRUTEFORCE_N};

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub spec: ProcessSpec,
    pub start: Vec<bool>,
    pub horizon: u64,
    pub n_trajectories: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_trajectories == 0 {
            return Err(Error::config("n_trajectories", "must be at least 1"));
        }
        if self.start.len() as u64 != self.spec.n {
            return Err(Error::config(
                "start",
                format!("has {} coordinates, N = {}", self.start.len(), self.spec.n),
            ));
        }
        Ok(())
    }
}

/// Tally of `|X_t|` over trajectories.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmpiricalHamming {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl EmpiricalHamming {
    pub fn pmf(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

/// The RNG of trajectory `i`: stream `i` of the seeded generator, so the
/// draws do not depend on how trajectories are scheduled.
pub fn trajectory_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

fn final_state(sampler: &StepSampler, cfg: &SimConfig, i: u64, scratch: &mut Vec<usize>) -> Vec<bool> {
    let mut rng = trajectory_rng(cfg.seed, i);
    let mut x = cfg.start.clone();
    for _ in 0..cfg.horizon {
        sampler.step(&mut x, scratch, &mut rng);
    }
    x
}

fn tally(cfg: &SimConfig, bins: usize, bin: impl Fn(&[bool]) -> usize + Sync) -> Result<Vec<u64>> {
    cfg.validate()?;
    let sampler = StepSampler::new(&cfg.spec);
    Ok((0..cfg.n_trajectories)
        .into_par_iter()
        .fold(
            || (vec![0u64; bins], Vec::new()),
            |(mut acc, mut scratch), i| {
                let x = final_state(&sampler, cfg, i, &mut scratch);
                acc[bin(&x)] += 1;
                (acc, scratch)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        ))
}

/// Simulates `n_trajectories` independent runs of `horizon` steps on the
/// current rayon pool and tallies the final Hamming weights.
pub fn run(cfg: &SimConfig) -> Result<EmpiricalHamming> {
    let counts = tally(cfg, cfg.spec.n as usize + 1, |x| x.iter().filter(|&&b| b).count())?;
    Ok(EmpiricalHamming {
        counts,
        n: cfg.n_trajectories,
    })
}

/// [`run`] on a dedicated pool of `workers` threads.
pub fn run_with_workers(cfg: &SimConfig, workers: usize) -> Result<EmpiricalHamming> {
    with_pool(workers, || run(cfg))
}

/// Tally over all `2^N` states, for `N <= 12`.
pub fn run_full(cfg: &SimConfig) -> Result<Vec<u64>> {
    if cfg.spec.n > MAX_BRUTEFORCE_N {
        return Err(Error::Capacity(format!(
            "full-state histograms need N <= {MAX_BRUTEFORCE_N}, got {}",
            cfg.spec.n
        )));
    }
    tally(cfg, 1usize << cfg.spec.n, |x| vertex_index(x) as usize)
}

pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::config("workers", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(f)
}

/// `3 sqrt((N+1) / (4 n))`: a conservative bound on the TV between an
/// `n`-sample multinomial empirical pmf on `N+1` cells and its mean.
pub fn tv_threshold(n_cells: usize, n: u64) -> f64 {
    3.0 * (n_cells as f64 / (4.0 * n as f64)).sqrt()
}

/// `tv = 1/2 sum |emp/n - exact|` and whether it is within [`tv_threshold`].
pub fn compare_exact(emp: &EmpiricalHamming, exact: &[f64]) -> Result<(f64, bool)> {
    if emp.counts.len() != exact.len() {
        return Err(Error::Domain(format!(
            "empirical pmf has {} cells, exact has {}",
            emp.counts.len(),
            exact.len()
        )));
    }
    let tv = 0.5
        * emp
            .pmf()
            .iter()
            .zip(exact)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok((tv, tv <= tv_threshold(exact.len(), emp.n)))
}

/// A draw from `pi(., p)`.
pub fn draw_stationary(spec: &ProcessSpec, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.p_f64();
    (0..spec.n).map(|_| rng.random_bool(p)).collect()
}

#[cfg(test)]
mod tests {
    use num_rational::Rational64;

    use super::*;
    use crate::numerics::ExactRational;
    use crate::process::{kernel_bruteforce_exact, UpdateLaw};

    fn cfg(n: u64, law: UpdateLaw, horizon: u64, trajectories: u64, seed: u64) -> SimConfig {
        SimConfig {
            spec: ProcessSpec::new(n, Rational64::new(3, 5), law).unwrap(),
            start: vec![false; n as usize],
            horizon,
            n_trajectories: trajectories,
            seed,
        }
    }

    fn binomial(n: u64, p: f64) -> Vec<f64> {
        (0..=n)
            .map(|k| {
                (crate::numerics::log_binomial(n, k).unwrap() + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
            })
            .collect()
    }

    #[test]
    fn horizon_zero() {
        let mut c = cfg(6, UpdateLaw::SubsetUniform { z: 2 }, 0, 50, 1);
        c.start = vec![true, true, false, true, false, false];
        let e = run(&c).unwrap();
        assert_eq!(e.counts, vec![0, 0, 0, 50, 0, 0, 0]);
    }

    #[test]
    fn compare_examples() {
        let exact = binomial(10, 0.6);
        let e = EmpiricalHamming {
            counts: exact.iter().map(|p| (p * 1e6).round() as u64).collect(),
            n: 0,
        };
        let e = EmpiricalHamming {
            n: e.counts.iter().sum(),
            ..e
        };
        let (tv, pass) = compare_exact(&e, &exact).unwrap();
        assert!(tv < 1e-5 && pass);
        let mut all_zero = vec![0u64; 11];
        all_zero[0] = 1000;
        let (tv, pass) = compare_exact(&EmpiricalHamming { counts: all_zero, n: 1000 }, &exact).unwrap();
        assert!((tv - (1.0 - 0.4f64.powi(10))).abs() < 1e-12);
        assert!(!pass);
        assert!((tv_threshold(101, 100_000) - 0.0477).abs() < 1e-4);
        assert!(compare_exact(&EmpiricalHamming { counts: vec![1], n: 1 }, &exact).is_err());
    }

    #[test]
    fn iid_at_p_mixes_in_one_step() {
        let alpha = ExactRational::from_ratio(3, 5);
        let c = cfg(50, UpdateLaw::IidBernoulli { alpha }, 1, 100_000, 7);
        let e = run(&c).unwrap();
        let (tv, _) = compare_exact(&e, &binomial(50, 0.6)).unwrap();
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn reproducible_across_workers() {
        let c = cfg(12, UpdateLaw::SubsetUniform { z: 3 }, 7, 2_000, 99);
        let a = run_with_workers(&c, 1).unwrap();
        let b = run_with_workers(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.iter().sum::<u64>(), 2_000);
        let d = run(&SimConfig { seed: 100, ..c.clone() }).unwrap();
        assert_ne!(a, d);
        assert!(run_with_workers(&c, 0).is_err());
    }

    #[test]
    fn full_histogram_matches_kernel() {
        let c = cfg(3, UpdateLaw::SubsetUniform { z: 2 }, 1, 40_000, 3);
        let counts = run_full(&c).unwrap();
        let k = kernel_bruteforce_exact(&c.spec).unwrap();
        for (y, &cy) in counts.iter().enumerate() {
            let p = k.entry(0, y as u64).to_f64();
            let sd = (p * (1.0 - p) / 40_000.0).sqrt();
            assert!((cy as f64 / 40_000.0 - p).abs() <= 5.0 * sd + 1e-12);
        }
    }

    #[test]
    fn stationarity_preserved() {
        for seed in 0..3 {
            let mut c = cfg(30, UpdateLaw::SubsetUniform { z: 5 }, 0, 1, seed);
            let mut counts = vec![0u64; 31];
            // One stationary start per trajectory.
            let trajectories = 20_000u64;
            for i in 0..trajectories {
                c.start = draw_stationary(&c.spec, seed * 1_000_000 + i);
                c.horizon = 4;
                c.seed = seed * 1_000_000 + i;
                let e = run(&c).unwrap();
                let w = e.counts.iter().position(|&v| v == 1).unwrap();
                counts[w] += 1;
            }
            let e = EmpiricalHamming { counts, n: trajectories };
            let (_, pass) = compare_exact(&e, &binomial(30, 0.6)).unwrap();
            assert!(pass);
        }
    }
}
