use rand::Rng;

use super::law::{vertex_bits, ProcessSpec, UpdateLaw};

/// Precomputed single-step sampler for the acceptance/rejection dynamics.
#[derive(Clone, Debug)]
pub struct StepSampler {
    n: usize,
    /// Flip-back probability `q/p = u/v`.
    u: u64,
    v: u64,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Subset(usize),
    Iid(f64),
    Mixture { alphas: Vec<f64>, cumulative: Vec<f64> },
    Lebesgue,
    Block(usize),
    Explicit { masks: Vec<Vec<usize>>, cumulative: Vec<f64> },
}

fn cumulative(ws: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    ws.map(|w| {
        acc += w;
        acc
    })
    .collect()
}

fn pick_index<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().expect("nonempty");
    let t = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= t).min(cum.len() - 1)
}

impl StepSampler {
    pub fn new(spec: &ProcessSpec) -> Self {
        let n = spec.n as usize;
        let (u, v) = spec.ratio_qp();
        let kind = match &spec.law {
            UpdateLaw::SubsetUniform { z } => Kind::Subset(*z as usize),
            UpdateLaw::IidBernoulli { alpha } => Kind::Iid(alpha.to_f64()),
            UpdateLaw::DeFinettiDiscrete { atoms } => Kind::Mixture {
                alphas: atoms.iter().map(|(a, _)| a.to_f64()).collect(),
                cumulative: cumulative(atoms.iter().map(|(_, w)| w.to_f64())),
            },
            UpdateLaw::DeFinettiLebesgue => Kind::Lebesgue,
            UpdateLaw::BlockUpdate { beta } => Kind::Block(*beta as usize),
            UpdateLaw::Explicit { pmf } => Kind::Explicit {
                masks: pmf
                    .keys()
                    .map(|&m| {
                        vertex_bits(spec.n, m)
                            .into_iter()
                            .enumerate()
                            .filter_map(|(j, b)| b.then_some(j))
                            .collect()
                    })
                    .collect(),
                cumulative: cumulative(pmf.values().map(|w| w.to_f64())),
            },
        };
        StepSampler {
            n,
            u: u as u64,
            v: v as u64,
            kind,
        }
    }

    /// Draws the picked coordinates `{j : Z[j] = 1}` into `out`.
    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let iid = |alpha: f64, rng: &mut R, out: &mut Vec<usize>| {
            for j in 0..self.n {
                if rng.random_bool(alpha.clamp(0.0, 1.0)) {
                    out.push(j);
                }
            }
        };
        match &self.kind {
            Kind::Subset(z) => out.extend(rand::seq::index::sample(rng, self.n, *z).iter()),
            Kind::Iid(alpha) => iid(*alpha, rng, out),
            Kind::Mixture { alphas, cumulative } => {
                let k = pick_index(cumulative, rng);
                iid(alphas[k], rng, out)
            }
            Kind::Lebesgue => {
                let alpha = rng.random::<f64>();
                iid(alpha, rng, out)
            }
            Kind::Block(beta) => {
                let b = rng.random_range(0..self.n / beta);
                out.extend(b * beta..(b + 1) * beta);
            }
            Kind::Explicit { masks, cumulative } => {
                let k = pick_index(cumulative, rng);
                out.extend_from_slice(&masks[k]);
            }
        }
    }

    /// Applies the update rules for a realized `Z`: picked zeros become one,
    /// picked ones fall to zero with probability `q/p`.
    pub fn apply<R: Rng + ?Sized>(&self, x: &mut [bool], picked: &[usize], rng: &mut R) {
        for &j in picked {
            if !x[j] {
                x[j] = true;
            } else if self.u == self.v || rng.random_range(0..self.v) < self.u {
                x[j] = false;
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, x: &mut [bool], scratch: &mut Vec<usize>, rng: &mut R) {
        self.sample_z(rng, scratch);
        let picked = std::mem::take(scratch);
        self.apply(x, &picked, rng);
        *scratch = picked;
    }
}

/// One transition from `x`.
pub fn step_sample<R: Rng + ?Sized>(spec: &ProcessSpec, x: &[bool], rng: &mut R) -> Vec<bool> {
    let sampler = StepSampler::new(spec);
    let mut y = x.to_vec();
    let mut scratch = Vec::new();
    sampler.step(&mut y, &mut scratch, rng);
    y
}
