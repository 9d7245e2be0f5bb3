//! Simulation of finite transition matrices.

use nonrev_core::finite::{FiniteDistribution, KernelMatrix};
use rand::Rng;

use crate::error::{Error, Result};

/// Row-wise cumulative sums for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    cumulative: Vec<Vec<f64>>,
}

impl KernelSampler {
    pub fn new(p: &KernelMatrix) -> Self {
        let n = p.dim();
        let cumulative = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                (0..n)
                    .map(|j| {
                        acc += p.entry(i, j);
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { cumulative }
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[state];
        let u = rng.random::<f64>() * row[row.len() - 1];
        row.partition_point(|&c| c <= u).min(row.len() - 1)
    }
}

/// Draws a state from `mu`.
pub fn sample_distribution<R: Rng + ?Sized>(mu: &FiniteDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in mu.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    mu.len() - 1
}

/// `steps` successive states of the chain started at `start` (not included).
pub fn simulate_kernel<R: Rng + ?Sized>(p: &KernelMatrix, start: usize, steps: usize, rng: &mut R) -> Result<Vec<usize>> {
    if start >= p.dim() {
        return Err(Error::InvalidParameter(format!("start state {start} of {}", p.dim())));
    }
    let sampler = KernelSampler::new(p);
    let mut state = start;
    Ok((0..steps)
        .map(|_| {
            state = sampler.step(state, rng);
            state
        })
        .collect())
}
