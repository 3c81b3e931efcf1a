//! Forward simulation of `X_t = M̂_t ζ_t + f̂_t` from a zero past.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QmleError, Result};
use crate::models::{simulation_gate, Filter, ModelSpec};
use crate::noise::{stream_rng, NoiseSpec};

pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub data: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub model_tag: String,
    pub noise_tag: String,
}

/// Simulated path together with the innovations that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub data: Vec<f64>,
    pub innovations: Vec<f64>,
}

/// Simulates `burn_in + n` steps with draws from `rng` and keeps the last `n`.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SimulatedPath> {
    simulation_gate(spec, theta, noise)?;
    let total = burn_in + n;
    let mut filter = Filter::new(spec, theta)?.with_capacity(total);
    let mut data = Vec::with_capacity(n);
    let mut innovations = Vec::with_capacity(n);
    for step in 0..total {
        let (f, m) = filter.next_pair();
        let z = noise.draw(rng);
        let x = m * z + f;
        if !x.is_finite() {
            return Err(QmleError::numeric(format!(
                "{} trajectory became non-finite at step {} (f = {f}, M = {m}, θ = {theta:?})",
                spec.family,
                step + 1
            )));
        }
        filter.observe(x);
        if step >= burn_in {
            data.push(x);
            innovations.push(z);
        }
    }
    Ok(SimulatedPath { data, innovations })
}

/// Simulates on the independent stream `(seed, stream)`.
pub fn simulate_stream(
    spec: &ModelSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
    stream: u64,
    burn_in: usize,
) -> Result<SimulatedPath> {
    let mut rng = stream_rng(seed, stream);
    simulate_with_rng(spec, theta, noise, n, burn_in, &mut rng)
}

pub fn simulate(
    spec: &ModelSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(QmleError::input("sample size must be at least 1"));
    }
    let path = simulate_stream(spec, theta, noise, n, seed, 0, burn_in)?;
    Ok(Trajectory {
        data: path.data,
        n,
        seed,
        burn_in,
        model_tag: spec.family.to_string(),
        noise_tag: noise.law.to_string(),
    })
}
