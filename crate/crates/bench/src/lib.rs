//! Fixtures shared by the benchmarks.

use infocost::{DecisionProblem, MixedDistribution, NoiseCostFunction, NoiseDistribution, Result, Utility};

/// `n` evenly spaced states on `[0, 1]` with equal mass.
pub fn even_prior(n: usize) -> Result<MixedDistribution> {
    let atoms: Vec<(f64, f64)> = (0..n)
        .map(|i| (if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 }, 1.0 / n as f64))
        .collect();
    MixedDistribution::atomic(&atoms)
}

/// Quadratic loss over `m` evenly spaced actions on `[0, 1]`.
pub fn quadratic_problem(m: usize) -> Result<DecisionProblem> {
    let actions = (0..m).map(|i| i as f64 / (m - 1).max(1) as f64).collect();
    DecisionProblem::new(actions, Utility::QuadraticLoss { scale: 1.0 })
}

pub fn cheap_cost() -> Result<NoiseCostFunction> {
    NoiseCostFunction::exp_decay(0.05, 1.0)
}

/// A truncated-Gaussian-shaped target density sampled on `[0, 1.5]`.
pub fn gaussian_target() -> Result<NoiseDistribution> {
    let xs: Vec<f64> = (0..=150).map(|i| i as f64 * 0.01).collect();
    let values = xs.iter().map(|x| (-2.0 * x * x).exp()).collect();
    NoiseDistribution::gridded_normalized(xs, values)
}
