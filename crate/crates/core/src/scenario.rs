//! Canned scenarios: the vanishing-cost perfectly revealing sequence, the
//! closed-form Clarke example and a two-action trade problem.

use crate::bayes::{posterior, DecisionProblem, Utility};
use crate::costs::{experiment_cost, NoiseCostFunction};
use crate::error::{Error, Result};
use crate::experiments::{make_uniform_experiment, SignalFunction};
use crate::measures::{MixedDistribution, Quadrature};
use crate::optimize::{clarke_numeric, solve, ClarkeInterval, SolverOptions, SolverResult};

/// Location of the low state in the sequence demo.
pub const THETA0: f64 = 0.0;
/// Location of the high state in the sequence demo.
pub const THETA1: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceRow {
    /// Width at the high state.
    pub width: f64,
    /// `Pr(θ1 | s)` at `s = θ1`, inside the high state's support.
    pub posterior_high: f64,
    pub cost: f64,
}

/// Widths `(limit_width, d_i)` at `(θ0, θ1)`. The large width stands in for
/// infinite noise, so these experiments are a limit demo and not admissible
/// for any fixed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub p: f64,
    pub limit_width: f64,
    pub rows: Vec<SequenceRow>,
}

impl SequenceReport {
    pub fn cost_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].cost < w[0].cost)
    }

    pub fn min_posterior(&self) -> f64 {
        self.rows.iter().map(|r| r.posterior_high).fold(f64::INFINITY, f64::min)
    }
}

/// Two states with mass `p` on `θ1`; for each `d` in `widths` the high state
/// has noise `H_d` and the low state `H_{limit_width}`.
pub fn example1_sequence(p: f64, widths: &[f64], limit_width: f64, cost: &NoiseCostFunction) -> Result<SequenceReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1), got {p}")));
    }
    if widths.is_empty() || widths.iter().any(|&d| !(d > 0.0)) || widths.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("widths must be positive and increasing".into()));
    }
    let prior = MixedDistribution::atomic(&[(THETA0, 1.0 - p), (THETA1, p)])?;
    let bound = 2.0 * limit_width.max(widths[widths.len() - 1]);
    let q = Quadrature::default();
    let rows = widths
        .iter()
        .map(|&d| {
            let exp = make_uniform_experiment(&[(THETA0, limit_width), (THETA1, d)], SignalFunction::Additive, bound)?;
            let post = posterior(&prior, &exp, THETA1)?;
            let posterior_high = post
                .distribution
                .atoms()
                .iter()
                .find(|a| a.location == THETA1)
                .map_or(0.0, |a| a.mass);
            Ok(SequenceRow { width: d, posterior_high, cost: experiment_cost(cost, &exp, &prior, &q)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceReport { p, limit_width, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkeRow {
    pub delta: f64,
    pub numeric: ClarkeInterval,
    pub exact: ClarkeInterval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClarkeReport {
    pub a: f64,
    pub rows: Vec<ClarkeRow>,
}

/// Exact `∂_C W(δ)` for `W(δ) = 1/(|δ| + a)`.
pub fn clarke_exact(a: f64, delta: f64) -> ClarkeInterval {
    let s = 1.0 / ((delta.abs() + a) * (delta.abs() + a));
    if delta > 0.0 {
        ClarkeInterval { lo: -s, hi: -s }
    } else if delta < 0.0 {
        ClarkeInterval { lo: s, hi: s }
    } else {
        ClarkeInterval { lo: -s, hi: s }
    }
}

/// Numerical Clarke intervals of `W(δ) = 1/(|δ| + a)` next to the exact ones.
pub fn clarke_example(a: f64, deltas: &[f64]) -> Result<ClarkeReport> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("a must be positive, got {a}")));
    }
    let w = move |d: f64| 1.0 / (d.abs() + a);
    let rows = deltas
        .iter()
        .map(|&delta| {
            let h0 = if delta == 0.0 { 0.1 } else { 0.1 * delta.abs().min(1.0) };
            Ok(ClarkeRow { delta, numeric: clarke_numeric(&w, delta, h0)?, exact: clarke_exact(a, delta) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClarkeReport { a, rows })
}

/// A buyer choosing whether to buy (`a = 1`, payoff `θ - price`) or not
/// (`a = 0`), with quality `qualities[1]` having probability `p`.
pub fn trade_problem(price: f64) -> Result<DecisionProblem> {
    DecisionProblem::new(vec![0.0, 1.0], Utility::Trade { price })
}

pub fn trade_demo(
    price: f64,
    qualities: [f64; 2],
    p: f64,
    cost: &NoiseCostFunction,
    bound: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1), got {p}")));
    }
    let prior = MixedDistribution::atomic(&[(qualities[0], 1.0 - p), (qualities[1], p)])?;
    solve(&prior, &trade_problem(price)?, cost, bound, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::NoiseLevel;

    #[test]
    fn sequence_costs_fall() {
        let c = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let r = example1_sequence(0.5, &[1.0, 10.0, 100.0], 1e4, &c).unwrap();
        assert!(r.cost_strictly_decreasing());
        assert!(r.rows[2].cost < 0.02);
        let want = 0.5 * (1.0 - (-1e4f64).exp()) / 1e4 + 0.5 * (1.0 - (-100.0f64).exp()) / 100.0;
        assert!((r.rows[2].cost - want).abs() < 1e-15);
        // Pr(θ1|s) = 1 / (1 + (1-p) d / (p D))
        assert!((r.rows[0].posterior_high - 1.0 / (1.0 + 1e-4)).abs() < 1e-12);
    }

    #[test]
    fn equal_widths_leave_the_prior() {
        let c = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let r = example1_sequence(0.3, &[50.0], 50.0, &c).unwrap();
        assert!((r.rows[0].posterior_high - 0.3).abs() < 1e-15);
    }

    #[test]
    fn clarke_rows() {
        let r = clarke_example(2.0, &[0.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.rows[0].exact, ClarkeInterval { lo: -0.25, hi: 0.25 });
        assert!((r.rows[1].numeric.lo + 1.0 / 9.0).abs() < 1e-6);
        assert!((r.rows[2].numeric.hi - 1.0 / 9.0).abs() < 1e-6);
    }

    #[test]
    fn trade_regimes() {
        let c = NoiseCostFunction::exp_decay(0.1, 1.0).unwrap();
        let opts = SolverOptions::default();
        let r = trade_demo(0.5, [1.0, 2.0], 0.5, &c, 2.0, &opts).unwrap();
        assert_eq!(r.widths, vec![NoiseLevel::Width(2.0); 2]);
        assert_eq!(r.rule.piece_actions(), &[1.0]);

        let huge = NoiseCostFunction::exp_decay(1e3, 1.0).unwrap();
        let r = trade_demo(1.5, [1.0, 2.0], 0.5, &huge, 2.0, &opts).unwrap();
        assert_eq!(r.widths, vec![NoiseLevel::Width(2.0); 2]);
    }
}
