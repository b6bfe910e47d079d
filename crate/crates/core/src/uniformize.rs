//! Approximating a unimodal noise density from below by centered uniforms on
//! the grid `jδ_n`, `j = 1..3^n`, `δ_n = 2^{-n}`, and building a uniform
//! experiment that weakly dominates a given one.

use crate::bayes::{atomic_decision_rule, atomic_gross_benefit, AtomState, DecisionProblem, DecisionRule, DEFAULT_PRIOR_NODES};
use crate::costs::{experiment_cost, uniform_cost, NoiseCostFunction};
use crate::error::{Error, Result};
use crate::experiments::{make_uniform_experiment, Experiment, NoiseDistribution};
use crate::measures::{MixedDistribution, Quadrature};
use crate::optimize::{perfect_value, w_eval, NoiseLevel};

/// Default finest grid level for dominance checks.
pub const DEFAULT_N_MAX: u32 = 4;

const MAX_LEVEL: u32 = 16;

/// `k = 3^n` components spaced `2^{-n}` apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApproxGrid {
    n: u32,
}

impl ApproxGrid {
    pub fn new(n: u32) -> Result<Self> {
        if n > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!("grid level {n} exceeds {MAX_LEVEL}")));
        }
        Ok(ApproxGrid { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> usize {
        3usize.pow(self.n)
    }

    pub fn spacing(&self) -> f64 {
        0.5f64.powi(self.n as i32)
    }

    /// `k · spacing = (3/2)^n`.
    pub fn span(&self) -> f64 {
        self.k() as f64 * self.spacing()
    }

    /// `j · spacing`.
    pub fn width(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }
}

/// `Q' = Σ_j α_j H'_{jδ}`, a sub-probability mixture lying below the target.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformMixtureApprox {
    pub grid: ApproxGrid,
    /// `α_1..α_k`.
    pub weights: Vec<f64>,
    pub target: NoiseDistribution,
}

impl UniformMixtureApprox {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Q'(x)`, with each component's density taken on its closed interval.
    pub fn density(&self, x: f64) -> f64 {
        let t = x.abs();
        let d = self.grid.spacing();
        let first = if t == 0.0 { 1 } else { (t / d).ceil() as usize };
        self.weights
            .iter()
            .enumerate()
            .skip(first.saturating_sub(1))
            .filter(|(i, _)| t <= self.grid.width(i + 1))
            .map(|(i, a)| a / (2.0 * self.grid.width(i + 1)))
            .sum()
    }

    /// `∫ |Q' - P'|`. Since `Q' <= P'` this is the target mass minus `Σ α`.
    pub fn l1_distance(&self) -> f64 {
        (self.target.total_mass() - self.weight_sum()).max(0.0)
    }

    /// The mixture as a noise law, with the missing mass recorded as residual.
    pub fn as_noise(&self) -> Result<NoiseDistribution> {
        let widths: Vec<f64> = (1..=self.weights.len()).map(|j| self.grid.width(j)).collect();
        let residual = (1.0 - self.weight_sum()).max(0.0);
        NoiseDistribution::mixture(self.weights.clone(), widths, residual)
    }
}

/// Solves `P'(jδ) = Σ_{i>=j} α_i / (2iδ)` by back-substitution.
pub fn mixture_weights(target: &NoiseDistribution, grid: ApproxGrid) -> Result<UniformMixtureApprox> {
    let k = grid.k();
    let d = grid.spacing();
    let at: Vec<f64> = (1..=k + 1).map(|j| target.density(j as f64 * d)).collect();
    let mut weights = vec![0.0; k];
    weights[k - 1] = 2.0 * k as f64 * d * at[k - 1];
    for j in (1..k).rev() {
        weights[j - 1] = 2.0 * j as f64 * d * (at[j - 1] - at[j]);
    }
    if let Some((i, &w)) = weights.iter().enumerate().find(|(_, &w)| w < -1e-12) {
        return Err(Error::NegativeWeight { index: i + 1, value: w });
    }
    weights.iter_mut().for_each(|w| *w = w.max(0.0));
    Ok(UniformMixtureApprox { grid, weights, target: target.clone() })
}

/// L1 distances of the approximations at each requested level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub entries: Vec<(u32, f64)>,
}

impl ConvergenceReport {
    /// Distances never increase by more than `tol` from one level to the next.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.entries.windows(2).all(|w| w[1].1 <= w[0].1 + tol)
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

pub fn approx_converges(target: &NoiseDistribution, levels: &[u32]) -> Result<ConvergenceReport> {
    let entries = levels
        .iter()
        .map(|&n| Ok((n, mixture_weights(target, ApproxGrid::new(n)?)?.l1_distance())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { entries })
}

/// Selected uniform component for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentChoice {
    /// `0` is the perfect-signal branch.
    pub j: usize,
    pub width: f64,
    pub value: f64,
}

/// `argmax_j ∫ [u(θ, ψ(θ + x)) - c(x)] dH_{jδ}(x)` over `j = 0..k` with
/// `jδ < bound`; ties go to the smaller `j`.
pub fn best_uniform_component(
    theta: f64,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    grid: ApproxGrid,
    bound: f64,
) -> ComponentChoice {
    let mut best = ComponentChoice { j: 0, width: 0.0, value: perfect_value(theta, rule, problem, cost) };
    for j in 1..=grid.k() {
        let width = grid.width(j);
        if width >= bound {
            break;
        }
        let value = w_eval(width, theta, rule, problem, cost);
        if value > best.value {
            best = ComponentChoice { j, width, value };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateChoice {
    pub theta: f64,
    pub mass: f64,
    /// Grid level of the chosen component.
    pub n: u32,
    pub choice: ComponentChoice,
}

/// Outcome of [`dominating_uniform_experiment`].
#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub states: Vec<StateChoice>,
    /// `V_F(P)`.
    pub value_original: f64,
    /// `V_F(H, ψ*_P)`: the uniform experiment judged with the original rule.
    pub value_fixed_rule: f64,
    /// `V_F(H)`, with the rule re-optimized for `H`.
    pub value_uniform: f64,
    /// True when a continuous prior was replaced by Gauss–Legendre atoms.
    pub discretized: bool,
    pub bound: f64,
}

impl DominanceReport {
    /// `V_F(H) - V_F(P)`.
    pub fn margin(&self) -> f64 {
        self.value_uniform - self.value_original
    }

    /// `V_F(H, ψ*_P) - V_F(P)`.
    pub fn fixed_rule_margin(&self) -> f64 {
        self.value_fixed_rule - self.value_original
    }

    pub fn levels(&self) -> Vec<NoiseLevel> {
        self.states
            .iter()
            .map(|s| if s.choice.j == 0 { NoiseLevel::Perfect } else { NoiseLevel::Width(s.choice.width) })
            .collect()
    }

    /// `H` as an experiment; fails if any state took the perfect-signal branch.
    pub fn experiment(&self) -> Result<Experiment> {
        let mut pairs = Vec::with_capacity(self.states.len());
        for s in &self.states {
            if s.choice.j == 0 {
                return Err(Error::Unsupported(format!(
                    "state {} takes the perfect-signal branch, which no bounded experiment represents",
                    s.theta
                )));
            }
            pairs.push((s.theta, s.choice.width));
        }
        make_uniform_experiment(&pairs, crate::experiments::SignalFunction::Additive, self.bound)
    }
}

/// Builds `H = {H_{δ(θ)}}` by taking, per state, the best uniform component
/// over grid levels `n <= n_max` against the optimal rule of `P`.
pub fn dominating_uniform_experiment(
    exp: &Experiment,
    prior: &MixedDistribution,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    n_max: u32,
    bound: f64,
) -> Result<DominanceReport> {
    if !exp.signal().is_additive() {
        return Err(Error::Unsupported("dominance construction needs an additive signal".into()));
    }
    if bound > exp.bound() {
        return Err(Error::InvalidArgument(format!(
            "bound {bound} exceeds the experiment's bound {}",
            exp.bound()
        )));
    }
    let discretized = !prior.is_atomic();
    let atomic = if discretized { prior.discretize(DEFAULT_PRIOR_NODES)? } else { prior.clone() };
    let originals: Vec<AtomState> = atomic
        .atoms()
        .iter()
        .map(|a| Ok(AtomState { theta: a.location, mass: a.mass, noise: Some(exp.noise_for(a.location)?.into_owned()) }))
        .collect::<Result<_>>()?;
    let rule = atomic_decision_rule(&originals, problem)?;
    let q = Quadrature::default();
    let value_original =
        atomic_gross_benefit(&originals, &rule, problem) - experiment_cost(cost, exp, &atomic, &q)?;

    let grids = (0..=n_max).map(ApproxGrid::new).collect::<Result<Vec<_>>>()?;
    let states: Vec<StateChoice> = originals
        .iter()
        .map(|st| {
            let mut best: Option<StateChoice> = None;
            for g in &grids {
                let choice = best_uniform_component(st.theta, &rule, problem, cost, *g, bound);
                if best.is_none_or(|b| choice.value > b.choice.value) {
                    best = Some(StateChoice { theta: st.theta, mass: st.mass, n: g.n(), choice });
                }
            }
            best.expect("at least one level")
        })
        .collect();
    let value_fixed_rule = states.iter().map(|s| s.mass * s.choice.value).sum();

    let uniform: Vec<AtomState> = states
        .iter()
        .map(|s| {
            Ok(AtomState {
                theta: s.theta,
                mass: s.mass,
                noise: if s.choice.j == 0 { None } else { Some(NoiseDistribution::uniform(s.choice.width)?) },
            })
        })
        .collect::<Result<_>>()?;
    let h_rule = atomic_decision_rule(&uniform, problem)?;
    let h_cost: f64 = states.iter().map(|s| s.mass * uniform_cost(cost, s.choice.width)).sum();
    let value_uniform = atomic_gross_benefit(&uniform, &h_rule, problem) - h_cost;
    Ok(DominanceReport { states, value_original, value_fixed_rule, value_uniform, discretized, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::Utility;
    use crate::experiments::SignalFunction;

    #[test]
    fn grid_shape() {
        let g = ApproxGrid::new(3).unwrap();
        assert_eq!(g.k(), 27);
        assert_eq!(g.spacing(), 0.125);
        assert!((g.span() - 1.5f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn uniform_target_is_its_own_widest_component() {
        let g = ApproxGrid::new(2).unwrap();
        let target = NoiseDistribution::uniform(g.span()).unwrap();
        let approx = mixture_weights(&target, g).unwrap();
        let mut want = vec![0.0; 9];
        want[8] = 1.0;
        assert_eq!(approx.weights, want);
        assert_eq!(approx.l1_distance(), 0.0);
    }

    #[test]
    fn tent_weights_at_level_one() {
        let target = NoiseDistribution::tent(1.0).unwrap();
        let approx = mixture_weights(&target, ApproxGrid::new(1).unwrap()).unwrap();
        assert_eq!(approx.weights, vec![0.5, 0.0, 0.0]);
        assert!((approx.l1_distance() - 0.5).abs() < 1e-15);
        assert!((approx.density(0.3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_unimodal_target_is_rejected() {
        let spec = crate::experiments::RestrictedKernelSpec::new(0.0, 0.5, 1.0, 0.9).unwrap();
        let garbled = crate::experiments::restricted_garble(&NoiseDistribution::uniform(1.0).unwrap(), &spec).unwrap();
        let err = mixture_weights(&garbled, ApproxGrid::new(1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }));
    }

    #[test]
    fn component_choice_examples() {
        let constant = DecisionProblem::new(vec![0.0], Utility::Custom(std::sync::Arc::new(|_, _| 2.0))).unwrap();
        let tent = NoiseCostFunction::tent(1.0, 1.0).unwrap();
        let g = ApproxGrid::new(2).unwrap();
        let rule = DecisionRule::constant(0.0);
        let c = best_uniform_component(0.0, &rule, &constant, &tent, g, 1.6);
        // beyond the tent's half-width the average cost is 1/(2δ)
        assert_eq!(c.j, 6);
        assert!((c.value - (2.0 - 1.0 / 3.0)).abs() < 1e-12);

        let free = NoiseCostFunction::tent(1e-9, 1.0).unwrap();
        let peaked = DecisionProblem::new(vec![0.0, 1.0], Utility::QuadraticLoss { scale: 100.0 }).unwrap();
        let rule = DecisionRule::new(vec![0.0], vec![1.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(best_uniform_component(0.0, &rule, &peaked, &free, g, 2.0).j, 0);

        let flat = DecisionProblem::new(vec![0.0], Utility::Custom(std::sync::Arc::new(|_, _| 0.0))).unwrap();
        let zero = NoiseCostFunction::Custom(crate::costs::GridCost::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap());
        assert_eq!(best_uniform_component(0.0, &DecisionRule::constant(0.0), &flat, &zero, g, 2.0).j, 0);
    }

    #[test]
    fn dominance_on_tent_noise() {
        let prior = MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let exp = Experiment::new(
            vec![(0.0, NoiseDistribution::tent(0.8).unwrap()), (1.0, NoiseDistribution::tent(0.8).unwrap())],
            None,
            SignalFunction::Additive,
            2.0,
        )
        .unwrap();
        let problem = DecisionProblem::new(vec![0.0, 0.5, 1.0], Utility::QuadraticLoss { scale: 1.0 }).unwrap();
        let cost = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let r = dominating_uniform_experiment(&exp, &prior, &problem, &cost, 4, 2.0).unwrap();
        assert!(r.margin() >= -1e-8, "{r:?}");
        assert!(r.value_uniform >= r.value_fixed_rule - 1e-12);
    }
}
