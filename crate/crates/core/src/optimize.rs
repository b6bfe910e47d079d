//! Per-state value `W_θ(δ)`, its Clarke generalized derivative, width
//! optimization and the alternating best-response solver over uniform
//! experiments.
//!
//! For a fixed piecewise-constant rule `ψ`,
//! `W_θ(δ) = (U(δ) - 2G(δ)) / (2δ)` with `U(δ) = ∫_{-δ}^{δ} u(θ, ψ(θ + x)) dx`
//! and `G(δ) = ∫_0^δ c`. Both are piecewise smooth with kinks only where
//! `θ ± δ` crosses a breakpoint of `ψ`, so one-sided derivatives are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bayes::{atomic_decision_rule, atomic_gross_benefit, AtomState, DecisionProblem, DecisionRule, DEFAULT_PRIOR_NODES};
use crate::costs::{uniform_cost, NoiseCostFunction};
use crate::error::{Error, Result};
use crate::experiments::{make_uniform_experiment, Experiment, NoiseDistribution, SignalFunction};
use crate::measures::MixedDistribution;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MIN_STEP: f64 = 1e-7;

/// `[lo, hi]`, the convex hull of the one-sided derivative limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkeInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ClarkeInterval {
    pub fn from_one_sided(left: f64, right: f64) -> Self {
        ClarkeInterval { lo: left.min(right), hi: left.max(right) }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    /// Distance from 0 to the interval.
    pub fn residual(&self) -> f64 {
        if self.lo > 0.0 {
            self.lo
        } else if self.hi < 0.0 {
            -self.hi
        } else {
            0.0
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Noise level of one state in a uniform experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// `δ = 0`: the state is revealed exactly.
    Perfect,
    Width(f64),
}

impl NoiseLevel {
    pub fn width(&self) -> f64 {
        match self {
            NoiseLevel::Perfect => 0.0,
            NoiseLevel::Width(d) => *d,
        }
    }

    pub fn is_perfect(&self) -> bool {
        matches!(self, NoiseLevel::Perfect)
    }

    fn law(&self) -> Result<Option<NoiseDistribution>> {
        match self {
            NoiseLevel::Perfect => Ok(None),
            NoiseLevel::Width(d) => Ok(Some(NoiseDistribution::uniform(*d)?)),
        }
    }
}

// ∫_{θ-δ}^{θ+δ} u(θ, ψ(s)) ds.
fn window_utility(delta: f64, theta: f64, rule: &DecisionRule, problem: &DecisionProblem) -> f64 {
    let (lo, hi) = (theta - delta, theta + delta);
    let mut total = 0.0;
    for (a, b, act) in rule.pieces() {
        let len = b.min(hi) - a.max(lo);
        if len > 0.0 {
            total += len * problem.u(theta, act);
        }
    }
    total
}

/// `u(θ, ψ(θ)) - c(0)`, the value of revealing the state exactly.
pub fn perfect_value(theta: f64, rule: &DecisionRule, problem: &DecisionProblem, cost: &NoiseCostFunction) -> f64 {
    problem.u(theta, rule.action_at(theta)) - cost.eval(0.0)
}

/// `W_θ(δ) = (1/2δ) ∫_{-δ}^{δ} [u(θ, ψ(θ + x)) - c(x)] dx`; `δ = 0` gives the perfect-signal value.
pub fn w_eval(delta: f64, theta: f64, rule: &DecisionRule, problem: &DecisionProblem, cost: &NoiseCostFunction) -> f64 {
    if delta == 0.0 {
        return perfect_value(theta, rule, problem, cost);
    }
    window_utility(delta, theta, rule, problem) / (2.0 * delta) - uniform_cost(cost, delta)
}

/// Exact one-sided derivatives `(W'(δ-), W'(δ+))` for `δ > 0`.
pub fn w_one_sided(
    delta: f64,
    theta: f64,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
) -> (f64, f64) {
    let u = |a: f64| problem.u(theta, a);
    let base = window_utility(delta, theta, rule, problem) - 2.0 * cost.primitive(delta);
    let c = cost.eval(delta);
    let du_right = u(rule.action_right_of(theta + delta)) + u(rule.action_left_of(theta - delta));
    let du_left = u(rule.action_left_of(theta + delta)) + u(rule.action_right_of(theta - delta));
    let d = |du: f64| (du - 2.0 * c) / (2.0 * delta) - base / (2.0 * delta * delta);
    (d(du_left), d(du_right))
}

/// `∂_C W_θ(δ)` from the exact one-sided derivatives. Kinks within rounding
/// distance of `δ` (supports that touch up to the last bits) count as `δ`.
pub fn clarke_subdiff(
    theta: f64,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    delta: f64,
) -> Result<ClarkeInterval> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("width must be positive, got {delta}")));
    }
    let (l, r) = w_one_sided(delta, theta, rule, problem, cost);
    let mut ci = ClarkeInterval::from_one_sided(l, r);
    let eps = KINK_SNAP * (1.0 + theta.abs() + delta);
    let u = |a: f64| problem.u(theta, a);
    let base = window_utility(delta, theta, rule, problem) - 2.0 * cost.primitive(delta);
    let c = cost.eval(delta);
    let d = |du: f64| (du - 2.0 * c) / (2.0 * delta) - base / (2.0 * delta * delta);
    let du_left = u(rule.action_at(theta + delta - eps)) + u(rule.action_at(theta - delta + eps));
    let du_right = u(rule.action_at(theta + delta + eps)) + u(rule.action_at(theta - delta - eps));
    for g in [d(du_left), d(du_right)] {
        ci = ClarkeInterval { lo: ci.lo.min(g), hi: ci.hi.max(g) };
    }
    Ok(ci)
}

/// One-sided derivative of `f` at `x` from difference quotients with step
/// halving from `h0` down to `1e-7`, extrapolated Richardson style.
/// `direction` is `1.0` for the right derivative and `-1.0` for the left.
pub fn one_sided_derivative(f: &dyn Fn(f64) -> f64, x: f64, h0: f64, direction: f64) -> Result<f64> {
    if !(h0 > 0.0) {
        return Err(Error::InvalidArgument(format!("initial step must be positive, got {h0}")));
    }
    let fx = f(x);
    let quotient = |h: f64| direction * (f(x + direction * h) - fx) / h;
    let mut h = h0;
    let mut prev = quotient(h);
    let mut estimate = prev;
    let mut growth = 0;
    while h / 2.0 >= MIN_STEP {
        h /= 2.0;
        let q = quotient(h);
        if !q.is_finite() {
            return Err(Error::NonLipschitzSignal { at: x });
        }
        if q.abs() > 1.2 * prev.abs() && q.abs() > 1.0 {
            growth += 1;
            if growth >= 8 {
                return Err(Error::NonLipschitzSignal { at: x });
            }
        } else {
            growth = 0;
        }
        estimate = 2.0 * q - prev;
        prev = q;
    }
    Ok(estimate)
}

/// Numerical Clarke interval `co{f'(x-), f'(x+)}`.
pub fn clarke_numeric(f: &dyn Fn(f64) -> f64, x: f64, h0: f64) -> Result<ClarkeInterval> {
    let right = one_sided_derivative(f, x, h0, 1.0)?;
    let left = one_sided_derivative(f, x, h0, -1.0)?;
    Ok(ClarkeInterval::from_one_sided(left, right))
}

/// Numerical cross-check of [`clarke_subdiff`].
pub fn clarke_subdiff_numeric(
    theta: f64,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    delta: f64,
    h0: f64,
) -> Result<ClarkeInterval> {
    let h0 = h0.min(0.5 * delta);
    clarke_numeric(&|d| w_eval(d, theta, rule, problem, cost), delta, h0)
}

/// Widths in `(0, bound)` where `θ ± δ` meets a breakpoint of `ψ` or `c` kinks.
pub fn kinks(theta: f64, rule: &DecisionRule, cost: &NoiseCostFunction, bound: f64) -> Vec<f64> {
    let mut k: Vec<f64> = rule
        .breakpoints()
        .iter()
        .map(|b| (b - theta).abs())
        .chain(cost.kinks())
        .filter(|&d| d > 0.0 && d < bound)
        .collect();
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Best noise level for one state and its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthChoice {
    pub level: NoiseLevel,
    pub value: f64,
}

fn better(v: f64, best: f64) -> bool {
    v > best + 1e-14 * (1.0 + best.abs())
}

/// Global maximizer of `W_θ` over `{perfect} ∪ (0, bound]`: the perfect
/// branch, every kink, `bound`, and a golden-section search inside each
/// smooth bracket. Ties go to the smaller width.
pub fn optimize_width(
    theta: f64,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
    tol: f64,
) -> Result<WidthChoice> {
    if !(bound > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("bound and tolerance must be positive".into()));
    }
    let w = |d: f64| w_eval(d, theta, rule, problem, cost);
    let mut cands: Vec<(f64, f64)> = vec![(0.0, perfect_value(theta, rule, problem, cost))];
    let mut edges = vec![bound * 1e-9];
    edges.extend(kinks(theta, rule, cost, bound));
    edges.push(bound);
    for e in &edges[1..] {
        cands.push((*e, w(*e)));
    }
    for pair in edges.windows(2) {
        if pair[1] - pair[0] > 2.0 * tol {
            let (x, v) = golden_max(&w, pair[0], pair[1], tol);
            if x - pair[0] > 10.0 * tol && pair[1] - x > 10.0 * tol {
                cands.push((x, v));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = cands[0];
    for &c in &cands[1..] {
        if better(c.1, best.1) {
            best = c;
        }
    }
    let level = if best.0 == 0.0 { NoiseLevel::Perfect } else { NoiseLevel::Width(best.0) };
    Ok(WidthChoice { level, value: best.1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `|ΔV|` falls below this.
    pub tol: f64,
    pub foc_tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Golden-section tolerance on widths.
    pub width_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-6, foc_tol: 1e-5, max_iter: 200, restarts: 8, seed: 0, width_tol: 1e-10 }
    }
}

/// First-order condition status for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocStatus {
    Interior(ClarkeInterval),
    /// `δ = b`; carries the left derivative.
    Boundary { left_derivative: f64 },
    /// Perfect signal; carries its value and the best value over widths.
    Perfect { value: f64, best_width_value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocEntry {
    pub theta: f64,
    pub status: FocStatus,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocReport {
    pub entries: Vec<FocEntry>,
}

impl FocReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// `(θ, mass)` of the (possibly discretized) prior.
    pub states: Vec<(f64, f64)>,
    pub widths: Vec<NoiseLevel>,
    pub rule: DecisionRule,
    pub benefit: f64,
    pub cost: f64,
    pub value: f64,
    pub foc: FocReport,
    pub iterations: usize,
    pub converged: bool,
    /// `V` after each accepted step of the winning start.
    pub history: Vec<f64>,
    /// Index of the winning start; 0 is the `b/2` start.
    pub start: usize,
    pub bound: f64,
}

impl SolverResult {
    /// The solution as an [`Experiment`]; fails if any state is revealed perfectly.
    pub fn experiment(&self) -> Result<Experiment> {
        let mut pairs = Vec::with_capacity(self.states.len());
        for ((theta, _), level) in self.states.iter().zip(&self.widths) {
            match level {
                NoiseLevel::Width(d) => pairs.push((*theta, *d)),
                NoiseLevel::Perfect => {
                    return Err(Error::Unsupported(format!(
                        "state {theta} is revealed perfectly, which no bounded experiment represents"
                    )))
                }
            }
        }
        make_uniform_experiment(&pairs, SignalFunction::Additive, self.bound + f64::EPSILON * self.bound.max(1.0))
    }
}

fn atom_states(states: &[(f64, f64)], widths: &[NoiseLevel]) -> Result<Vec<AtomState>> {
    states
        .iter()
        .zip(widths)
        .map(|(&(theta, mass), w)| Ok(AtomState { theta, mass, noise: w.law()? }))
        .collect()
}

/// `B`, `C`, `V` and the optimal rule for a uniform experiment given per state.
pub fn evaluate_uniform(
    states: &[(f64, f64)],
    widths: &[NoiseLevel],
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
) -> Result<(DecisionRule, f64, f64)> {
    let atoms = atom_states(states, widths)?;
    let rule = atomic_decision_rule(&atoms, problem)?;
    let b = atomic_gross_benefit(&atoms, &rule, problem);
    let c: f64 = states.iter().zip(widths).map(|(s, w)| s.1 * uniform_cost(cost, w.width())).sum();
    Ok((rule, b, c))
}

struct Run {
    widths: Vec<NoiseLevel>,
    rule: DecisionRule,
    benefit: f64,
    cost: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn best_response(
    states: &[(f64, f64)],
    run: &mut Run,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
    opts: &SolverOptions,
) -> Result<()> {
    run.converged = false;
    while run.iterations < opts.max_iter {
        run.iterations += 1;
        let next: Vec<NoiseLevel> = states
            .iter()
            .zip(&run.widths)
            .map(|(&(theta, _), &current)| {
                let choice = optimize_width(theta, &run.rule, problem, cost, bound, opts.width_tol)?;
                let incumbent = w_eval(current.width(), theta, &run.rule, problem, cost);
                Ok(if better(choice.value, incumbent) { choice.level } else { current })
            })
            .collect::<Result<_>>()?;
        if next == run.widths {
            run.converged = true;
            return Ok(());
        }
        let (rule, b, c) = evaluate_uniform(states, &next, problem, cost)?;
        let gain = (b - c) - (run.benefit - run.cost);
        run.widths = next;
        run.rule = rule;
        run.benefit = b;
        run.cost = c;
        run.history.push(b - c);
        if gain.abs() < opts.tol {
            run.converged = true;
            return Ok(());
        }
    }
    Ok(())
}

// Pattern search on V over single widths and runs of neighbouring widths,
// moved together or with alternating signs. Best response holds the rule
// fixed and cannot slide along a ridge where supports touch; this can.
fn polish(
    states: &[(f64, f64)],
    run: &mut Run,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
) -> Result<bool> {
    let free: Vec<usize> = (0..states.len()).filter(|&i| !run.widths[i].is_perfect()).collect();
    let mut dirs: Vec<Vec<(usize, f64)>> = Vec::new();
    for &i in &free {
        dirs.push(vec![(i, 1.0)]);
        dirs.push(vec![(i, -1.0)]);
    }
    for len in 2..=free.len() {
        for block in free.windows(len) {
            for sign in [1.0, -1.0] {
                dirs.push(block.iter().map(|&i| (i, sign)).collect());
                dirs.push(block.iter().enumerate().map(|(k, &i)| (i, if k % 2 == 0 { sign } else { -sign })).collect());
            }
        }
    }
    let mut improved = false;
    let mut h = 0.05 * bound;
    let floor = 1e-11 * bound;
    let mut evals = 0usize;
    while h > floor && evals < POLISH_BUDGET {
        let mut moved = false;
        for &i in &free {
            if run.widths[i].is_perfect() {
                continue;
            }
            let mut trial = run.widths.clone();
            trial[i] = NoiseLevel::Perfect;
            evals += 1;
            let (rule, b, c) = evaluate_uniform(states, &trial, problem, cost)?;
            if better(b - c, run.benefit - run.cost) {
                run.widths = trial;
                run.rule = rule;
                run.benefit = b;
                run.cost = c;
                run.history.push(b - c);
                moved = true;
                improved = true;
            }
        }
        for dir in &dirs {
            let mut trial = run.widths.clone();
            for &(i, sign) in dir {
                let d = trial[i].width() + sign * h;
                trial[i] = if d >= bound - floor {
                    NoiseLevel::Width(bound)
                } else if d < MIN_POLISH_WIDTH * bound {
                    NoiseLevel::Perfect
                } else {
                    NoiseLevel::Width(d)
                };
            }
            if trial == run.widths {
                continue;
            }
            evals += 1;
            let (rule, b, c) = evaluate_uniform(states, &trial, problem, cost)?;
            if better(b - c, run.benefit - run.cost) {
                run.widths = trial;
                run.rule = rule;
                run.benefit = b;
                run.cost = c;
                run.history.push(b - c);
                moved = true;
                improved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(improved)
}

const KINK_SNAP: f64 = 1e-12;
const MIN_POLISH_WIDTH: f64 = 1e-8;
const POLISH_BUDGET: usize = 20_000;
const POLISH_ROUNDS: usize = 8;
const CORNER_STATES: usize = 8;

fn run_from(
    states: &[(f64, f64)],
    start: Vec<NoiseLevel>,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
    opts: &SolverOptions,
) -> Result<Run> {
    let (rule, benefit, c) = evaluate_uniform(states, &start, problem, cost)?;
    let mut run = Run {
        widths: start,
        rule,
        benefit,
        cost: c,
        iterations: 0,
        converged: false,
        history: vec![benefit - c],
    };
    for _ in 0..POLISH_ROUNDS {
        best_response(states, &mut run, problem, cost, bound, opts)?;
        if !run.converged || !polish(states, &mut run, problem, cost, bound)? {
            break;
        }
    }
    Ok(run)
}

/// Optimal uniform experiment: simultaneous best response alternated with a
/// pattern search on `V`, from `b/2`, corner and seeded random starts; the
/// best `V` wins. Continuous priors are discretized at Gauss–Legendre nodes.
pub fn solve(
    prior: &MixedDistribution,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!("noise bound must be positive, got {bound}")));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("solver needs tol > 0 and max_iter > 0".into()));
    }
    let atomic = if prior.is_atomic() { prior.clone() } else { prior.discretize(DEFAULT_PRIOR_NODES)? };
    let states: Vec<(f64, f64)> = atomic.atoms().iter().map(|a| (a.location, a.mass)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = states.len();
    let mut starts = vec![vec![NoiseLevel::Width(0.5 * bound); n], vec![NoiseLevel::Width(bound); n]];
    for i in 0..n.min(CORNER_STATES) {
        let mut s = vec![NoiseLevel::Width(bound); n];
        s[i] = NoiseLevel::Perfect;
        starts.push(s);
    }
    for _ in 1..opts.restarts.max(1) {
        starts.push((0..states.len()).map(|_| NoiseLevel::Width(bound * (1.0 - rng.gen::<f64>()))).collect());
    }
    let runs: Vec<Result<Run>> = starts
        .into_par_iter()
        .map(|s| run_from(&states, s, problem, cost, bound, opts))
        .collect();
    let mut best: Option<(usize, Run)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        let v = run.benefit - run.cost;
        if best.as_ref().is_none_or(|(_, b)| v > b.benefit - b.cost + 1e-12) {
            best = Some((i, run));
        }
    }
    let (start, run) = best.expect("at least one start");
    let mut result = SolverResult {
        states,
        widths: run.widths,
        rule: run.rule,
        benefit: run.benefit,
        cost: run.cost,
        value: run.benefit - run.cost,
        foc: FocReport { entries: Vec::new() },
        iterations: run.iterations,
        converged: run.converged,
        history: run.history,
        start,
        bound,
    };
    result.foc = verify_foc(&result, problem, cost, bound, opts.foc_tol)?;
    Ok(result)
}

/// Checks the first-order conditions at a solution: `0 ∈ ∂_C W_θ(δ)` for
/// interior widths, `W'(b-) >= 0` at the bound, and for perfect signals that
/// no width does better.
pub fn verify_foc(
    result: &SolverResult,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    bound: f64,
    tol: f64,
) -> Result<FocReport> {
    let mut entries = Vec::with_capacity(result.states.len());
    for (&(theta, _), level) in result.states.iter().zip(&result.widths) {
        let rule = &result.rule;
        let entry = match *level {
            NoiseLevel::Width(d) if d >= bound => {
                let (left, _) = w_one_sided(d, theta, rule, problem, cost);
                let residual = (-left).max(0.0);
                FocEntry { theta, status: FocStatus::Boundary { left_derivative: left }, residual, pass: residual <= tol }
            }
            NoiseLevel::Width(d) => {
                let ci = clarke_subdiff(theta, rule, problem, cost, d)?;
                let residual = ci.residual();
                FocEntry { theta, status: FocStatus::Interior(ci), residual, pass: residual <= tol }
            }
            NoiseLevel::Perfect => {
                let value = perfect_value(theta, rule, problem, cost);
                let mut widths_only = optimize_width(theta, rule, problem, cost, bound, 1e-10)?;
                if widths_only.level.is_perfect() {
                    widths_only.value = value;
                }
                let best_width_value = w_eval(bound * 1e-9, theta, rule, problem, cost).max(widths_only.value);
                let residual = (best_width_value - value).max(0.0);
                FocEntry { theta, status: FocStatus::Perfect { value, best_width_value }, residual, pass: residual <= tol }
            }
        };
        entries.push(entry);
    }
    Ok(FocReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::Utility;

    fn quad() -> DecisionProblem {
        DecisionProblem::new(vec![0.0, 0.5, 1.0], Utility::QuadraticLoss { scale: 1.0 }).unwrap()
    }

    #[test]
    fn w_constant_rule_matches_closed_form() {
        let p = quad();
        let tent = NoiseCostFunction::tent(1.0, 1.0).unwrap();
        let rule = DecisionRule::constant(0.5);
        for d in [0.1, 0.5, 1.0] {
            let want = p.u(0.2, 0.5) - (1.0 - d / 2.0);
            assert!((w_eval(d, 0.2, &rule, &p, &tent) - want).abs() < 1e-15);
        }
        let near = w_eval(1e-9, 0.2, &rule, &p, &tent);
        assert!((near - (p.u(0.2, 0.5) - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn w_with_one_jump() {
        let p = quad();
        let tent = NoiseCostFunction::tent(1.0, 1.0).unwrap();
        let rule = DecisionRule::new(vec![0.3], vec![0.0, 1.0], vec![1.0]).unwrap();
        // window [-0.5, 0.5] around θ=0: 0.8 of length on action 0, 0.2 on action 1
        let want = (0.8 * 0.0 - 0.2) / 1.0 - (1.0 - 0.25);
        assert!((w_eval(0.5, 0.0, &rule, &p, &tent) - want).abs() < 1e-15);
    }

    #[test]
    fn analytic_derivatives_match_numeric() {
        let p = quad();
        let c = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let rule = DecisionRule::new(vec![0.3, 0.8], vec![0.0, 0.5, 1.0], vec![0.5, 1.0]).unwrap();
        for d in [0.1, 0.3, 0.55, 0.8, 1.2] {
            let ci = clarke_subdiff(0.0, &rule, &p, &c, d).unwrap();
            let num = clarke_subdiff_numeric(0.0, &rule, &p, &c, d, 1e-3).unwrap();
            assert!((ci.lo - num.lo).abs() < 1e-6 && (ci.hi - num.hi).abs() < 1e-6, "{d}: {ci:?} vs {num:?}");
        }
        // away from kinks the interval collapses
        assert!(clarke_subdiff(0.0, &rule, &p, &c, 0.55).unwrap().width() < 1e-12);
        assert!(clarke_subdiff(0.0, &rule, &p, &c, 0.3).unwrap().width() > 0.1);
    }

    #[test]
    fn numeric_clarke_on_closed_forms() {
        for a in [0.5, 1.0, 2.0] {
            let f = move |d: f64| 1.0 / (d.abs() + a);
            let ci = clarke_numeric(&f, 0.0, 0.1).unwrap();
            assert!((ci.lo + 1.0 / (a * a)).abs() < 1e-5 && (ci.hi - 1.0 / (a * a)).abs() < 1e-5);
        }
        let f = |d: f64| 1.0 / (d + 1.0);
        let ci = clarke_numeric(&f, 0.5, 0.1).unwrap();
        assert!((ci.lo + 1.0 / 2.25).abs() < 1e-6 && ci.width() < 1e-6);
        let g = |d: f64| -(d - 1.0) * (d - 1.0);
        let ci = clarke_numeric(&g, 1.0, 0.1).unwrap();
        assert!(ci.lo.abs() < 1e-9 && ci.hi.abs() < 1e-9);
        let spike = |d: f64| d.abs().sqrt();
        assert!(matches!(clarke_numeric(&spike, 0.0, 0.1), Err(Error::NonLipschitzSignal { .. })));
    }

    #[test]
    fn width_optimization_examples() {
        let p = quad();
        let tent = NoiseCostFunction::tent(1.0, 3.0).unwrap();
        let rule = DecisionRule::constant(0.0);
        let best = optimize_width(0.0, &rule, &p, &tent, 2.0, 1e-10).unwrap();
        assert_eq!(best.level, NoiseLevel::Width(2.0));

        // correct action only on (-0.4, 0.4): tiny cost makes the kink optimal
        let step = DecisionProblem::new(vec![0.0, 1.0], Utility::Custom(std::sync::Arc::new(|_, a| if a == 0.0 { 1.0 } else { 0.0 }))).unwrap();
        let rule = DecisionRule::new(vec![-0.4, 0.4], vec![1.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let small = NoiseCostFunction::exp_decay(1e-3, 1.0).unwrap();
        let best = optimize_width(0.0, &rule, &step, &small, 2.0, 1e-10).unwrap();
        assert_eq!(best.level, NoiseLevel::Width(0.4));
    }

    #[test]
    fn single_atom_solution_is_the_bound() {
        let prior = MixedDistribution::atomic(&[(0.3, 1.0)]).unwrap();
        let c = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let r = solve(&prior, &quad(), &c, 2.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.widths, vec![NoiseLevel::Width(2.0)]);
        assert_eq!(r.rule.piece_actions(), &[0.5]);
        assert!(r.converged && r.foc.all_pass());
    }

    #[test]
    fn two_atom_solution_passes_foc_and_ascends() {
        let prior = MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let c = NoiseCostFunction::exp_decay(1.0, 1.0).unwrap();
        let r = solve(&prior, &quad(), &c, 2.0, &SolverOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.foc.all_pass(), "{:?}", r.foc);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        assert!((r.value - (r.benefit - r.cost)).abs() < 1e-9);

        let expensive = NoiseCostFunction::exp_decay(100.0, 1.0).unwrap();
        let r = solve(&prior, &quad(), &expensive, 2.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.widths, vec![NoiseLevel::Width(2.0), NoiseLevel::Width(2.0)]);
        assert!(r.foc.entries.iter().all(|e| matches!(e.status, FocStatus::Boundary { .. }) && e.pass));
    }
}
