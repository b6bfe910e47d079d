//! Signal marginals, posteriors, interim-optimal decision rules and the gross
//! benefit `B_F(P)`.
//!
//! For atomic priors and additive signals every noise law is piecewise
//! linear, so posterior-expected utilities are linear in the signal between
//! consecutive knots `θ_i ± k`. The rule is then found exactly by taking the
//! upper envelope of one line per action on each such interval, and the
//! benefit is a finite sum of interval masses.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use crate::costs::{experiment_cost, NoiseCostFunction};
use crate::error::{Error, Result};
use crate::experiments::{ContinuousAssignment, Experiment, LinearPiece, NoiseDistribution, SignalFunction};
use crate::measures::{ContinuousPart, DensityShape, MixedDistribution, Quadrature, MIN_ATOM_MASS};

/// Gauss–Legendre nodes per smooth panel used to discretize continuous priors.
pub const DEFAULT_PRIOR_NODES: usize = 16;

const SCAN_POINTS: usize = 4001;

#[derive(Clone)]
pub enum Utility {
    /// `-scale (θ - a)²`.
    QuadraticLoss { scale: f64 },
    /// `a (θ - price)`, buying (`a = 1`) or not (`a = 0`).
    Trade { price: f64 },
    /// `values[i][j] = u(states[i], actions[j])`, bilinear in between and
    /// clamped outside the grid.
    Table { states: Vec<f64>, actions: Vec<f64>, values: Vec<Vec<f64>> },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::QuadraticLoss { scale } => write!(f, "QuadraticLoss({scale})"),
            Utility::Trade { price } => write!(f, "Trade({price})"),
            Utility::Table { states, actions, .. } => {
                write!(f, "Table({}x{})", states.len(), actions.len())
            }
            Utility::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    if grid.len() == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    let n = grid.len();
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

impl Utility {
    pub fn table(states: Vec<f64>, actions: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let sorted = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&states) || !sorted(&actions) {
            return Err(Error::InvalidProblem("utility table axes must be nonempty and increasing".into()));
        }
        if values.len() != states.len() || values.iter().any(|r| r.len() != actions.len()) {
            return Err(Error::InvalidProblem("utility table has the wrong shape".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("utility table has non-finite entries".into()));
        }
        Ok(Utility::Table { states, actions, values })
    }

    pub fn eval(&self, theta: f64, a: f64) -> f64 {
        match self {
            Utility::QuadraticLoss { scale } => -scale * (theta - a) * (theta - a),
            Utility::Trade { price } => a * (theta - price),
            Utility::Table { states, actions, values } => {
                let (i, s) = bracket(states, theta);
                let (j, t) = bracket(actions, a);
                let at = |i: usize, j: usize| values[i.min(states.len() - 1)][j.min(actions.len() - 1)];
                let lo = at(i, j) * (1.0 - t) + at(i, j + 1) * t;
                let hi = at(i + 1, j) * (1.0 - t) + at(i + 1, j + 1) * t;
                lo * (1.0 - s) + hi * s
            }
            Utility::Custom(f) => f(theta, a),
        }
    }
}

/// A finite, sorted action set and a utility `u(θ, a)`.
#[derive(Debug, Clone)]
pub struct DecisionProblem {
    actions: Vec<f64>,
    utility: Utility,
}

impl DecisionProblem {
    pub fn new(actions: Vec<f64>, utility: Utility) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidProblem("action set is empty".into()));
        }
        if actions.iter().any(|a| !a.is_finite()) || actions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidProblem("actions must be finite and strictly increasing".into()));
        }
        match &utility {
            Utility::QuadraticLoss { scale } if !(*scale > 0.0) => {
                return Err(Error::InvalidProblem(format!("loss scale must be positive, got {scale}")))
            }
            Utility::Trade { price } if !price.is_finite() => {
                return Err(Error::InvalidProblem("trade price must be finite".into()))
            }
            _ => {}
        }
        Ok(DecisionProblem { actions, utility })
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn utility(&self) -> &Utility {
        &self.utility
    }

    pub fn u(&self, theta: f64, a: f64) -> f64 {
        self.utility.eval(theta, a)
    }

    fn row(&self, theta: f64) -> Vec<f64> {
        self.actions.iter().map(|&a| self.u(theta, a)).collect()
    }

    /// Index of the best action for `θ` known.
    pub fn full_information_index(&self, theta: f64) -> usize {
        best_index(&self.row(theta))
    }

    pub fn full_information_action(&self, theta: f64) -> f64 {
        self.actions[self.full_information_index(theta)]
    }

    /// `max_a ∫ u(θ, a) dF`, the value of acting on the prior alone.
    pub fn no_information_value(&self, prior: &MixedDistribution, q: &Quadrature) -> Result<f64> {
        let values = self
            .actions
            .iter()
            .map(|&a| prior.integrate(|t| self.u(t, a), q))
            .collect::<Result<Vec<_>>>()?;
        Ok(values[best_index(&values)])
    }
}

/// Index of the largest value; near-ties go to the smallest index.
fn best_index(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());
    values.iter().position(|&v| v >= best - tol).unwrap_or(0)
}

/// A deterministic rule `ψ: S → 𝒜`, constant on the open intervals between
/// breakpoints and with its own action at each breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    breakpoints: Vec<f64>,
    piece_actions: Vec<f64>,
    point_actions: Vec<f64>,
}

impl DecisionRule {
    pub fn new(breakpoints: Vec<f64>, piece_actions: Vec<f64>, point_actions: Vec<f64>) -> Result<Self> {
        if piece_actions.len() != breakpoints.len() + 1 || point_actions.len() != breakpoints.len() {
            return Err(Error::InvalidArgument("decision rule needs one action per piece and per breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("decision rule breakpoints must increase".into()));
        }
        Ok(DecisionRule { breakpoints, piece_actions, point_actions })
    }

    pub fn constant(action: f64) -> Self {
        DecisionRule { breakpoints: Vec::new(), piece_actions: vec![action], point_actions: Vec::new() }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn piece_actions(&self) -> &[f64] {
        &self.piece_actions
    }

    pub fn point_actions(&self) -> &[f64] {
        &self.point_actions
    }

    /// `ψ(s)`.
    pub fn action_at(&self, s: f64) -> f64 {
        match self.breakpoints.binary_search_by(|b| b.total_cmp(&s)) {
            Ok(i) => self.point_actions[i],
            Err(i) => self.piece_actions[i],
        }
    }

    /// `ψ(s+)`.
    pub fn action_right_of(&self, s: f64) -> f64 {
        self.piece_actions[self.breakpoints.partition_point(|&b| b <= s)]
    }

    /// `ψ(s-)`.
    pub fn action_left_of(&self, s: f64) -> f64 {
        self.piece_actions[self.breakpoints.partition_point(|&b| b < s)]
    }

    /// `(lo, hi, action)` for each open piece; the outer pieces are unbounded.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.breakpoints.len();
        (0..=n).map(move |i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { self.breakpoints[i - 1] };
            let hi = if i == n { f64::INFINITY } else { self.breakpoints[i] };
            (lo, hi, self.piece_actions[i])
        })
    }
}

/// One state of an atomic prior; `noise = None` means the state is revealed
/// perfectly (a Dirac noise law).
#[derive(Debug, Clone)]
pub struct AtomState {
    pub theta: f64,
    pub mass: f64,
    pub noise: Option<NoiseDistribution>,
}

// A piece (lo < hi) or a breakpoint (lo == hi) of a rule under construction.
#[derive(Debug, Clone, Copy)]
struct Elem {
    lo: f64,
    hi: f64,
    act: Option<usize>,
}

// Density at signed noise x of the linear piece covering (a, b), in x-space.
fn linear_limits(pieces: &[LinearPiece], a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let t = mid.abs();
    match pieces.iter().find(|p| p.lo <= t && t <= p.hi) {
        Some(p) => (p.eval(a.abs()), p.eval(b.abs())),
        None => (0.0, 0.0),
    }
}

/// Interim-optimal rule for an atomic prior under an additive signal.
pub fn atomic_decision_rule(states: &[AtomState], problem: &DecisionProblem) -> Result<DecisionRule> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("no states".into()));
    }
    let rows: Vec<Vec<f64>> = states.iter().map(|s| problem.row(s.theta)).collect();
    let pieces: Vec<Option<Vec<LinearPiece>>> =
        states.iter().map(|s| s.noise.as_ref().map(|n| n.half_pieces())).collect();
    let mut knots: Vec<f64> = Vec::new();
    for (s, ps) in states.iter().zip(&pieces) {
        knots.push(s.theta);
        if let Some(ps) = ps {
            for p in ps {
                knots.push(s.theta - p.hi);
                knots.push(s.theta + p.hi);
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let n_act = problem.actions.len();
    let mut elems: Vec<Elem> = vec![Elem { lo: f64::NEG_INFINITY, hi: knots[0], act: None }];
    for (j, &s) in knots.iter().enumerate() {
        elems.push(Elem { lo: s, hi: s, act: point_action(states, &rows, s, problem) });
        let Some(&b) = knots.get(j + 1) else { break };
        let a = s;
        let mut ua = vec![0.0; n_act];
        let mut ub = vec![0.0; n_act];
        let (mut ma, mut mb) = (0.0, 0.0);
        for ((st, row), ps) in states.iter().zip(&rows).zip(&pieces) {
            let Some(ps) = ps else { continue };
            let (wa, wb) = linear_limits(ps, a - st.theta, b - st.theta);
            if wa == 0.0 && wb == 0.0 {
                continue;
            }
            ma += st.mass * wa;
            mb += st.mass * wb;
            for k in 0..n_act {
                ua[k] += st.mass * wa * row[k];
                ub[k] += st.mass * wb * row[k];
            }
        }
        if ma <= 0.0 && mb <= 0.0 {
            elems.push(Elem { lo: a, hi: b, act: None });
            continue;
        }
        let line = |k: usize, t: f64, u0: &[f64], u1: &[f64]| u0[k] + (u1[k] - u0[k]) * (t - a) / (b - a);
        let mut cuts = vec![a];
        envelope(a, b, &ua, &ub, &mut cuts, 0);
        cuts.push(b);
        cuts.dedup();
        let mut prev: Option<usize> = None;
        for w in cuts.windows(2) {
            if !(w[1] > w[0]) {
                continue;
            }
            let t = 0.5 * (w[0] + w[1]);
            let m = ma + (mb - ma) * (t - a) / (b - a);
            let vals: Vec<f64> = (0..n_act).map(|k| line(k, t, &ua, &ub) / m).collect();
            let k = best_index(&vals);
            if prev.is_some() && w[0] > a {
                let m0 = ma + (mb - ma) * (w[0] - a) / (b - a);
                let vals: Vec<f64> = (0..n_act).map(|k| line(k, w[0], &ua, &ub) / m0).collect();
                elems.push(Elem { lo: w[0], hi: w[0], act: Some(best_index(&vals)) });
            }
            elems.push(Elem { lo: w[0], hi: w[1], act: Some(k) });
            prev = Some(k);
        }
    }
    elems.push(Elem { lo: knots[knots.len() - 1], hi: f64::INFINITY, act: None });
    finalize(elems, problem)
}

// Cuts of the upper envelope of lines through (a, ua[k]) and (b, ub[k]) on [t0, t1].
fn envelope(a: f64, b: f64, ua: &[f64], ub: &[f64], cuts: &mut Vec<f64>, depth: usize) {
    envelope_on(a, b, a, b, ua, ub, cuts, depth)
}

#[allow(clippy::too_many_arguments)]
fn envelope_on(a: f64, b: f64, t0: f64, t1: f64, ua: &[f64], ub: &[f64], cuts: &mut Vec<f64>, depth: usize) {
    let slope = |k: usize| (ub[k] - ua[k]) / (b - a);
    let at = |k: usize, t: f64| ua[k] + slope(k) * (t - a);
    let pick = |t: f64, dir: f64| {
        let mut best = 0;
        for k in 1..ua.len() {
            let (v, bv) = (at(k, t), at(best, t));
            if v > bv || (v == bv && dir * slope(k) > dir * slope(best)) {
                best = k;
            }
        }
        best
    };
    let k0 = pick(t0, 1.0);
    let k1 = pick(t1, -1.0);
    if k0 == k1 || depth > 64 {
        return;
    }
    let ds = slope(k1) - slope(k0);
    if !(ds > 0.0) {
        return;
    }
    let t = t0 + (at(k0, t0) - at(k1, t0)) / ds;
    if !(t > t0 && t < t1) {
        return;
    }
    envelope_on(a, b, t0, t, ua, ub, cuts, depth + 1);
    cuts.push(t);
    envelope_on(a, b, t, t1, ua, ub, cuts, depth + 1);
}

fn point_action(states: &[AtomState], rows: &[Vec<f64>], s: f64, problem: &DecisionProblem) -> Option<usize> {
    if let Some(i) = states.iter().position(|st| st.noise.is_none() && st.theta == s) {
        return Some(best_index(&rows[i]));
    }
    let mut vals = vec![0.0; problem.actions.len()];
    let mut m = 0.0;
    for (st, row) in states.iter().zip(rows) {
        let Some(law) = &st.noise else { continue };
        let w = st.mass * law.density(s - st.theta);
        if w > 0.0 {
            m += w;
            for (v, u) in vals.iter_mut().zip(row) {
                *v += w * u;
            }
        }
    }
    if m > 0.0 {
        vals.iter_mut().for_each(|v| *v /= m);
        Some(best_index(&vals))
    } else {
        None
    }
}

// Fills zero-probability stretches from their neighbours, splitting gaps at
// the midpoint, and drops breakpoints that do not change the action.
fn finalize(mut elems: Vec<Elem>, problem: &DecisionProblem) -> Result<DecisionRule> {
    for i in 0..elems.len() {
        if elems[i].lo == elems[i].hi && elems[i].act.is_none() {
            let left = i.checked_sub(1).and_then(|j| elems[j].act);
            let right = elems.get(i + 1).and_then(|e| e.act);
            elems[i].act = left.or(right);
        }
    }
    let mut out: Vec<Elem> = Vec::with_capacity(elems.len());
    let mut i = 0;
    while i < elems.len() {
        if elems[i].act.is_some() {
            out.push(elems[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < elems.len() && elems[i].act.is_none() {
            i += 1;
        }
        let run = &elems[start..i];
        let left = out.last().and_then(|e| e.act);
        let right = elems.get(i).and_then(|e| e.act);
        let (lo, hi) = (run[0].lo, run[run.len() - 1].hi);
        match (left, right) {
            (None, None) => return Err(Error::ZeroMarginal { signal: lo }),
            (Some(l), None) => out.extend(run.iter().map(|e| Elem { act: Some(l), ..*e })),
            (None, Some(r)) => out.extend(run.iter().map(|e| Elem { act: Some(r), ..*e })),
            (Some(l), Some(r)) if l == r => out.extend(run.iter().map(|e| Elem { act: Some(l), ..*e })),
            (Some(l), Some(r)) => {
                let mid = 0.5 * (lo + hi);
                for e in run {
                    if e.hi <= mid {
                        out.push(Elem { act: Some(l), ..*e });
                    } else if e.lo > mid || (e.lo == mid && e.hi > e.lo) {
                        out.push(Elem { act: Some(r), ..*e });
                    } else {
                        out.push(Elem { lo: e.lo, hi: mid, act: Some(l) });
                        out.push(Elem { lo: mid, hi: mid, act: Some(l) });
                        out.push(Elem { lo: mid, hi: e.hi, act: Some(r) });
                    }
                }
            }
        }
    }
    let out: Vec<Elem> = out.into_iter().filter(|e| e.lo == e.hi || e.hi > e.lo).collect();
    let act = |e: &Elem| problem.actions[e.act.expect("filled")];
    let mut breakpoints = Vec::new();
    let mut pieces = vec![act(&out[0])];
    let mut points = Vec::new();
    for e in &out[1..] {
        if e.lo == e.hi {
            breakpoints.push(e.lo);
            points.push(act(e));
        } else {
            let a = act(e);
            if points.len() == pieces.len() {
                pieces.push(a);
            } else {
                // two pieces in a row (a piece was split without a point); the later one wins
                *pieces.last_mut().expect("nonempty") = a;
            }
        }
    }
    if pieces.len() == points.len() {
        let last = *pieces.last().expect("nonempty");
        pieces.push(last);
    }
    let mut bps = Vec::new();
    let mut pcs = vec![pieces[0]];
    let mut pts = Vec::new();
    for i in 0..breakpoints.len() {
        let (l, p, r) = (*pcs.last().expect("nonempty"), points[i], pieces[i + 1]);
        if l == p && p == r {
            continue;
        }
        bps.push(breakpoints[i]);
        pts.push(p);
        pcs.push(r);
    }
    DecisionRule::new(bps, pcs, pts)
}

/// `B_F(P)` for an atomic prior given a rule, summing exact interval masses.
pub fn atomic_gross_benefit(states: &[AtomState], rule: &DecisionRule, problem: &DecisionProblem) -> f64 {
    states
        .iter()
        .map(|st| {
            let per_state = match &st.noise {
                None => problem.u(st.theta, rule.action_at(st.theta)),
                Some(law) => state_benefit_additive(law, st.theta, rule, problem),
            };
            st.mass * per_state
        })
        .sum()
}

fn state_benefit_additive(law: &NoiseDistribution, theta: f64, rule: &DecisionRule, problem: &DecisionProblem) -> f64 {
    let r = law.radius();
    let mut total = 0.0;
    for (lo, hi, a) in rule.pieces() {
        if hi <= theta - r || lo >= theta + r {
            continue;
        }
        let mass = law.interval_mass((lo - theta).max(-r), (hi - theta).min(r));
        if mass > 0.0 {
            total += mass * problem.u(theta, a);
        }
    }
    total
}

/// Posterior at one signal together with the marginal density there.
#[derive(Debug, Clone)]
pub struct PosteriorAtSignal {
    pub distribution: MixedDistribution,
    pub marginal: f64,
}

fn state_density(exp: &Experiment, theta: f64, s: f64) -> Result<f64> {
    let law = exp.noise_for(theta)?;
    let sig = exp.signal();
    let x = sig.noise(theta, s);
    Ok(law.density(x) * sig.inverse_slope(theta, s).abs())
}

fn signal_breaks(exp: &Experiment, part: &ContinuousPart, s: f64) -> Vec<f64> {
    let mut breaks = part.shape.knots();
    if let (SignalFunction::Additive, Some(ContinuousAssignment::Constant(law))) = (exp.signal(), exp.continuous()) {
        for k in law.knots() {
            breaks.push(s - k);
            breaks.push(s + k);
        }
    }
    breaks
}

// Integrates a fallible integrand, surfacing the first error.
fn integrate_fallible(
    q: &Quadrature,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    f: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let v = q.integrate(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        breaks,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => v,
    }
}

fn continuous_signal_weight(prior: &MixedDistribution, exp: &Experiment, s: f64) -> Result<f64> {
    let Some(part) = prior.continuous_part() else { return Ok(0.0) };
    let (lo, hi) = part.shape.support();
    integrate_fallible(&Quadrature::default(), lo, hi, &signal_breaks(exp, part, s), |t| {
        Ok(part.density(t) * state_density(exp, t, s)?)
    })
}

/// `π_{F,P}(s)`, the density of the signal at `s`.
pub fn signal_marginal(prior: &MixedDistribution, exp: &Experiment, s: f64) -> Result<f64> {
    let mut total = 0.0;
    for atom in prior.atoms() {
        total += atom.mass * state_density(exp, atom.location, s)?;
    }
    Ok(total + continuous_signal_weight(prior, exp, s)?)
}

/// `F_{P,s}`, by Bayes' rule.
pub fn posterior(prior: &MixedDistribution, exp: &Experiment, s: f64) -> Result<PosteriorAtSignal> {
    let marginal = signal_marginal(prior, exp, s)?;
    if !(marginal > 0.0) {
        return Err(Error::ZeroMarginal { signal: s });
    }
    let mut atoms = Vec::new();
    for atom in prior.atoms() {
        let w = atom.mass * state_density(exp, atom.location, s)? / marginal;
        if w >= MIN_ATOM_MASS {
            atoms.push((atom.location, w));
        }
    }
    let mut continuous = None;
    if let Some(part) = prior.continuous_part() {
        let weight = continuous_signal_weight(prior, exp, s)? / marginal;
        if weight > MIN_ATOM_MASS {
            let (lo, hi) = part.shape.support();
            let shape = part.shape.clone();
            let exp_c = exp.clone();
            let z = weight * marginal / part.mass;
            let mut knots = signal_breaks(exp, part, s);
            knots.retain(|&k| k > lo && k < hi);
            let pdf = move |t: f64| shape.pdf(t) * state_density(&exp_c, t, s).unwrap_or(0.0) / z;
            let shape = DensityShape::Function { pdf: Arc::new(pdf), lo, hi, knots };
            continuous = Some(ContinuousPart { shape, mass: weight });
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum::<f64>() + continuous.as_ref().map_or(0.0, |c| c.mass);
    atoms.iter_mut().for_each(|a| a.1 /= total);
    if let Some(c) = continuous.as_mut() {
        c.mass /= total;
    }
    let distribution = MixedDistribution::new(atoms, continuous)?;
    Ok(PosteriorAtSignal { distribution, marginal })
}

/// `ψ*_{F,P}(s)`: the action maximizing posterior-expected utility, smallest on ties.
pub fn optimal_decision(
    prior: &MixedDistribution,
    exp: &Experiment,
    s: f64,
    problem: &DecisionProblem,
) -> Result<f64> {
    let post = posterior(prior, exp, s)?;
    let q = Quadrature::default();
    let values = problem
        .actions
        .iter()
        .map(|&a| post.distribution.integrate(|t| problem.u(t, a), &q))
        .collect::<Result<Vec<_>>>()?;
    Ok(problem.actions[best_index(&values)])
}

fn atom_states(prior: &MixedDistribution, exp: &Experiment) -> Result<Vec<AtomState>> {
    let atomic = if prior.is_atomic() { prior.clone() } else { prior.discretize(DEFAULT_PRIOR_NODES)? };
    atomic
        .atoms()
        .iter()
        .map(|a| {
            Ok(AtomState { theta: a.location, mass: a.mass, noise: Some(exp.noise_for(a.location)?.into_owned()) })
        })
        .collect()
}

/// Interim-optimal rule `ψ*_{F,P}`. Continuous priors are discretized at
/// Gauss–Legendre nodes first; non-additive signals use a signal grid with
/// bisection at action changes.
pub fn decision_rule(prior: &MixedDistribution, exp: &Experiment, problem: &DecisionProblem) -> Result<DecisionRule> {
    let states = atom_states(prior, exp)?;
    match exp.signal() {
        SignalFunction::Additive => atomic_decision_rule(&states, problem),
        sig => scan_rule(&states, sig, problem),
    }
}

fn scan_rule(states: &[AtomState], sig: &SignalFunction, problem: &DecisionProblem) -> Result<DecisionRule> {
    let rows: Vec<Vec<f64>> = states.iter().map(|s| problem.row(s.theta)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for st in states {
        let r = st.noise.as_ref().map_or(0.0, |n| n.radius());
        lo = lo.min(sig.signal(st.theta, -r));
        hi = hi.max(sig.signal(st.theta, r));
    }
    let act_at = |s: f64| -> Option<usize> {
        let mut vals = vec![0.0; problem.actions.len()];
        let mut m = 0.0;
        for (st, row) in states.iter().zip(&rows) {
            let Some(law) = &st.noise else { continue };
            let w = st.mass * law.density(sig.noise(st.theta, s)) * sig.inverse_slope(st.theta, s).abs();
            if w > 0.0 {
                m += w;
                vals.iter_mut().zip(row).for_each(|(v, u)| *v += w * u);
            }
        }
        (m > 0.0).then(|| best_index(&vals.iter().map(|v| v / m).collect::<Vec<_>>()))
    };
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).collect();
    let acts: Vec<Option<usize>> = grid.iter().map(|&s| act_at(s)).collect();
    let mut elems = vec![Elem { lo: f64::NEG_INFINITY, hi: grid[0], act: None }];
    elems.push(Elem { lo: grid[0], hi: grid[0], act: acts[0] });
    let mut start = grid[0];
    for i in 1..grid.len() {
        if acts[i] == acts[i - 1] {
            continue;
        }
        let (mut a, mut b) = (grid[i - 1], grid[i]);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if act_at(m) == acts[i - 1] {
                a = m;
            } else {
                b = m;
            }
        }
        let cut = 0.5 * (a + b);
        elems.push(Elem { lo: start, hi: cut, act: acts[i - 1] });
        elems.push(Elem { lo: cut, hi: cut, act: act_at(cut) });
        start = cut;
    }
    let last = grid[grid.len() - 1];
    elems.push(Elem { lo: start, hi: last, act: acts[acts.len() - 1] });
    elems.push(Elem { lo: last, hi: last, act: acts[acts.len() - 1] });
    elems.push(Elem { lo: last, hi: f64::INFINITY, act: None });
    finalize(elems, problem)
}

// Expected utility at θ when acting by `rule` on the signal.
fn state_benefit(exp: &Experiment, theta: f64, rule: &DecisionRule, problem: &DecisionProblem) -> Result<f64> {
    let law = exp.noise_for(theta)?;
    Ok(match exp.signal() {
        SignalFunction::Additive => state_benefit_additive(&law, theta, rule, problem),
        sig => rule
            .pieces()
            .map(|(lo, hi, a)| {
                let xlo = if lo.is_finite() { sig.noise(theta, lo) } else { lo };
                let xhi = if hi.is_finite() { sig.noise(theta, hi) } else { hi };
                law.interval_mass(xlo, xhi) * problem.u(theta, a)
            })
            .sum(),
    })
}

/// `B_F(P) = E[u(θ, ψ*(σ(θ, x)))]`.
pub fn gross_benefit(
    prior: &MixedDistribution,
    exp: &Experiment,
    problem: &DecisionProblem,
    q: &Quadrature,
) -> Result<f64> {
    let rule = decision_rule(prior, exp, problem)?;
    benefit_of_rule(prior, exp, &rule, problem, q)
}

/// Expected utility of following `rule`, under prior `F` and experiment `P`.
pub fn benefit_of_rule(
    prior: &MixedDistribution,
    exp: &Experiment,
    rule: &DecisionRule,
    problem: &DecisionProblem,
    q: &Quadrature,
) -> Result<f64> {
    let mut total = 0.0;
    for atom in prior.atoms() {
        total += atom.mass * state_benefit(exp, atom.location, rule, problem)?;
    }
    if let Some(part) = prior.continuous_part() {
        let (lo, hi) = part.shape.support();
        let mut breaks = part.shape.knots();
        if let (SignalFunction::Additive, Some(ContinuousAssignment::Constant(law))) = (exp.signal(), exp.continuous()) {
            for &b in rule.breakpoints() {
                for k in law.knots() {
                    breaks.push(b - k);
                    breaks.push(b + k);
                }
            }
        }
        total += integrate_fallible(q, lo, hi, &breaks, |t| Ok(part.density(t) * state_benefit(exp, t, rule, problem)?))?;
    }
    Ok(total)
}

/// `B`, `C` and `V = B - C` for one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Valuation {
    pub benefit: f64,
    pub cost: f64,
    pub value: f64,
}

pub fn net_benefit(
    prior: &MixedDistribution,
    exp: &Experiment,
    problem: &DecisionProblem,
    cost: &NoiseCostFunction,
    q: &Quadrature,
) -> Result<Valuation> {
    let benefit = gross_benefit(prior, exp, problem, q)?;
    let cost = experiment_cost(cost, exp, prior, q)?;
    Ok(Valuation { benefit, cost, value: benefit - cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::make_uniform_experiment;

    fn quad(actions: &[f64]) -> DecisionProblem {
        DecisionProblem::new(actions.to_vec(), Utility::QuadraticLoss { scale: 1.0 }).unwrap()
    }

    fn two_atoms() -> MixedDistribution {
        MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    fn widths(a: f64, b: f64) -> Experiment {
        make_uniform_experiment(&[(0.0, a), (1.0, b)], SignalFunction::Additive, 2.0).unwrap()
    }

    #[test]
    fn marginal_examples() {
        let single = MixedDistribution::atomic(&[(0.0, 1.0)]).unwrap();
        let e = make_uniform_experiment(&[(0.0, 1.0)], SignalFunction::Additive, 2.0).unwrap();
        assert_eq!(signal_marginal(&single, &e, 0.0).unwrap(), 0.5);
        let e = widths(0.6, 0.6);
        assert!((signal_marginal(&two_atoms(), &e, 0.5).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(signal_marginal(&two_atoms(), &e, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn posterior_examples() {
        let e = widths(0.6, 0.6);
        let p = posterior(&two_atoms(), &e, 0.5).unwrap();
        assert_eq!(p.distribution.atoms().len(), 2);
        assert!((p.distribution.atoms()[0].mass - 0.5).abs() < 1e-15);
        let p = posterior(&two_atoms(), &e, 0.9).unwrap();
        assert_eq!(p.distribution.atoms().len(), 1);
        assert_eq!(p.distribution.atoms()[0].location, 1.0);
        assert!(matches!(posterior(&two_atoms(), &e, 3.0), Err(Error::ZeroMarginal { .. })));
    }

    #[test]
    fn decision_examples() {
        let problem = quad(&[0.0, 0.5, 1.0]);
        let e = widths(0.6, 0.6);
        assert_eq!(optimal_decision(&two_atoms(), &e, 0.9, &problem).unwrap(), 1.0);
        assert_eq!(optimal_decision(&two_atoms(), &e, 0.5, &problem).unwrap(), 0.5);
        let tie = DecisionProblem::new(vec![0.0, 1.0], Utility::QuadraticLoss { scale: 1.0 }).unwrap();
        assert_eq!(optimal_decision(&two_atoms(), &e, 0.5, &tie).unwrap(), 0.0);
    }

    #[test]
    fn rule_examples() {
        let problem = quad(&[0.0, 0.5, 1.0]);
        let rule = decision_rule(&two_atoms(), &widths(0.6, 0.6), &problem).unwrap();
        assert_eq!(rule.breakpoints(), &[0.4, 0.6]);
        assert_eq!(rule.piece_actions(), &[0.0, 0.5, 1.0]);
        assert_eq!(rule.point_actions(), &[0.5, 0.5]);

        let rule = decision_rule(&two_atoms(), &widths(0.3, 0.3), &problem).unwrap();
        assert_eq!(rule.breakpoints(), &[0.5]);
        assert_eq!(rule.piece_actions(), &[0.0, 1.0]);

        let single = MixedDistribution::atomic(&[(0.3, 1.0)]).unwrap();
        let e = make_uniform_experiment(&[(0.3, 0.2)], SignalFunction::Additive, 1.0).unwrap();
        let rule = decision_rule(&single, &e, &problem).unwrap();
        assert!(rule.breakpoints().is_empty());
        assert_eq!(rule.piece_actions(), &[0.5]);
    }

    #[test]
    fn benefit_examples() {
        let problem = quad(&[0.0, 0.5, 1.0]);
        let q = Quadrature::default();
        assert_eq!(gross_benefit(&two_atoms(), &widths(0.3, 0.3), &problem, &q).unwrap(), 0.0);
        // equal widths still reveal the state on the non-overlapping tails
        assert!((gross_benefit(&two_atoms(), &widths(1.0, 1.0), &problem, &q).unwrap() + 0.125).abs() < 1e-15);
        let wide = make_uniform_experiment(&[(0.0, 1e6), (1.0, 1e6)], SignalFunction::Additive, 2e6).unwrap();
        let b = gross_benefit(&two_atoms(), &wide, &problem, &q).unwrap();
        assert!((b + 0.25).abs() < 1e-6);
        // overlap [0.4, 0.6] carries 0.2/1.2 of each state's mass and costs 0.25 there
        let b = gross_benefit(&two_atoms(), &widths(0.6, 0.6), &problem, &q).unwrap();
        assert!((b + 0.25 * 0.2 / 1.2).abs() < 1e-15);
        let tent = NoiseCostFunction::tent(1.0, 1.0).unwrap();
        let v = net_benefit(&two_atoms(), &widths(0.5, 1.0), &problem, &tent, &q).unwrap();
        assert!((v.cost - 0.625).abs() < 1e-15);
        assert_eq!(v.value, v.benefit - v.cost);
    }

    #[test]
    fn perfect_states_in_the_exact_path() {
        let problem = quad(&[0.0, 0.5, 1.0]);
        let states = vec![
            AtomState { theta: 0.0, mass: 0.5, noise: None },
            AtomState { theta: 1.0, mass: 0.5, noise: Some(NoiseDistribution::uniform(1.5).unwrap()) },
        ];
        let rule = atomic_decision_rule(&states, &problem).unwrap();
        assert_eq!(rule.action_at(0.0), 0.0);
        assert_eq!(rule.action_at(0.1), 1.0);
        let b = atomic_gross_benefit(&states, &rule, &problem);
        assert!(b.abs() < 1e-15);
    }

    #[test]
    fn continuous_prior_posterior_normalizes() {
        let prior = MixedDistribution::new(
            vec![(0.0, 0.3)],
            Some(ContinuousPart { shape: DensityShape::uniform(-1.0, 1.0).unwrap(), mass: 0.7 }),
        )
        .unwrap();
        let e = Experiment::new(
            vec![(0.0, NoiseDistribution::uniform(0.5).unwrap())],
            Some(ContinuousAssignment::Constant(NoiseDistribution::uniform(0.5).unwrap())),
            SignalFunction::Additive,
            1.0,
        )
        .unwrap();
        let p = posterior(&prior, &e, 0.2).unwrap();
        // atom weight 0.3, continuous weight 0.7 * (1/2) * (1/1) over θ ∈ [-0.3, 0.7]
        let want_atom = 0.3 / (0.3 + 0.35);
        assert!((p.distribution.atoms()[0].mass - want_atom).abs() < 1e-9);
        let q = Quadrature::default();
        let total = p.distribution.integrate(|_| 1.0, &q).unwrap();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn table_utility_interpolates() {
        let u = Utility::table(vec![0.0, 1.0], vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert!((u.eval(0.5, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(u.eval(5.0, -1.0), 2.0);
    }
}
