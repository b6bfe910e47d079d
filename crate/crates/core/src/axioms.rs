//! Seeded property suite for the cost axioms: consistency, prior
//! independence, mixture linearity, continuity and restricted Blackwell
//! monotonicity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costs::{experiment_cost, noise_cost, NoiseCostFunction};
use crate::error::Result;
use crate::experiments::{
    average_experiment, moved_mass, restricted_garble, Experiment, NoiseDistribution, RestrictedKernelSpec,
    SignalFunction,
};
use crate::measures::{MixedDistribution, Quadrature};

/// Tolerance for the equality axioms.
pub const EQUALITY_TOL: f64 = 2e-9;
/// Minimum strict cost decrease under a garble.
pub const GARBLE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest equality gap, or for Blackwell the smallest cost decrease.
    pub worst: f64,
}

impl AxiomCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub seed: u64,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(AxiomCheck::passed)
    }
}

fn random_cost(rng: &mut ChaCha8Rng, reach: f64) -> Result<NoiseCostFunction> {
    match rng.gen_range(0..3) {
        0 => NoiseCostFunction::exp_decay(rng.gen_range(0.5..2.0), rng.gen_range(0.2..2.0)),
        1 => NoiseCostFunction::tent(rng.gen_range(0.5..2.0), reach * rng.gen_range(1.05..2.0)),
        _ => NoiseCostFunction::cauchy(rng.gen_range(0.5..2.0)),
    }
}

fn random_law(rng: &mut ChaCha8Rng, bound: f64) -> Result<NoiseDistribution> {
    let r = bound * rng.gen_range(0.05..0.95);
    match rng.gen_range(0..3) {
        0 => NoiseDistribution::uniform(r),
        1 => NoiseDistribution::tent(r),
        _ => {
            let w = rng.gen_range(0.1..0.9);
            NoiseDistribution::mixture(vec![w, 1.0 - w], vec![r, r * rng.gen_range(0.1..0.9)], 0.0)
        }
    }
}

fn random_prior(rng: &mut ChaCha8Rng, locations: &[f64]) -> Result<MixedDistribution> {
    let n = rng.gen_range(1..=locations.len());
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let atoms: Vec<(f64, f64)> = locations[..n].iter().zip(&raw).map(|(&l, &m)| (l, m / total)).collect();
    let sum: f64 = atoms.iter().map(|a| a.1).sum();
    let mut atoms = atoms;
    atoms[0].1 += 1.0 - sum;
    MixedDistribution::atomic(&atoms)
}

fn locations(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(1..=5);
    let mut locs: Vec<f64> = Vec::with_capacity(n);
    while locs.len() < n {
        let x = (rng.gen_range(-2.0..2.0f64) * 1e3).round() / 1e3;
        if !locs.contains(&x) {
            locs.push(x);
        }
    }
    locs
}

fn check(name: &'static str) -> AxiomCheck {
    AxiomCheck { name, cases: 0, failures: 0, worst: 0.0 }
}

/// Runs every axiom on `cases` random scenarios and `garbles` random garbles.
pub fn run_axioms(seed: u64, cases: usize, garbles: usize) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Quadrature::default();
    let mut consistency = check("consistency");
    let mut independence = check("prior-independence");
    let mut linearity = check("linearity");
    let mut continuity = check("continuity");
    let mut blackwell = check("blackwell-monotonicity");
    blackwell.worst = f64::INFINITY;

    for _ in 0..cases {
        let bound = rng.gen_range(0.5..3.0);
        let cost = random_cost(&mut rng, bound)?;
        let locs = locations(&mut rng);
        let states = locs
            .iter()
            .map(|&t| Ok((t, random_law(&mut rng, bound)?)))
            .collect::<Result<Vec<_>>>()?;
        let exp = Experiment::new(states, None, SignalFunction::Additive, bound)?;
        let prior = random_prior(&mut rng, &locs)?;

        let direct = experiment_cost(&cost, &exp, &prior, &q)?;
        let averaged = noise_cost(&cost, &average_experiment(&exp, &prior)?);
        record(&mut consistency, (direct - averaged).abs(), EQUALITY_TOL);

        let shared = random_law(&mut rng, bound)?;
        let inv = Experiment::new(
            locs.iter().map(|&t| (t, shared.clone())).collect(),
            None,
            SignalFunction::Additive,
            bound,
        )?;
        let other = random_prior(&mut rng, &locs)?;
        let gap = (experiment_cost(&cost, &inv, &prior, &q)? - experiment_cost(&cost, &inv, &other, &q)?).abs();
        record(&mut independence, gap, EQUALITY_TOL);

        let a = random_law(&mut rng, bound)?;
        let b = random_law(&mut rng, bound)?;
        let alpha = rng.gen_range(0.0..1.0);
        let mixed = noise_cost(&cost, &a.mix(&b, alpha)?);
        let want = alpha * noise_cost(&cost, &a) + (1.0 - alpha) * noise_cost(&cost, &b);
        record(&mut linearity, (mixed - want).abs(), EQUALITY_TOL);

        let d = bound * rng.gen_range(0.05..0.9);
        let base = noise_cost(&cost, &NoiseDistribution::uniform(d)?);
        let gaps: Vec<f64> = (1..=40)
            .map(|n| Ok((noise_cost(&cost, &NoiseDistribution::uniform(d * (1.0 + 0.5f64.powi(n)))?) - base).abs()))
            .collect::<Result<_>>()?;
        let last = gaps[gaps.len() - 1];
        let trending = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        continuity.cases += 1;
        continuity.worst = continuity.worst.max(last);
        if !(trending && last < 1e-9) {
            continuity.failures += 1;
        }
    }

    for _ in 0..garbles {
        let bound = rng.gen_range(0.5..3.0);
        let law = random_law(&mut rng, bound)?;
        let r = law.radius();
        let (spec, cost) = loop {
            let x0 = r * rng.gen_range(0.0..0.6);
            let xhat = x0 + (r - x0) * rng.gen_range(0.2..0.9);
            let x1 = xhat + (bound - xhat) * rng.gen_range(0.1..0.99);
            let spec = RestrictedKernelSpec::new(x0, xhat, x1, rng.gen_range(0.05..0.95))?;
            if moved_mass(&law, &spec) > 1e-3 {
                break (spec, random_cost(&mut rng, x1)?);
            }
        };
        let garbled = restricted_garble(&law, &spec)?;
        let drop = noise_cost(&cost, &law) - noise_cost(&cost, &garbled);
        blackwell.cases += 1;
        blackwell.worst = blackwell.worst.min(drop);
        if !(drop > GARBLE_MARGIN) {
            blackwell.failures += 1;
        }
    }
    if garbles == 0 {
        blackwell.worst = 0.0;
    }
    Ok(AxiomReport { seed, checks: vec![consistency, independence, linearity, continuity, blackwell] })
}

fn record(c: &mut AxiomCheck, gap: f64, tol: f64) {
    c.cases += 1;
    c.worst = c.worst.max(gap);
    if !(gap <= tol) {
        c.failures += 1;
    }
}
