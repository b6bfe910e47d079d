//! Noise-cost functions `c` and the integral cost `C_F(P) = ∫∫ c dP_θ dF`.
//!
//! Costs of piecewise-linear noise laws are computed exactly from the
//! closed-form primitives `G(x) = ∫_0^x c` and `M(x) = ∫_0^x t c(t) dt`.

use crate::error::{Error, Result};
use crate::experiments::{ContinuousAssignment, Experiment, NoiseDistribution};
use crate::measures::{MixedDistribution, Quadrature};

/// Sampled cost on `0 = xs[0] < … < xs[n-1]`, linear in between, constant
/// beyond the last knot, mirrored to the negative axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCost {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridCost {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::InvalidCost("grid cost needs at least two samples and matching lengths".into()));
        }
        if xs[0] != 0.0 || xs.windows(2).any(|w| !(w[0] < w[1])) || !xs[xs.len() - 1].is_finite() {
            return Err(Error::InvalidCost("grid cost abscissae must start at 0 and increase".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidCost("grid cost values must be finite and nonnegative".into()));
        }
        Ok(GridCost { xs, values })
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.xs.len();
        if t >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = self.xs.partition_point(|&x| x <= t).max(1) - 1;
        let w = (t - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    // Returns (G(t), M(t)).
    fn primitives(&self, t: f64) -> (f64, f64) {
        let (mut g, mut m) = (0.0, 0.0);
        for i in 0..self.xs.len() - 1 {
            let (a, b) = (self.xs[i], self.xs[i + 1]);
            if t <= a {
                return (g, m);
            }
            let e = t.min(b);
            let s = (self.values[i + 1] - self.values[i]) / (b - a);
            let c0 = self.values[i] - s * a;
            g += c0 * (e - a) + 0.5 * s * (e * e - a * a);
            m += 0.5 * c0 * (e * e - a * a) + s * (e * e * e - a * a * a) / 3.0;
        }
        let last = self.xs[self.xs.len() - 1];
        if t > last {
            let v = self.values[self.values.len() - 1];
            g += v * (t - last);
            m += 0.5 * v * (t * t - last * last);
        }
        (g, m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCostFunction {
    /// `K e^{-λ|x|}`.
    ExpDecay { scale: f64, rate: f64 },
    /// `h max(0, 1 - |x|/w)`.
    Tent { height: f64, halfwidth: f64 },
    /// `K / (1 + x²)`.
    Cauchy { scale: f64 },
    Custom(GridCost),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCost(format!("{name} must be positive and finite, got {v}")))
    }
}

impl NoiseCostFunction {
    pub fn exp_decay(scale: f64, rate: f64) -> Result<Self> {
        positive("scale", scale)?;
        positive("rate", rate)?;
        Ok(NoiseCostFunction::ExpDecay { scale, rate })
    }

    pub fn tent(height: f64, halfwidth: f64) -> Result<Self> {
        positive("height", height)?;
        positive("halfwidth", halfwidth)?;
        Ok(NoiseCostFunction::Tent { height, halfwidth })
    }

    pub fn cauchy(scale: f64) -> Result<Self> {
        positive("scale", scale)?;
        Ok(NoiseCostFunction::Cauchy { scale })
    }

    /// A sampled cost, validated for strict decrease above its infimum.
    pub fn custom(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let c = NoiseCostFunction::Custom(GridCost::new(xs, values)?);
        c.validate()?;
        Ok(c)
    }

    /// Parameter checks plus strict unimodality on a validation grid.
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseCostFunction::ExpDecay { scale, rate } => {
                positive("scale", *scale)?;
                positive("rate", *rate)
            }
            NoiseCostFunction::Tent { height, halfwidth } => {
                positive("height", *height)?;
                positive("halfwidth", *halfwidth)
            }
            NoiseCostFunction::Cauchy { scale } => positive("scale", *scale),
            NoiseCostFunction::Custom(g) => {
                GridCost::new(g.xs.clone(), g.values.clone())?;
                let report = check_unimodal(self, &g.xs);
                match report.violations.first() {
                    None => Ok(()),
                    Some(&(a, b)) => Err(Error::InvalidCost(format!(
                        "cost is not strictly decreasing between {a} and {b}"
                    ))),
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x.abs();
        match self {
            NoiseCostFunction::ExpDecay { scale, rate } => scale * (-rate * t).exp(),
            NoiseCostFunction::Tent { height, halfwidth } => height * (1.0 - t / halfwidth).max(0.0),
            NoiseCostFunction::Cauchy { scale } => scale / (1.0 + t * t),
            NoiseCostFunction::Custom(g) => g.eval(t),
        }
    }

    /// `inf c`.
    pub fn infimum(&self) -> f64 {
        match self {
            NoiseCostFunction::Custom(g) => g.values.iter().copied().fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    /// `G(t) = ∫_0^t c`, `t >= 0`.
    pub fn primitive(&self, t: f64) -> f64 {
        self.primitives(t).0
    }

    // (G(t), M(t)) with M(t) = ∫_0^t s c(s) ds.
    fn primitives(&self, t: f64) -> (f64, f64) {
        match self {
            NoiseCostFunction::ExpDecay { scale, rate } => {
                let y = rate * t;
                let e = (-y).exp();
                let g = -scale * (-y).exp_m1() / rate;
                let m = scale / (rate * rate) * (-(-y).exp_m1() - y * e);
                (g, m)
            }
            NoiseCostFunction::Tent { height, halfwidth } => {
                let u = t.min(*halfwidth);
                (
                    height * (u - u * u / (2.0 * halfwidth)),
                    height * (u * u / 2.0 - u * u * u / (3.0 * halfwidth)),
                )
            }
            NoiseCostFunction::Cauchy { scale } => (scale * t.atan(), 0.5 * scale * (t * t).ln_1p()),
            NoiseCostFunction::Custom(g) => g.primitives(t),
        }
    }

    /// Knots of `c` on the positive axis, where it fails to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            NoiseCostFunction::Tent { halfwidth, .. } => vec![*halfwidth],
            NoiseCostFunction::Custom(g) => g.xs[1..].to_vec(),
            _ => Vec::new(),
        }
    }
}

/// `∫ c dH_δ = G(δ)/δ`, and `c(0)` at `δ = 0`.
pub fn uniform_cost(c: &NoiseCostFunction, width: f64) -> f64 {
    if width == 0.0 {
        c.eval(0.0)
    } else {
        c.primitive(width) / width
    }
}

/// `∫ c dP`, exact for every supported noise law. A sub-probability mixture
/// contributes only the mass its components carry.
pub fn noise_cost(c: &NoiseCostFunction, law: &NoiseDistribution) -> f64 {
    if let Some(d) = law.as_uniform_width() {
        return uniform_cost(c, d);
    }
    if let NoiseDistribution::MixtureOfUniforms { weights, widths, .. } = law {
        return weights.iter().zip(widths).map(|(w, &d)| w * uniform_cost(c, d)).sum();
    }
    let mut total = 0.0;
    for p in law.half_pieces() {
        let slope = p.slope();
        let alpha = p.at_lo - slope * p.lo;
        let (g0, m0) = c.primitives(p.lo);
        let (g1, m1) = c.primitives(p.hi);
        total += alpha * (g1 - g0) + slope * (m1 - m0);
    }
    2.0 * total
}

/// `C_F(P) = ∫ (∫ c dP_θ) dF(θ)`.
pub fn experiment_cost(
    c: &NoiseCostFunction,
    exp: &Experiment,
    prior: &MixedDistribution,
    q: &Quadrature,
) -> Result<f64> {
    let mut total = 0.0;
    for atom in prior.atoms() {
        total += atom.mass * noise_cost(c, &*exp.noise_for(atom.location)?);
    }
    if let Some(part) = prior.continuous_part() {
        total += match exp.continuous() {
            None => return Err(Error::UnassignedState(part.shape.support().0)),
            Some(ContinuousAssignment::Constant(law)) => part.mass * noise_cost(c, law),
            Some(ContinuousAssignment::UniformWidth(width)) => {
                let (lo, hi) = part.shape.support();
                let bound = exp.bound();
                if let Some(t) = (0..=256)
                    .map(|i| lo + (hi - lo) * i as f64 / 256.0)
                    .find(|&t| !(width(t) >= 0.0 && width(t) < bound))
                {
                    return Err(Error::WidthExceedsBound { state: t, width: width(t), bound });
                }
                q.integrate(|t| part.density(t) * uniform_cost(c, width(t)), lo, hi, &part.shape.knots())?
            }
        };
    }
    Ok(total)
}

/// Outcome of [`check_unimodal`]; pairs are adjacent grid points on the positive axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnimodalityReport {
    /// Pairs where `c` fails to decrease strictly while above its infimum.
    pub violations: Vec<(f64, f64)>,
    /// Pairs on a flat tail at the infimum, which are permitted.
    pub at_infimum: Vec<(f64, f64)>,
}

impl UnimodalityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans adjacent pairs of the nonnegative part of `grid` for failures of
/// strict decrease. A pair starting at the infimum is permitted once `c`
/// has been seen above it, so a constant function is reported at its first
/// pair.
pub fn check_unimodal(c: &NoiseCostFunction, grid: &[f64]) -> UnimodalityReport {
    let inf = c.infimum();
    let pts: Vec<f64> = grid.iter().copied().filter(|&x| x >= 0.0).collect();
    let mut report = UnimodalityReport::default();
    let mut seen_above = false;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ca, cb) = (c.eval(a), c.eval(b));
        if ca > inf {
            seen_above = true;
        }
        if ca <= inf && seen_above {
            report.at_infimum.push((a, b));
        } else if !(cb < ca) {
            report.violations.push((a, b));
        }
    }
    report
}
