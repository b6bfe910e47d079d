//! Experiments: a symmetric noise law per state, the signal function, and the
//! operations that build new experiments from old ones (averaging over the
//! prior, mixing, restricted garbling).
//!
//! Every noise law is an even density that is piecewise linear on the half
//! axis `[0, radius]`. Uniforms and mixtures of uniforms are piecewise
//! constant; gridded densities are continuous and piecewise linear. Derived
//! laws (averages, mixtures of non-uniform laws, garbles) are kept in the
//! general [`NoiseDistribution::Piecewise`] form, so that masses, CDFs and
//! cost integrals stay exact.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{MixedDistribution, Quadrature};

/// Tolerance on the total mass of a noise law.
pub const NOISE_MASS_TOL: f64 = 1e-10;

/// `density(t) = at_lo + (at_hi - at_lo) (t - lo) / (hi - lo)` on `(lo, hi]`, `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece {
    pub lo: f64,
    pub hi: f64,
    pub at_lo: f64,
    pub at_hi: f64,
}

impl LinearPiece {
    pub fn slope(&self) -> f64 {
        (self.at_hi - self.at_lo) / (self.hi - self.lo)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t == self.lo {
            self.at_lo
        } else if t == self.hi {
            self.at_hi
        } else {
            (self.at_lo + self.slope() * (t - self.lo)).max(0.0)
        }
    }

    /// `∫_lo^t` of the piece, for `t` in `[lo, hi]`.
    pub fn mass_to(&self, t: f64) -> f64 {
        let d = t - self.lo;
        d * (self.at_lo + 0.5 * self.slope() * d)
    }

    pub fn mass(&self) -> f64 {
        0.5 * (self.hi - self.lo) * (self.at_lo + self.at_hi)
    }

    /// The same linear function restricted to `[a, b]` ⊂ `[lo, hi]`.
    pub fn restrict(&self, a: f64, b: f64) -> LinearPiece {
        LinearPiece { lo: a, hi: b, at_lo: self.eval(a), at_hi: self.eval(b) }
    }
}

/// How strictly the unimodality requirement is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unimodality {
    /// Strictly decreasing on the half axis wherever positive.
    Strict,
    /// Nonincreasing on the half axis.
    Weak,
    /// Not checked (garbled laws are generally not unimodal).
    Unchecked,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDistribution {
    /// `H_δ`, uniform on `[-δ, δ]`.
    Uniform { width: f64 },
    /// `Σ weights_j H_{widths_j}`; `residual_mass` accounts for any mass not
    /// carried by a component (sub-probability mixtures).
    MixtureOfUniforms { weights: Vec<f64>, widths: Vec<f64>, residual_mass: f64 },
    /// Density samples on `0 = xs[0] < … < xs[n-1]`, linear in between and
    /// zero beyond `xs[n-1]`, mirrored to the negative axis.
    Gridded { xs: Vec<f64>, values: Vec<f64> },
    /// General even piecewise-linear density given on the half axis.
    Piecewise { pieces: Vec<LinearPiece> },
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidNoise(msg.into())
}

impl NoiseDistribution {
    pub fn uniform(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(format!("uniform width must be positive and finite, got {width}")));
        }
        Ok(NoiseDistribution::Uniform { width })
    }

    /// Mixture of centered uniforms; `Σ weights + residual_mass` must be 1.
    pub fn mixture(weights: Vec<f64>, widths: Vec<f64>, residual_mass: f64) -> Result<Self> {
        if weights.len() != widths.len() || weights.is_empty() {
            return Err(invalid("mixture needs matching, nonempty weight and width lists"));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(invalid("mixture weights must be nonnegative"));
        }
        if widths.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(invalid("mixture widths must be positive"));
        }
        if !(residual_mass >= 0.0) {
            return Err(invalid(format!("residual mass {residual_mass} is negative")));
        }
        let total = weights.iter().sum::<f64>() + residual_mass;
        if (total - 1.0).abs() > NOISE_MASS_TOL {
            return Err(invalid(format!("mixture mass accounting gives {total}, expected 1")));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(invalid("mixture has no positive weight"));
        }
        Ok(NoiseDistribution::MixtureOfUniforms { weights, widths, residual_mass })
    }

    /// A user-supplied gridded density. Must already integrate to one and be
    /// strictly decreasing wherever positive.
    pub fn gridded(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(invalid("gridded noise needs at least two samples and matching lengths"));
        }
        if xs[0] != 0.0 {
            return Err(invalid("gridded noise grid must start at 0"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || !xs[xs.len() - 1].is_finite() {
            return Err(invalid("gridded noise abscissae must be strictly increasing"));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid("gridded noise values must be nonnegative"));
        }
        for (i, w) in values.windows(2).enumerate() {
            if w[0] > 0.0 && !(w[1] < w[0]) {
                return Err(invalid(format!(
                    "density not strictly decreasing between {} and {}",
                    xs[i],
                    xs[i + 1]
                )));
            }
            if w[0] == 0.0 && w[1] > 0.0 {
                return Err(invalid(format!("density increases after {}", xs[i])));
            }
        }
        let law = NoiseDistribution::Gridded { xs, values };
        let mass = law.total_mass();
        if (mass - 1.0).abs() > NOISE_MASS_TOL {
            return Err(invalid(format!("gridded noise integrates to {mass}, expected 1")));
        }
        Ok(law)
    }

    /// Like [`gridded`](Self::gridded) but rescales the samples to unit mass first.
    pub fn gridded_normalized(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(invalid("gridded noise needs matching lengths"));
        }
        let half: f64 = xs
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum();
        if !(half > 0.0) {
            return Err(invalid("gridded noise has zero area"));
        }
        let values = values.into_iter().map(|v| v / (2.0 * half)).collect();
        Self::gridded(xs, values)
    }

    /// Triangular density `(1 - |x|/r) / r` on `[-r, r]`.
    pub fn tent(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("tent radius must be positive, got {radius}")));
        }
        Self::gridded(vec![0.0, radius], vec![1.0 / radius, 0.0])
    }

    /// Builds a derived law from half-axis pieces, checking mass and shape.
    pub fn piecewise(pieces: Vec<LinearPiece>, shape: Unimodality) -> Result<Self> {
        let law = NoiseDistribution::Piecewise { pieces: normalize_pieces(pieces) };
        law.validate(shape)?;
        Ok(law)
    }

    pub fn as_uniform_width(&self) -> Option<f64> {
        match self {
            NoiseDistribution::Uniform { width } => Some(*width),
            _ => None,
        }
    }

    /// True for uniforms and mixtures of uniforms.
    pub fn is_uniform_mixture(&self) -> bool {
        matches!(self, NoiseDistribution::Uniform { .. } | NoiseDistribution::MixtureOfUniforms { .. })
    }

    /// The half-axis density as consecutive linear pieces covering `[0, radius]`.
    pub fn half_pieces(&self) -> Vec<LinearPiece> {
        match self {
            NoiseDistribution::Uniform { width } => {
                let h = 0.5 / width;
                vec![LinearPiece { lo: 0.0, hi: *width, at_lo: h, at_hi: h }]
            }
            NoiseDistribution::MixtureOfUniforms { weights, widths, .. } => {
                let mut comps: Vec<(f64, f64)> = widths
                    .iter()
                    .zip(weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(&d, &w)| (d, w))
                    .collect();
                comps.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut pieces = Vec::new();
                let mut lo = 0.0;
                for i in 0..comps.len() {
                    let hi = comps[i].0;
                    if hi <= lo {
                        continue;
                    }
                    let h: f64 = comps[i..].iter().map(|(d, w)| w / (2.0 * d)).sum();
                    pieces.push(LinearPiece { lo, hi, at_lo: h, at_hi: h });
                    lo = hi;
                }
                pieces
            }
            NoiseDistribution::Gridded { xs, values } => xs
                .windows(2)
                .zip(values.windows(2))
                .map(|(x, v)| LinearPiece { lo: x[0], hi: x[1], at_lo: v[0], at_hi: v[1] })
                .collect(),
            NoiseDistribution::Piecewise { pieces } => pieces.clone(),
        }
    }

    /// Right end of the support on the half axis.
    pub fn radius(&self) -> f64 {
        self.half_pieces()
            .iter()
            .rev()
            .find(|p| p.at_lo > 0.0 || p.at_hi > 0.0)
            .map_or(0.0, |p| p.hi)
    }

    /// Knots of the half-axis density, `0` included.
    pub fn knots(&self) -> Vec<f64> {
        let pieces = self.half_pieces();
        let mut k = vec![0.0];
        k.extend(pieces.iter().map(|p| p.hi));
        k
    }

    /// Density at `x`. At a jump the value from the side nearer zero is used,
    /// so `H_δ` has density `1/(2δ)` on the closed interval `[-δ, δ]`.
    pub fn density(&self, x: f64) -> f64 {
        let t = x.abs();
        let pieces = self.half_pieces();
        if t == 0.0 {
            return pieces.first().map_or(0.0, |p| p.at_lo);
        }
        pieces
            .iter()
            .find(|p| p.lo < t && t <= p.hi)
            .map_or(0.0, |p| p.eval(t))
    }

    /// Mass carried by the density (excludes any residual of a sub-probability mixture).
    pub fn total_mass(&self) -> f64 {
        2.0 * self.half_pieces().iter().map(LinearPiece::mass).sum::<f64>()
    }

    /// `∫_0^t density`, `t >= 0`.
    pub fn half_mass_to(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for p in self.half_pieces() {
            if t >= p.hi {
                acc += p.mass();
            } else {
                if t > p.lo {
                    acc += p.mass_to(t);
                }
                break;
            }
        }
        acc
    }

    /// `∫_{-∞}^x density`.
    pub fn cdf(&self, x: f64) -> f64 {
        let half = 0.5 * self.total_mass();
        if x >= 0.0 {
            half + self.half_mass_to(x)
        } else {
            half - self.half_mass_to(-x)
        }
    }

    /// Mass of the interval with endpoints `lo <= hi`.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    /// Checks mass and evenness (structural) and the requested unimodality.
    pub fn validate(&self, shape: Unimodality) -> Result<()> {
        let pieces = self.half_pieces();
        if pieces.is_empty() {
            return Err(invalid("noise law has empty support"));
        }
        let mut prev_hi = 0.0;
        for p in &pieces {
            if p.lo != prev_hi || !(p.hi > p.lo) {
                return Err(invalid("half-axis pieces must be contiguous and start at 0"));
            }
            if !(p.at_lo >= 0.0) || !(p.at_hi >= 0.0) || !p.at_lo.is_finite() || !p.at_hi.is_finite() {
                return Err(invalid(format!("negative density on ({}, {}]", p.lo, p.hi)));
            }
            prev_hi = p.hi;
        }
        let residual = match self {
            NoiseDistribution::MixtureOfUniforms { residual_mass, .. } => *residual_mass,
            _ => 0.0,
        };
        let mass = self.total_mass() + residual;
        if (mass - 1.0).abs() > NOISE_MASS_TOL {
            return Err(invalid(format!("noise law has mass {mass}, expected 1")));
        }
        if shape == Unimodality::Unchecked {
            return Ok(());
        }
        let mut last = f64::INFINITY;
        for p in &pieces {
            if p.at_lo > last || p.at_hi > p.at_lo {
                return Err(invalid(format!("density increases on ({}, {}]", p.lo, p.hi)));
            }
            if shape == Unimodality::Strict && p.at_lo > 0.0 && !(p.at_hi < p.at_lo) {
                return Err(invalid(format!("density is flat on ({}, {}]", p.lo, p.hi)));
            }
            last = p.at_hi;
        }
        Ok(())
    }

    /// `alpha · self + (1 - alpha) · other`.
    pub fn mix(&self, other: &NoiseDistribution, alpha: f64) -> Result<NoiseDistribution> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("mixing weight {alpha} not in [0, 1]")));
        }
        if alpha == 1.0 {
            return Ok(self.clone());
        }
        if alpha == 0.0 {
            return Ok(other.clone());
        }
        combine_laws(&[(alpha, Cow::Borrowed(self)), (1.0 - alpha, Cow::Borrowed(other))])
    }
}

/// Merges adjacent pieces that describe the same linear function and drops
/// zero-length pieces; trailing zero pieces are removed.
fn normalize_pieces(pieces: Vec<LinearPiece>) -> Vec<LinearPiece> {
    let mut out: Vec<LinearPiece> = Vec::with_capacity(pieces.len());
    for p in pieces.into_iter().filter(|p| p.hi > p.lo) {
        if let Some(last) = out.last_mut() {
            let same = last.at_hi == p.at_lo
                && ((last.slope() - p.slope()).abs() <= 1e-15 * (1.0 + last.slope().abs()));
            if same {
                last.hi = p.hi;
                last.at_hi = p.at_hi;
                continue;
            }
        }
        out.push(p);
    }
    while out.len() > 1 && out.last().is_some_and(|p| p.at_lo == 0.0 && p.at_hi == 0.0) {
        out.pop();
    }
    out
}

/// Value limits of the piece covering `(a, b)` at both ends, zero past the support.
fn eval_on(pieces: &[LinearPiece], a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    match pieces.iter().find(|p| p.lo <= mid && mid <= p.hi) {
        Some(p) => (p.eval(a), p.eval(b)),
        None => (0.0, 0.0),
    }
}

/// Weighted sum of laws. Stays in the uniform-mixture family when possible.
fn combine_laws(parts: &[(f64, Cow<'_, NoiseDistribution>)]) -> Result<NoiseDistribution> {
    let total: f64 = parts.iter().map(|p| p.0).sum();
    if parts.iter().all(|(_, l)| l.is_uniform_mixture()) {
        let mut comps: Vec<(f64, f64)> = Vec::new();
        let mut residual = 0.0;
        for (w, law) in parts {
            match law.as_ref() {
                NoiseDistribution::Uniform { width } => comps.push((*width, *w)),
                NoiseDistribution::MixtureOfUniforms { weights, widths, residual_mass } => {
                    comps.extend(widths.iter().zip(weights).map(|(&d, &a)| (d, a * w)));
                    residual += w * residual_mass;
                }
                _ => unreachable!(),
            }
        }
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (d, w) in comps {
            match merged.last_mut() {
                Some(last) if last.0 == d => last.1 += w,
                _ => merged.push((d, w)),
            }
        }
        merged.retain(|c| c.1 > 0.0);
        if merged.len() == 1 && residual == 0.0 && (merged[0].1 - total).abs() <= NOISE_MASS_TOL {
            return NoiseDistribution::uniform(merged[0].0);
        }
        let (widths, weights): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
        let weight_sum: f64 = weights.iter().sum();
        let residual = (total - weight_sum).max(0.0).max(residual).min(1.0);
        return NoiseDistribution::mixture(weights, widths, if (weight_sum + residual - 1.0).abs() <= NOISE_MASS_TOL { residual } else { 1.0 - weight_sum });
    }
    let piece_sets: Vec<(f64, Vec<LinearPiece>)> =
        parts.iter().map(|(w, l)| (*w, l.half_pieces())).collect();
    let mut knots: Vec<f64> = vec![0.0];
    for (_, ps) in &piece_sets {
        knots.extend(ps.iter().map(|p| p.hi));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let pieces = knots
        .windows(2)
        .map(|k| {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (w, ps) in &piece_sets {
                let (a, b) = eval_on(ps, k[0], k[1]);
                lo += w * a;
                hi += w * b;
            }
            LinearPiece { lo: k[0], hi: k[1], at_lo: lo, at_hi: hi }
        })
        .collect();
    NoiseDistribution::piecewise(pieces, Unimodality::Unchecked)
}

/// Parameters of the restricted garbling kernel that moves a share `alpha`
/// of the mass on `(x0, xhat)` uniformly onto `[xhat, x1)` (mirrored on the
/// negative axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedKernelSpec {
    x0: f64,
    xhat: f64,
    x1: f64,
    alpha: f64,
}

impl RestrictedKernelSpec {
    pub fn new(x0: f64, xhat: f64, x1: f64, alpha: f64) -> Result<Self> {
        let ordered = 0.0 <= x0 && x0 < xhat && xhat < x1 && x1.is_finite();
        if !ordered || !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidKernelSpec { x0, xhat, x1, alpha });
        }
        Ok(RestrictedKernelSpec { x0, xhat, x1, alpha })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn xhat(&self) -> f64 {
        self.xhat
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `K(y, [-d, d])` for the kernel this spec induces.
    pub fn kernel_mass(&self, y: f64, d: f64) -> f64 {
        let t = y.abs();
        let inside = |z: f64| if z <= d { 1.0 } else { 0.0 };
        if t > self.x0 && t < self.xhat {
            let overlap = (d.min(self.x1) - self.xhat).max(0.0);
            (1.0 - self.alpha) * inside(t) + self.alpha * overlap / (self.x1 - self.xhat)
        } else {
            inside(t)
        }
    }
}

/// Checks that the kernel only moves mass away from zero:
/// `K(y, [-d, d]) = 0` whenever `|y| > d`, on a grid covering the spec.
pub fn is_restricted_kernel_consistent(spec: &RestrictedKernelSpec) -> bool {
    if !(0.0 <= spec.x0 && spec.x0 < spec.xhat && spec.xhat < spec.x1) {
        return false;
    }
    let n = 64;
    let top = spec.x1 * 1.25;
    (1..=n).all(|i| {
        let y = top * i as f64 / n as f64;
        (0..i).all(|j| {
            let d = top * j as f64 / n as f64;
            spec.kernel_mass(y, d) == 0.0 && spec.kernel_mass(-y, d) == 0.0
        })
    })
}

/// One-sided mass moved by the garble: `alpha · P((x0, xhat))`.
pub fn moved_mass(law: &NoiseDistribution, spec: &RestrictedKernelSpec) -> f64 {
    spec.alpha * (law.half_mass_to(spec.xhat) - law.half_mass_to(spec.x0))
}

/// Applies the restricted kernel symmetrically on both half axes.
pub fn restricted_garble(law: &NoiseDistribution, spec: &RestrictedKernelSpec) -> Result<NoiseDistribution> {
    let source = law.half_mass_to(spec.xhat) - law.half_mass_to(spec.x0);
    if !(source > 0.0) {
        return Err(Error::EmptyMassRegion { x0: spec.x0, xhat: spec.xhat });
    }
    let lift = spec.alpha * source / (spec.x1 - spec.xhat);
    let mut pieces = law.half_pieces();
    let radius = pieces.last().map_or(0.0, |p| p.hi);
    if radius < spec.x1 {
        pieces.push(LinearPiece { lo: radius, hi: spec.x1, at_lo: 0.0, at_hi: 0.0 });
    }
    let mut knots: Vec<f64> = vec![0.0];
    knots.extend(pieces.iter().map(|p| p.hi));
    knots.extend([spec.x0, spec.xhat, spec.x1]);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let garbled = knots
        .windows(2)
        .filter(|k| k[1] > k[0])
        .map(|k| {
            let (a, b) = eval_on(&pieces, k[0], k[1]);
            let mid = 0.5 * (k[0] + k[1]);
            let (a, b) = if mid > spec.x0 && mid < spec.xhat {
                ((1.0 - spec.alpha) * a, (1.0 - spec.alpha) * b)
            } else if mid > spec.xhat && mid < spec.x1 {
                (a + lift, b + lift)
            } else {
                (a, b)
            };
            LinearPiece { lo: k[0], hi: k[1], at_lo: a, at_hi: b }
        })
        .collect();
    NoiseDistribution::piecewise(garbled, Unimodality::Unchecked)
}

/// A user-supplied monotone signal function together with its inverse in the noise.
#[derive(Clone)]
pub struct CustomSignal {
    forward: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    inverse: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl CustomSignal {
    /// Validates strict monotonicity in the noise and the round trip on a test grid.
    pub fn new(
        forward: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
        for &theta in &grid {
            let mut prev = f64::NEG_INFINITY;
            for &x in &grid {
                let s = forward(theta, x);
                if !(s > prev) || !s.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "signal function is not strictly increasing in the noise at theta={theta}, x={x}"
                    )));
                }
                prev = s;
                let back = forward(theta, inverse(theta, s));
                if (back - s).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "signal inverse fails round trip at theta={theta}, s={s}"
                    )));
                }
            }
        }
        Ok(CustomSignal { forward: Arc::new(forward), inverse: Arc::new(inverse) })
    }
}

/// `σ(θ, x)`; `Additive` is `θ + x`.
#[derive(Clone)]
pub enum SignalFunction {
    Additive,
    Custom(CustomSignal),
}

impl fmt::Debug for SignalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalFunction::Additive => write!(f, "Additive"),
            SignalFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl SignalFunction {
    pub fn signal(&self, theta: f64, x: f64) -> f64 {
        match self {
            SignalFunction::Additive => theta + x,
            SignalFunction::Custom(c) => (c.forward)(theta, x),
        }
    }

    /// `σ_θ^{-1}(s)`.
    pub fn noise(&self, theta: f64, s: f64) -> f64 {
        match self {
            SignalFunction::Additive => s - theta,
            SignalFunction::Custom(c) => (c.inverse)(theta, s),
        }
    }

    /// `d/ds σ_θ^{-1}(s)`, the change-of-variables factor for signal densities.
    pub fn inverse_slope(&self, theta: f64, s: f64) -> f64 {
        match self {
            SignalFunction::Additive => 1.0,
            SignalFunction::Custom(c) => {
                let h = 1e-6 * (1.0 + s.abs());
                ((c.inverse)(theta, s + h) - (c.inverse)(theta, s - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, SignalFunction::Additive)
    }

    pub fn same_as(&self, other: &SignalFunction) -> bool {
        match (self, other) {
            (SignalFunction::Additive, SignalFunction::Additive) => true,
            (SignalFunction::Custom(a), SignalFunction::Custom(b)) => {
                Arc::ptr_eq(&a.forward, &b.forward) && Arc::ptr_eq(&a.inverse, &b.inverse)
            }
            _ => false,
        }
    }
}

/// Noise assignment for the continuous part of a prior.
#[derive(Clone)]
pub enum ContinuousAssignment {
    /// The same law at every non-atom state.
    Constant(NoiseDistribution),
    /// `H_{δ(θ)}` with a width function.
    UniformWidth(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ContinuousAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContinuousAssignment::Constant(l) => write!(f, "Constant({l:?})"),
            ContinuousAssignment::UniformWidth(_) => write!(f, "UniformWidth(<fn>)"),
        }
    }
}

/// A bounded experiment: one noise law per atom state, an optional rule for
/// non-atom states, a signal function and a noise bound `b`. Every law's
/// support lies strictly inside `(-b, b)`.
#[derive(Debug, Clone)]
pub struct Experiment {
    states: Vec<(f64, NoiseDistribution)>,
    continuous: Option<ContinuousAssignment>,
    signal: SignalFunction,
    bound: f64,
}

impl Experiment {
    pub fn new(
        states: Vec<(f64, NoiseDistribution)>,
        continuous: Option<ContinuousAssignment>,
        signal: SignalFunction,
        bound: f64,
    ) -> Result<Self> {
        Self::build(states, continuous, signal, bound, Unimodality::Weak)
    }

    fn build(
        mut states: Vec<(f64, NoiseDistribution)>,
        continuous: Option<ContinuousAssignment>,
        signal: SignalFunction,
        bound: f64,
        shape: Unimodality,
    ) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!("noise bound must be positive, got {bound}")));
        }
        states.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = states.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!("state {} assigned twice", w[0].0)));
        }
        for (theta, law) in &states {
            law.validate(shape)?;
            let r = law.radius();
            if r >= bound {
                return Err(Error::WidthExceedsBound { state: *theta, width: r, bound });
            }
        }
        if let Some(ContinuousAssignment::Constant(law)) = &continuous {
            law.validate(shape)?;
            if law.radius() >= bound {
                return Err(Error::WidthExceedsBound { state: f64::NAN, width: law.radius(), bound });
            }
        }
        Ok(Experiment { states, continuous, signal, bound })
    }

    pub fn states(&self) -> &[(f64, NoiseDistribution)] {
        &self.states
    }

    pub fn continuous(&self) -> Option<&ContinuousAssignment> {
        self.continuous.as_ref()
    }

    pub fn signal(&self) -> &SignalFunction {
        &self.signal
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `P_θ`.
    pub fn noise_for(&self, theta: f64) -> Result<Cow<'_, NoiseDistribution>> {
        if let Ok(i) = self.states.binary_search_by(|s| s.0.total_cmp(&theta)) {
            return Ok(Cow::Borrowed(&self.states[i].1));
        }
        match &self.continuous {
            Some(ContinuousAssignment::Constant(law)) => Ok(Cow::Borrowed(law)),
            Some(ContinuousAssignment::UniformWidth(width)) => {
                let d = width(theta);
                if d >= self.bound {
                    return Err(Error::WidthExceedsBound { state: theta, width: d, bound: self.bound });
                }
                Ok(Cow::Owned(NoiseDistribution::uniform(d)?))
            }
            None => Err(Error::UnassignedState(theta)),
        }
    }

    /// True when every assigned law is the same (an uninformative experiment).
    pub fn is_state_invariant(&self) -> bool {
        let mut laws = self.states.iter().map(|s| &s.1);
        let first = match (laws.next(), &self.continuous) {
            (Some(l), _) => l,
            (None, Some(ContinuousAssignment::Constant(_))) => return true,
            (None, _) => return false,
        };
        laws.all(|l| l == first)
            && match &self.continuous {
                None => true,
                Some(ContinuousAssignment::Constant(l)) => l == first,
                Some(ContinuousAssignment::UniformWidth(_)) => false,
            }
    }

    /// The same experiment with the law at `theta` garbled. Garbled laws are
    /// not unimodal, so only mass, evenness and the bound are checked.
    pub fn garbled(&self, theta: f64, spec: &RestrictedKernelSpec) -> Result<Experiment> {
        let mut states = self.states.clone();
        let slot = states
            .iter_mut()
            .find(|s| s.0 == theta)
            .ok_or(Error::UnassignedState(theta))?;
        slot.1 = restricted_garble(&slot.1, spec)?;
        Self::build(states, self.continuous.clone(), self.signal.clone(), self.bound, Unimodality::Unchecked)
    }
}

/// `H = {H_{δ(θ)}}` from `(state, width)` pairs.
pub fn make_uniform_experiment(widths: &[(f64, f64)], signal: SignalFunction, bound: f64) -> Result<Experiment> {
    let mut states = Vec::with_capacity(widths.len());
    for &(theta, d) in widths {
        if d >= bound {
            return Err(Error::WidthExceedsBound { state: theta, width: d, bound });
        }
        states.push((theta, NoiseDistribution::uniform(d)?));
    }
    Experiment::new(states, None, signal, bound)
}

/// `P^F(x) = ∫ P_θ(x) dF(θ)`, the state-invariant average of `P` under `F`.
pub fn average_experiment(exp: &Experiment, prior: &MixedDistribution) -> Result<NoiseDistribution> {
    let mut parts: Vec<(f64, Cow<'_, NoiseDistribution>)> = Vec::new();
    for atom in prior.atoms() {
        parts.push((atom.mass, exp.noise_for(atom.location)?));
    }
    if let Some(c) = prior.continuous_part() {
        match exp.continuous() {
            None => return Err(Error::UnassignedState(c.shape.support().0)),
            Some(ContinuousAssignment::Constant(law)) => parts.push((c.mass, Cow::Borrowed(law))),
            Some(ContinuousAssignment::UniformWidth(width)) => {
                parts.push((c.mass, Cow::Owned(sample_width_average(c, width.as_ref(), exp.bound())?)));
            }
        }
    }
    combine_laws(&parts)
}

// Density of ∫ H_{δ(θ)} f_c(θ)dθ / mass sampled on a grid; an approximation.
fn sample_width_average(
    part: &crate::measures::ContinuousPart,
    width: &(dyn Fn(f64) -> f64 + Send + Sync),
    bound: f64,
) -> Result<NoiseDistribution> {
    let q = Quadrature::default();
    let (lo, hi) = part.shape.support();
    let knots = part.shape.knots();
    let n = 512;
    let xs: Vec<f64> = (0..=n).map(|i| bound * i as f64 / n as f64).collect();
    let mut values = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = q.integrate(
            |t| {
                let d = width(t);
                if x <= d && d > 0.0 {
                    part.shape.pdf(t) / (2.0 * d)
                } else {
                    0.0
                }
            },
            lo,
            hi,
            &knots,
        )?;
        values.push(v);
    }
    let pieces: Vec<LinearPiece> = xs
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| LinearPiece { lo: x[0], hi: x[1], at_lo: v[0], at_hi: v[1] })
        .collect();
    let half: f64 = pieces.iter().map(LinearPiece::mass).sum();
    let pieces = pieces
        .into_iter()
        .map(|p| LinearPiece { at_lo: p.at_lo / (2.0 * half), at_hi: p.at_hi / (2.0 * half), ..p })
        .collect();
    NoiseDistribution::piecewise(pieces, Unimodality::Unchecked)
}

/// `(P α Q)_θ = α P_θ + (1 - α) Q_θ`.
pub fn mix_experiments(p: &Experiment, q: &Experiment, alpha: f64) -> Result<Experiment> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("mixing weight {alpha} not in [0, 1]")));
    }
    if !p.signal.same_as(&q.signal) {
        return Err(Error::IncompatibleExperiments("signal functions differ".into()));
    }
    if p.bound != q.bound {
        return Err(Error::IncompatibleExperiments(format!("bounds differ: {} vs {}", p.bound, q.bound)));
    }
    if p.states.len() != q.states.len() || p.states.iter().zip(&q.states).any(|(a, b)| a.0 != b.0) {
        return Err(Error::IncompatibleExperiments("state sets differ".into()));
    }
    let states = p
        .states
        .iter()
        .zip(&q.states)
        .map(|(a, b)| Ok((a.0, a.1.mix(&b.1, alpha)?)))
        .collect::<Result<Vec<_>>>()?;
    let continuous = match (&p.continuous, &q.continuous) {
        (None, None) => None,
        (Some(ContinuousAssignment::Constant(a)), Some(ContinuousAssignment::Constant(b))) => {
            Some(ContinuousAssignment::Constant(a.mix(b, alpha)?))
        }
        _ => {
            return Err(Error::IncompatibleExperiments(
                "continuous-state assignments can only be mixed when both are constant".into(),
            ))
        }
    };
    Experiment::build(states, continuous, p.signal.clone(), p.bound, Unimodality::Unchecked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(d: f64) -> NoiseDistribution {
        NoiseDistribution::uniform(d).unwrap()
    }

    #[test]
    fn uniform_experiment_construction() {
        let e = make_uniform_experiment(&[(0.0, 0.5), (1.0, 0.5)], SignalFunction::Additive, 1.0).unwrap();
        assert!(e.is_state_invariant());
        let e = make_uniform_experiment(&[(0.0, 0.2), (1.0, 0.8)], SignalFunction::Additive, 1.0).unwrap();
        assert!(!e.is_state_invariant());
        assert_eq!(e.noise_for(1.0).unwrap().as_uniform_width(), Some(0.8));
        let err = make_uniform_experiment(&[(0.0, 1.5)], SignalFunction::Additive, 1.0).unwrap_err();
        assert!(matches!(err, Error::WidthExceedsBound { .. }));
    }

    #[test]
    fn uniform_density_closed_convention() {
        let law = h(0.5);
        assert_eq!(law.density(0.5), 1.0);
        assert_eq!(law.density(-0.5), 1.0);
        assert_eq!(law.density(0.5000001), 0.0);
        assert_eq!(law.cdf(0.25), 0.75);
        assert_eq!(law.total_mass(), 1.0);
    }

    #[test]
    fn averaging_examples() {
        let prior = MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let inv = make_uniform_experiment(&[(0.0, 0.5), (1.0, 0.5)], SignalFunction::Additive, 2.0).unwrap();
        assert_eq!(average_experiment(&inv, &prior).unwrap(), h(0.5));

        let e = make_uniform_experiment(&[(0.0, 0.5), (1.0, 1.0)], SignalFunction::Additive, 2.0).unwrap();
        let avg = average_experiment(&e, &prior).unwrap();
        assert!(matches!(avg, NoiseDistribution::MixtureOfUniforms { .. }));
        assert!((avg.density(0.75) - 0.25).abs() < 1e-15);
        assert!((avg.density(-0.75) - 0.25).abs() < 1e-15);

        let single = MixedDistribution::atomic(&[(0.0, 1.0)]).unwrap();
        let tent = Experiment::new(
            vec![(0.0, NoiseDistribution::tent(0.7).unwrap())],
            None,
            SignalFunction::Additive,
            1.0,
        )
        .unwrap();
        let avg = average_experiment(&tent, &single).unwrap();
        for x in [0.0, 0.1, 0.35, 0.69, 0.8] {
            assert!((avg.density(x) - tent.noise_for(0.0).unwrap().density(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn average_requires_assignment() {
        let prior = MixedDistribution::atomic(&[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let e = make_uniform_experiment(&[(0.0, 0.5)], SignalFunction::Additive, 1.0).unwrap();
        assert_eq!(average_experiment(&e, &prior).unwrap_err(), Error::UnassignedState(2.0));
    }

    #[test]
    fn mixing_examples() {
        let p = make_uniform_experiment(&[(0.0, 1.0)], SignalFunction::Additive, 2.0).unwrap();
        let q = make_uniform_experiment(&[(0.0, 0.5)], SignalFunction::Additive, 2.0).unwrap();
        let same = mix_experiments(&p, &q, 1.0).unwrap();
        assert_eq!(same.states()[0].1, p.states()[0].1);
        let m = mix_experiments(&p, &q, 0.5).unwrap();
        assert!((m.noise_for(0.0).unwrap().density(0.25) - 0.75).abs() < 1e-15);

        let r = make_uniform_experiment(&[(0.0, 0.5)], SignalFunction::Additive, 3.0).unwrap();
        assert!(matches!(mix_experiments(&p, &r, 0.5), Err(Error::IncompatibleExperiments(_))));
    }

    #[test]
    fn garble_moves_expected_mass() {
        let spec = RestrictedKernelSpec::new(0.0, 0.25, 0.5, 0.5).unwrap();
        let p = h(1.0);
        assert!((moved_mass(&p, &spec) - 0.0625).abs() < 1e-15);
        let q = restricted_garble(&p, &spec).unwrap();
        assert!((q.total_mass() - 1.0).abs() < 1e-14);
        assert!((q.density(0.1) - 0.25).abs() < 1e-15);
        assert!((q.density(0.3) - 0.75).abs() < 1e-15);
        assert!((q.density(0.7) - 0.5).abs() < 1e-15);
        assert_eq!(q.density(-0.3), q.density(0.3));
        // one-sided mass on [0.25, 0.5) grew by exactly the moved amount
        let gained = (q.half_mass_to(0.5) - q.half_mass_to(0.25)) - (p.half_mass_to(0.5) - p.half_mass_to(0.25));
        assert!((gained - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn garble_with_tiny_alpha_is_identity_in_the_limit() {
        let spec = RestrictedKernelSpec::new(0.1, 0.3, 0.6, 1e-12).unwrap();
        let p = NoiseDistribution::tent(0.9).unwrap();
        let q = restricted_garble(&p, &spec).unwrap();
        for i in 0..100 {
            let x = i as f64 * 0.01;
            assert!((q.density(x) - p.density(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn garble_rejects_empty_source() {
        let p = h(0.2);
        let spec = RestrictedKernelSpec::new(0.3, 0.4, 0.5, 0.5).unwrap();
        assert!(matches!(restricted_garble(&p, &spec), Err(Error::EmptyMassRegion { .. })));
    }

    #[test]
    fn kernel_spec_checks() {
        let s = RestrictedKernelSpec::new(0.0, 0.25, 0.5, 0.5).unwrap();
        assert!(is_restricted_kernel_consistent(&s));
        assert!(RestrictedKernelSpec::new(0.5, 0.2, 1.0, 0.5).is_err());
        let s = RestrictedKernelSpec::new(0.1, 0.2, 0.3, 0.99).unwrap();
        assert!(is_restricted_kernel_consistent(&s));
    }

    #[test]
    fn gridded_validation() {
        assert!(NoiseDistribution::tent(1.0).is_ok());
        // flat segment violates strict unimodality
        assert!(NoiseDistribution::gridded_normalized(vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 0.0]).is_err());
        // increasing segment
        assert!(NoiseDistribution::gridded_normalized(vec![0.0, 0.5, 1.0], vec![0.5, 1.0, 0.0]).is_err());
        // mass not one
        assert!(NoiseDistribution::gridded(vec![0.0, 1.0], vec![2.0, 0.0]).is_err());
        let law = NoiseDistribution::gridded_normalized(vec![0.0, 0.5, 1.0], vec![3.0, 2.0, 1.0]).unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-14);
        assert_eq!(law.radius(), 1.0);
    }

    #[test]
    fn mixture_of_uniforms_is_weakly_unimodal_and_normalized() {
        let law = NoiseDistribution::mixture(vec![0.2, 0.3, 0.5], vec![1.0, 0.25, 0.5], 0.0).unwrap();
        law.validate(Unimodality::Weak).unwrap();
        assert!(law.validate(Unimodality::Strict).is_err());
        assert!((law.total_mass() - 1.0).abs() < 1e-15);
        assert!((law.density(0.1) - (0.1 + 0.6 + 0.5)).abs() < 1e-14);
        assert!(NoiseDistribution::mixture(vec![0.2], vec![1.0], 0.5).is_err());
    }

    #[test]
    fn custom_signal_round_trip() {
        let sig = CustomSignal::new(|t, x| t + x * x * x + x, |t, s| {
            // invert x^3 + x = s - t by Newton
            let y = s - t;
            let mut x = y.cbrt();
            for _ in 0..60 {
                x -= (x * x * x + x - y) / (3.0 * x * x + 1.0);
            }
            x
        })
        .unwrap();
        let f = SignalFunction::Custom(sig);
        assert!((f.noise(1.0, f.signal(1.0, 0.7)) - 0.7).abs() < 1e-12);
        assert!((f.inverse_slope(0.0, 2.0) - 0.25).abs() < 1e-6);
        assert!(CustomSignal::new(|t, x| t - x, |t, s| t - s).is_err());
    }
}
