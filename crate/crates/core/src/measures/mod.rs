//! Mixed priors over a real state: finitely many atoms plus an optional
//! absolutely continuous part, and integration against them.

mod quadrature;

use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, Normal};

pub use quadrature::{gauss_legendre_nodes, Quadrature, QuadratureRule};

use crate::error::{Error, Result};

/// Atom masses below this are rejected at construction.
pub const MIN_ATOM_MASS: f64 = 1e-12;
/// Tolerance on total probability mass.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Normalized shape of the continuous part. The owning [`ContinuousPart`]
/// carries the mass.
#[derive(Clone)]
pub enum DensityShape {
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Samples joined by linear interpolation, rescaled to unit mass.
    Grid { xs: Vec<f64>, ys: Vec<f64> },
    /// An already-normalized density on `[lo, hi]`, kinks listed in `knots`.
    Function {
        pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lo: f64,
        hi: f64,
        knots: Vec<f64>,
    },
}

impl fmt::Debug for DensityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityShape::Uniform { lo, hi } => write!(f, "Uniform[{lo}, {hi}]"),
            DensityShape::TruncatedNormal { mean, sd, lo, hi } => {
                write!(f, "TruncatedNormal(mean={mean}, sd={sd}) on [{lo}, {hi}]")
            }
            DensityShape::Grid { xs, .. } => write!(f, "Grid({} samples)", xs.len()),
            DensityShape::Function { lo, hi, .. } => write!(f, "Function on [{lo}, {hi}]"),
        }
    }
}

impl DensityShape {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDistribution(format!("uniform support [{lo}, {hi}] is empty")));
        }
        Ok(DensityShape::Uniform { lo, hi })
    }

    pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sd > 0.0) || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "truncated normal needs sd > 0 and lo < hi, got sd={sd}, [{lo}, {hi}]"
            )));
        }
        let shape = DensityShape::TruncatedNormal { mean, sd, lo, hi };
        if shape.normal_mass() <= 0.0 {
            return Err(Error::InvalidDistribution("truncation window carries no mass".into()));
        }
        Ok(shape)
    }

    pub fn grid(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidDistribution(
                "grid density needs at least two samples and matching lengths".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidDistribution("grid abscissae must be strictly increasing".into()));
        }
        if ys.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
            return Err(Error::InvalidDistribution("grid density values must be nonnegative".into()));
        }
        let area: f64 = xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum();
        if !(area > 0.0) {
            return Err(Error::InvalidDistribution("grid density has zero area".into()));
        }
        let ys = ys.into_iter().map(|y| y / area).collect();
        Ok(DensityShape::Grid { xs, ys })
    }

    fn normal_mass(&self) -> f64 {
        match self {
            DensityShape::TruncatedNormal { mean, sd, lo, hi } => {
                let n = Normal::new(*mean, *sd).expect("validated sd");
                n.cdf(*hi) - n.cdf(*lo)
            }
            _ => 1.0,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            DensityShape::Uniform { lo, hi }
            | DensityShape::TruncatedNormal { lo, hi, .. }
            | DensityShape::Function { lo, hi, .. } => (*lo, *hi),
            DensityShape::Grid { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    /// Interior points where the density may fail to be smooth.
    pub fn knots(&self) -> Vec<f64> {
        match self {
            DensityShape::Grid { xs, .. } => xs.clone(),
            DensityShape::Function { knots, .. } => knots.clone(),
            _ => Vec::new(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match self {
            DensityShape::Uniform { lo, hi } => 1.0 / (hi - lo),
            DensityShape::TruncatedNormal { mean, sd, .. } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()) / self.normal_mass()
            }
            DensityShape::Grid { xs, ys } => {
                let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
                    Ok(i) => return ys[i],
                    Err(i) => i,
                };
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ys[i - 1] + t * (ys[i] - ys[i - 1])
            }
            DensityShape::Function { pdf, .. } => pdf(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousPart {
    pub shape: DensityShape,
    pub mass: f64,
}

impl ContinuousPart {
    /// Density with respect to Lebesgue measure, already scaled by `mass`.
    pub fn density(&self, theta: f64) -> f64 {
        self.mass * self.shape.pdf(theta)
    }
}

/// A prior `F`: atoms (the jump part) plus an optional density part.
#[derive(Debug, Clone)]
pub struct MixedDistribution {
    atoms: Vec<Atom>,
    continuous: Option<ContinuousPart>,
}

/// The two parts of a [`MixedDistribution`] together with their masses.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub atoms: Vec<Atom>,
    pub continuous: Option<ContinuousPart>,
    pub atom_mass: f64,
    pub continuous_mass: f64,
}

impl MixedDistribution {
    pub fn new(atoms: Vec<(f64, f64)>, continuous: Option<ContinuousPart>) -> Result<Self> {
        let mut list: Vec<Atom> = Vec::with_capacity(atoms.len());
        for (location, mass) in atoms {
            if !location.is_finite() {
                return Err(Error::InvalidDistribution(format!("atom location {location} is not finite")));
            }
            if !(mass >= MIN_ATOM_MASS) || mass > 1.0 + MASS_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "atom at {location} has mass {mass}; masses must lie in [{MIN_ATOM_MASS:e}, 1]"
                )));
            }
            list.push(Atom { location, mass });
        }
        list.sort_by(|a, b| a.location.total_cmp(&b.location));
        if let Some(w) = list.windows(2).find(|w| w[0].location == w[1].location) {
            return Err(Error::InvalidDistribution(format!(
                "duplicate atom location {}",
                w[0].location
            )));
        }
        let continuous = match continuous {
            Some(c) if c.mass < 0.0 || !c.mass.is_finite() => {
                return Err(Error::InvalidDistribution(format!(
                    "continuous mass {} is negative",
                    c.mass
                )))
            }
            Some(c) if c.mass == 0.0 => None,
            other => other,
        };
        if let Some(c) = &continuous {
            let (lo, hi) = c.shape.support();
            let n = 257;
            for i in 0..n {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let v = c.shape.pdf(x);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidDistribution(format!("density is {v} at {x}")));
                }
            }
        }
        let total: f64 = list.iter().map(|a| a.mass).sum::<f64>()
            + continuous.as_ref().map_or(0.0, |c| c.mass);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "total probability mass is {total}, expected 1"
            )));
        }
        Ok(MixedDistribution { atoms: list, continuous })
    }

    /// Purely atomic prior from `(location, mass)` pairs.
    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(atoms.to_vec(), None)
    }

    /// Purely continuous prior with the given shape.
    pub fn continuous(shape: DensityShape) -> Result<Self> {
        Self::new(Vec::new(), Some(ContinuousPart { shape, mass: 1.0 }))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn continuous_part(&self) -> Option<&ContinuousPart> {
        self.continuous.as_ref()
    }

    pub fn is_atomic(&self) -> bool {
        self.continuous.is_none()
    }

    pub fn decompose(&self) -> Decomposition {
        Decomposition {
            atoms: self.atoms.clone(),
            continuous: self.continuous.clone(),
            atom_mass: self.atoms.iter().map(|a| a.mass).sum(),
            continuous_mass: self.continuous.as_ref().map_or(0.0, |c| c.mass),
        }
    }

    /// Radon–Nikodym derivative with respect to Lebesgue measure plus unit
    /// Diracs at the atoms: the jump size at an atom, the density elsewhere.
    pub fn reference_density(&self, theta: f64) -> f64 {
        if let Some(a) = self.atoms.iter().find(|a| a.location == theta) {
            return a.mass;
        }
        self.continuous.as_ref().map_or(0.0, |c| c.density(theta))
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.atoms {
            lo = lo.min(a.location);
            hi = hi.max(a.location);
        }
        if let Some(c) = &self.continuous {
            let (l, h) = c.shape.support();
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    /// `∫ g dF`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, q: &Quadrature) -> Result<f64> {
        self.integrate_with_breaks(g, q, &[])
    }

    /// `∫ g dF`, with extra points where `g` is known to kink or jump.
    pub fn integrate_with_breaks<G: Fn(f64) -> f64>(
        &self,
        g: G,
        q: &Quadrature,
        breaks: &[f64],
    ) -> Result<f64> {
        let discrete: f64 = self.atoms.iter().map(|a| a.mass * g(a.location)).sum();
        let continuous = match &self.continuous {
            None => 0.0,
            Some(c) => {
                let (lo, hi) = c.shape.support();
                let mut cuts = c.shape.knots();
                cuts.extend_from_slice(breaks);
                q.integrate(|t| g(t) * c.density(t), lo, hi, &cuts)?
            }
        };
        Ok(discrete + continuous)
    }

    /// Replaces the continuous part by atoms at Gauss–Legendre nodes
    /// (`nodes` per smooth panel). Atomic priors are returned unchanged.
    pub fn discretize(&self, nodes: usize) -> Result<MixedDistribution> {
        let Some(c) = &self.continuous else {
            return Ok(self.clone());
        };
        let (lo, hi) = c.shape.support();
        let mut cuts = vec![lo];
        cuts.extend(c.shape.knots().into_iter().filter(|&k| k > lo && k < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let (x, w) = gauss_legendre_nodes(nodes.max(1));
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for seg in cuts.windows(2) {
            let half = 0.5 * (seg[1] - seg[0]);
            let mid = 0.5 * (seg[1] + seg[0]);
            for (xi, wi) in x.iter().zip(&w) {
                let t = mid + half * xi;
                raw.push((t, half * wi * c.shape.pdf(t)));
            }
        }
        let total: f64 = raw.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("continuous part vanishes at all nodes".into()));
        }
        let mut merged: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.location, a.mass)).collect();
        for (t, m) in raw {
            let m = m / total * c.mass;
            if m < MIN_ATOM_MASS {
                continue;
            }
            match merged.iter_mut().find(|p| p.0 == t) {
                Some(p) => p.1 += m,
                None => merged.push((t, m)),
            }
        }
        // dropped negligible nodes: renormalize
        let sum: f64 = merged.iter().map(|p| p.1).sum();
        for p in &mut merged {
            p.1 /= sum;
        }
        MixedDistribution::new(merged, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Quadrature {
        Quadrature::default()
    }

    #[test]
    fn decompose_single_atom() {
        let f = MixedDistribution::atomic(&[(0.0, 1.0)]).unwrap();
        let d = f.decompose();
        assert_eq!(d.atoms, vec![Atom { location: 0.0, mass: 1.0 }]);
        assert!(d.continuous.is_none());
    }

    #[test]
    fn decompose_pure_uniform() {
        let f = MixedDistribution::continuous(DensityShape::uniform(0.0, 1.0).unwrap()).unwrap();
        let d = f.decompose();
        assert!(d.atoms.is_empty());
        assert_eq!(d.continuous.unwrap().shape.support(), (0.0, 1.0));
        assert_eq!(d.continuous_mass, 1.0);
    }

    #[test]
    fn decompose_mixed_reads_back_both_parts() {
        let f = MixedDistribution::new(
            vec![(1.0, 0.2), (0.0, 0.3)],
            Some(ContinuousPart { shape: DensityShape::uniform(0.0, 1.0).unwrap(), mass: 0.5 }),
        )
        .unwrap();
        let d = f.decompose();
        assert_eq!(d.atoms.len(), 2);
        assert_eq!(d.atoms[0], Atom { location: 0.0, mass: 0.3 });
        assert!((d.atom_mass - 0.5).abs() < 1e-15);
        assert!((d.continuous_mass - 0.5).abs() < 1e-15);
        assert_eq!(f.reference_density(1.0), 0.2);
        assert_eq!(f.reference_density(0.5), 0.5);
    }

    #[test]
    fn integrate_examples() {
        let f = MixedDistribution::atomic(&[(2.0, 1.0)]).unwrap();
        assert_eq!(f.integrate(|t| t * t, &q()).unwrap(), 4.0);

        let f = MixedDistribution::continuous(DensityShape::uniform(0.0, 1.0).unwrap()).unwrap();
        assert!((f.integrate(|t| t, &q()).unwrap() - 0.5).abs() < 1e-10);

        let f = MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(f.integrate(|t| t, &q()).unwrap(), 0.5);
    }

    #[test]
    fn rejects_invalid_priors() {
        assert!(MixedDistribution::atomic(&[(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(MixedDistribution::atomic(&[(0.0, 0.5), (0.0, 0.5)]).is_err());
        assert!(MixedDistribution::atomic(&[(0.0, 1.0 - 1e-13), (1.0, 1e-13)]).is_err());
        assert!(DensityShape::grid(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(DensityShape::uniform(1.0, 1.0).is_err());
    }

    #[test]
    fn grid_density_is_normalized_and_interpolates() {
        let s = DensityShape::grid(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert!((s.pdf(1.0) - 1.0).abs() < 1e-15);
        assert!((s.pdf(0.5) - 0.5).abs() < 1e-15);
        let f = MixedDistribution::continuous(s).unwrap();
        assert!((f.integrate(|_| 1.0, &q()).unwrap() - 1.0).abs() < 1e-12);
        assert!((f.integrate(|t| t, &q()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        let s = DensityShape::truncated_normal(0.3, 0.5, -1.0, 1.0).unwrap();
        let f = MixedDistribution::continuous(s).unwrap();
        assert!((f.integrate(|_| 1.0, &q()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn discretize_preserves_low_moments() {
        let f = MixedDistribution::new(
            vec![(5.0, 0.25)],
            Some(ContinuousPart { shape: DensityShape::uniform(0.0, 2.0).unwrap(), mass: 0.75 }),
        )
        .unwrap();
        let d = f.discretize(8).unwrap();
        assert!(d.is_atomic());
        let m1 = d.integrate(|t| t, &q()).unwrap();
        let m2 = d.integrate(|t| t * t, &q()).unwrap();
        assert!((m1 - (0.25 * 5.0 + 0.75)).abs() < 1e-12);
        assert!((m2 - (0.25 * 25.0 + 0.75 * 4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_rule_integrates_mixed_prior() {
        let f = MixedDistribution::new(
            vec![(0.0, 0.5)],
            Some(ContinuousPart { shape: DensityShape::uniform(0.0, 1.0).unwrap(), mass: 0.5 }),
        )
        .unwrap();
        let v = f.integrate(|t| t * t, &Quadrature::gauss_legendre(4)).unwrap();
        assert!((v - 0.5 / 3.0).abs() < 1e-14);
    }
}
