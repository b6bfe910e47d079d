//! One-dimensional quadrature used for every integral against a continuous density.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureRule {
    AdaptiveSimpson,
    /// Fixed Gauss–Legendre rule with the given node count, applied per panel.
    GaussLegendre { nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rule: QuadratureRule,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rule: QuadratureRule::AdaptiveSimpson,
            abs_tol: 1e-9,
            max_subdivisions: 100_000,
        }
    }
}

impl Quadrature {
    pub fn new(rule: QuadratureRule, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "quadrature abs_tol must be positive, got {abs_tol}"
            )));
        }
        if max_subdivisions < 1 {
            return Err(Error::InvalidArgument(
                "quadrature max_subdivisions must be at least 1".into(),
            ));
        }
        if let QuadratureRule::GaussLegendre { nodes } = rule {
            if nodes < 1 {
                return Err(Error::InvalidArgument("Gauss–Legendre needs at least one node".into()));
            }
        }
        Ok(Quadrature { rule, abs_tol, max_subdivisions })
    }

    pub fn gauss_legendre(nodes: usize) -> Self {
        Quadrature {
            rule: QuadratureRule::GaussLegendre { nodes },
            ..Quadrature::default()
        }
    }

    /// Integrates `f` over `[lo, hi]`, splitting first at every interior point of `breaks`.
    pub fn integrate<F>(&self, f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        if hi <= lo {
            return Ok(0.0);
        }
        let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
        cuts.push(lo);
        cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        match self.rule {
            QuadratureRule::AdaptiveSimpson => {
                let total = hi - lo;
                let mut budget = self.max_subdivisions;
                let mut acc = 0.0;
                for w in cuts.windows(2) {
                    let tol = self.abs_tol * (w[1] - w[0]) / total;
                    acc += adaptive_simpson(&f, w[0], w[1], tol, &mut budget).ok_or(
                        Error::QuadratureNonConvergence {
                            abs_tol: self.abs_tol,
                            max_subdivisions: self.max_subdivisions,
                        },
                    )?;
                }
                Ok(acc)
            }
            QuadratureRule::GaussLegendre { nodes } => {
                let (x, w) = gauss_legendre_nodes(nodes);
                Ok(cuts
                    .windows(2)
                    .map(|seg| {
                        let half = 0.5 * (seg[1] - seg[0]);
                        let mid = 0.5 * (seg[1] + seg[0]);
                        half * x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>()
                    })
                    .sum())
            }
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

// Explicit stack so deep refinement near a kink cannot blow the call stack.
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    budget: &mut usize,
) -> Option<f64> {
    const MIN_DEPTH: u32 = 3;
    const MAX_DEPTH: u32 = 60;
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let mut stack = vec![Panel {
        a: lo,
        b: hi,
        fa,
        fm,
        fb,
        whole: simpson(lo, hi, fa, fm, fb),
        tol,
        depth: 0,
    }];
    let mut acc = 0.0;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if p.depth >= MIN_DEPTH && (delta.abs() <= 15.0 * p.tol || p.depth >= MAX_DEPTH) {
            if delta.abs() > 15.0 * p.tol && p.depth >= MAX_DEPTH {
                return None;
            }
            acc += left + right + delta / 15.0;
            continue;
        }
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let half_tol = 0.5 * p.tol;
        stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: half_tol, depth: p.depth + 1 });
        stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: half_tol, depth: p.depth + 1 });
    }
    Some(acc)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in 1..=40 {
            let (x, w) = gauss_legendre_nodes(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let q = Quadrature::gauss_legendre(5);
        // degree 9 is integrated exactly by 5 nodes
        let v = q.integrate(|x| x.powi(9) + x.powi(8), 0.0, 1.0, &[]).unwrap();
        assert!((v - (0.1 + 1.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_simpson_handles_kinks_at_breaks() {
        let q = Quadrature::default();
        let v = q.integrate(|x: f64| x.abs(), -1.0, 2.0, &[0.0]).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        let v = q.integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, &[]).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_simpson_reports_nonconvergence() {
        let q = Quadrature::new(QuadratureRule::AdaptiveSimpson, 1e-14, 4).unwrap();
        let err = q.integrate(|x: f64| (50.0 * x).sin().abs().sqrt(), 0.0, 3.0, &[]).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(Quadrature::new(QuadratureRule::AdaptiveSimpson, 0.0, 10).is_err());
        assert!(Quadrature::new(QuadratureRule::AdaptiveSimpson, 1e-9, 0).is_err());
    }
}
