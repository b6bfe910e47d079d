//! Scenario file format (TOML) and its conversion into library types.

use std::path::Path;

use infocost::bayes::{DecisionProblem, Utility};
use infocost::experiments::{ContinuousAssignment, Experiment, NoiseDistribution, SignalFunction};
use infocost::measures::{ContinuousPart, DensityShape, MixedDistribution, Quadrature, QuadratureRule};
use infocost::optimize::SolverOptions;
use infocost::{Error, NoiseCostFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub bound: f64,
    pub actions: Vec<f64>,
    pub prior: PriorSpec,
    pub utility: UtilitySpec,
    pub cost: CostSpec,
    #[serde(default)]
    pub signal: SignalSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
}

/// The density part carries whatever mass the atoms leave.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    /// `uniform`, `truncated-normal` (params: mean, sd) or `grid` (xs, values).
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    /// `quadratic-loss` (params: scale), `trade` (params: price) or `table`.
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// For `table`: state grid; the action grid is `actions`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// `exp-decay` (scale, rate), `tent` (height, halfwidth), `cauchy` (scale) or `grid`.
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: String,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec { kind: "additive".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}
fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}
fn default_restarts() -> usize {
    SolverOptions::default().restarts
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { tol: default_tol(), max_iter: default_max_iter(), restarts: default_restarts(), seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_subdivisions")]
    pub max_subdivisions: usize,
}

fn default_abs_tol() -> f64 {
    Quadrature::default().abs_tol
}
fn default_max_subdivisions() -> usize {
    Quadrature::default().max_subdivisions
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { abs_tol: default_abs_tol(), max_subdivisions: default_max_subdivisions() }
    }
}

/// Per-state noise laws, plus an optional law for non-atom states.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub states: Vec<StateNoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateNoiseSpec {
    pub state: f64,
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<f64>,
}

/// `uniform` (width), `tent` (radius), `gridded` (xs, values) or `mixture` (weights, widths).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<f64>,
}

/// Why a scenario could not be used.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] Error),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn params<const N: usize>(what: &str, p: &[f64]) -> Result<[f64; N], Error> {
    p.try_into().map_err(|_| bad(format!("{what} takes {N} parameter(s), got {}", p.len())))
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn prior(&self) -> Result<MixedDistribution, Error> {
        let atoms: Vec<(f64, f64)> = self.prior.atoms.iter().map(|a| (a[0], a[1])).collect();
        let continuous = match &self.prior.density {
            None => None,
            Some(d) => {
                let shape = match d.kind.as_str() {
                    "uniform" => {
                        let [lo, hi] = d.support.ok_or_else(|| bad("uniform density needs a support"))?;
                        DensityShape::uniform(lo, hi)?
                    }
                    "truncated-normal" => {
                        let [mean, sd] = params::<2>("truncated-normal", &d.params)?;
                        let [lo, hi] = d.support.ok_or_else(|| bad("truncated-normal density needs a support"))?;
                        DensityShape::truncated_normal(mean, sd, lo, hi)?
                    }
                    "grid" => DensityShape::grid(d.xs.clone(), d.values.clone())?,
                    other => return Err(bad(format!("unknown density kind '{other}'"))),
                };
                let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
                Some(ContinuousPart { shape, mass: 1.0 - atom_mass })
            }
        };
        MixedDistribution::new(atoms, continuous)
    }

    pub fn problem(&self) -> Result<DecisionProblem, Error> {
        let u = &self.utility;
        let utility = match u.kind.as_str() {
            "quadratic-loss" => {
                let scale = if u.params.is_empty() { 1.0 } else { params::<1>("quadratic-loss", &u.params)?[0] };
                Utility::QuadraticLoss { scale }
            }
            "trade" => Utility::Trade { price: params::<1>("trade", &u.params)?[0] },
            "table" => Utility::table(u.states.clone(), self.actions.clone(), u.table.clone())?,
            other => return Err(bad(format!("unknown utility kind '{other}'"))),
        };
        DecisionProblem::new(self.actions.clone(), utility)
    }

    pub fn cost(&self) -> Result<NoiseCostFunction, Error> {
        let c = &self.cost;
        match c.kind.as_str() {
            "exp-decay" => {
                let [k, l] = params::<2>("exp-decay", &c.params)?;
                NoiseCostFunction::exp_decay(k, l)
            }
            "tent" => {
                let [h, w] = params::<2>("tent", &c.params)?;
                NoiseCostFunction::tent(h, w)
            }
            "cauchy" => NoiseCostFunction::cauchy(params::<1>("cauchy", &c.params)?[0]),
            "grid" => NoiseCostFunction::custom(c.xs.clone(), c.values.clone()),
            other => Err(bad(format!("unknown cost kind '{other}'"))),
        }
    }

    pub fn signal(&self) -> Result<SignalFunction, Error> {
        match self.signal.kind.as_str() {
            "additive" => Ok(SignalFunction::Additive),
            other => Err(bad(format!("unknown signal kind '{other}'"))),
        }
    }

    pub fn quadrature(&self) -> Result<Quadrature, Error> {
        Quadrature::new(QuadratureRule::AdaptiveSimpson, self.quadrature.abs_tol, self.quadrature.max_subdivisions)
    }

    pub fn solver_options(&self, seed: Option<u64>) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            restarts: self.solver.restarts,
            seed: seed.unwrap_or(self.solver.seed),
            ..SolverOptions::default()
        }
    }

    pub fn experiment(&self) -> Result<Experiment, Error> {
        let spec = self
            .experiment
            .as_ref()
            .ok_or_else(|| bad("this command needs an [experiment] section"))?;
        let states = spec
            .states
            .iter()
            .map(|s| {
                let noise = NoiseSpec {
                    kind: s.kind.clone(),
                    params: s.params.clone(),
                    xs: s.xs.clone(),
                    values: s.values.clone(),
                    weights: s.weights.clone(),
                    widths: s.widths.clone(),
                };
                Ok((s.state, noise.build()?))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let continuous = spec.default.as_ref().map(|d| d.build()).transpose()?.map(ContinuousAssignment::Constant);
        Experiment::new(states, continuous, self.signal()?, self.bound)
    }
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseDistribution, Error> {
        match self.kind.as_str() {
            "uniform" => NoiseDistribution::uniform(params::<1>("uniform noise", &self.params)?[0]),
            "tent" => NoiseDistribution::tent(params::<1>("tent noise", &self.params)?[0]),
            "gridded" => NoiseDistribution::gridded_normalized(self.xs.clone(), self.values.clone()),
            "mixture" => NoiseDistribution::mixture(self.weights.clone(), self.widths.clone(), 0.0),
            other => Err(bad(format!("unknown noise kind '{other}'"))),
        }
    }
}
