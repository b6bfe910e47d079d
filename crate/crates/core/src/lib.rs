//! Optimal costly information acquisition with noise-based experiments.
//!
//! A decision-maker observes `s = θ + x`, where the noise `x ~ P_θ` is chosen
//! per state and priced by `C_F(P) = ∫∫ c(x) dP_θ(x) dF(θ)`. The crate
//! evaluates posteriors, optimal rules and net benefits, approximates noise
//! laws by uniform mixtures, and solves for optimal uniform experiments with
//! Clarke first-order certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axioms;
pub mod bayes;
pub mod costs;
pub mod error;
pub mod experiments;
pub mod measures;
pub mod optimize;
pub mod scenario;
pub mod uniformize;

pub use bayes::{
    decision_rule, gross_benefit, net_benefit, optimal_decision, posterior, signal_marginal, AtomState,
    DecisionProblem, DecisionRule, PosteriorAtSignal, Utility, Valuation,
};
pub use costs::{check_unimodal, experiment_cost, noise_cost, GridCost, NoiseCostFunction, UnimodalityReport};
pub use error::{Error, Result};
pub use experiments::{
    average_experiment, is_restricted_kernel_consistent, make_uniform_experiment, mix_experiments,
    restricted_garble, ContinuousAssignment, CustomSignal, Experiment, NoiseDistribution, RestrictedKernelSpec,
    SignalFunction,
};
pub use measures::{Atom, ContinuousPart, DensityShape, MixedDistribution, Quadrature, QuadratureRule};
pub use optimize::{
    clarke_subdiff, optimize_width, solve, verify_foc, w_eval, ClarkeInterval, FocReport, FocStatus, NoiseLevel,
    SolverOptions, SolverResult,
};
pub use uniformize::{
    approx_converges, best_uniform_component, dominating_uniform_experiment, mixture_weights, ApproxGrid,
    DominanceReport, UniformMixtureApprox,
};
