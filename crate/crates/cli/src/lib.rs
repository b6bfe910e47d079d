//! Command-line front end: scenario ingestion, subcommands and result documents.

pub mod report;
pub mod schema;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use infocost::bayes::net_benefit;
use infocost::costs::{experiment_cost, noise_cost};
use infocost::optimize::{evaluate_uniform, solve, verify_foc, NoiseLevel, SolverResult};
use infocost::scenario::{clarke_example, example1_sequence, trade_demo};
use infocost::uniformize::{dominating_uniform_experiment, DEFAULT_N_MAX};
use infocost::{axioms, Error, NoiseCostFunction};
use serde_json::{json, Value};

use crate::report::{csv_samples, foc_table, rounded, rule_table, widths_table};
use crate::schema::{ScenarioError, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FOC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "infocost", version, about = "Optimal costly-information experiments with uniform noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the result document here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write (theta, delta, W) samples as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Exit with code 4 when a first-order check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads for restarts.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the scenario's solver seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal uniform experiment.
    Solve(ScenarioArg),
    /// Cost, benefit and value of the scenario's experiment.
    Cost(ScenarioArg),
    /// Build a uniform experiment that dominates the scenario's experiment.
    DominanceCheck {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: u32,
    },
    /// First-order conditions at the scenario's uniform experiment, or at the solution.
    FocCheck(ScenarioArg),
    /// Perfectly revealing experiments whose cost vanishes.
    ExampleNonexistence {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 10.0, 100.0, 1000.0])]
        d_list: Vec<f64>,
        #[arg(long, default_value_t = 1e4)]
        limit_width: f64,
    },
    /// Clarke intervals of W(δ) = 1/(|δ| + a).
    ClarkeDemo {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = vec![-1.0, 0.0, 0.5, 1.0])]
        deltas: Vec<f64>,
    },
    /// Buy-or-not decision about a product of uncertain quality.
    TradeDemo {
        #[arg(long, default_value_t = 1.5)]
        price: f64,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = vec![1.0, 2.0])]
        qualities: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.1)]
        cost_scale: f64,
        #[arg(long, default_value_t = 2.0)]
        bound: f64,
    },
    /// Seeded property suite for the cost axioms.
    Axioms {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 100)]
        garbles: usize,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario file (TOML).
    pub scenario: PathBuf,
}

/// Result of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub document: Option<String>,
    pub csv: Option<String>,
    pub diagnostic: Option<String>,
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Model(m) => m.into(),
            other => Failure::Validation(other.to_string()),
        }
    }
}

struct Produced {
    doc: Value,
    csv: Option<String>,
    foc_ok: bool,
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    Ok(ScenarioFile::load(path)?)
}

fn scenario_echo(s: &ScenarioFile) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

fn solution_doc(command: &str, echo: Value, seed: u64, r: &SolverResult) -> Value {
    json!({
        "command": command,
        "scenario": echo,
        "seed": seed,
        "widths": widths_table(&r.states, &r.widths),
        "rule": rule_table(&r.rule),
        "valuation": { "benefit": r.benefit, "cost": r.cost, "value": r.value },
        "foc": foc_table(&r.foc),
        "solver": { "iterations": r.iterations, "converged": r.converged, "start": r.start },
    })
}

fn run_solve(s: &ScenarioFile, cli: &Cli, command: &str) -> Result<Produced, Failure> {
    let prior = s.prior()?;
    let problem = s.problem()?;
    let cost = s.cost()?;
    s.signal()?;
    let opts = s.solver_options(cli.seed);
    let r = solve(&prior, &problem, &cost, s.bound, &opts)?;
    let csv = cli.csv.as_ref().map(|_| csv_samples(&r, &problem, &cost));
    let foc_ok = r.foc.all_pass();
    Ok(Produced { doc: solution_doc(command, scenario_echo(s), opts.seed, &r), csv, foc_ok })
}

fn run_cost(s: &ScenarioFile) -> Result<Produced, Failure> {
    let prior = s.prior()?;
    let exp = s.experiment()?;
    let cost = s.cost()?;
    let q = s.quadrature()?;
    let v = net_benefit(&prior, &exp, &s.problem()?, &cost, &q)?;
    let per_state: Vec<Value> = prior
        .atoms()
        .iter()
        .map(|a| {
            let law = exp.noise_for(a.location)?;
            Ok(json!({ "theta": a.location, "mass": a.mass, "noise_cost": noise_cost(&cost, &law) }))
        })
        .collect::<Result<_, Error>>()?;
    Ok(Produced {
        doc: json!({
            "command": "cost",
            "scenario": scenario_echo(s),
            "states": per_state,
            "valuation": { "benefit": v.benefit, "cost": experiment_cost(&cost, &exp, &prior, &q)?, "value": v.value },
        }),
        csv: None,
        foc_ok: true,
    })
}

fn run_dominance(s: &ScenarioFile, n_max: u32) -> Result<Produced, Failure> {
    let prior = s.prior()?;
    let exp = s.experiment()?;
    let r = dominating_uniform_experiment(&exp, &prior, &s.problem()?, &s.cost()?, n_max, s.bound)?;
    let states: Vec<Value> = r
        .states
        .iter()
        .map(|c| {
            json!({
                "theta": c.theta,
                "mass": c.mass,
                "level": c.n,
                "component": c.choice.j,
                "width": if c.choice.j == 0 { json!("perfect") } else { json!(c.choice.width) },
                "value": c.choice.value,
            })
        })
        .collect();
    Ok(Produced {
        doc: json!({
            "command": "dominance-check",
            "scenario": scenario_echo(s),
            "n_max": n_max,
            "discretized_prior": r.discretized,
            "states": states,
            "value_original": r.value_original,
            "value_uniform_fixed_rule": r.value_fixed_rule,
            "value_uniform": r.value_uniform,
            "margin": r.margin(),
            "fixed_rule_margin": r.fixed_rule_margin(),
            "dominates": r.margin() >= -1e-6,
        }),
        csv: None,
        foc_ok: true,
    })
}

fn run_foc(s: &ScenarioFile, cli: &Cli) -> Result<Produced, Failure> {
    if s.experiment.is_none() {
        return run_solve(s, cli, "foc-check");
    }
    let prior = s.prior()?;
    if !prior.is_atomic() {
        return Err(Failure::Validation("foc-check of a given experiment needs an atomic prior".into()));
    }
    let exp = s.experiment()?;
    let problem = s.problem()?;
    let cost = s.cost()?;
    let states: Vec<(f64, f64)> = prior.atoms().iter().map(|a| (a.location, a.mass)).collect();
    let widths = states
        .iter()
        .map(|&(t, _)| {
            exp.noise_for(t)?
                .as_uniform_width()
                .map(NoiseLevel::Width)
                .ok_or_else(|| Error::InvalidArgument(format!("noise at state {t} is not uniform")))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let (rule, benefit, c) = evaluate_uniform(&states, &widths, &problem, &cost)?;
    let mut r = SolverResult {
        states,
        widths,
        rule,
        benefit,
        cost: c,
        value: benefit - c,
        foc: infocost::FocReport { entries: Vec::new() },
        iterations: 0,
        converged: true,
        history: vec![benefit - c],
        start: 0,
        bound: s.bound,
    };
    r.foc = verify_foc(&r, &problem, &cost, s.bound, s.solver_options(cli.seed).foc_tol)?;
    let csv = cli.csv.as_ref().map(|_| csv_samples(&r, &problem, &cost));
    let foc_ok = r.foc.all_pass();
    let seed = s.solver_options(cli.seed).seed;
    Ok(Produced { doc: solution_doc("foc-check", scenario_echo(s), seed, &r), csv, foc_ok })
}

fn run_example(p: f64, d_list: &[f64], limit_width: f64) -> Result<Produced, Failure> {
    let cost = NoiseCostFunction::exp_decay(1.0, 1.0)?;
    let r = example1_sequence(p, d_list, limit_width, &cost)?;
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| json!({ "width_high": row.width, "posterior_high": row.posterior_high, "cost": row.cost }))
        .collect();
    Ok(Produced {
        doc: json!({
            "command": "example-nonexistence",
            "note": "limit demo: the low state's large width stands in for infinite noise; not an admissible experiment",
            "p": p,
            "cost_function": "exp-decay(1, 1)",
            "limit_width": limit_width,
            "rows": rows,
            "cost_strictly_decreasing": r.cost_strictly_decreasing(),
            "min_posterior_high": r.min_posterior(),
        }),
        csv: None,
        foc_ok: true,
    })
}

fn run_clarke(a: f64, deltas: &[f64]) -> Result<Produced, Failure> {
    let r = clarke_example(a, deltas)?;
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| {
            json!({
                "delta": row.delta,
                "numeric": [row.numeric.lo, row.numeric.hi],
                "exact": [row.exact.lo, row.exact.hi],
                "contains_zero": row.numeric.contains(0.0, 1e-9),
            })
        })
        .collect();
    Ok(Produced { doc: json!({ "command": "clarke-demo", "a": a, "rows": rows }), csv: None, foc_ok: true })
}

fn run_trade(cli: &Cli, price: f64, qualities: &[f64], p: f64, cost_scale: f64, bound: f64) -> Result<Produced, Failure> {
    let [q0, q1] = <[f64; 2]>::try_from(qualities)
        .map_err(|_| Failure::Validation("--qualities takes exactly two values".into()))?;
    let cost = NoiseCostFunction::exp_decay(cost_scale, 1.0)?;
    let opts = infocost::SolverOptions { seed: cli.seed.unwrap_or(0), ..Default::default() };
    let r = trade_demo(price, [q0, q1], p, &cost, bound, &opts)?;
    let problem = infocost::scenario::trade_problem(price)?;
    let csv = cli.csv.as_ref().map(|_| csv_samples(&r, &problem, &cost));
    let foc_ok = r.foc.all_pass();
    let mut doc = solution_doc("trade-demo", json!({
        "price": price, "qualities": [q0, q1], "p": p, "cost": format!("exp-decay({cost_scale}, 1)"), "bound": bound,
    }), opts.seed, &r);
    doc["note"] = json!("generic two-action trade: buy pays quality minus price, not buying pays zero");
    Ok(Produced { doc, csv, foc_ok })
}

fn run_axioms(cli: &Cli, cases: usize, garbles: usize) -> Result<Produced, Failure> {
    let seed = cli.seed.unwrap_or(0);
    let r = axioms::run_axioms(seed, cases, garbles)?;
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| json!({ "axiom": c.name, "cases": c.cases, "failures": c.failures, "worst": c.worst, "passed": c.passed() }))
        .collect();
    if !r.passed() {
        return Err(Failure::Numerical(format!("axiom suite failed: {checks:?}")));
    }
    Ok(Produced { doc: json!({ "command": "axioms", "seed": seed, "checks": checks }), csv: None, foc_ok: true })
}

fn dispatch(cli: &Cli) -> Result<Produced, Failure> {
    match &cli.command {
        Command::Solve(a) => run_solve(&load(&a.scenario)?, cli, "solve"),
        Command::Cost(a) => run_cost(&load(&a.scenario)?),
        Command::DominanceCheck { scenario, n_max } => run_dominance(&load(&scenario.scenario)?, *n_max),
        Command::FocCheck(a) => run_foc(&load(&a.scenario)?, cli),
        Command::ExampleNonexistence { p, d_list, limit_width } => run_example(*p, d_list, *limit_width),
        Command::ClarkeDemo { a, deltas } => run_clarke(*a, deltas),
        Command::TradeDemo { price, qualities, p, cost_scale, bound } => {
            run_trade(cli, *price, qualities, *p, *cost_scale, *bound)
        }
        Command::Axioms { cases, garbles } => run_axioms(cli, *cases, *garbles),
    }
}

/// Runs one invocation without touching the process's streams.
pub fn run(cli: &Cli) -> Outcome {
    match dispatch(cli) {
        Ok(p) => {
            let mut doc = p.doc;
            rounded(&mut doc);
            let mut text = serde_json::to_string_pretty(&doc).expect("serializable document");
            text.push('\n');
            let code = if cli.strict && !p.foc_ok { EXIT_FOC } else { EXIT_OK };
            let diagnostic = (code == EXIT_FOC).then(|| "first-order check failed".to_string());
            Outcome { code, document: Some(text), csv: p.csv, diagnostic }
        }
        Err(Failure::Validation(m)) => {
            Outcome { code: EXIT_VALIDATION, document: None, csv: None, diagnostic: Some(format!("invalid input: {m}")) }
        }
        Err(Failure::Numerical(m)) => {
            Outcome { code: EXIT_NUMERICAL, document: None, csv: None, diagnostic: Some(format!("numerical failure: {m}")) }
        }
    }
}
