//! Tables of the result document and the CSV export.

use infocost::bayes::{DecisionProblem, DecisionRule};
use infocost::optimize::{w_eval, FocReport, FocStatus, NoiseLevel, SolverResult};
use infocost::NoiseCostFunction;
use serde_json::{json, Number, Value};

/// Significant digits kept for every number in a document.
pub const DIGITS: usize = 12;

/// Rounds `x` to [`DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Rounds every float in the document in place; non-finite values become strings.
pub fn rounded(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = Number::from_f64(round_sig(x)).map_or_else(|| json!(x.to_string()), Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(rounded),
        Value::Object(map) => map.values_mut().for_each(rounded),
        _ => {}
    }
}

fn num(x: f64) -> Value {
    Number::from_f64(x).map_or_else(|| json!(x.to_string()), Value::Number)
}

pub fn widths_table(states: &[(f64, f64)], widths: &[NoiseLevel]) -> Value {
    states
        .iter()
        .zip(widths)
        .map(|(&(theta, mass), w)| {
            let width = match w {
                NoiseLevel::Perfect => json!("perfect"),
                NoiseLevel::Width(d) => num(*d),
            };
            json!({ "theta": theta, "mass": mass, "width": width })
        })
        .collect()
}

pub fn rule_table(rule: &DecisionRule) -> Value {
    let pieces: Vec<Value> = rule
        .pieces()
        .map(|(lo, hi, a)| json!({ "lo": num(lo), "hi": num(hi), "action": a }))
        .collect();
    let points: Vec<Value> = rule
        .breakpoints()
        .iter()
        .zip(rule.point_actions())
        .map(|(b, a)| json!({ "at": b, "action": a }))
        .collect();
    json!({ "breakpoints": rule.breakpoints(), "pieces": pieces, "points": points })
}

pub fn foc_table(report: &FocReport) -> Value {
    report
        .entries
        .iter()
        .map(|e| {
            let (status, lo, hi) = match e.status {
                FocStatus::Interior(ci) => ("interior", num(ci.lo), num(ci.hi)),
                FocStatus::Boundary { left_derivative } => ("boundary", num(left_derivative), Value::Null),
                FocStatus::Perfect { value, best_width_value } => ("perfect", num(value), num(best_width_value)),
            };
            json!({ "theta": e.theta, "status": status, "lo": lo, "hi": hi, "residual": e.residual, "pass": e.pass })
        })
        .collect()
}

/// `theta,delta,w` rows: `W_θ` sampled on `(0, b]` under the solution's rule.
pub fn csv_samples(r: &SolverResult, problem: &DecisionProblem, cost: &NoiseCostFunction) -> String {
    let mut out = String::from("theta,delta,w\n");
    let n = 200;
    for &(theta, _) in &r.states {
        for i in 1..=n {
            let d = r.bound * i as f64 / n as f64;
            let w = w_eval(d, theta, &r.rule, problem, cost);
            out.push_str(&format!(
                "{:.*e},{:.*e},{:.*e}\n",
                DIGITS - 1,
                theta,
                DIGITS - 1,
                d,
                DIGITS - 1,
                w
            ));
        }
    }
    out
}
