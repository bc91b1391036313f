//! Empirical check of an alignment: run on adjacent inputs with the aligned
//! tape and compare.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    align_tape, difference, eval, execute_source, execute_target, init_memory, related, IResult,
    InterpError, Memory, RngDraws, TapeDraws, Value, STEP_LIMIT, TOLERANCE,
};
use crate::ast::{Program, Ty, TypingEnv, V_EPS};
use crate::target::{hat_name, TargetProgram};

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub trials: usize,
    /// Number of trials with at least one violation.
    pub failed: usize,
    /// The first few violations.
    pub violations: Vec<Violation>,
    pub max_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

const KEPT: usize = 20;

/// Memory of the first run with hats set to the differences of the two
/// inputs on star parameters.
pub fn paired_memory(p: &Program, env: &TypingEnv, m1: &Memory, m2: &Memory) -> IResult<Memory> {
    let mut m = m1.clone();
    for prm in &p.params {
        let star = env.get(&prm.name).is_some_and(Ty::is_star);
        if star {
            let a = m1
                .get(&prm.name)
                .ok_or_else(|| InterpError::Unbound(prm.name.clone()))?;
            let b = m2
                .get(&prm.name)
                .ok_or_else(|| InterpError::Unbound(prm.name.clone()))?;
            m.insert(hat_name(&prm.name), difference(b, a)?);
        }
    }
    init_memory(p, &m)
}

/// Outputs agree, or both runs failed the same way.
fn same_outcome(a: &IResult<Value>, b: &IResult<Value>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.close_to(y),
        (Err(x), Err(y)) => x.to_string() == y.to_string(),
        _ => false,
    }
}

fn show(o: &IResult<Value>) -> String {
    match o {
        Ok(v) => v.to_string(),
        Err(e) => format!("error: {e}"),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sample `trials` executions on `m1`, replay each on `m2` with the aligned
/// tape, and record every disagreement with what the typing promises:
/// equal outputs, memories related by `env`, a target run with the same
/// output whose cost matches the per-site costs, and cost within budget.
/// The inputs must satisfy the precondition; otherwise an error is returned.
pub fn replay_check(
    p: &Program,
    env: &TypingEnv,
    tp: &TargetProgram,
    m1: &Memory,
    m2: &Memory,
    trials: usize,
    seed: u64,
) -> IResult<ReplayReport> {
    let start = paired_memory(p, env, m1, m2)?;
    if !super::check_precondition(p, &start)? {
        return Err(InterpError::Type(
            "inputs do not satisfy the precondition".into(),
        ));
    }
    let related_inputs = related(env, &start, m2, p.params.iter().map(|x| &x.name))?;
    if let Some(d) = related_inputs {
        return Err(InterpError::Type(format!("inputs are not adjacent: {d}")));
    }
    let budget = match &p.budget {
        Some(b) => Some(eval(b, &start)?.as_num()?),
        None => None,
    };
    let randoms = p.random_vars();
    let compared: Vec<String> = p
        .base_types()
        .into_keys()
        .filter(|x| !randoms.contains(x))
        .collect();

    let results: Vec<(Vec<Violation>, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut out = Vec::new();
            let mut bad = |kind: &str, detail: String| {
                out.push(Violation {
                    trial,
                    kind: kind.to_string(),
                    detail,
                })
            };
            let mut draws = RngDraws(rng(seed, trial as u64));
            let r1 = match execute_source(p, &start, &mut draws, Some(env), STEP_LIMIT) {
                Ok(r) => r,
                Err(e) => {
                    bad("run", e.to_string());
                    return (out, 0.0);
                }
            };
            let cost: f64 = r1.trace.iter().filter_map(|d| d.cost).sum();
            let aligned = match align_tape(&r1.trace) {
                Some(t) => t,
                None if r1.outcome.is_err() => r1
                    .trace
                    .iter()
                    .map(|d| d.aligned.unwrap_or(d.draw))
                    .collect(),
                None => {
                    bad("alignment", "a draw has no aligned value".into());
                    return (out, cost);
                }
            };
            match execute_source(p, m2, &mut TapeDraws::new(&aligned), None, STEP_LIMIT) {
                Ok(r2) => {
                    if !same_outcome(&r1.outcome, &r2.outcome) {
                        bad(
                            "output",
                            format!("{} vs {}", show(&r1.outcome), show(&r2.outcome)),
                        );
                    }
                    match related(env, &r1.memory, &r2.memory, &compared) {
                        Ok(None) => {}
                        Ok(Some(d)) => bad("memory", d),
                        Err(e) => bad("memory", e.to_string()),
                    }
                }
                Err(e) => bad("aligned run", e.to_string()),
            }
            let tape: Vec<f64> = r1.trace.iter().map(|d| d.draw).collect();
            let (outcome, memory) = execute_target(tp, &start, &tape, STEP_LIMIT);
            if !same_outcome(&outcome, &r1.outcome) {
                bad(
                    "target output",
                    format!("{} vs {}", show(&outcome), show(&r1.outcome)),
                );
            }
            match memory.get(V_EPS) {
                Some(Value::Num(v)) if Value::Num(*v).close_to(&Value::Num(cost)) => {}
                v => bad(
                    "target cost",
                    format!("v_eps = {v:?} but sites cost {cost}"),
                ),
            }
            if let Some(b) = budget {
                if cost > b + TOLERANCE {
                    bad("budget", format!("cost {cost} exceeds {b}"));
                }
            }
            (out, cost)
        })
        .collect();

    let mut report = ReplayReport {
        trials,
        failed: 0,
        violations: Vec::new(),
        max_cost: 0.0,
        budget,
    };
    for (vs, cost) in results {
        report.max_cost = report.max_cost.max(cost);
        if !vs.is_empty() {
            report.failed += 1;
        }
        for v in vs {
            if report.violations.len() < KEPT {
                report.violations.push(v);
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct FaithfulnessReport {
    pub trials: usize,
    pub failed: usize,
    pub violations: Vec<Violation>,
}

/// Run the source on `m` with fresh draws and the target on the same tape,
/// and compare outputs and the final value of every source variable. `m`
/// must bind hats of star parameters.
pub fn faithful_check(
    p: &Program,
    tp: &TargetProgram,
    m: &Memory,
    trials: usize,
    seed: u64,
) -> IResult<FaithfulnessReport> {
    let start = init_memory(p, m)?;
    let vars: Vec<String> = p.base_types().into_keys().collect();
    let results: Vec<Vec<Violation>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut out = Vec::new();
            let mut bad = |kind: &str, detail: String| {
                out.push(Violation {
                    trial,
                    kind: kind.to_string(),
                    detail,
                })
            };
            let mut draws = RngDraws(rng(seed, trial as u64));
            let s = match execute_source(p, &start, &mut draws, None, STEP_LIMIT) {
                Ok(s) => s,
                Err(e) => {
                    bad("run", e.to_string());
                    return out;
                }
            };
            let tape: Vec<f64> = s.trace.iter().map(|d| d.draw).collect();
            let (outcome, memory) = execute_target(tp, &start, &tape, STEP_LIMIT);
            if !same_outcome(&s.outcome, &outcome) {
                bad(
                    "output",
                    format!("{} vs {}", show(&s.outcome), show(&outcome)),
                );
            }
            for x in &vars {
                match (s.memory.get(x), memory.get(x)) {
                    (Some(a), Some(b)) if a.close_to(b) => {}
                    (a, b) => bad("memory", format!("`{x}`: {a:?} vs {b:?}")),
                }
            }
            out
        })
        .collect();
    let mut report = FaithfulnessReport {
        trials,
        failed: 0,
        violations: Vec::new(),
    };
    for vs in results {
        report.failed += usize::from(!vs.is_empty());
        report.violations.extend(
            vs.into_iter()
                .take(KEPT.saturating_sub(report.violations.len())),
        );
    }
    Ok(report)
}
