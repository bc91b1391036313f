use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dpalign::ast::{rat, Expr, Program};
use dpalign::budget::{
    counter_bounds, extract_objective, symbolic_cost_bound, verify_alignment, verify_budget,
    verify_cost_bound, BudgetError, BudgetReport, ObligationResult, Verdict,
};
use dpalign::infer::{infer_program, InferError, Inference};
use dpalign::interp::{
    estimate_privacy, execute_source, faithful_check, paired_memory, replay_check, InterpError,
    Memory, PrivacyVerdict, RngDraws, Value,
};
use dpalign::normalize::normalize;
use dpalign::parser::{parse_expr, parse_program, print_target, ParseError};
use dpalign::solver::{check_pinned, minimize_cost, MinimizeOutcome, SolverError, SolverVerdict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("invalid memory file `{path}`: {message}")]
    Memory { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// What a command prints and how it exits.
pub struct Outcome {
    pub exit: i32,
    pub text: String,
    pub json: Json,
}

pub fn load_program(path: &Path) -> Result<Program, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_program(&text).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn parse_budget(text: &str) -> Result<Expr, CliError> {
    parse_expr(text).map_err(|e| CliError::Usage(format!("invalid budget `{text}`: {e}")))
}

fn header(command: &str, file: &Path, verdict: &str, exit: i32) -> serde_json::Map<String, Json> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("file".into(), json!(file.display().to_string()));
    m.insert("verdict".into(), json!(verdict));
    m.insert("exit_code".into(), json!(exit));
    m
}

fn to_json<T: Serialize>(v: &T) -> Json {
    serde_json::to_value(v).unwrap_or(Json::Null)
}

fn describe(v: &SolverVerdict) -> String {
    match v {
        SolverVerdict::Invalid(m) | SolverVerdict::Sat(m) if !m.is_empty() => {
            let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            format!("{} ({})", v.name(), parts.join(", "))
        }
        SolverVerdict::Unknown(why) => format!("unknown ({why})"),
        other => other.name().to_string(),
    }
}

fn write_results(out: &mut String, title: &str, rs: &[ObligationResult]) {
    if rs.is_empty() {
        return;
    }
    let _ = writeln!(out, "{title}:");
    for r in rs {
        let _ = writeln!(
            out,
            "  [{}] {} (line {}, {} ms)",
            describe(&r.verdict),
            r.name,
            r.line,
            r.solver_ms
        );
    }
}

fn budget_text(r: &BudgetReport) -> String {
    let mut out = String::new();
    write_results(&mut out, "constraints", &r.constraints);
    write_results(&mut out, "obligations", &r.obligations);
    for d in &r.diagnostics {
        let _ = writeln!(out, "diagnostic: {d}");
    }
    if r.budget == "none" {
        let _ = writeln!(out, "alignment: {}", r.verdict);
    } else {
        let _ = writeln!(out, "v_eps <= {}: {}", r.budget, r.verdict);
    }
    out
}

fn run_verification(
    p: &Program,
    inf: &Inference,
    budget: Option<&str>,
    cfg: &RunConfig,
) -> Result<BudgetReport, CliError> {
    let budget = match budget {
        Some(b) => Some(parse_budget(b)?),
        None => p.budget.clone(),
    };
    Ok(match budget {
        Some(b) => verify_budget(p, &inf.check, &b, &cfg.solver)?,
        None => verify_alignment(p, &inf.check, &cfg.solver)?,
    })
}

/// Full pipeline: inference for missing annotations, transformation, and
/// verification of every constraint and budget obligation.
pub fn check(file: &Path, budget: Option<&str>, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = load_program(file)?;
    let inf = infer_program(&p)?;
    let report = run_verification(&p, &inf, budget, cfg)?;
    let exit = report.verdict.exit_code();
    let target = print_target(&inf.check.target);
    let text = format!("{target}\n{}", budget_text(&report));
    let mut j = header("check", file, &report.verdict.to_string(), exit);
    j.insert("target".into(), json!(target));
    j.insert("report".into(), to_json(&report));
    Ok(Outcome {
        exit,
        text,
        json: Json::Object(j),
    })
}

/// Budget verification only.
pub fn verify(file: &Path, budget: Option<&str>, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = load_program(file)?;
    let inf = infer_program(&p)?;
    let report = run_verification(&p, &inf, budget, cfg)?;
    let exit = report.verdict.exit_code();
    let mut j = header("verify", file, &report.verdict.to_string(), exit);
    j.insert("report".into(), to_json(&report));
    Ok(Outcome {
        exit,
        text: budget_text(&report),
        json: Json::Object(j),
    })
}

/// Print the target program with its unresolved constraints and checker
/// diagnostics.
pub fn transform(file: &Path) -> Result<Outcome, CliError> {
    let p = load_program(file)?;
    let inf = infer_program(&p)?;
    let res = &inf.check;
    let target = print_target(&res.target);
    let mut text = target.clone();
    let constraints: Vec<Json> = res
        .constraints
        .iter()
        .map(|c| json!({"label": c.label, "line": c.span.line, "formula": c.formula().to_string()}))
        .collect();
    if !res.constraints.is_empty() {
        text.push_str("\nconstraints:\n");
        for c in &res.constraints {
            let _ = writeln!(
                text,
                "  {} (line {}): {}",
                c.label,
                c.span.line,
                c.formula()
            );
        }
    }
    for d in &res.diagnostics {
        let _ = writeln!(text, "diagnostic: {d}");
    }
    let ok = res.diagnostics.is_empty();
    let exit = if ok { EXIT_PASS } else { EXIT_FAIL };
    let mut j = header("transform", file, if ok { "PASS" } else { "FAIL" }, exit);
    j.insert("target".into(), json!(target));
    j.insert("constraints".into(), Json::Array(constraints));
    j.insert(
        "diagnostics".into(),
        json!(res
            .diagnostics
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()),
    );
    Ok(Outcome {
        exit,
        text,
        json: Json::Object(j),
    })
}

/// Print the inferred environment and residual constraints; optionally
/// pick the cheapest values for the remaining distance variables.
pub fn infer(file: &Path, minimize: bool, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = load_program(file)?;
    let inf = infer_program(&p)?;
    let mut text = String::from("environment:\n");
    for (k, t) in &inf.env.bindings {
        let _ = writeln!(text, "  {k}: {t}");
    }
    for (k, v) in &inf.eliminated {
        let _ = writeln!(text, "solved: ?{k} = {v}");
    }
    let residual: Vec<_> = inf.residual().into_iter().cloned().collect();
    if !residual.is_empty() {
        text.push_str("residual constraints:\n");
        for c in &residual {
            let _ = writeln!(
                text,
                "  {} (line {}): {}",
                c.label,
                c.span.line,
                c.formula()
            );
        }
    }
    for d in &inf.check.diagnostics {
        let _ = writeln!(text, "diagnostic: {d}");
    }
    let env: BTreeMap<String, String> = inf
        .env
        .bindings
        .iter()
        .map(|(k, t)| (k.clone(), t.to_string()))
        .collect();
    let mut j = serde_json::Map::new();
    j.insert("environment".into(), to_json(&env));
    j.insert(
        "residual".into(),
        json!(residual
            .iter()
            .map(|c| json!({"label": c.label, "line": c.span.line, "formula": c.formula().to_string()}))
            .collect::<Vec<_>>()),
    );
    j.insert(
        "diagnostics".into(),
        json!(inf
            .check
            .diagnostics
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()),
    );

    let mut exit = if inf.check.diagnostics.is_empty() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    let mut verdict = if exit == EXIT_PASS {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    if minimize {
        let (v, section) = minimize_section(&p, &inf, &residual, cfg, &mut text)?;
        verdict = v;
        exit = v.exit_code();
        j.insert("minimize".into(), section);
    }
    let mut h = header("infer", file, &verdict.to_string(), exit);
    h.extend(j);
    Ok(Outcome {
        exit,
        text,
        json: Json::Object(h),
    })
}

fn minimize_section(
    p: &Program,
    inf: &Inference,
    residual: &[dpalign::checker::Constraint],
    cfg: &RunConfig,
    text: &mut String,
) -> Result<(Verdict, Json), CliError> {
    let budget = p
        .budget
        .clone()
        .ok_or_else(|| CliError::Usage("--minimize needs a `budget` clause".into()))?;
    let tp = &inf.check.target;
    let bound = symbolic_cost_bound(tp)?;
    let bound_checks = verify_cost_bound(p, tp, &bound, &cfg.solver)?;
    let objective = extract_objective(tp, &bound, &budget);
    let _ = writeln!(text, "cost bound: {bound}");
    for r in &bound_checks {
        let _ = writeln!(text, "  [{}] {}", describe(&r.verdict), r.name);
    }
    let _ = writeln!(text, "objective: {objective}");
    let outcome = minimize_cost(residual, &objective, &rat(cfg.big_m), &cfg.solver)?;
    let bound_ok = bound_checks.iter().all(|r| r.verdict.is_valid());
    let mut section = json!({
        "cost_bound": bound.to_string(),
        "cost_bound_checks": to_json(&bound_checks),
        "objective": objective.to_string(),
        "outcome": to_json(&outcome),
    });
    let verdict = match &outcome {
        MinimizeOutcome::Optimal {
            assignment,
            objective,
        } => {
            let shown: Vec<String> = assignment
                .iter()
                .map(|(k, v)| format!("?{k} = {v}"))
                .collect();
            let _ = writeln!(
                text,
                "optimal: {} (objective {objective})",
                shown.join(", ")
            );
            let pinned = check_pinned(residual, assignment, &cfg.solver)?;
            let _ = writeln!(
                text,
                "residual constraints at optimum: {}",
                describe(&pinned)
            );
            let values: BTreeMap<String, Expr> = assignment
                .iter()
                .map(|(k, v)| (format!("?{k}"), Expr::Num(v.clone())))
                .collect();
            let resulting = normalize(&bound.subst_map(&counter_bounds(tp)).subst_map(&values));
            let _ = writeln!(text, "resulting budget: {resulting}");
            section["pinned"] = json!(pinned.name());
            section["resulting_budget"] = json!(resulting.to_string());
            if bound_ok && matches!(pinned, SolverVerdict::Valid | SolverVerdict::Sat(_)) {
                Verdict::Pass
            } else if matches!(pinned, SolverVerdict::Unsat | SolverVerdict::Invalid(_)) {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            }
        }
        MinimizeOutcome::Unsat => {
            let _ = writeln!(text, "no assignment satisfies the residual constraints");
            Verdict::Fail
        }
        MinimizeOutcome::Unknown { reason } => {
            let _ = writeln!(text, "optimization inconclusive: {reason}");
            Verdict::Inconclusive
        }
        MinimizeOutcome::Timeout => {
            let _ = writeln!(text, "optimization timed out");
            Verdict::Inconclusive
        }
    };
    Ok((verdict, section))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TestMode {
    Replay,
    Mc,
    Faithful,
}

pub struct TestArgs {
    pub mode: TestMode,
    pub m1: PathBuf,
    pub m2: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub trace: Option<PathBuf>,
}

/// Read a memory file: a JSON object binding parameter names (and hat
/// names such as `^q`) to numbers, booleans or arrays.
pub fn load_memory(path: &Path) -> Result<Memory, CliError> {
    let bad = |message: String| CliError::Memory {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let json: Json = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let Json::Object(obj) = json else {
        return Err(bad("expected a JSON object".into()));
    };
    obj.iter()
        .map(|(k, v)| {
            Value::from_json(v)
                .map(|v| (k.clone(), v))
                .ok_or_else(|| bad(format!("unsupported value for `{k}`")))
        })
        .collect()
}

/// Run one of the interpreter batteries.
pub fn test(file: &Path, args: &TestArgs, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = load_program(file)?;
    let inf = infer_program(&p)?;
    let m1 = load_memory(&args.m1)?;
    let m2 = args.m2.as_deref().map(load_memory).transpose()?;
    let need_m2 = || {
        m2.clone()
            .ok_or_else(|| CliError::Usage("this mode needs a second memory (--m2)".into()))
    };
    let start = match &m2 {
        Some(m2) => paired_memory(&p, &inf.env, &m1, m2)?,
        // Without a second input, hats not given in `m1` are zero.
        None => {
            let mut m = paired_memory(&p, &inf.env, &m1, &m1)?;
            m.extend(
                m1.iter()
                    .filter(|(k, _)| k.starts_with('^'))
                    .map(|(k, v)| (k.clone(), v.clone())),
            );
            m
        }
    };
    if !dpalign::interp::check_precondition(&p, &start)? {
        return Err(CliError::Usage(
            "the memories do not satisfy the precondition".into(),
        ));
    }
    if let Some(path) = &args.trace {
        write_trace(&p, &inf, &start, cfg.seed, path)?;
    }

    let mut text = String::new();
    let (ok, body) = match args.mode {
        TestMode::Replay => {
            let r = replay_check(
                &p,
                &inf.env,
                &inf.check.target,
                &m1,
                &need_m2()?,
                cfg.trials,
                cfg.seed,
            )?;
            let _ = writeln!(
                text,
                "replay: {} of {} trials violated the alignment",
                r.failed, r.trials
            );
            let _ = writeln!(text, "largest cost: {}", r.max_cost);
            for v in &r.violations {
                let _ = writeln!(text, "  trial {} {}: {}", v.trial, v.kind, v.detail);
            }
            (r.failed == 0, to_json(&r))
        }
        TestMode::Faithful => {
            let r = faithful_check(&p, &inf.check.target, &start, cfg.trials, cfg.seed)?;
            let _ = writeln!(
                text,
                "faithful: {} of {} tapes disagree",
                r.failed, r.trials
            );
            for v in &r.violations {
                let _ = writeln!(text, "  trial {} {}: {}", v.trial, v.kind, v.detail);
            }
            (r.failed == 0, to_json(&r))
        }
        TestMode::Mc => {
            let eps = match (args.epsilon, &p.budget) {
                (Some(e), _) => e,
                (None, Some(b)) => dpalign::interp::eval(b, &start)?.as_num()?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "mc needs --epsilon or a `budget` clause".into(),
                    ))
                }
            };
            let r = estimate_privacy(&p, &m1, &need_m2()?, eps, cfg.trials, cfg.seed)?;
            let _ = writeln!(
                text,
                "mc: {} at epsilon {} over {} trials (radius {:.5})",
                r.verdict, r.epsilon, r.trials, r.radius
            );
            for o in &r.outcomes {
                let _ = writeln!(
                    text,
                    "  {}: {} vs {} (ratio {:.4})",
                    o.outcome, o.count1, o.count2, o.ratio
                );
            }
            if let Some(w) = &r.witness {
                let _ = writeln!(text, "witness: {w}");
            }
            (r.verdict == PrivacyVerdict::Consistent, to_json(&r))
        }
    };
    let exit = if ok { EXIT_PASS } else { EXIT_FAIL };
    let verdict = match (args.mode, ok) {
        (TestMode::Mc, true) => "CONSISTENT",
        (TestMode::Mc, false) => "FALSIFIED",
        (_, true) => "PASS",
        (_, false) => "FAIL",
    };
    let mut j = header("test", file, verdict, exit);
    j.insert(
        "mode".into(),
        to_json(&format!("{:?}", args.mode).to_lowercase()),
    );
    j.insert("result".into(), body);
    Ok(Outcome {
        exit,
        text,
        json: Json::Object(j),
    })
}

/// One seeded run of the source with alignment annotations, as JSON lines.
/// Runs that fail still have their draws written.
fn write_trace(
    p: &Program,
    inf: &Inference,
    start: &Memory,
    seed: u64,
    path: &Path,
) -> Result<(), CliError> {
    let mut draws = RngDraws(ChaCha8Rng::seed_from_u64(seed));
    let run = execute_source(
        p,
        start,
        &mut draws,
        Some(&inf.env),
        dpalign::interp::STEP_LIMIT,
    )?;
    let mut out = String::new();
    for d in &run.trace {
        out.push_str(&serde_json::to_string(d).unwrap_or_default());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}
