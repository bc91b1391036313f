//! Weakest preconditions over target programs and verification of the
//! privacy budget `v_eps <= budget`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{BaseTy, BinOp, Expr, Program, Prop, Span, V_EPS};
use crate::checker::{effective_precondition, sort_table, CheckResult, Constraint, ConstraintKind};
use crate::normalize::normalize;
use crate::solver::{emit_with, run, sanitize, Mode, SolverConfig, SolverError, SolverVerdict};
use crate::target::{TargetCmd, TargetProgram};

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("line {line}: loop has no invariant")]
    MissingInvariant { line: usize },
    #[error("line {line}: loop invariant has no `v_eps <= E` or `v_eps == E` conjunct")]
    NoCostConjunct { line: usize },
    #[error("program declares no budget")]
    NoBudget,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObligationKind {
    /// Precondition implies the weakest precondition of the whole body.
    Init,
    Preserve,
    Exit,
}

impl ObligationKind {
    pub fn name(self) -> &'static str {
        match self {
            ObligationKind::Init => "init",
            ObligationKind::Preserve => "preserve",
            ObligationKind::Exit => "exit",
        }
    }
}

/// `hypothesis ==> part` for every part; the parts are the conjuncts of the
/// postcondition pushed through the command separately.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub span: Span,
    pub hypothesis: Prop,
    pub parts: Vec<Prop>,
}

impl Obligation {
    pub fn label(&self) -> String {
        match self.kind {
            ObligationKind::Init => "init".into(),
            k => format!("{} (loop at line {})", k.name(), self.span.line),
        }
    }

    pub fn formula(&self) -> Prop {
        Expr::implies(self.hypothesis.clone(), Expr::and_all(self.parts.clone()))
    }
}

/// Conjuncts of `p` whose free names are never written by `body`.
fn stable_part(p: &Prop, written: &BTreeSet<String>) -> Prop {
    Expr::and_all(
        p.conjuncts()
            .into_iter()
            .filter(|c| c.free_vars().is_disjoint(written))
            .cloned(),
    )
}

struct Wp {
    stable: Prop,
    obligations: Vec<Obligation>,
    record: bool,
}

impl Wp {
    fn wp(&mut self, c: &TargetCmd, q: Prop) -> Result<Prop, BudgetError> {
        Ok(match c {
            TargetCmd::Skip | TargetCmd::Return { .. } => q,
            TargetCmd::Assign { var, expr, .. } => q.subst(var, expr),
            TargetCmd::Havoc { var, .. } => Expr::forall(vec![var.clone()], q),
            TargetCmd::Havoc01 { var, .. } => {
                let x = Expr::var(var);
                let range = Expr::and(Expr::le(Expr::zero(), x.clone()), Expr::le(x, Expr::int(1)));
                Expr::forall(vec![var.clone()], Expr::implies(range, q))
            }
            TargetCmd::Seq(cs) => {
                let mut q = q;
                for c in cs.iter().rev() {
                    q = self.wp(c, q)?;
                }
                q
            }
            TargetCmd::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let a = self.wp(then_branch, q.clone())?;
                let b = self.wp(else_branch, q)?;
                Expr::and(
                    Expr::implies(cond.clone(), a),
                    Expr::implies(Expr::not(cond.clone()), b),
                )
            }
            TargetCmd::While {
                cond,
                invariant,
                body,
                span,
            } => {
                let inv = invariant
                    .clone()
                    .ok_or(BudgetError::MissingInvariant { line: span.line })?;
                if self.record {
                    // Nested loops record their own obligations exactly once.
                    let _ = self.wp(body, inv.clone())?;
                    let mut parts = Vec::new();
                    let was = std::mem::replace(&mut self.record, false);
                    for k in inv.conjuncts() {
                        parts.push(self.wp(body, k.clone())?);
                    }
                    self.record = was;
                    let hyp = Expr::and_all([self.stable.clone(), inv.clone()]);
                    self.obligations.push(Obligation {
                        kind: ObligationKind::Preserve,
                        span: *span,
                        hypothesis: Expr::and(hyp.clone(), cond.clone()),
                        parts,
                    });
                    self.obligations.push(Obligation {
                        kind: ObligationKind::Exit,
                        span: *span,
                        hypothesis: Expr::and(hyp, Expr::not(cond.clone())),
                        parts: q.conjuncts().into_iter().cloned().collect(),
                    });
                }
                inv
            }
        })
    }
}

/// Weakest precondition of `c` with respect to `q`. Loop obligations are
/// not collected; see [`obligations`].
pub fn wp(c: &TargetCmd, q: &Prop) -> Result<Prop, BudgetError> {
    let mut w = Wp {
        stable: Expr::tt(),
        obligations: Vec::new(),
        record: false,
    };
    w.wp(c, q.clone())
}

/// All obligations establishing `post` at the end of `body` from `pre`.
/// Loop obligations assume only the conjuncts of `pre` over names the body
/// never writes.
pub fn obligations(
    body: &TargetCmd,
    pre: &Prop,
    post: &Prop,
) -> Result<Vec<Obligation>, BudgetError> {
    let mut w = Wp {
        stable: stable_part(pre, &body.written_vars()),
        obligations: Vec::new(),
        record: true,
    };
    let _ = w.wp(body, post.clone())?;
    let mut parts = Vec::new();
    for k in post.conjuncts() {
        parts.push(wp(body, k)?);
    }
    let mut out = vec![Obligation {
        kind: ObligationKind::Init,
        span: Span::default(),
        hypothesis: pre.clone(),
        parts,
    }];
    out.extend(w.obligations);
    Ok(out)
}

fn is_integral(e: &Expr, ints: &BTreeSet<String>) -> bool {
    match e {
        Expr::Num(r) => r.is_integer(),
        Expr::Var(n) => ints.contains(n),
        Expr::Unary(crate::ast::UnOp::Neg, a) => is_integral(a, ints),
        Expr::Binary(BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Mod, a, b) => {
            is_integral(a, ints) && is_integral(b, ints)
        }
        Expr::Ite(_, a, b) => is_integral(a, ints) && is_integral(b, ints),
        _ => false,
    }
}

/// Parameters whose precondition states `x mod 1 == 0`.
fn integral_params(p: &Prop, params: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for c in p.conjuncts() {
        if let Expr::Binary(BinOp::Eq, a, b) = c {
            for (l, r) in [(a, b), (b, a)] {
                if let (Expr::Binary(BinOp::Mod, x, k), true) = (&**l, r.is_zero_literal()) {
                    if let (Expr::Var(x), Some(k)) = (&**x, k.as_num()) {
                        if k == &crate::ast::rat(1) && params.contains(x) {
                            out.insert(x.clone());
                        }
                    }
                }
            }
        }
    }
    out
}

/// Names that only ever hold integers: parameters declared integral by the
/// precondition and numeric locals (which start at zero) whose every
/// assignment is built from integer literals and other integral names with
/// `+`, `-`, `*` and `mod`.
pub fn integral_vars(tp: &TargetProgram) -> BTreeSet<String> {
    let params: BTreeSet<String> = tp.params.iter().map(|(n, _)| n.clone()).collect();
    let declared = integral_params(&tp.precondition, &params);
    let mut assigns: BTreeMap<String, Vec<Expr>> = BTreeMap::new();
    let mut havocked = BTreeSet::new();
    tp.body.walk(&mut |c| match c {
        TargetCmd::Assign { var, expr, .. } => {
            assigns.entry(var.clone()).or_default().push(expr.clone())
        }
        TargetCmd::Havoc { var, .. } | TargetCmd::Havoc01 { var, .. } => {
            havocked.insert(var.clone());
        }
        _ => {}
    });
    let mut ints: BTreeSet<String> = assigns
        .keys()
        .filter(|v| !v.starts_with('^') && *v != V_EPS && !havocked.contains(*v))
        .filter(|v| !params.contains(*v) || declared.contains(*v))
        .cloned()
        .chain(declared.iter().cloned())
        .collect();
    loop {
        let drop: Vec<String> = ints
            .iter()
            .filter(|v| {
                assigns
                    .get(*v)
                    .is_some_and(|es| es.iter().any(|e| !is_integral(e, &ints)))
            })
            .cloned()
            .collect();
        if drop.is_empty() {
            return ints;
        }
        for v in drop {
            ints.remove(&v);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObligationResult {
    pub name: String,
    pub kind: String,
    pub line: usize,
    pub formula: String,
    #[serde(flatten)]
    pub verdict: SolverVerdict,
    pub solver_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BudgetReport {
    pub program: String,
    pub budget: String,
    pub obligations: Vec<ObligationResult>,
    pub constraints: Vec<ObligationResult>,
    pub diagnostics: Vec<String>,
    pub verdict: Verdict,
}

impl BudgetReport {
    pub fn all(&self) -> impl Iterator<Item = &ObligationResult> {
        self.constraints.iter().chain(&self.obligations)
    }
}

/// Worst verdict among parts: a counterexample beats an unknown.
fn combine(vs: Vec<SolverVerdict>) -> SolverVerdict {
    let mut worst = SolverVerdict::Valid;
    for v in vs {
        match (&worst, &v) {
            (SolverVerdict::Invalid(_), _) => {}
            (_, SolverVerdict::Invalid(_)) => worst = v,
            (SolverVerdict::Valid, _) => worst = v,
            _ => {}
        }
    }
    worst
}

fn verdict_of(rs: &[&SolverVerdict], diagnostics: bool) -> Verdict {
    if diagnostics
        || rs
            .iter()
            .any(|v| matches!(v, SolverVerdict::Invalid(_) | SolverVerdict::Unsat))
    {
        Verdict::Fail
    } else if rs.iter().all(|v| v.is_valid()) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// Sorts for every free name of `formulas`, defaulting to `num`.
fn sorts_for<'a>(
    table: &BTreeMap<String, BaseTy>,
    formulas: impl IntoIterator<Item = &'a Expr>,
) -> BTreeMap<String, BaseTy> {
    let mut out = BTreeMap::new();
    for f in formulas {
        for v in f.free_vars() {
            let s = table.get(&v).cloned().unwrap_or(BaseTy::Num);
            out.insert(v, s);
        }
    }
    out
}

/// Checks that treat every free name, distance variables included, as
/// universally quantified.
fn as_validity_constraint(
    label: &str,
    span: Span,
    table: &BTreeMap<String, BaseTy>,
    hyp: &Prop,
    concl: &Prop,
) -> Constraint {
    let sorts = sorts_for(table, [hyp, concl]);
    Constraint {
        kind: ConstraintKind::Side,
        label: label.to_string(),
        span,
        sorts,
        hypothesis: hyp.clone(),
        conclusion: concl.clone(),
    }
}

fn discharge(
    c: &Constraint,
    ints: &BTreeSet<String>,
    cfg: &SolverConfig,
) -> Result<(SolverVerdict, u64), SolverError> {
    let mut script = emit_with(std::slice::from_ref(c), Mode::Validity, ints);
    script.name = sanitize(&c.label);
    let start = Instant::now();
    let v = run(&script, cfg)?;
    Ok((v, start.elapsed().as_millis() as u64))
}

/// Discharge budget obligations in parallel. Distance variables are free
/// and range over all reals.
pub fn check_obligations(
    p: &Program,
    tp: &TargetProgram,
    obligations: &[Obligation],
    cfg: &SolverConfig,
) -> Result<Vec<ObligationResult>, BudgetError> {
    let table = sort_table(p);
    let ints = integral_vars(tp);
    let jobs: Vec<(usize, Constraint)> = obligations
        .iter()
        .enumerate()
        .flat_map(|(k, o)| {
            let table = &table;
            o.parts.iter().enumerate().map(move |(j, part)| {
                let label = format!("{}_{}", o.label(), j);
                (
                    k,
                    as_validity_constraint(&label, o.span, table, &o.hypothesis, part),
                )
            })
        })
        .collect();
    type Answer = (usize, Result<(SolverVerdict, u64), SolverError>);
    let answers: Vec<Answer> = jobs
        .par_iter()
        .map(|(k, c)| (*k, discharge(c, &ints, cfg)))
        .collect();
    let mut per: Vec<(Vec<SolverVerdict>, u64)> = vec![(Vec::new(), 0); obligations.len()];
    for (k, r) in answers {
        let (v, ms) = r?;
        per[k].0.push(v);
        per[k].1 += ms;
    }
    Ok(obligations
        .iter()
        .zip(per)
        .map(|(o, (vs, ms))| ObligationResult {
            name: o.label(),
            kind: o.kind.name().to_string(),
            line: o.span.line,
            formula: o.formula().to_string(),
            verdict: combine(vs),
            solver_ms: ms,
        })
        .collect())
}

/// Discharge the checker's closed constraints (those without distance
/// variables) in parallel.
pub fn check_constraints(
    tp: &TargetProgram,
    constraints: &[Constraint],
    cfg: &SolverConfig,
) -> Result<Vec<ObligationResult>, BudgetError> {
    let ints = integral_vars(tp);
    let answers: Vec<Result<(SolverVerdict, u64), SolverError>> = constraints
        .par_iter()
        .map(|c| discharge(c, &ints, cfg))
        .collect();
    constraints
        .iter()
        .zip(answers)
        .map(|(c, r)| {
            let (verdict, ms) = r?;
            Ok(ObligationResult {
                name: c.label.clone(),
                kind: serde_json::to_value(c.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                line: c.span.line,
                formula: c.formula().to_string(),
                verdict,
                solver_ms: ms,
            })
        })
        .collect()
}

/// Full verification: every checker constraint and every budget
/// obligation for `v_eps <= budget` must be valid.
pub fn verify_budget(
    p: &Program,
    res: &CheckResult,
    budget: &Expr,
    cfg: &SolverConfig,
) -> Result<BudgetReport, BudgetError> {
    verify(p, res, Some(budget), cfg)
}

/// Verification of the alignment alone, for programs without a budget:
/// every checker constraint must be valid.
pub fn verify_alignment(
    p: &Program,
    res: &CheckResult,
    cfg: &SolverConfig,
) -> Result<BudgetReport, BudgetError> {
    verify(p, res, None, cfg)
}

fn verify(
    p: &Program,
    res: &CheckResult,
    budget: Option<&Expr>,
    cfg: &SolverConfig,
) -> Result<BudgetReport, BudgetError> {
    let tp = &res.target;
    let mut diagnostics: Vec<String> = res.diagnostics.iter().map(|d| d.to_string()).collect();
    if !tp.dvars.is_empty() {
        diagnostics.push(format!(
            "unsolved distance variables: {}",
            tp.dvars
                .iter()
                .map(|d| format!("?{d}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let obligations = match budget {
        Some(b) => {
            let pre = effective_precondition(p);
            let post = Expr::le(Expr::var(V_EPS), b.clone());
            let obls = obligations(&tp.body, &pre, &post)?;
            check_obligations(p, tp, &obls, cfg)?
        }
        None => Vec::new(),
    };
    let constraints = check_constraints(tp, &res.constraints, cfg)?;
    let all: Vec<&SolverVerdict> = constraints
        .iter()
        .chain(&obligations)
        .map(|r| &r.verdict)
        .collect();
    let verdict = verdict_of(&all, !diagnostics.is_empty());
    Ok(BudgetReport {
        program: tp.name.clone(),
        budget: budget.map_or_else(|| "none".to_string(), |b| b.to_string()),
        obligations,
        constraints,
        diagnostics,
        verdict,
    })
}

/// The cost conjunct `v_eps <= E` or `v_eps == E` of an invariant.
fn cost_conjunct(inv: &Prop) -> Option<Expr> {
    inv.conjuncts().into_iter().find_map(|c| match c {
        Expr::Binary(BinOp::Le | BinOp::Eq, a, b) if **a == Expr::var(V_EPS) => Some((**b).clone()),
        _ => None,
    })
}

fn forward(c: &TargetCmd, b: Expr) -> Result<Expr, BudgetError> {
    Ok(match c {
        TargetCmd::Assign { var, expr, .. } if var == V_EPS => match expr {
            Expr::Binary(BinOp::Add, l, r) if **l == Expr::var(V_EPS) => {
                Expr::add(b, (**r).clone())
            }
            Expr::Binary(BinOp::Sub, l, r) if **l == Expr::var(V_EPS) => {
                Expr::sub(b, (**r).clone())
            }
            other => other.clone(),
        },
        TargetCmd::Seq(cs) => {
            let mut b = b;
            for c in cs {
                b = forward(c, b)?;
            }
            b
        }
        TargetCmd::If {
            then_branch,
            else_branch,
            ..
        } => {
            let t = forward(then_branch, b.clone())?;
            let e = forward(else_branch, b.clone())?;
            Expr::sub(Expr::add(t, e), b)
        }
        TargetCmd::While {
            invariant, span, ..
        } => {
            let inv = invariant
                .as_ref()
                .ok_or(BudgetError::MissingInvariant { line: span.line })?;
            cost_conjunct(inv).ok_or(BudgetError::NoCostConjunct { line: span.line })?
        }
        _ => b,
    })
}

/// Upper bound on the final `v_eps` of a target program whose increments
/// are nonnegative, read off straight-line code and loop invariants.
pub fn symbolic_cost_bound(tp: &TargetProgram) -> Result<Expr, BudgetError> {
    Ok(normalize(&forward(&tp.body, Expr::zero())?))
}

/// Check that `bound` really bounds the final cost, for every value of the
/// distance variables.
pub fn verify_cost_bound(
    p: &Program,
    tp: &TargetProgram,
    bound: &Expr,
    cfg: &SolverConfig,
) -> Result<Vec<ObligationResult>, BudgetError> {
    let pre = effective_precondition(p);
    let post = Expr::le(Expr::var(V_EPS), bound.clone());
    let obls = obligations(&tp.body, &pre, &post)?;
    check_obligations(p, tp, &obls, cfg)
}

/// Upper bounds `c <= E` on loop counters read off loop invariants, where
/// `E` mentions only names the body never writes.
pub fn counter_bounds(tp: &TargetProgram) -> BTreeMap<String, Expr> {
    let written = tp.body.written_vars();
    let mut counters = BTreeMap::new();
    tp.body.walk(&mut |c| {
        if let TargetCmd::While {
            invariant: Some(inv),
            ..
        } = c
        {
            for k in inv.conjuncts() {
                if let Expr::Binary(BinOp::Le, a, e) = k {
                    if let Expr::Var(v) = &**a {
                        if written.contains(v)
                            && v != V_EPS
                            && !e.free_vars().iter().any(|n| written.contains(n))
                        {
                            counters.entry(v.clone()).or_insert((**e).clone());
                        }
                    }
                }
            }
        }
    });
    counters
}

/// Normalize a cost bound into a minimization objective: loop counters are
/// replaced by their invariant upper bounds (see [`counter_bounds`]), the
/// result is divided by `budget`, and remaining parameters are set to one.
/// Names still free afterwards are left for the optimizer to replace with a
/// large constant.
pub fn extract_objective(tp: &TargetProgram, bound: &Expr, budget: &Expr) -> Expr {
    let written = tp.body.written_vars();
    let e = Expr::div(bound.subst_map(&counter_bounds(tp)), budget.clone());
    let ones: BTreeMap<String, Expr> = e
        .free_vars()
        .into_iter()
        .filter(|v| !v.starts_with('?') && !written.contains(v))
        .map(|v| (v, Expr::int(1)))
        .collect();
    normalize(&e.subst_map(&ones))
}

/// Budget declared by the program.
pub fn declared_budget(p: &Program) -> Result<&Expr, BudgetError> {
    p.budget.as_ref().ok_or(BudgetError::NoBudget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::check_program;
    use crate::parser::{parse_expr, parse_program};

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn assignment_and_havoc() {
        let c = TargetCmd::Assign {
            var: V_EPS.into(),
            expr: e("v_eps + eps/2"),
            instrumented: true,
            span: Span::default(),
        };
        assert_eq!(
            wp(&c, &e("v_eps <= eps")).unwrap(),
            e("v_eps + eps/2 <= eps")
        );
        let h = TargetCmd::Havoc {
            var: "x".into(),
            span: Span::default(),
        };
        assert_eq!(wp(&h, &e("x >= 0")).unwrap(), e("forall x :: x >= 0"));
    }

    #[test]
    fn loop_needs_invariant() {
        let w = TargetCmd::While {
            cond: e("true"),
            invariant: None,
            body: Box::new(TargetCmd::Skip),
            span: Span { line: 4, col: 1 },
        };
        assert!(matches!(
            wp(&w, &e("true")),
            Err(BudgetError::MissingInvariant { line: 4 })
        ));
    }

    const LOOP: &str = "function L(N: num[0], eps: num[0]) returns (o: num[0])
        precondition N >= 1 && N mod 1 == 0
        budget eps
        {
          c := 0;
          while (c < N) invariant c <= N && v_eps == c * eps / N {
            x := lap(N / eps);
            s := x;
            c := c + 1;
          }
          return 0;
        }";

    #[test]
    fn three_obligations_for_a_loop() {
        let mut p = parse_program(LOOP).unwrap();
        p.annotations
            .insert("x".into(), crate::parser::parse_ty("num[1]").unwrap());
        p.annotations
            .insert("s".into(), crate::parser::parse_ty("num[1]").unwrap());
        let res = check_program(&p);
        assert!(res.ok(), "{:?}", res.diagnostics);
        let pre = effective_precondition(&p);
        let obls = obligations(&res.target.body, &pre, &e("v_eps <= eps")).unwrap();
        let kinds: Vec<_> = obls.iter().map(|o| o.kind).collect();
        assert_eq!(
            kinds,
            [
                ObligationKind::Init,
                ObligationKind::Preserve,
                ObligationKind::Exit
            ]
        );
        assert_eq!(obls[1].parts.len(), 2);
        let ints = integral_vars(&res.target);
        assert_eq!(ints, ["N".to_string(), "c".to_string()].into());
    }

    #[test]
    fn straight_line_bound_is_the_sum() {
        let src = "function S(eps: num[0], a: num[*]) returns (o: num[0])
            precondition -1 <= ^a && ^a <= 1
            budget eps
            {
              x := lap(2 / eps);
              w := x;
              y := lap(2 / eps);
              z := w + y;
              return 0;
            }";
        let mut p = parse_program(src).unwrap();
        p.annotations
            .insert("x".into(), crate::parser::parse_ty("num[1]").unwrap());
        p.annotations
            .insert("y".into(), crate::parser::parse_ty("num[0 - 1]").unwrap());
        p.annotations
            .insert("z".into(), crate::parser::parse_ty("num[0]").unwrap());
        p.annotations
            .insert("w".into(), crate::parser::parse_ty("num[1]").unwrap());
        let res = check_program(&p);
        assert!(res.ok(), "{:?}", res.diagnostics);
        let b = symbolic_cost_bound(&res.target).unwrap();
        assert_eq!(b, normalize(&e("eps/2 + eps/2")));
    }

    #[test]
    fn integrality_requires_integer_assignments() {
        let src = "function F(eps: num[0], x: num[0]) returns (o: num[0])
            precondition true
            {
              i := 0; h := 0;
              while (i < 3) invariant true { i := i + 1; h := h + 1/2; }
              return 0;
            }";
        let p = parse_program(src).unwrap();
        let res = check_program(&p);
        let ints = integral_vars(&res.target);
        assert!(ints.contains("i"));
        assert!(!ints.contains("h"));
        assert!(!ints.contains("x"));
    }

    #[test]
    fn combine_prefers_counterexamples() {
        let inv = SolverVerdict::Invalid(Default::default());
        assert_eq!(combine(vec![SolverVerdict::Timeout, inv.clone()]), inv);
        assert_eq!(
            combine(vec![SolverVerdict::Valid, SolverVerdict::Timeout]),
            SolverVerdict::Timeout
        );
        assert_eq!(combine(vec![]), SolverVerdict::Valid);
    }
}
