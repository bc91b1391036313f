//! Type checking with distance types and the type-directed translation into
//! the instrumented target language.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ast::{
    BaseTy, BinOp, Cmd, DiagKind, Diagnostic, Distance, Expr, Program, Prop, RandExpr, Span, Ty,
    TypingEnv, UnOp, V_EPS,
};
use crate::normalize::{normalize, same_distance};
use crate::target::{hat_name, TargetCmd, TargetProgram};
use crate::wellformed::check_wellformed_program;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// Comparison must evaluate identically in both aligned runs.
    Odot,
    /// Two distances must coincide (assignment, cons, index, return).
    Equality,
    /// The alignment of a random variable must be injective.
    Injectivity,
    /// Side conditions: positive scales, uniform factor range, divisors.
    Side,
}

/// `forall sorts. hypothesis ==> conclusion`, with distance variables left
/// free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub label: String,
    pub span: Span,
    /// Sorts of every free name, keyed with the `^x` / `?a` prefixes.
    pub sorts: BTreeMap<String, BaseTy>,
    pub hypothesis: Prop,
    pub conclusion: Prop,
}

impl Constraint {
    pub fn formula(&self) -> Prop {
        Expr::implies(self.hypothesis.clone(), self.conclusion.clone())
    }

    pub fn dvars(&self) -> BTreeSet<String> {
        let mut d = self.hypothesis.dvars();
        d.extend(self.conclusion.dvars());
        d
    }

    pub fn is_residual(&self) -> bool {
        self.hypothesis.has_dvars() || self.conclusion.has_dvars()
    }

    /// Names quantified universally (everything except distance variables).
    pub fn quantified(&self) -> Vec<(&String, &BaseTy)> {
        self.sorts
            .iter()
            .filter(|(k, _)| !k.starts_with('?'))
            .collect()
    }

    pub fn subst_map(&self, map: &BTreeMap<String, Expr>) -> Constraint {
        let hypothesis = self.hypothesis.subst_map(map);
        let conclusion = self.conclusion.subst_map(map);
        let mut c = Constraint {
            hypothesis,
            conclusion,
            ..self.clone()
        };
        c.sorts = self
            .sorts
            .iter()
            .filter(|(k, _)| !map.contains_key(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for v in c
            .hypothesis
            .free_vars()
            .into_iter()
            .chain(c.conclusion.free_vars())
        {
            if v.starts_with('?') {
                c.sorts.entry(v).or_insert(BaseTy::Num);
            }
        }
        c
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.quantified().iter().map(|(k, _)| k.as_str()).collect();
        write!(
            f,
            "[{:?}] {}: forall {}. {} ==> {}",
            self.kind,
            self.label,
            names.join(", "),
            self.hypothesis,
            self.conclusion
        )
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub target: TargetProgram,
    pub constraints: Vec<Constraint>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckResult {
    pub fn ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn residual(&self) -> Vec<&Constraint> {
        self.constraints
            .iter()
            .filter(|c| c.is_residual())
            .collect()
    }
}

/// The user precondition plus positivity of every parameter mentioned by
/// the budget.
pub fn effective_precondition(p: &Program) -> Prop {
    let mut conj = vec![p.precondition.clone()];
    if let Some(b) = &p.budget {
        let params = p.param_names();
        for v in b.free_vars() {
            if params.contains(&v) {
                conj.push(Expr::gt(Expr::var(&v), Expr::zero()));
            }
        }
    }
    Expr::and_all(conj)
}

/// Base-type table including hat companions and the cost variable.
pub fn sort_table(p: &Program) -> BTreeMap<String, BaseTy> {
    let mut base = p.base_types();
    let hats: Vec<(String, BaseTy)> = base.iter().map(|(k, v)| (hat_name(k), v.clone())).collect();
    base.extend(hats);
    base.insert(V_EPS.to_string(), BaseTy::Num);
    base
}

/// Shared state of one checking run.
pub struct Checker<'a> {
    pub env: &'a TypingEnv,
    pub pre: Prop,
    pub sorts: BTreeMap<String, BaseTy>,
    pub constraints: Vec<Constraint>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    pub fn new(env: &'a TypingEnv, pre: Prop, sorts: BTreeMap<String, BaseTy>) -> Self {
        Checker {
            env,
            pre,
            sorts,
            constraints: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn diag(&mut self, kind: DiagKind, span: Span, msg: impl Into<String>) {
        self.diagnostics.push(Diagnostic::new(kind, span, msg));
    }

    /// Close a formula over its free names using the sort table.
    pub fn close(
        &mut self,
        kind: ConstraintKind,
        label: impl Into<String>,
        span: Span,
        hypothesis: Prop,
        conclusion: Prop,
        extra: &BTreeMap<String, BaseTy>,
    ) -> Constraint {
        let mut sorts = BTreeMap::new();
        let label = label.into();
        for v in hypothesis
            .free_vars()
            .into_iter()
            .chain(conclusion.free_vars())
        {
            let sort = if v.starts_with('?') {
                Some(BaseTy::Num)
            } else {
                extra.get(&v).or_else(|| self.sorts.get(&v)).cloned()
            };
            match sort {
                Some(s) => {
                    sorts.insert(v, s);
                }
                None => {
                    self.diag(
                        DiagKind::Unbound,
                        span,
                        format!("`{v}` has no known type in constraint `{label}`"),
                    );
                    sorts.insert(v, BaseTy::Num);
                }
            }
        }
        Constraint {
            kind,
            label,
            span,
            sorts,
            hypothesis,
            conclusion,
        }
    }

    fn emit(&mut self, kind: ConstraintKind, label: impl Into<String>, span: Span, concl: Prop) {
        let hyp = self.pre.clone();
        let c = self.close(kind, label, span, hyp, concl, &BTreeMap::new());
        self.constraints.push(c);
    }

    /// Require `d == 0`, as a diagnostic when `d` is a nonzero constant.
    fn require_zero(&mut self, d: &Distance, span: Span, what: &str) -> bool {
        let d = normalize(d);
        if d.is_zero_literal() {
            return true;
        }
        if d.as_num().is_some() || (!d.has_dvars() && is_closed_constant(&d)) {
            self.diag(
                DiagKind::TypeMismatch,
                span,
                format!("{what} must have distance 0, found {d}"),
            );
            return false;
        }
        self.emit(
            ConstraintKind::Equality,
            format!("{what} has distance 0"),
            span,
            Expr::eq(d, Expr::zero()),
        );
        true
    }

    /// Require two distances to coincide.
    fn require_equal(&mut self, a: &Distance, b: &Distance, span: Span, what: &str) {
        if same_distance(a, b) {
            return;
        }
        let diff = normalize(&Expr::sub(a.clone(), b.clone()));
        if diff.as_num().is_some() {
            self.diag(
                DiagKind::TypeMismatch,
                span,
                format!(
                    "{what}: distance {} differs from {}",
                    normalize(a),
                    normalize(b)
                ),
            );
            return;
        }
        self.emit(
            ConstraintKind::Equality,
            what.to_string(),
            span,
            Expr::eq(normalize(a), normalize(b)),
        );
    }

    fn unify(&mut self, a: &Ty, b: &Ty, span: Span, what: &str) -> Option<Ty> {
        match (a, b) {
            (Ty::Num(d1), Ty::Num(d2)) => {
                self.require_equal(d1, d2, span, what);
                Some(b.clone())
            }
            (Ty::NumStar, Ty::NumStar) | (Ty::Bool, Ty::Bool) => Some(a.clone()),
            (Ty::List(x), Ty::List(y)) => Some(Ty::List(Box::new(self.unify(x, y, span, what)?))),
            _ => {
                self.diag(
                    DiagKind::TypeMismatch,
                    span,
                    format!("{what}: type {a} does not match {b}"),
                );
                None
            }
        }
    }

    fn lookup(&mut self, name: &str, span: Span) -> Option<Ty> {
        match self.env.get(name) {
            Some(Ty::NumStar) => Some(Ty::Num(Expr::hat(name))),
            Some(t) => Some(t.clone()),
            None => {
                self.diag(DiagKind::Unbound, span, format!("`{name}` has no type"));
                None
            }
        }
    }

    fn expect_num(&mut self, t: Ty, span: Span, e: &Expr) -> Option<Distance> {
        match t {
            Ty::Num(d) => Some(d),
            other => {
                self.diag(
                    DiagKind::TypeMismatch,
                    span,
                    format!("`{e}` has type {other}, expected a number"),
                );
                None
            }
        }
    }

    fn expect_bool(&mut self, t: Ty, span: Span, e: &Expr) -> Option<()> {
        match t {
            Ty::Bool => Some(()),
            other => {
                self.diag(
                    DiagKind::TypeMismatch,
                    span,
                    format!("`{e}` has type {other}, expected bool"),
                );
                None
            }
        }
    }

    /// Expression typing. Returns `None` after recording a diagnostic.
    pub fn type_expr(&mut self, e: &Expr, span: Span) -> Option<Ty> {
        match e {
            Expr::Num(_) => Some(Ty::zero()),
            Expr::Bool(_) => Some(Ty::Bool),
            Expr::Var(n) | Expr::Rand(n) => self.lookup(n, span),
            Expr::Hat(_) | Expr::DVar(_) | Expr::Forall(..) => {
                self.diag(
                    DiagKind::HatInBody,
                    span,
                    format!("`{e}` cannot appear in a program expression"),
                );
                None
            }
            Expr::Unary(UnOp::Neg, a) => {
                let t = self.type_expr(a, span)?;
                let d = self.expect_num(t, span, a)?;
                Some(Ty::Num(normalize(&Expr::neg(d))))
            }
            Expr::Unary(UnOp::Not, a) => {
                let t = self.type_expr(a, span)?;
                self.expect_bool(t, span, a)?;
                Some(Ty::Bool)
            }
            Expr::Binary(op, a, b) => self.type_binary(*op, a, b, span),
            Expr::Cons(h, t) => {
                let th = self.type_expr(h, span)?;
                let tt = self.type_expr(t, span)?;
                match tt {
                    Ty::List(elem) => {
                        if elem.is_star() {
                            self.diag(
                                DiagKind::TypeMismatch,
                                span,
                                "cons onto a list of starred numbers is not supported",
                            );
                            return None;
                        }
                        let elem = self.unify(&th, &elem, span, "cons element")?;
                        Some(Ty::List(Box::new(elem)))
                    }
                    other => {
                        self.diag(
                            DiagKind::TypeMismatch,
                            span,
                            format!("`{t}` has type {other}, expected a list"),
                        );
                        None
                    }
                }
            }
            Expr::Index(l, i) => {
                let ti = self.type_expr(i, span)?;
                let di = self.expect_num(ti, span, i)?;
                if !self.require_zero(&di, span, &format!("index `{i}`")) {
                    return None;
                }
                let tl = self.type_expr(l, span)?;
                match tl {
                    Ty::List(elem) => match *elem {
                        Ty::NumStar => match &**l {
                            Expr::Var(x) => Some(Ty::Num(Expr::index(Expr::hat(x), (**i).clone()))),
                            _ => {
                                self.diag(
                                    DiagKind::TypeMismatch,
                                    span,
                                    "only list variables of starred numbers can be indexed",
                                );
                                None
                            }
                        },
                        t => Some(t),
                    },
                    other => {
                        self.diag(
                            DiagKind::TypeMismatch,
                            span,
                            format!("`{l}` has type {other}, expected a list"),
                        );
                        None
                    }
                }
            }
            Expr::Ite(c, a, b) => {
                let tc = self.type_expr(c, span)?;
                self.expect_bool(tc, span, c)?;
                let ta = self.type_expr(a, span)?;
                let tb = self.type_expr(b, span)?;
                self.unify(&ta, &tb, span, "ternary branches")
            }
            Expr::Abs(a) | Expr::Log(a) => {
                let t = self.type_expr(a, span)?;
                let d = self.expect_num(t, span, a)?;
                if self.require_zero(&d, span, &format!("argument of `{e}`")) {
                    Some(Ty::zero())
                } else {
                    None
                }
            }
        }
    }

    fn type_binary(&mut self, op: BinOp, a: &Expr, b: &Expr, span: Span) -> Option<Ty> {
        let ta = self.type_expr(a, span)?;
        let tb = self.type_expr(b, span)?;
        match op {
            BinOp::Add | BinOp::Sub => {
                let da = self.expect_num(ta, span, a)?;
                let db = self.expect_num(tb, span, b)?;
                Some(Ty::Num(normalize(&Expr::bin(op, da, db))))
            }
            BinOp::Mul | BinOp::Div | BinOp::Mod => {
                let da = self.expect_num(ta, span, a)?;
                let db = self.expect_num(tb, span, b)?;
                let what = format!("operand of `{}`", op.symbol());
                let ok_a = self.require_zero(&da, span, &what);
                let ok_b = self.require_zero(&db, span, &what);
                if !(ok_a && ok_b) {
                    return None;
                }
                if matches!(op, BinOp::Div | BinOp::Mod) && b.as_num().is_none() {
                    self.emit(
                        ConstraintKind::Side,
                        format!("divisor `{b}` is nonzero"),
                        span,
                        Expr::bin(BinOp::Ne, b.clone(), Expr::zero()),
                    );
                }
                Some(Ty::zero())
            }
            _ if op.is_comparison() => match (&ta, &tb) {
                (Ty::Num(da), Ty::Num(db)) => {
                    if !same_distance(da, db) {
                        let shifted = |e: &Expr, d: &Distance| {
                            let d = normalize(d);
                            if d.is_zero_literal() {
                                e.clone()
                            } else {
                                Expr::add(e.clone(), d)
                            }
                        };
                        let concl = Expr::iff(
                            Expr::bin(op, a.clone(), b.clone()),
                            Expr::bin(op, shifted(a, da), shifted(b, db)),
                        );
                        let label = format!("comparison `{}`", Expr::bin(op, a.clone(), b.clone()));
                        self.emit(ConstraintKind::Odot, label, span, concl);
                    }
                    Some(Ty::Bool)
                }
                (Ty::Bool, Ty::Bool) if matches!(op, BinOp::Eq | BinOp::Ne) => Some(Ty::Bool),
                _ => {
                    self.diag(
                        DiagKind::TypeMismatch,
                        span,
                        format!("cannot compare {ta} with {tb}"),
                    );
                    None
                }
            },
            _ => {
                self.expect_bool(ta, span, a)?;
                self.expect_bool(tb, span, b)?;
                Some(Ty::Bool)
            }
        }
    }

    /// Translate one command, emitting constraints as a side effect.
    pub fn check_cmd(&mut self, c: &Cmd) -> TargetCmd {
        match c {
            Cmd::Skip => TargetCmd::Skip,
            Cmd::Seq(cs) => TargetCmd::Seq(cs.iter().map(|c| self.check_cmd(c)).collect()),
            Cmd::Assign { var, expr, span } => self.check_assign(var, expr, *span),
            Cmd::Sample { var, dist, span } => self.check_sample(var, dist, *span),
            Cmd::If {
                cond,
                then_branch,
                else_branch,
                span,
            } => {
                if let Some(t) = self.type_expr(cond, *span) {
                    self.expect_bool(t, *span, cond);
                }
                TargetCmd::If {
                    cond: cond.clone(),
                    then_branch: Box::new(self.check_cmd(then_branch)),
                    else_branch: Box::new(self.check_cmd(else_branch)),
                    span: *span,
                }
            }
            Cmd::While {
                cond,
                invariant,
                body,
                span,
            } => {
                if let Some(t) = self.type_expr(cond, *span) {
                    self.expect_bool(t, *span, cond);
                }
                TargetCmd::While {
                    cond: cond.clone(),
                    invariant: invariant.clone(),
                    body: Box::new(self.check_cmd(body)),
                    span: *span,
                }
            }
            Cmd::Return { expr, span } => {
                if let Some(t) = self.type_expr(expr, *span) {
                    self.check_return_ty(&t, *span);
                }
                TargetCmd::Return {
                    expr: expr.clone(),
                    span: *span,
                }
            }
        }
    }

    fn check_return_ty(&mut self, t: &Ty, span: Span) {
        match t {
            Ty::Num(d) => {
                self.require_zero(d, span, "returned value");
            }
            Ty::Bool => {}
            Ty::NumStar => self.diag(
                DiagKind::TypeMismatch,
                span,
                "returned value has a starred type",
            ),
            Ty::List(elem) => self.check_return_ty(elem, span),
        }
    }

    fn check_assign(&mut self, var: &str, expr: &Expr, span: Span) -> TargetCmd {
        let plain = TargetCmd::Assign {
            var: var.to_string(),
            expr: expr.clone(),
            instrumented: false,
            span,
        };
        let Some(te) = self.type_expr(expr, span) else {
            return plain;
        };
        let Some(tx) = self.env.get(var).cloned() else {
            self.diag(DiagKind::Unbound, span, format!("`{var}` has no type"));
            return plain;
        };
        match (&tx, &te) {
            (Ty::NumStar, Ty::Num(d)) => {
                let d = normalize(d);
                let hat = TargetCmd::Assign {
                    var: hat_name(var),
                    expr: d.clone(),
                    instrumented: true,
                    span,
                };
                // The companion update must read the pre-state if it depends
                // on the variable being assigned.
                if d.free_vars().contains(var) {
                    TargetCmd::Seq(vec![hat, plain])
                } else {
                    TargetCmd::Seq(vec![plain, hat])
                }
            }
            (Ty::List(x), Ty::List(_)) if x.is_star() => {
                if !matches!(expr, Expr::Var(_)) {
                    self.diag(
                        DiagKind::TypeMismatch,
                        span,
                        "starred lists can only be copied from other starred lists",
                    );
                    return plain;
                }
                self.unify(&te, &tx, span, &format!("assignment to `{var}`"));
                let Expr::Var(src) = expr else { unreachable!() };
                TargetCmd::Seq(vec![
                    plain,
                    TargetCmd::Assign {
                        var: hat_name(var),
                        expr: Expr::hat(src),
                        instrumented: true,
                        span,
                    },
                ])
            }
            _ => {
                self.unify(&te, &tx, span, &format!("assignment to `{var}`"));
                plain
            }
        }
    }

    fn check_sample(&mut self, var: &str, dist: &RandExpr, span: Span) -> TargetCmd {
        let Some(ty) = self.env.get(var).cloned() else {
            self.diag(
                DiagKind::Unannotated,
                span,
                format!("random variable `{var}` has no distance annotation"),
            );
            return TargetCmd::Havoc {
                var: var.to_string(),
                span,
            };
        };
        let Ty::Num(d) = ty else {
            self.diag(
                DiagKind::TypeMismatch,
                span,
                format!("random variable `{var}` must have a numeric distance, found {ty}"),
            );
            return TargetCmd::Havoc {
                var: var.to_string(),
                span,
            };
        };
        match dist {
            RandExpr::Laplace(scale) => {
                if let Some(t) = self.type_expr(scale, span) {
                    if let Some(ds) = self.expect_num(t, span, scale) {
                        self.require_zero(&ds, span, "Laplace scale");
                    }
                }
                let positive = scale.as_num().is_some_and(|r| *r > crate::ast::rat(0));
                if !positive {
                    self.emit(
                        ConstraintKind::Side,
                        format!("scale of `{var}` is positive"),
                        span,
                        Expr::gt(scale.clone(), Expr::zero()),
                    );
                }
                let mut out = vec![TargetCmd::Havoc {
                    var: var.to_string(),
                    span,
                }];
                let cost = normalize(&Expr::div(Expr::abs(d), scale.clone()));
                if !cost.is_zero_literal() {
                    out.push(TargetCmd::Assign {
                        var: V_EPS.to_string(),
                        expr: Expr::add(Expr::var(V_EPS), cost),
                        instrumented: true,
                        span,
                    });
                }
                TargetCmd::Seq(out)
            }
            RandExpr::Uniform => {
                let Some(factor) = uniform_factor(var, &d) else {
                    self.diag(
                        DiagKind::TypeMismatch,
                        span,
                        format!(
                            "distance of uniform variable `{var}` must have the form {var} * d"
                        ),
                    );
                    return TargetCmd::Havoc01 {
                        var: var.to_string(),
                        span,
                    };
                };
                self.uniform_side_conditions(var, &factor, span);
                let mut out = vec![TargetCmd::Havoc01 {
                    var: var.to_string(),
                    span,
                }];
                let factor = normalize(&factor);
                if !factor.is_zero_literal() {
                    let arg = normalize(&Expr::add(Expr::int(1), factor));
                    out.push(TargetCmd::Assign {
                        var: V_EPS.to_string(),
                        expr: Expr::sub(Expr::var(V_EPS), Expr::log(arg)),
                        instrumented: true,
                        span,
                    });
                }
                TargetCmd::Seq(out)
            }
        }
    }

    /// `-1 < d <= 0`, split over a top-level ternary so that each branch is
    /// reported separately.
    fn uniform_side_conditions(&mut self, var: &str, d: &Distance, span: Span) {
        let in_unit = Expr::and(
            Expr::le(Expr::zero(), Expr::rand(var)),
            Expr::le(Expr::rand(var), Expr::int(1)),
        );
        let range = |x: &Expr| {
            Expr::and(
                Expr::lt(Expr::int(-1), x.clone()),
                Expr::le(x.clone(), Expr::zero()),
            )
        };
        let cases: Vec<(String, Prop, Distance)> = match d {
            Expr::Ite(c, a, b) => vec![
                (" (true branch)".into(), (**c).clone(), (**a).clone()),
                (
                    " (false branch)".into(),
                    Expr::not((**c).clone()),
                    (**b).clone(),
                ),
            ],
            _ => vec![(String::new(), Expr::tt(), d.clone())],
        };
        for (suffix, path, branch) in cases {
            let hyp = Expr::and_all(vec![self.pre.clone(), in_unit.clone(), path]);
            let c = self.close(
                ConstraintKind::Side,
                format!("uniform factor of `{var}` in (-1, 0]{suffix}"),
                span,
                hyp,
                range(&branch),
                &BTreeMap::new(),
            );
            self.constraints.push(c);
        }
    }
}

fn is_closed_constant(d: &Expr) -> bool {
    d.free_vars().is_empty()
}

/// For a uniform variable `eta` annotated `eta * d`, return `d`.
pub fn uniform_factor(var: &str, full: &Distance) -> Option<Distance> {
    if normalize(full).is_zero_literal() {
        return Some(Expr::zero());
    }
    let is_var = |e: &Expr| matches!(e, Expr::Rand(n) | Expr::Var(n) if n == var);
    match full {
        Expr::Binary(BinOp::Mul, a, b) if is_var(a) => Some((**b).clone()),
        Expr::Binary(BinOp::Mul, a, b) if is_var(b) => Some((**a).clone()),
        _ => None,
    }
}

/// Injectivity obligations for the alignment of every random variable.
pub fn check_injectivity(
    env: &TypingEnv,
    pre: &Prop,
    sorts: &BTreeMap<String, BaseTy>,
    rands: &BTreeSet<String>,
    uniform: &BTreeSet<String>,
) -> (Vec<Constraint>, Vec<Diagnostic>) {
    let mut ck = Checker::new(env, pre.clone(), sorts.clone());
    let mut deps: BTreeMap<&String, BTreeSet<String>> = BTreeMap::new();
    for r in rands {
        if let Some(Ty::Num(d)) = env.get(r) {
            let fv: BTreeSet<String> = d
                .free_vars()
                .into_iter()
                .filter(|v| rands.contains(v))
                .collect();
            deps.insert(r, fv);
        }
    }

    // Reject cycles through two or more random variables.
    for (r, ds) in &deps {
        for other in ds.iter().filter(|o| *o != *r) {
            if reaches(&deps, other, r, &mut BTreeSet::new()) {
                ck.diag(
                    DiagKind::Injectivity,
                    Span::default(),
                    format!("distances of `{r}` and `{other}` depend on each other"),
                );
            }
        }
    }

    for (r, ds) in &deps {
        let Some(Ty::Num(d)) = env.get(r) else {
            continue;
        };
        if uniform.contains(*r) {
            let Some(factor) = uniform_factor(r, d) else {
                continue;
            };
            if normalize(&factor).is_zero_literal() {
                continue;
            }
            let hyp = Expr::and_all(vec![
                pre.clone(),
                Expr::le(Expr::zero(), Expr::rand(r)),
                Expr::le(Expr::rand(r), Expr::int(1)),
            ]);
            let c = ck.close(
                ConstraintKind::Injectivity,
                format!("alignment of `{r}` scales by a positive factor"),
                Span::default(),
                hyp,
                Expr::gt(factor, Expr::int(-1)),
                &BTreeMap::new(),
            );
            ck.constraints.push(c);
        } else if ds.contains(*r) {
            let v1 = format!("{r}__1");
            let v2 = format!("{r}__2");
            let at = |v: &str| d.subst(r, &Expr::var(v));
            let hyp = Expr::and(
                pre.clone(),
                Expr::eq(
                    Expr::add(Expr::var(&v1), at(&v1)),
                    Expr::add(Expr::var(&v2), at(&v2)),
                ),
            );
            let mut extra = BTreeMap::new();
            extra.insert(v1.clone(), BaseTy::Num);
            extra.insert(v2.clone(), BaseTy::Num);
            let c = ck.close(
                ConstraintKind::Injectivity,
                format!("alignment of `{r}` is injective"),
                Span::default(),
                hyp,
                Expr::eq(Expr::var(&v1), Expr::var(&v2)),
                &extra,
            );
            ck.constraints.push(c);
        }
    }
    (ck.constraints, ck.diagnostics)
}

fn reaches(
    deps: &BTreeMap<&String, BTreeSet<String>>,
    from: &String,
    to: &String,
    seen: &mut BTreeSet<String>,
) -> bool {
    if from == to {
        return true;
    }
    if !seen.insert(from.clone()) {
        return false;
    }
    deps.get(from).is_some_and(|ds| {
        ds.iter()
            .filter(|d| *d != from)
            .any(|d| reaches(deps, d, to, seen))
    })
}

/// Fill in zero-distance shells for unannotated non-random variables.
pub fn complete_env(p: &Program, env: &TypingEnv) -> (TypingEnv, Vec<Diagnostic>) {
    let mut env = env.clone();
    let mut diags = Vec::new();
    let rands = p.random_vars();
    for (v, b) in p.base_types() {
        if env.get(&v).is_some() {
            continue;
        }
        if rands.contains(&v) {
            let span = sample_span(&p.body, &v);
            diags.push(Diagnostic::new(
                DiagKind::Unannotated,
                span,
                format!("random variable `{v}` has no distance annotation"),
            ));
        } else {
            env.bind(&v, Ty::default_for(&b));
        }
    }
    (env, diags)
}

fn sample_span(c: &Cmd, var: &str) -> Span {
    let mut out = Span::default();
    c.walk(&mut |x| {
        if let Cmd::Sample { var: v, span, .. } = x {
            if v == var {
                out = *span;
            }
        }
    });
    out
}

/// Type-directed translation of a whole program under `env`.
pub fn transform(p: &Program, env: &TypingEnv) -> CheckResult {
    let mut diagnostics = check_wellformed_program(p);
    let (env, missing) = complete_env(p, env);
    diagnostics.extend(missing);
    let pre = effective_precondition(p);
    let sorts = sort_table(p);

    let mut ck = Checker::new(&env, pre.clone(), sorts.clone());
    let body = ck.check_cmd(&p.body);
    let mut constraints = std::mem::take(&mut ck.constraints);
    diagnostics.append(&mut ck.diagnostics);

    let (inj, inj_diags) =
        check_injectivity(&env, &pre, &sorts, &p.random_vars(), &p.uniform_vars());
    constraints.extend(inj);
    diagnostics.extend(inj_diags);

    let mut params: Vec<(String, BaseTy)> = p
        .params
        .iter()
        .map(|x| (x.name.clone(), x.ty.base()))
        .collect();
    for x in &p.params {
        if x.ty.is_star() {
            params.push((hat_name(&x.name), x.ty.base()));
        }
    }
    let init = TargetCmd::Assign {
        var: V_EPS.to_string(),
        expr: Expr::zero(),
        instrumented: true,
        span: Span::default(),
    };
    let body = match body {
        TargetCmd::Seq(mut cs) => {
            cs.insert(0, init);
            TargetCmd::Seq(cs)
        }
        other => TargetCmd::Seq(vec![init, other]),
    };
    let target = TargetProgram {
        name: p.name.clone(),
        params,
        dvars: env.dvars().into_iter().collect(),
        ret: (p.ret.name.clone(), p.ret.ty.base()),
        precondition: p.precondition.clone(),
        budget: p.budget.clone(),
        body,
    };
    CheckResult {
        target,
        constraints,
        diagnostics,
    }
}

/// Check a program under its own annotations.
pub fn check_program(p: &Program) -> CheckResult {
    transform(p, &TypingEnv::from_annotations(p))
}

/// Standalone expression typing under `env` and precondition `pre`.
pub fn type_expr(
    env: &TypingEnv,
    pre: &Prop,
    sorts: &BTreeMap<String, BaseTy>,
    e: &Expr,
) -> Result<(Ty, Vec<Constraint>), Vec<Diagnostic>> {
    let mut ck = Checker::new(env, pre.clone(), sorts.clone());
    let t = ck.type_expr(e, Span::default());
    match t {
        Some(t) if ck.diagnostics.is_empty() => Ok((t, ck.constraints)),
        _ => Err(ck.diagnostics),
    }
}
