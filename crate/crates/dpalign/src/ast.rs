//! Abstract syntax shared by every stage of the pipeline.
//!
//! A single [`Expr`] type serves program expressions, distances and
//! propositions. Names in free-variable sets use a prefix convention:
//! `x` for normal and random variables, `^x` for hat companions and `?a`
//! for distance variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

pub type Rational = BigRational;

pub fn rat(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat_frac(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Name of the cost variable in target programs.
pub const V_EPS: &str = "v_eps";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Implies,
    Iff,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
            BinOp::Iff => "<==>",
        }
    }

    pub fn is_arith(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Implies | BinOp::Iff)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Num(Rational),
    Bool(bool),
    Var(String),
    Rand(String),
    /// Companion distance `^x` of a star-typed variable `x`.
    Hat(String),
    /// Inference placeholder `?a`.
    DVar(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cons(Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Log(Box<Expr>),
    /// Binders range over reals and bind `Var`/`Rand` occurrences by name.
    Forall(Vec<String>, Box<Expr>),
}

pub type Distance = Expr;
pub type Prop = Expr;

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Num(rat(n))
    }
    pub fn num(r: Rational) -> Expr {
        Expr::Num(r)
    }
    pub fn zero() -> Expr {
        Expr::int(0)
    }
    pub fn tt() -> Expr {
        Expr::Bool(true)
    }
    pub fn var(n: &str) -> Expr {
        Expr::Var(n.to_string())
    }
    pub fn rand(n: &str) -> Expr {
        Expr::Rand(n.to_string())
    }
    pub fn hat(n: &str) -> Expr {
        Expr::Hat(n.to_string())
    }
    pub fn dvar(n: &str) -> Expr {
        Expr::DVar(n.to_string())
    }
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Add, a, b)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Sub, a, b)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Mul, a, b)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Div, a, b)
    }
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::And, a, b)
    }
    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Or, a, b)
    }
    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Implies, a, b)
    }
    pub fn iff(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Iff, a, b)
    }
    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Eq, a, b)
    }
    pub fn le(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Le, a, b)
    }
    pub fn lt(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Lt, a, b)
    }
    pub fn ge(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Ge, a, b)
    }
    pub fn gt(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Gt, a, b)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(a))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        Expr::Unary(UnOp::Neg, Box::new(a))
    }
    pub fn ite(c: Expr, a: Expr, b: Expr) -> Expr {
        Expr::Ite(Box::new(c), Box::new(a), Box::new(b))
    }
    pub fn index(a: Expr, i: Expr) -> Expr {
        Expr::Index(Box::new(a), Box::new(i))
    }
    pub fn cons(a: Expr, b: Expr) -> Expr {
        Expr::Cons(Box::new(a), Box::new(b))
    }
    pub fn abs(a: Expr) -> Expr {
        Expr::Abs(Box::new(a))
    }
    pub fn log(a: Expr) -> Expr {
        Expr::Log(Box::new(a))
    }
    pub fn forall(binders: Vec<String>, body: Expr) -> Expr {
        Expr::Forall(binders, Box::new(body))
    }

    /// Conjunction of a list, `true` when empty.
    pub fn and_all<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        let mut it = items.into_iter().filter(|e| *e != Expr::Bool(true));
        match it.next() {
            None => Expr::Bool(true),
            Some(first) => it.fold(first, Expr::and),
        }
    }

    /// Top-level conjuncts, flattening nested `&&`.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary(BinOp::And, a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Expr::Bool(true) => {}
                _ => out.push(e),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(r) if r.is_zero())
    }

    pub fn as_num(&self) -> Option<&Rational> {
        match self {
            Expr::Num(r) => Some(r),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Num(_)
            | Expr::Bool(_)
            | Expr::Var(_)
            | Expr::Rand(_)
            | Expr::Hat(_)
            | Expr::DVar(_) => vec![],
            Expr::Unary(_, a) | Expr::Abs(a) | Expr::Log(a) | Expr::Forall(_, a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Cons(a, b) | Expr::Index(a, b) => vec![a, b],
            Expr::Ite(c, a, b) => vec![c, a, b],
        }
    }

    /// Rebuild this node with each direct child mapped through `f`.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        let mut b = |e: &Expr| Box::new(f(e));
        match self {
            Expr::Num(_)
            | Expr::Bool(_)
            | Expr::Var(_)
            | Expr::Rand(_)
            | Expr::Hat(_)
            | Expr::DVar(_) => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, b(a)),
            Expr::Abs(a) => Expr::Abs(b(a)),
            Expr::Log(a) => Expr::Log(b(a)),
            Expr::Forall(vs, a) => Expr::Forall(vs.clone(), b(a)),
            Expr::Binary(op, x, y) => {
                let x = b(x);
                Expr::Binary(*op, x, b(y))
            }
            Expr::Cons(x, y) => {
                let x = b(x);
                Expr::Cons(x, b(y))
            }
            Expr::Index(x, y) => {
                let x = b(x);
                Expr::Index(x, b(y))
            }
            Expr::Ite(c, x, y) => {
                let c = b(c);
                let x = b(x);
                Expr::Ite(c, x, b(y))
            }
        }
    }

    /// Visit every subterm, outermost first.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(n) | Expr::Rand(n) => {
                if !bound.contains(n) {
                    out.insert(n.clone());
                }
            }
            Expr::Hat(n) => {
                out.insert(format!("^{n}"));
            }
            Expr::DVar(n) => {
                out.insert(format!("?{n}"));
            }
            Expr::Forall(vs, body) => {
                let depth = bound.len();
                bound.extend(vs.iter().cloned());
                body.collect_free(bound, out);
                bound.truncate(depth);
            }
            _ => {
                for c in self.children() {
                    c.collect_free(bound, out);
                }
            }
        }
    }

    pub fn dvars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::DVar(n) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn has_dvars(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::DVar(_)));
        found
    }

    pub fn has_hats(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Hat(_)));
        found
    }

    /// Capture-avoiding substitution of a single prefixed name.
    pub fn subst(&self, name: &str, repl: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(name.to_string(), repl.clone());
        self.subst_map(&map)
    }

    /// Simultaneous capture-avoiding substitution keyed by prefixed names.
    pub fn subst_map(&self, map: &BTreeMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Expr::Var(n) | Expr::Rand(n) => map.get(n).cloned().unwrap_or_else(|| self.clone()),
            Expr::Hat(n) => map
                .get(&format!("^{n}"))
                .cloned()
                .unwrap_or_else(|| self.clone()),
            Expr::DVar(n) => map
                .get(&format!("?{n}"))
                .cloned()
                .unwrap_or_else(|| self.clone()),
            Expr::Forall(vs, body) => {
                let mut inner: BTreeMap<String, Expr> = map
                    .iter()
                    .filter(|(k, _)| !vs.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                if inner.is_empty() {
                    return self.clone();
                }
                let body_fv = body.free_vars();
                let repl_fv: BTreeSet<String> =
                    inner.values().flat_map(|e| e.free_vars()).collect();
                let mut new_vs = Vec::with_capacity(vs.len());
                for v in vs {
                    if repl_fv.contains(v) {
                        let mut k = 1;
                        let fresh = loop {
                            let cand = format!("{v}_{k}");
                            if !repl_fv.contains(&cand)
                                && !body_fv.contains(&cand)
                                && !vs.contains(&cand)
                                && !inner.contains_key(&cand)
                            {
                                break cand;
                            }
                            k += 1;
                        };
                        inner.insert(v.clone(), Expr::Var(fresh.clone()));
                        new_vs.push(fresh);
                    } else {
                        new_vs.push(v.clone());
                    }
                }
                Expr::Forall(new_vs, Box::new(body.subst_map(&inner)))
            }
            _ => self.map_children(|c| c.subst_map(map)),
        }
    }

    /// Replace every `Var(n)` whose name is in `rands` by `Rand(n)`.
    pub fn classify_rands(&self, rands: &BTreeSet<String>) -> Expr {
        self.classify(rands, &mut Vec::new())
    }

    fn classify(&self, rands: &BTreeSet<String>, bound: &mut Vec<String>) -> Expr {
        match self {
            Expr::Var(n) if rands.contains(n) && !bound.contains(n) => Expr::Rand(n.clone()),
            Expr::Forall(vs, body) => {
                let depth = bound.len();
                bound.extend(vs.iter().cloned());
                let b = body.classify(rands, bound);
                bound.truncate(depth);
                Expr::Forall(vs.clone(), Box::new(b))
            }
            _ => self.map_children(|c| c.classify(rands, bound)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::print_expr(self))
    }
}

/// Base (distance-free) type, used for solver sorts and interpreter defaults.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BaseTy {
    Num,
    Bool,
    List(Box<BaseTy>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Num(Distance),
    NumStar,
    Bool,
    List(Box<Ty>),
}

impl Ty {
    pub fn zero() -> Ty {
        Ty::Num(Expr::zero())
    }

    pub fn base(&self) -> BaseTy {
        match self {
            Ty::Num(_) | Ty::NumStar => BaseTy::Num,
            Ty::Bool => BaseTy::Bool,
            Ty::List(t) => BaseTy::List(Box::new(t.base())),
        }
    }

    pub fn is_star(&self) -> bool {
        match self {
            Ty::NumStar => true,
            Ty::List(t) => t.is_star(),
            _ => false,
        }
    }

    /// Distances occurring in this type.
    pub fn distances(&self) -> Vec<&Distance> {
        match self {
            Ty::Num(d) => vec![d],
            Ty::List(t) => t.distances(),
            _ => vec![],
        }
    }

    pub fn map_distance(&self, f: &mut impl FnMut(&Distance) -> Distance) -> Ty {
        match self {
            Ty::Num(d) => Ty::Num(f(d)),
            Ty::List(t) => Ty::List(Box::new(t.map_distance(f))),
            other => other.clone(),
        }
    }

    pub fn subst(&self, name: &str, repl: &Expr) -> Ty {
        self.map_distance(&mut |d| d.subst(name, repl))
    }

    pub fn dvars(&self) -> BTreeSet<String> {
        self.distances().iter().flat_map(|d| d.dvars()).collect()
    }

    pub fn default_for(base: &BaseTy) -> Ty {
        match base {
            BaseTy::Num => Ty::zero(),
            BaseTy::Bool => Ty::Bool,
            BaseTy::List(b) => Ty::List(Box::new(Ty::default_for(b))),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::print_ty(self))
    }
}

/// Source location, 1-based. Ignored by equality so that reparsed ASTs
/// compare equal regardless of layout.
#[derive(Clone, Copy, Debug, Default, Eq, Serialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RandExpr {
    Laplace(Expr),
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cmd {
    Skip,
    Assign {
        var: String,
        expr: Expr,
        span: Span,
    },
    Sample {
        var: String,
        dist: RandExpr,
        span: Span,
    },
    Seq(Vec<Cmd>),
    If {
        cond: Expr,
        then_branch: Box<Cmd>,
        else_branch: Box<Cmd>,
        span: Span,
    },
    While {
        cond: Expr,
        invariant: Option<Prop>,
        body: Box<Cmd>,
        span: Span,
    },
    Return {
        expr: Expr,
        span: Span,
    },
}

impl Cmd {
    pub fn seq(cmds: Vec<Cmd>) -> Cmd {
        Cmd::Seq(cmds)
    }

    pub fn span(&self) -> Span {
        match self {
            Cmd::Assign { span, .. }
            | Cmd::Sample { span, .. }
            | Cmd::If { span, .. }
            | Cmd::While { span, .. }
            | Cmd::Return { span, .. } => *span,
            Cmd::Seq(cs) => cs.first().map(Cmd::span).unwrap_or_default(),
            Cmd::Skip => Span::default(),
        }
    }

    /// Variables written by plain assignments (not samples).
    pub fn assigned_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |c| {
            if let Cmd::Assign { var, .. } = c {
                out.insert(var.clone());
            }
        });
        out
    }

    /// Variables written by assignments or samples.
    pub fn written_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |c| match c {
            Cmd::Assign { var, .. } | Cmd::Sample { var, .. } => {
                out.insert(var.clone());
            }
            _ => {}
        });
        out
    }

    pub fn sampled_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |c| {
            if let Cmd::Sample { var, .. } = c {
                out.insert(var.clone());
            }
        });
        out
    }

    /// Pre-order walk over all commands.
    pub fn walk(&self, f: &mut impl FnMut(&Cmd)) {
        f(self);
        match self {
            Cmd::Seq(cs) => cs.iter().for_each(|c| c.walk(f)),
            Cmd::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                else_branch.walk(f);
            }
            Cmd::While { body, .. } => body.walk(f),
            _ => {}
        }
    }

    /// Every expression read by the command tree, excluding invariants.
    pub fn exprs(&self) -> Vec<&Expr> {
        fn go<'a>(c: &'a Cmd, out: &mut Vec<&'a Expr>) {
            match c {
                Cmd::Assign { expr, .. } | Cmd::Return { expr, .. } => out.push(expr),
                Cmd::Sample {
                    dist: RandExpr::Laplace(e),
                    ..
                } => out.push(e),
                Cmd::Sample { .. } | Cmd::Skip => {}
                Cmd::Seq(cs) => cs.iter().for_each(|c| go(c, out)),
                Cmd::If {
                    cond,
                    then_branch,
                    else_branch,
                    ..
                } => {
                    out.push(cond);
                    go(then_branch, out);
                    go(else_branch, out);
                }
                Cmd::While { cond, body, .. } => {
                    out.push(cond);
                    go(body, out);
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn map_exprs(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Cmd {
        match self {
            Cmd::Skip => Cmd::Skip,
            Cmd::Assign { var, expr, span } => Cmd::Assign {
                var: var.clone(),
                expr: f(expr),
                span: *span,
            },
            Cmd::Sample { var, dist, span } => Cmd::Sample {
                var: var.clone(),
                dist: match dist {
                    RandExpr::Laplace(e) => RandExpr::Laplace(f(e)),
                    RandExpr::Uniform => RandExpr::Uniform,
                },
                span: *span,
            },
            Cmd::Seq(cs) => Cmd::Seq(cs.iter().map(|c| c.map_exprs(f)).collect()),
            Cmd::If {
                cond,
                then_branch,
                else_branch,
                span,
            } => Cmd::If {
                cond: f(cond),
                then_branch: Box::new(then_branch.map_exprs(f)),
                else_branch: Box::new(else_branch.map_exprs(f)),
                span: *span,
            },
            Cmd::While {
                cond,
                invariant,
                body,
                span,
            } => Cmd::While {
                cond: f(cond),
                invariant: invariant.as_ref().map(&mut *f),
                body: Box::new(body.map_exprs(f)),
                span: *span,
            },
            Cmd::Return { expr, span } => Cmd::Return {
                expr: f(expr),
                span: *span,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Ty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Param,
    pub precondition: Prop,
    pub annotations: BTreeMap<String, Ty>,
    pub budget: Option<Expr>,
    pub body: Cmd,
}

impl Program {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_names(&self) -> BTreeSet<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn random_vars(&self) -> BTreeSet<String> {
        self.body.sampled_vars()
    }

    pub fn uniform_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.body.walk(&mut |c| {
            if let Cmd::Sample {
                var,
                dist: RandExpr::Uniform,
                ..
            } = c
            {
                out.insert(var.clone());
            }
        });
        out
    }

    /// Parameters never written by the body.
    pub fn immutable_vars(&self) -> BTreeSet<String> {
        let written = self.body.written_vars();
        self.params
            .iter()
            .map(|p| p.name.clone())
            .filter(|n| !written.contains(n))
            .collect()
    }

    /// Base types of every variable: parameters, annotated locals, sampled
    /// variables, and locals inferred from their assignments.
    pub fn base_types(&self) -> BTreeMap<String, BaseTy> {
        let mut env: BTreeMap<String, BaseTy> = BTreeMap::new();
        for p in &self.params {
            env.insert(p.name.clone(), p.ty.base());
        }
        for (n, t) in &self.annotations {
            env.insert(n.clone(), t.base());
        }
        for r in self.random_vars() {
            env.insert(r, BaseTy::Num);
        }
        env.entry(self.ret.name.clone())
            .or_insert_with(|| self.ret.ty.base());
        loop {
            let mut changed = false;
            self.body.walk(&mut |c| {
                if let Cmd::Assign { var, expr, .. } = c {
                    if !env.contains_key(var) {
                        if let Some(b) = infer_base(expr, &env) {
                            env.insert(var.clone(), b);
                            changed = true;
                        }
                    }
                }
            });
            if !changed {
                break;
            }
        }
        env
    }
}

/// Base type of an expression given base types of variables.
pub fn infer_base(e: &Expr, env: &BTreeMap<String, BaseTy>) -> Option<BaseTy> {
    match e {
        Expr::Num(_) | Expr::Hat(_) | Expr::DVar(_) | Expr::Abs(_) | Expr::Log(_) => {
            Some(BaseTy::Num)
        }
        Expr::Bool(_) | Expr::Forall(..) => Some(BaseTy::Bool),
        Expr::Var(n) | Expr::Rand(n) => env.get(n).cloned(),
        Expr::Unary(UnOp::Not, _) => Some(BaseTy::Bool),
        Expr::Unary(UnOp::Neg, _) => Some(BaseTy::Num),
        Expr::Binary(op, _, _) => Some(if op.is_arith() {
            BaseTy::Num
        } else {
            BaseTy::Bool
        }),
        Expr::Cons(h, t) => infer_base(h, env)
            .map(|b| BaseTy::List(Box::new(b)))
            .or_else(|| infer_base(t, env)),
        Expr::Index(l, _) => match infer_base(l, env)? {
            BaseTy::List(b) => Some(*b),
            _ => None,
        },
        Expr::Ite(_, a, b) => infer_base(a, env).or_else(|| infer_base(b, env)),
    }
}

/// The typing environment Γ together with the set of programmer-annotated
/// variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypingEnv {
    pub bindings: BTreeMap<String, Ty>,
    pub defvars: BTreeSet<String>,
}

impl TypingEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Γ from a program's parameter types and `typedef` annotations, all of
    /// which count as programmer-given.
    pub fn from_annotations(p: &Program) -> Self {
        let mut env = TypingEnv::new();
        for prm in &p.params {
            env.bind_def(&prm.name, prm.ty.clone());
        }
        for (n, t) in &p.annotations {
            env.bind_def(n, t.clone());
        }
        if !env.bindings.contains_key(&p.ret.name) {
            env.bind_def(&p.ret.name, p.ret.ty.clone());
        }
        env
    }

    pub fn get(&self, name: &str) -> Option<&Ty> {
        self.bindings.get(name)
    }

    pub fn bind(&mut self, name: &str, ty: Ty) {
        self.bindings.insert(name.to_string(), ty);
    }

    pub fn bind_def(&mut self, name: &str, ty: Ty) {
        self.bindings.insert(name.to_string(), ty);
        self.defvars.insert(name.to_string());
    }

    pub fn is_def(&self, name: &str) -> bool {
        self.defvars.contains(name)
    }

    /// Distance of a numeric variable: its annotation, or `^x` when starred.
    pub fn distance_of(&self, name: &str) -> Option<Distance> {
        match self.get(name)? {
            Ty::Num(d) => Some(d.clone()),
            Ty::NumStar => Some(Expr::Hat(name.to_string())),
            _ => None,
        }
    }

    pub fn subst(&self, name: &str, repl: &Expr) -> TypingEnv {
        TypingEnv {
            bindings: self
                .bindings
                .iter()
                .map(|(k, t)| (k.clone(), t.subst(name, repl)))
                .collect(),
            defvars: self.defvars.clone(),
        }
    }

    pub fn subst_map(&self, map: &BTreeMap<String, Expr>) -> TypingEnv {
        TypingEnv {
            bindings: self
                .bindings
                .iter()
                .map(|(k, t)| (k.clone(), t.map_distance(&mut |d| d.subst_map(map))))
                .collect(),
            defvars: self.defvars.clone(),
        }
    }

    pub fn dvars(&self) -> BTreeSet<String> {
        self.bindings.values().flat_map(Ty::dvars).collect()
    }

    pub fn star_vars(&self) -> BTreeSet<String> {
        self.bindings
            .iter()
            .filter(|(_, t)| t.is_star())
            .map(|(k, _)| k.clone())
            .collect()
    }
}

impl fmt::Display for TypingEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, t) in &self.bindings {
            writeln!(f, "{k}: {t}")?;
        }
        Ok(())
    }
}

/// Severity-free diagnostic with a source location.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub message: String,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagKind {
    Immutability,
    SingleUse,
    ReturnNotFinal,
    HatInBody,
    Division,
    Scale,
    TypeMismatch,
    Unannotated,
    Injectivity,
    Inference,
    Unbound,
}

impl Diagnostic {
    pub fn new(kind: DiagKind, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
            span,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn free_vars_of_index_sum() {
        let e = Expr::add(
            Expr::index(Expr::var("q"), Expr::var("i")),
            Expr::rand("eta2"),
        );
        assert_eq!(e.free_vars(), set(&["q", "i", "eta2"]));
    }

    #[test]
    fn free_vars_of_select() {
        let c = Expr::ge(
            Expr::add(
                Expr::index(Expr::var("q"), Expr::var("i")),
                Expr::rand("eta2"),
            ),
            Expr::var("tT"),
        );
        let e = Expr::ite(c, Expr::int(2), Expr::int(0));
        assert_eq!(e.free_vars(), set(&["q", "i", "eta2", "tT"]));
    }

    #[test]
    fn forall_binds_index() {
        let hq = Expr::index(Expr::hat("q"), Expr::var("i"));
        let e = Expr::forall(
            vec!["i".into()],
            Expr::and(
                Expr::le(Expr::int(-1), hq.clone()),
                Expr::le(hq, Expr::int(1)),
            ),
        );
        assert_eq!(e.free_vars(), set(&["^q"]));
    }

    #[test]
    fn subst_dvar() {
        let e = Expr::add(Expr::dvar("a"), Expr::int(1));
        assert_eq!(
            e.subst("?a", &Expr::int(0)),
            Expr::add(Expr::int(0), Expr::int(1))
        );
        let b = Expr::dvar("b");
        assert_eq!(b.subst("?a", &Expr::int(0)), b);
    }

    #[test]
    fn subst_env_binding() {
        let mut env = TypingEnv::new();
        env.bind("tT", Ty::Num(Expr::dvar("a")));
        let env = env.subst("?a", &Expr::int(1));
        assert_eq!(env.get("tT"), Some(&Ty::Num(Expr::int(1))));
    }

    #[test]
    fn subst_avoids_capture() {
        // forall i :: x < i, with x := i
        let e = Expr::forall(vec!["i".into()], Expr::lt(Expr::var("x"), Expr::var("i")));
        let r = e.subst("x", &Expr::var("i"));
        match r {
            Expr::Forall(vs, body) => {
                assert_eq!(vs, vec!["i_1".to_string()]);
                assert_eq!(*body, Expr::lt(Expr::var("i"), Expr::var("i_1")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subst_respects_binder() {
        let e = Expr::forall(vec!["i".into()], Expr::var("i"));
        assert_eq!(e.subst("i", &Expr::int(3)), e);
    }

    #[test]
    fn hats_and_bases_are_distinct() {
        let e = Expr::add(Expr::var("sum"), Expr::hat("sum"));
        assert_eq!(
            e.subst("sum", &Expr::int(0)),
            Expr::add(Expr::int(0), Expr::hat("sum"))
        );
        assert_eq!(
            e.subst("^sum", &Expr::int(0)),
            Expr::add(Expr::var("sum"), Expr::int(0))
        );
    }

    #[test]
    fn conjunct_flattening() {
        let e = Expr::and(
            Expr::and(Expr::var("a"), Expr::var("b")),
            Expr::and(Expr::tt(), Expr::var("c")),
        );
        assert_eq!(e.conjuncts().len(), 3);
        assert_eq!(Expr::and_all(vec![]), Expr::tt());
    }
}
