//! Brute-force evaluation of solver formulas on a value grid.

use std::collections::{BTreeMap, BTreeSet};

use dpalign::ast::{rat, BaseTy, BinOp, Expr, Program, Rational, UnOp};
use dpalign::budget::{integral_vars, verify_alignment, verify_budget, BudgetReport};
use dpalign::checker::sort_table;
use dpalign::infer::infer_program;
use dpalign::parser::{parse_expr, parse_program};
use dpalign::solver::{SolverConfig, SolverVerdict};
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 4000;
const LIST_LEN: usize = 3;
const REALS: &[(i64, i64)] = &[
    (-2, 1),
    (-1, 1),
    (-1, 2),
    (0, 1),
    (1, 4),
    (1, 2),
    (1, 1),
    (2, 1),
    (3, 1),
];
const INTS: &[(i64, i64)] = &[(-1, 1), (0, 1), (1, 1), (2, 1), (3, 1)];

pub fn load_program(name: &str) -> Program {
    let path = format!("{}/../../corpus/{name}.ldp", env!("CARGO_MANIFEST_DIR"));
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub struct Case {
    pub report: BudgetReport,
    pub sorts: BTreeMap<String, BaseTy>,
    pub ints: BTreeSet<String>,
}

pub fn case(name: &str, budget: Option<&str>) -> Case {
    let p = load_program(name);
    let inf = infer_program(&p).unwrap();
    let cfg = SolverConfig::default();
    let report = match (budget, &p.budget) {
        (Some(b), _) => verify_budget(&p, &inf.check, &parse_expr(b).unwrap(), &cfg).unwrap(),
        (None, Some(b)) => verify_budget(&p, &inf.check, b, &cfg).unwrap(),
        (None, None) => verify_alignment(&p, &inf.check, &cfg).unwrap(),
    };
    Case {
        report,
        sorts: sort_table(&p),
        ints: integral_vars(&inf.check.target),
    }
}

/// Grid values. Arithmetic is exact; `log` falls back to floating point and
/// comparisons involving such values use a small tolerance.
#[derive(Clone, Debug, PartialEq)]
pub enum V {
    Q(Rational),
    F(f64),
    B(bool),
    L(Vec<V>),
}

pub type Env = BTreeMap<String, V>;

/// Evaluation gave no truth value: an index out of range, a division by
/// zero, or a log of a non-positive number.
#[derive(Debug)]
pub struct Undefined;

const TOL: f64 = 1e-9;

pub fn f(v: &V) -> Result<f64, Undefined> {
    match v {
        V::Q(q) => q.to_f64().ok_or(Undefined),
        V::F(x) => Ok(*x),
        _ => Err(Undefined),
    }
}

pub fn b(v: V) -> Result<bool, Undefined> {
    match v {
        V::B(b) => Ok(b),
        _ => Err(Undefined),
    }
}

pub fn arith(op: BinOp, x: V, y: V) -> Result<V, Undefined> {
    if let (V::Q(x), V::Q(y)) = (&x, &y) {
        return Ok(V::Q(match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div if y.is_zero() => return Err(Undefined),
            BinOp::Div => x / y,
            BinOp::Mod if y.is_zero() => return Err(Undefined),
            BinOp::Mod => x - y * (x / y).floor(),
            _ => unreachable!(),
        }));
    }
    let (x, y) = (f(&x)?, f(&y)?);
    Ok(V::F(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div if y == 0.0 => return Err(Undefined),
        BinOp::Div => x / y,
        _ => return Err(Undefined),
    }))
}

pub fn compare(op: BinOp, x: &V, y: &V) -> Result<bool, Undefined> {
    if let (V::Q(x), V::Q(y)) = (x, y) {
        return Ok(match op {
            BinOp::Lt => x < y,
            BinOp::Gt => x > y,
            BinOp::Le => x <= y,
            BinOp::Ge => x >= y,
            BinOp::Eq => x == y,
            _ => x != y,
        });
    }
    if let (V::B(_) | V::L(_), _) | (_, V::B(_) | V::L(_)) = (x, y) {
        return match op {
            BinOp::Eq => Ok(x == y),
            BinOp::Ne => Ok(x != y),
            _ => Err(Undefined),
        };
    }
    let (x, y) = (f(x)?, f(y)?);
    Ok(match op {
        BinOp::Lt => x < y - TOL,
        BinOp::Gt => x > y + TOL,
        BinOp::Le => x <= y + TOL,
        BinOp::Ge => x >= y - TOL,
        BinOp::Eq => (x - y).abs() <= TOL,
        _ => (x - y).abs() > TOL,
    })
}

/// Values a binder ranges over: every list index and every grid real.
pub fn binder_domain() -> Vec<V> {
    let mut d: Vec<V> = (0..LIST_LEN as i64).map(|k| V::Q(rat(k))).collect();
    for &(n, k) in REALS {
        let v = V::Q(Rational::new(n.into(), k.into()));
        if !d.contains(&v) {
            d.push(v);
        }
    }
    d
}

pub fn value(e: &Expr, m: &Env) -> Result<V, Undefined> {
    Ok(match e {
        Expr::Num(q) => V::Q(q.clone()),
        Expr::Bool(x) => V::B(*x),
        Expr::Var(n) | Expr::Rand(n) => m.get(n).cloned().ok_or(Undefined)?,
        Expr::Hat(n) => m.get(&format!("^{n}")).cloned().ok_or(Undefined)?,
        Expr::DVar(_) => return Err(Undefined),
        Expr::Unary(UnOp::Not, a) => V::B(!b(value(a, m)?)?),
        Expr::Unary(UnOp::Neg, a) => match value(a, m)? {
            V::Q(q) => V::Q(-q),
            V::F(x) => V::F(-x),
            _ => return Err(Undefined),
        },
        Expr::Binary(BinOp::And, x, y) => V::B(b(value(x, m)?)? && b(value(y, m)?)?),
        Expr::Binary(BinOp::Or, x, y) => V::B(b(value(x, m)?)? || b(value(y, m)?)?),
        Expr::Binary(BinOp::Implies, x, y) => V::B(!b(value(x, m)?)? || b(value(y, m)?)?),
        Expr::Binary(BinOp::Iff, x, y) => V::B(b(value(x, m)?)? == b(value(y, m)?)?),
        Expr::Binary(
            op @ (BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod),
            x,
            y,
        ) => arith(*op, value(x, m)?, value(y, m)?)?,
        Expr::Binary(op, x, y) => V::B(compare(*op, &value(x, m)?, &value(y, m)?)?),
        Expr::Cons(h, t) => match value(t, m)? {
            V::L(mut xs) => {
                xs.insert(0, value(h, m)?);
                V::L(xs)
            }
            _ => return Err(Undefined),
        },
        Expr::Index(l, i) => {
            let (V::L(xs), V::Q(i)) = (value(l, m)?, value(i, m)?) else {
                return Err(Undefined);
            };
            if !i.is_integer() {
                return Err(Undefined);
            }
            let k = i.to_integer().to_usize().ok_or(Undefined)?;
            xs.get(k).cloned().ok_or(Undefined)?
        }
        Expr::Ite(c, x, y) => {
            if b(value(c, m)?)? {
                value(x, m)?
            } else {
                value(y, m)?
            }
        }
        Expr::Abs(a) => match value(a, m)? {
            V::Q(q) => V::Q(q.abs()),
            V::F(x) => V::F(x.abs()),
            _ => return Err(Undefined),
        },
        Expr::Log(a) => {
            let x = f(&value(a, m)?)?;
            if x <= 0.0 {
                return Err(Undefined);
            }
            V::F(x.ln())
        }
        Expr::Forall(bs, body) => V::B(forall(bs, body, m)?),
    })
}

/// Instances where the body is undefined are skipped.
pub fn forall(bs: &[String], body: &Expr, m: &Env) -> Result<bool, Undefined> {
    let Some((first, rest)) = bs.split_first() else {
        return Ok(value(body, m).and_then(b).unwrap_or(true));
    };
    let mut inner = m.clone();
    for v in binder_domain() {
        inner.insert(first.clone(), v);
        if !forall(rest, body, &inner)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn names(e: &Expr, out: &mut BTreeSet<String>) {
    e.visit(&mut |x| match x {
        Expr::Var(n) | Expr::Rand(n) => {
            out.insert(n.clone());
        }
        Expr::Hat(n) => {
            out.insert(format!("^{n}"));
        }
        _ => {}
    });
}

pub fn key(e: &Expr) -> Option<String> {
    match e {
        Expr::Var(n) | Expr::Rand(n) => Some(n.clone()),
        Expr::Hat(n) => Some(format!("^{n}")),
        _ => None,
    }
}

pub fn draw(rng: &mut ChaCha8Rng, ty: &BaseTy, int: bool) -> V {
    match ty {
        BaseTy::Bool => V::B(rng.gen()),
        BaseTy::List(inner) => V::L((0..LIST_LEN).map(|_| draw(rng, inner, int)).collect()),
        BaseTy::Num => {
            let (n, k) = *if int { INTS } else { REALS }.choose(rng).unwrap();
            V::Q(Rational::new(n.into(), k.into()))
        }
    }
}

pub enum Outcome {
    Holds { instances: usize },
    Counterexample(Env),
}

/// Evaluate `formula` on random grid points. Equalities `x == e` among the
/// hypotheses are solved by assignment so that path conditions produced by
/// assignments are satisfiable on the grid.
pub fn search(c: &Case, formula: &Expr, seed: u64) -> Outcome {
    let (hyp, _) = match formula {
        Expr::Binary(BinOp::Implies, h, g) => (h.as_ref().clone(), g.as_ref().clone()),
        other => (Expr::Bool(true), other.clone()),
    };
    let mut vars = BTreeSet::new();
    names(formula, &mut vars);
    let equations: Vec<(String, Expr)> = hyp
        .conjuncts()
        .into_iter()
        .filter_map(|e| match e {
            Expr::Binary(BinOp::Eq, a, b) => key(a).map(|k| (k, b.as_ref().clone())),
            _ => None,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = 0;
    for _ in 0..SAMPLES {
        let mut m = Env::new();
        for v in &vars {
            let ty = c.sorts.get(v).cloned().unwrap_or(BaseTy::Num);
            let base = v.trim_start_matches('^');
            let int = c.ints.contains(v) || (v.starts_with('^') && c.ints.contains(base));
            m.insert(v.clone(), draw(&mut rng, &ty, int));
        }
        for _ in 0..2 {
            for (x, e) in &equations {
                if let Ok(v) = value(e, &m) {
                    m.insert(x.clone(), v);
                }
            }
        }
        let integral = c
            .ints
            .iter()
            .filter_map(|v| m.get(v))
            .all(|v| !matches!(v, V::Q(q) if !q.is_integer()));
        if !integral {
            continue;
        }
        if !matches!(value(&hyp, &m), Ok(V::B(true))) {
            continue;
        }
        match value(formula, &m) {
            Ok(V::B(true)) => instances += 1,
            Ok(V::B(false)) => return Outcome::Counterexample(m),
            _ => {}
        }
    }
    Outcome::Holds { instances }
}

/// Valid verdicts survive the grid. Returns the labels of invalid verdicts
/// the grid confirms.
pub fn cross_check(name: &str, budget: Option<&str>) -> BTreeSet<String> {
    let c = case(name, budget);
    let mut confirmed = BTreeSet::new();
    for (k, o) in c.report.all().enumerate() {
        let formula =
            parse_expr(&o.formula).unwrap_or_else(|e| panic!("{}: {e}\n{}", o.name, o.formula));
        let outcome = search(&c, &formula, k as u64);
        match (&o.verdict, outcome) {
            (SolverVerdict::Valid, Outcome::Counterexample(m)) => {
                panic!(
                    "{name}: `{}` is valid but fails at {m:?}\n{}",
                    o.name, o.formula
                )
            }
            (SolverVerdict::Valid, Outcome::Holds { instances }) => {
                eprintln!("{name}: {} valid, {instances} grid instances", o.name)
            }
            (SolverVerdict::Invalid(_), Outcome::Counterexample(_)) => {
                eprintln!("{name}: {} invalid, confirmed on the grid", o.name);
                confirmed.insert(o.name.clone());
            }
            (v, _) => eprintln!("{name}: {} {}, no grid counterexample", o.name, v.name()),
        }
    }
    confirmed
}
