//! Executable semantics: a sampling interpreter for source programs, a
//! tape-driven executor for target programs, alignment replay and a
//! Monte-Carlo privacy falsifier.

mod estimate;
mod replay;

use std::collections::BTreeMap;
use std::fmt;

use num_traits::ToPrimitive;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{BaseTy, BinOp, Cmd, Expr, Program, RandExpr, Ty, TypingEnv, UnOp, V_EPS};
use crate::checker::uniform_factor;
use crate::target::{hat_name, TargetCmd, TargetProgram};

pub use estimate::{
    estimate_privacy, hoeffding_radius, OutcomeStat, PrivacyReport, PrivacyVerdict, ERROR_OUTCOME,
};
pub use replay::{
    faithful_check, paired_memory, replay_check, FaithfulnessReport, ReplayReport, Violation,
};

/// Default bound on executed commands per run.
pub const STEP_LIMIT: u64 = 1_000_000;

/// Absolute tolerance for comparing floating results of aligned runs.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("step limit of {0} commands exceeded")]
    StepLimit(u64),
    #[error("index {index} out of range for list of length {len}")]
    IndexOutOfRange { index: f64, len: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("tape exhausted after {0} draws")]
    TapeExhausted(usize),
    #[error("cannot evaluate `{0}`")]
    Unsupported(String),
    #[error("line {line}: Laplace scale {scale} is not positive")]
    BadScale { line: usize, scale: f64 },
    #[error("program ended without `return`")]
    NoReturn,
}

type IResult<T> = Result<T, InterpError>;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Bool(bool),
    List(Vec<Value>),
}

impl Value {
    pub fn as_num(&self) -> IResult<f64> {
        match self {
            Value::Num(x) => Ok(*x),
            other => Err(InterpError::Type(format!(
                "expected a number, found {other}"
            ))),
        }
    }

    pub fn as_bool(&self) -> IResult<bool> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(InterpError::Type(format!(
                "expected a boolean, found {other}"
            ))),
        }
    }

    pub fn as_list(&self) -> IResult<&[Value]> {
        match self {
            Value::List(xs) => Ok(xs),
            other => Err(InterpError::Type(format!("expected a list, found {other}"))),
        }
    }

    pub fn default_for(b: &BaseTy) -> Value {
        match b {
            BaseTy::Num => Value::Num(0.0),
            BaseTy::Bool => Value::Bool(false),
            BaseTy::List(_) => Value::List(Vec::new()),
        }
    }

    /// Equality up to [`TOLERANCE`] on numbers.
    pub fn close_to(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => {
                (a - b).abs() <= TOLERANCE * (1.0 + a.abs().max(b.abs()))
            }
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.close_to(y))
            }
            _ => false,
        }
    }

    /// Whether the value ranges over a finite set (booleans and lists of
    /// them).
    pub fn is_discrete(&self) -> bool {
        match self {
            Value::Bool(_) => true,
            Value::Num(_) => false,
            Value::List(xs) => xs.iter().all(Value::is_discrete),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        match v {
            serde_json::Value::Number(n) => n.as_f64().map(Value::Num),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Array(xs) => xs
                .iter()
                .map(Value::from_json)
                .collect::<Option<Vec<_>>>()
                .map(Value::List),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::List(xs) => {
                f.write_str("[")?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Variable store. Hat companions are keyed `^x`; target memories also bind
/// `v_eps`.
pub type Memory = BTreeMap<String, Value>;

/// Sequence of draws consumed by sampling or havoc sites in execution order.
pub type Tape = Vec<f64>;

/// Source of random draws.
pub trait Draws {
    fn laplace(&mut self, scale: f64) -> IResult<f64>;
    fn uniform(&mut self) -> IResult<f64>;
}

/// Fresh draws from a random number generator.
pub struct RngDraws<R: Rng>(pub R);

/// Laplace(0, scale) by inverting the CDF at a uniform draw.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let v = u - 0.5;
    -scale * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

impl<R: Rng> Draws for RngDraws<R> {
    fn laplace(&mut self, scale: f64) -> IResult<f64> {
        // Exclude u = 0, whose inverse is infinite.
        let u: f64 = loop {
            let u = self.0.gen::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        Ok(laplace_from_uniform(u, scale))
    }

    fn uniform(&mut self) -> IResult<f64> {
        Ok(self.0.gen::<f64>())
    }
}

/// Replays a tape verbatim.
pub struct TapeDraws<'a> {
    tape: &'a [f64],
    pos: usize,
}

impl<'a> TapeDraws<'a> {
    pub fn new(tape: &'a [f64]) -> Self {
        TapeDraws { tape, pos: 0 }
    }

    fn next(&mut self) -> IResult<f64> {
        let v = *self
            .tape
            .get(self.pos)
            .ok_or(InterpError::TapeExhausted(self.pos))?;
        self.pos += 1;
        Ok(v)
    }
}

impl Draws for TapeDraws<'_> {
    fn laplace(&mut self, _scale: f64) -> IResult<f64> {
        self.next()
    }

    fn uniform(&mut self) -> IResult<f64> {
        self.next()
    }
}

fn lookup<'m>(m: &'m Memory, name: &str) -> IResult<&'m Value> {
    m.get(name)
        .ok_or_else(|| InterpError::Unbound(name.to_string()))
}

fn num_literal(r: &crate::ast::Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Largest list length in `m`, the range of quantified index variables.
fn index_domain(m: &Memory) -> usize {
    m.values()
        .filter_map(|v| match v {
            Value::List(xs) => Some(xs.len()),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

/// Evaluate an expression. Quantifiers range over the list indices of `m`;
/// instances that read outside a list are vacuous.
pub fn eval(e: &Expr, m: &Memory) -> IResult<Value> {
    Ok(match e {
        Expr::Num(r) => Value::Num(num_literal(r)),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Var(n) | Expr::Rand(n) => lookup(m, n)?.clone(),
        Expr::Hat(n) => lookup(m, &hat_name(n))?.clone(),
        Expr::DVar(n) => return Err(InterpError::Unsupported(format!("?{n}"))),
        Expr::Unary(UnOp::Not, a) => Value::Bool(!eval(a, m)?.as_bool()?),
        Expr::Unary(UnOp::Neg, a) => Value::Num(-eval(a, m)?.as_num()?),
        Expr::Binary(op, a, b) => binary(*op, a, b, m)?,
        Expr::Cons(h, t) => {
            let h = eval(h, m)?;
            let Value::List(t) = eval(t, m)? else {
                return Err(InterpError::Type("cons onto a non-list".into()));
            };
            let mut xs = Vec::with_capacity(t.len() + 1);
            xs.push(h);
            xs.extend(t);
            Value::List(xs)
        }
        Expr::Index(l, i) => {
            let i = eval(i, m)?.as_num()?;
            let l = eval(l, m)?;
            let xs = l.as_list()?;
            if i < 0.0 || i.fract() != 0.0 || i as usize >= xs.len() {
                return Err(InterpError::IndexOutOfRange {
                    index: i,
                    len: xs.len(),
                });
            }
            xs[i as usize].clone()
        }
        Expr::Ite(c, a, b) => {
            if eval(c, m)?.as_bool()? {
                eval(a, m)?
            } else {
                eval(b, m)?
            }
        }
        Expr::Abs(a) => Value::Num(eval(a, m)?.as_num()?.abs()),
        Expr::Log(a) => Value::Num(eval(a, m)?.as_num()?.ln()),
        Expr::Forall(bs, body) => {
            let n = index_domain(m);
            let mut inner = m.clone();
            let mut idx = vec![0usize; bs.len()];
            if n == 0 {
                return Ok(Value::Bool(true));
            }
            loop {
                for (b, k) in bs.iter().zip(&idx) {
                    inner.insert(b.clone(), Value::Num(*k as f64));
                }
                match eval(body, &inner) {
                    Ok(v) if !v.as_bool()? => return Ok(Value::Bool(false)),
                    Ok(_) | Err(InterpError::IndexOutOfRange { .. }) => {}
                    Err(e) => return Err(e),
                }
                let mut pos = 0;
                loop {
                    if pos == idx.len() {
                        return Ok(Value::Bool(true));
                    }
                    idx[pos] += 1;
                    if idx[pos] < n {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
            }
        }
    })
}

fn binary(op: BinOp, a: &Expr, b: &Expr, m: &Memory) -> IResult<Value> {
    match op {
        BinOp::And => {
            return Ok(Value::Bool(
                eval(a, m)?.as_bool()? && eval(b, m)?.as_bool()?,
            ))
        }
        BinOp::Or => {
            return Ok(Value::Bool(
                eval(a, m)?.as_bool()? || eval(b, m)?.as_bool()?,
            ))
        }
        BinOp::Implies => {
            return Ok(Value::Bool(
                !eval(a, m)?.as_bool()? || eval(b, m)?.as_bool()?,
            ))
        }
        _ => {}
    }
    let (x, y) = (eval(a, m)?, eval(b, m)?);
    Ok(match op {
        BinOp::Iff => Value::Bool(x.as_bool()? == y.as_bool()?),
        BinOp::Eq => Value::Bool(x == y),
        BinOp::Ne => Value::Bool(x != y),
        _ => {
            let (x, y) = (x.as_num()?, y.as_num()?);
            match op {
                BinOp::Add => Value::Num(x + y),
                BinOp::Sub => Value::Num(x - y),
                BinOp::Mul => Value::Num(x * y),
                BinOp::Div if y == 0.0 => return Err(InterpError::DivisionByZero),
                BinOp::Div => Value::Num(x / y),
                BinOp::Mod if y == 0.0 => return Err(InterpError::DivisionByZero),
                BinOp::Mod => Value::Num(x.rem_euclid(y)),
                BinOp::Lt => Value::Bool(x < y),
                BinOp::Gt => Value::Bool(x > y),
                BinOp::Le => Value::Bool(x <= y),
                BinOp::Ge => Value::Bool(x >= y),
                _ => unreachable!("logical operators handled above"),
            }
        }
    })
}

/// Initial memory of a run: the given bindings plus defaults (zero, false,
/// empty list) for every other variable of the program and for the
/// companions of numeric locals.
pub fn init_memory(p: &Program, params: &Memory) -> IResult<Memory> {
    let mut m = params.clone();
    for x in &p.params {
        if !m.contains_key(&x.name) {
            return Err(InterpError::Unbound(x.name.clone()));
        }
    }
    let param_names = p.param_names();
    for (v, b) in p.base_types() {
        m.entry(v.clone()).or_insert_with(|| Value::default_for(&b));
        if b == BaseTy::Num && !param_names.contains(&v) {
            m.entry(hat_name(&v)).or_insert(Value::Num(0.0));
        }
    }
    Ok(m)
}

/// Evaluate the precondition in a memory that binds parameters and hats.
pub fn check_precondition(p: &Program, m: &Memory) -> IResult<bool> {
    eval(&p.precondition, m)?.as_bool()
}

/// One executed sampling site.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Draw {
    pub site: String,
    pub line: usize,
    pub draw: f64,
    /// The draw the aligned run must use, when an environment was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aligned: Option<f64>,
    /// Privacy cost of aligning this draw.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SourceRun {
    pub output: Value,
    pub memory: Memory,
    pub trace: Vec<Draw>,
}

/// Distance of a numeric variable as a value in `m`.
fn distance_value(env: &TypingEnv, x: &str, m: &Memory) -> IResult<Value> {
    match env.get(x) {
        Some(Ty::NumStar) => Ok(lookup(m, &hat_name(x))?.clone()),
        Some(Ty::Num(d)) => eval(d, m),
        Some(Ty::List(t)) => {
            let len = lookup(m, x)?.as_list()?.len();
            match &**t {
                Ty::NumStar => Ok(lookup(m, &hat_name(x))?.clone()),
                Ty::Num(d) => Ok(Value::List(vec![eval(d, m)?; len])),
                Ty::Bool => Ok(Value::List(vec![Value::Num(0.0); len])),
                other => Err(InterpError::Unsupported(format!("distance of {other}"))),
            }
        }
        Some(Ty::Bool) | None => Ok(Value::Num(0.0)),
    }
}

fn shift(v: &Value, d: &Value) -> IResult<Value> {
    Ok(match (v, d) {
        (Value::Num(x), Value::Num(d)) => Value::Num(x + d),
        (Value::Bool(b), _) => Value::Bool(*b),
        (Value::List(xs), Value::List(ds)) if xs.len() == ds.len() => Value::List(
            xs.iter()
                .zip(ds)
                .map(|(x, d)| shift(x, d))
                .collect::<IResult<_>>()?,
        ),
        (x, d) => return Err(InterpError::Type(format!("cannot shift {x} by {d}"))),
    })
}

fn difference(a: &Value, b: &Value) -> IResult<Value> {
    Ok(match (a, b) {
        (Value::Num(x), Value::Num(y)) => Value::Num(x - y),
        (Value::List(xs), Value::List(ys)) if xs.len() == ys.len() => Value::List(
            xs.iter()
                .zip(ys)
                .map(|(x, y)| difference(x, y))
                .collect::<IResult<_>>()?,
        ),
        (x, y) => return Err(InterpError::Type(format!("cannot subtract {y} from {x}"))),
    })
}

/// The memory of the aligned run, reconstructed from `m` and the distances
/// of `env`. Names without a numeric type are copied unchanged.
pub fn shifted_memory(env: &TypingEnv, m: &Memory) -> IResult<Memory> {
    let mut out = m.clone();
    for (k, v) in m {
        if k.starts_with('^') || k == V_EPS {
            continue;
        }
        if env.get(k).is_some() {
            let d = distance_value(env, k, m)?;
            out.insert(k.clone(), shift(v, &d)?);
        }
    }
    Ok(out)
}

/// Aligned value and cost of a draw at `var`, in the memory right after
/// sampling. `scale` is `None` for uniform draws.
fn align_draw(
    env: &TypingEnv,
    var: &str,
    draw: f64,
    scale: Option<f64>,
    m: &Memory,
) -> IResult<(f64, f64)> {
    let full = env
        .distance_of(var)
        .ok_or_else(|| InterpError::Unbound(format!("distance of {var}")))?;
    let d = eval(&full, m)?.as_num()?;
    let cost = match scale {
        Some(s) => d.abs() / s,
        None => {
            let f = uniform_factor(var, &full)
                .ok_or_else(|| InterpError::Unsupported(full.to_string()))?;
            -(1.0 + eval(&f, m)?.as_num()?).ln()
        }
    };
    Ok((draw + d, cost))
}

struct SourceExec<'a, D: Draws> {
    env: Option<&'a TypingEnv>,
    draws: &'a mut D,
    trace: Vec<Draw>,
    steps: u64,
    limit: u64,
}

enum Flow {
    Next,
    Return(Value),
}

impl<D: Draws> SourceExec<'_, D> {
    fn tick(&mut self) -> IResult<()> {
        self.steps += 1;
        if self.steps > self.limit {
            Err(InterpError::StepLimit(self.limit))
        } else {
            Ok(())
        }
    }

    fn exec(&mut self, c: &Cmd, m: &mut Memory) -> IResult<Flow> {
        self.tick()?;
        match c {
            Cmd::Skip => {}
            Cmd::Assign { var, expr, .. } => {
                let v = eval(expr, m)?;
                if let Some(env) = self.env.filter(|e| e.get(var).is_some_and(Ty::is_star)) {
                    let d = difference(&eval(expr, &shifted_memory(env, m)?)?, &v)?;
                    m.insert(hat_name(var), d);
                }
                m.insert(var.clone(), v);
            }
            Cmd::Sample { var, dist, span } => {
                let draw = match dist {
                    RandExpr::Laplace(scale) => {
                        let s = eval(scale, m)?.as_num()?;
                        if s.is_nan() || s <= 0.0 {
                            return Err(InterpError::BadScale {
                                line: span.line,
                                scale: s,
                            });
                        }
                        (self.draws.laplace(s)?, Some(s))
                    }
                    RandExpr::Uniform => (self.draws.uniform()?, None),
                };
                m.insert(var.clone(), Value::Num(draw.0));
                let (aligned, cost) = match self.env {
                    Some(env) => match align_draw(env, var, draw.0, draw.1, m) {
                        Ok((a, c)) => (Some(a), Some(c)),
                        // The distance reads past the end of a list or
                        // divides by zero; the program fails at the same
                        // read, so the draw stays unaligned.
                        Err(InterpError::IndexOutOfRange { .. } | InterpError::DivisionByZero) => {
                            (None, None)
                        }
                        Err(e) => return Err(e),
                    },
                    None => (None, None),
                };
                self.trace.push(Draw {
                    site: var.clone(),
                    line: span.line,
                    draw: draw.0,
                    aligned,
                    cost,
                });
            }
            Cmd::Seq(cs) => {
                for c in cs {
                    if let Flow::Return(v) = self.exec(c, m)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            Cmd::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let b = if eval(cond, m)?.as_bool()? {
                    then_branch
                } else {
                    else_branch
                };
                return self.exec(b, m);
            }
            Cmd::While { cond, body, .. } => {
                while eval(cond, m)?.as_bool()? {
                    if let Flow::Return(v) = self.exec(body, m)? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick()?;
                }
            }
            Cmd::Return { expr, .. } => return Ok(Flow::Return(eval(expr, m)?)),
        }
        Ok(Flow::Next)
    }
}

/// A run that may have ended in an error, with the state reached.
#[derive(Clone, Debug)]
pub struct Execution {
    pub outcome: IResult<Value>,
    pub memory: Memory,
    pub trace: Vec<Draw>,
}

/// Like [`run_source`] but keeps the memory and trace of failed runs.
pub fn execute_source<D: Draws>(
    p: &Program,
    m0: &Memory,
    draws: &mut D,
    env: Option<&TypingEnv>,
    limit: u64,
) -> IResult<Execution> {
    let mut m = init_memory(p, m0)?;
    let mut ex = SourceExec {
        env,
        draws,
        trace: Vec::new(),
        steps: 0,
        limit,
    };
    let outcome = match ex.exec(&p.body, &mut m) {
        Ok(Flow::Return(v)) => Ok(v),
        Ok(Flow::Next) => Err(InterpError::NoReturn),
        Err(e) => Err(e),
    };
    Ok(Execution {
        outcome,
        memory: m,
        trace: ex.trace,
    })
}

/// Run a source program. With `env`, star-typed assignments also maintain
/// hat companions and every draw is annotated with its aligned value and
/// cost.
pub fn run_source<D: Draws>(
    p: &Program,
    m0: &Memory,
    draws: &mut D,
    env: Option<&TypingEnv>,
    limit: u64,
) -> IResult<SourceRun> {
    let e = execute_source(p, m0, draws, env, limit)?;
    Ok(SourceRun {
        output: e.outcome?,
        memory: e.memory,
        trace: e.trace,
    })
}

/// Draws an aligned run must consume. `None` if some draw has no aligned
/// value.
pub fn align_tape(trace: &[Draw]) -> Option<Tape> {
    trace.iter().map(|d| d.aligned).collect()
}

#[derive(Clone, Debug)]
pub struct TargetRun {
    pub output: Value,
    pub memory: Memory,
    pub v_eps: f64,
}

struct TargetExec<'a> {
    tape: TapeDraws<'a>,
    steps: u64,
    limit: u64,
}

impl TargetExec<'_> {
    fn exec(&mut self, c: &TargetCmd, m: &mut Memory) -> IResult<Option<Value>> {
        self.steps += 1;
        if self.steps > self.limit {
            return Err(InterpError::StepLimit(self.limit));
        }
        match c {
            TargetCmd::Skip => {}
            TargetCmd::Assign { var, expr, .. } => {
                let v = eval(expr, m)?;
                m.insert(var.clone(), v);
            }
            TargetCmd::Havoc { var, .. } | TargetCmd::Havoc01 { var, .. } => {
                let v = self.tape.next()?;
                m.insert(var.clone(), Value::Num(v));
            }
            TargetCmd::Seq(cs) => {
                for c in cs {
                    if let Some(v) = self.exec(c, m)? {
                        return Ok(Some(v));
                    }
                }
            }
            TargetCmd::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let b = if eval(cond, m)?.as_bool()? {
                    then_branch
                } else {
                    else_branch
                };
                return self.exec(b, m);
            }
            TargetCmd::While { cond, body, .. } => {
                while eval(cond, m)?.as_bool()? {
                    if let Some(v) = self.exec(body, m)? {
                        return Ok(Some(v));
                    }
                    self.steps += 1;
                    if self.steps > self.limit {
                        return Err(InterpError::StepLimit(self.limit));
                    }
                }
            }
            TargetCmd::Return { expr, .. } => return Ok(Some(eval(expr, m)?)),
        }
        Ok(None)
    }
}

/// Run a target program on a tape of havoc values, keeping the final
/// memory even when the run fails. `m0` must bind the parameters, their
/// hats, and defaults for locals (see [`init_memory`]).
pub fn execute_target(
    tp: &TargetProgram,
    m0: &Memory,
    tape: &[f64],
    limit: u64,
) -> (IResult<Value>, Memory) {
    let mut m = m0.clone();
    m.insert(V_EPS.to_string(), Value::Num(0.0));
    let mut ex = TargetExec {
        tape: TapeDraws::new(tape),
        steps: 0,
        limit,
    };
    let outcome = ex
        .exec(&tp.body, &mut m)
        .and_then(|v| v.ok_or(InterpError::NoReturn));
    (outcome, m)
}

pub fn run_target(tp: &TargetProgram, m0: &Memory, tape: &[f64], limit: u64) -> IResult<TargetRun> {
    let (outcome, memory) = execute_target(tp, m0, tape, limit);
    let output = outcome?;
    let v_eps = lookup(&memory, V_EPS)?.as_num()?;
    Ok(TargetRun {
        output,
        memory,
        v_eps,
    })
}

/// Whether `m2` is related to `m1` by `env` on the names in `vars`: every
/// number differs by its distance evaluated in `m1`, everything else is
/// equal. Returns a description of the first mismatch.
pub fn related<'a>(
    env: &TypingEnv,
    m1: &Memory,
    m2: &Memory,
    vars: impl IntoIterator<Item = &'a String>,
) -> IResult<Option<String>> {
    for x in vars {
        let (Some(a), Some(b)) = (m1.get(x), m2.get(x)) else {
            continue;
        };
        let expect = shift(a, &distance_value(env, x, m1)?)?;
        if !expect.close_to(b) {
            return Ok(Some(format!("`{x}`: expected {expect}, found {b}")));
        }
    }
    Ok(None)
}
