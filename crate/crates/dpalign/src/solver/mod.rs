//! SMT-LIB 2 encoding of constraints, an external solver driver, and cost
//! minimization over distance variables.

mod optimize;
mod process;
pub mod sexp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use num_traits::{One, Signed};
use serde::Serialize;
use thiserror::Error;

use crate::ast::{BaseTy, BinOp, Expr, Rational, UnOp};
use crate::checker::Constraint;
use crate::normalize::const_value;

pub use optimize::{check_pinned, minimize_cost, MinimizeOutcome};
pub use process::{run, run_text};

/// Solver process configuration.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub path: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
    /// Directory where every script is written before it is run.
    pub keep_smt: Option<PathBuf>,
    /// Restrict distance variables to integers during minimization.
    pub integer_dvars: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let path = std::env::var_os("LDP_SOLVER")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("z3"));
        SolverConfig {
            path,
            args: vec!["-in".into(), "-smt2".into()],
            timeout: Duration::from_secs(30),
            keep_smt: None,
            integer_dvars: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("could not start solver `{path}`: {source}")]
    Spawn {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error talking to the solver: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected solver output: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum ModelValue {
    Num(#[serde(serialize_with = "ser_rational")] Rational),
    Bool(bool),
    Other(String),
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::parser::print_expr(&Expr::Num(r.clone())))
}

impl std::fmt::Display for ModelValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelValue::Num(r) => write!(f, "{}", Expr::Num(r.clone())),
            ModelValue::Bool(b) => write!(f, "{b}"),
            ModelValue::Other(s) => f.write_str(s),
        }
    }
}

/// Values keyed by the surface syntax of the queried term (`eta2`, `^q[i]`).
pub type Model = BTreeMap<String, ModelValue>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "model", rename_all = "lowercase")]
pub enum SolverVerdict {
    Valid,
    Invalid(Model),
    Sat(Model),
    Unsat,
    Unknown(String),
    Timeout,
}

impl SolverVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, SolverVerdict::Valid)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverVerdict::Valid => "valid",
            SolverVerdict::Invalid(_) => "invalid",
            SolverVerdict::Sat(_) => "sat",
            SolverVerdict::Unsat => "unsat",
            SolverVerdict::Unknown(_) => "unknown",
            SolverVerdict::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Negate the conjunction; unsat means every constraint is valid.
    Validity,
    /// Distance variables free, everything else universally quantified.
    Satisfiability,
    /// As satisfiability, plus an objective to minimize.
    Minimize(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmtScript {
    pub name: String,
    pub mode: Mode,
    pub text: String,
    /// Terms requested with `get-value`, as (surface name, SMT term).
    pub values: Vec<(String, String)>,
    /// Set when some term has no encoding; running yields `Unknown`.
    pub unsupported: Option<String>,
}

pub const PREAMBLE: &str = "(set-option :produce-models true)
(set-logic ALL)
(define-fun ldp_abs ((x Real)) Real (ite (>= x 0.0) x (- x)))
(declare-fun ldp_mod (Real Real) Real)
";

/// SMT symbol for a (possibly prefixed) name.
pub fn symbol(name: &str) -> String {
    format!("|{name}|")
}

pub fn sort_of(b: &BaseTy) -> String {
    match b {
        BaseTy::Num => "Real".into(),
        BaseTy::Bool => "Bool".into(),
        BaseTy::List(e) => format!("(Array Real {})", sort_of(e)),
    }
}

pub fn rational_literal(r: &Rational) -> String {
    let abs = r.abs();
    let body = if abs.is_integer() {
        format!("{}.0", abs.numer())
    } else {
        format!("(/ {}.0 {}.0)", abs.numer(), abs.denom())
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no SMT encoding for `{0}`")]
pub struct Unsupported(pub String);

/// Encode an expression. Binders of enclosing quantifiers are Real.
pub fn encode(e: &Expr) -> Result<String, Unsupported> {
    Encoder::default().encode(e)
}

/// An encoded numeric term. `int` is present when the term is integer
/// valued and can be written in the Int sort; `var` records whether an
/// Int-sorted name occurs in it.
struct Term {
    int: Option<String>,
    real: String,
    var: bool,
}

impl Term {
    fn real(real: String) -> Term {
        Term {
            int: None,
            real,
            var: false,
        }
    }

    fn int(int: String) -> Term {
        Term {
            real: format!("(to_real {int})"),
            int: Some(int),
            var: true,
        }
    }
}

/// Int forms of both operands when at least one mentions an Int name.
fn int_pair<'a>(a: &'a Term, b: &'a Term) -> Option<(&'a String, &'a String)> {
    if a.var || b.var {
        a.int.as_ref().zip(b.int.as_ref())
    } else {
        None
    }
}

/// Expression encoder. Names in `ints` are declared with the Int sort;
/// integer subterms stay in Int and are coerced only where they meet reals.
#[derive(Clone, Debug, Default)]
pub struct Encoder {
    pub ints: BTreeSet<String>,
    bound: Vec<String>,
}

impl Encoder {
    pub fn new(ints: BTreeSet<String>) -> Encoder {
        Encoder {
            ints,
            bound: Vec::new(),
        }
    }

    pub fn sort_of(&self, name: &str, b: &BaseTy) -> String {
        if self.ints.contains(name) && *b == BaseTy::Num {
            "Int".into()
        } else {
            sort_of(b)
        }
    }

    pub fn encode(&mut self, e: &Expr) -> Result<String, Unsupported> {
        Ok(self.term(e)?.real)
    }

    fn is_int_name(&self, n: &str) -> bool {
        self.ints.contains(n) && !self.bound.iter().any(|b| b == n)
    }

    fn term(&mut self, e: &Expr) -> Result<Term, Unsupported> {
        Ok(match e {
            Expr::Num(r) if r.is_integer() => {
                let n = r.numer().abs();
                let int = if r.is_negative() {
                    format!("(- {n})")
                } else {
                    n.to_string()
                };
                Term {
                    int: Some(int),
                    real: rational_literal(r),
                    var: false,
                }
            }
            Expr::Num(r) => Term::real(rational_literal(r)),
            Expr::Bool(b) => Term::real(b.to_string()),
            Expr::Var(n) | Expr::Rand(n) if self.is_int_name(n) => Term::int(symbol(n)),
            Expr::Var(n) | Expr::Rand(n) => Term::real(symbol(n)),
            Expr::Hat(n) => Term::real(symbol(&format!("^{n}"))),
            Expr::DVar(n) => Term::real(symbol(&format!("?{n}"))),
            Expr::Unary(UnOp::Not, a) => Term::real(format!("(not {})", self.encode(a)?)),
            Expr::Unary(UnOp::Neg, a) => {
                let a = self.term(a)?;
                match a.int.filter(|_| a.var) {
                    Some(i) => Term::int(format!("(- {i})")),
                    None => Term::real(format!("(- {})", a.real)),
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (self.term(a)?, self.term(b)?);
                let both = int_pair(&a, &b);
                let (ra, rb) = (&a.real, &b.real);
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        let f = op.symbol();
                        match both {
                            Some((x, y)) => Term::int(format!("({f} {x} {y})")),
                            None => Term::real(format!("({f} {ra} {rb})")),
                        }
                    }
                    BinOp::Div => Term::real(format!("(/ {ra} {rb})")),
                    BinOp::Mod => match (both, b.int.as_ref().filter(|k| is_positive_literal(k))) {
                        (Some((x, y)), _) => Term::int(format!("(mod {x} {y})")),
                        (None, Some(k)) => Term::real(format!(
                            "(- {ra} (* {k}.0 (to_real (to_int (/ {ra} {k}.0)))))"
                        )),
                        _ => Term::real(format!("(ldp_mod {ra} {rb})")),
                    },
                    BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq => {
                        let f = match op {
                            BinOp::Eq => "=",
                            other => other.symbol(),
                        };
                        match both {
                            Some((x, y)) => Term::real(format!("({f} {x} {y})")),
                            None => Term::real(format!("({f} {ra} {rb})")),
                        }
                    }
                    BinOp::Ne => match both {
                        Some((x, y)) => Term::real(format!("(not (= {x} {y}))")),
                        None => Term::real(format!("(not (= {ra} {rb}))")),
                    },
                    BinOp::Iff => Term::real(format!("(= {ra} {rb})")),
                    BinOp::And => Term::real(format!("(and {ra} {rb})")),
                    BinOp::Or => Term::real(format!("(or {ra} {rb})")),
                    BinOp::Implies => Term::real(format!("(=> {ra} {rb})")),
                }
            }
            Expr::Index(l, i) => {
                Term::real(format!("(select {} {})", self.encode(l)?, self.encode(i)?))
            }
            Expr::Ite(c, a, b) => {
                let c = self.encode(c)?;
                let (a, b) = (self.term(a)?, self.term(b)?);
                match int_pair(&a, &b) {
                    Some((x, y)) => Term::int(format!("(ite {c} {x} {y})")),
                    None => Term::real(format!("(ite {c} {} {})", a.real, b.real)),
                }
            }
            Expr::Abs(a) => Term::real(format!("(ldp_abs {})", self.encode(a)?)),
            Expr::Log(a) => match const_value(a) {
                Some(r) if r.is_one() => Term::real("0.0".into()),
                _ => return Err(Unsupported(e.to_string())),
            },
            Expr::Forall(bs, body) => {
                let binders: Vec<String> =
                    bs.iter().map(|b| format!("({} Real)", symbol(b))).collect();
                let depth = self.bound.len();
                self.bound.extend(bs.iter().cloned());
                let body = self.encode(body);
                self.bound.truncate(depth);
                Term::real(format!("(forall ({}) {})", binders.join(" "), body?))
            }
            Expr::Cons(..) => return Err(Unsupported(e.to_string())),
        })
    }
}

fn is_positive_literal(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_digit()) && s != "0" && !s.is_empty()
}

/// Ground select terms outside quantifiers, outermost first.
pub fn ground_selects(e: &Expr, out: &mut BTreeSet<Expr>) {
    match e {
        Expr::Forall(..) => {}
        Expr::Index(..) if e.free_vars().iter().all(|v| !v.starts_with('?')) => {
            out.insert(e.clone());
            for c in e.children() {
                ground_selects(c, out);
            }
        }
        _ => {
            for c in e.children() {
                ground_selects(c, out);
            }
        }
    }
}

fn collect_sorts(constraints: &[Constraint]) -> BTreeMap<String, BaseTy> {
    let mut sorts = BTreeMap::new();
    for c in constraints {
        for (k, v) in &c.sorts {
            sorts.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    sorts
}

/// Serialize constraints for one solver query.
pub fn emit(constraints: &[Constraint], mode: Mode) -> SmtScript {
    emit_with(constraints, mode, &BTreeSet::new())
}

/// As [`emit`], declaring the names in `ints` with the Int sort.
pub fn emit_with(constraints: &[Constraint], mode: Mode, ints: &BTreeSet<String>) -> SmtScript {
    let mut enc = Encoder::new(ints.clone());
    let mut text = String::from(PREAMBLE);
    let mut values = Vec::new();
    let mut unsupported = None;
    let sorts = collect_sorts(constraints);

    let mut formulas = Vec::new();
    for c in constraints {
        match (enc.encode(&c.hypothesis), enc.encode(&c.conclusion)) {
            (Ok(h), Ok(k)) => formulas.push((c, format!("(=> {h} {k})"))),
            (Err(u), _) | (_, Err(u)) => {
                unsupported.get_or_insert(u.0);
            }
        }
    }

    match &mode {
        Mode::Validity => {
            for (n, s) in &sorts {
                let _ = writeln!(text, "(declare-const {} {})", symbol(n), enc.sort_of(n, s));
            }
            let body: Vec<&str> = formulas.iter().map(|(_, f)| f.as_str()).collect();
            let _ = writeln!(text, "(assert (not (and true {})))", body.join(" "));
            text.push_str("(check-sat)\n");
            for (n, s) in &sorts {
                if !matches!(s, BaseTy::List(_)) {
                    values.push((n.clone(), symbol(n)));
                }
            }
            let mut sel = BTreeSet::new();
            for c in constraints {
                ground_selects(&c.hypothesis, &mut sel);
                ground_selects(&c.conclusion, &mut sel);
            }
            for s in sel {
                if let Ok(t) = enc.encode(&s) {
                    values.push((s.to_string(), t));
                }
            }
        }
        Mode::Satisfiability | Mode::Minimize(_) => {
            for (n, s) in sorts.iter().filter(|(n, _)| n.starts_with('?')) {
                let _ = writeln!(text, "(declare-const {} {})", symbol(n), enc.sort_of(n, s));
                values.push((n.clone(), symbol(n)));
            }
            for (c, f) in &formulas {
                let q: Vec<String> = c
                    .quantified()
                    .iter()
                    .map(|(n, s)| format!("({} {})", symbol(n), enc.sort_of(n, s)))
                    .collect();
                if q.is_empty() {
                    let _ = writeln!(text, "(assert {f})");
                } else {
                    let _ = writeln!(text, "(assert (forall ({}) {f}))", q.join(" "));
                }
            }
            if let Mode::Minimize(obj) = &mode {
                match enc.encode(obj) {
                    Ok(o) => {
                        let _ = writeln!(text, "(minimize {o})");
                    }
                    Err(u) => {
                        unsupported.get_or_insert(u.0);
                    }
                }
            }
            text.push_str("(check-sat)\n");
        }
    }
    if !values.is_empty() {
        let terms: Vec<&str> = values.iter().map(|(_, t)| t.as_str()).collect();
        let _ = writeln!(text, "(get-value ({}))", terms.join(" "));
    }
    SmtScript {
        name: "query".into(),
        mode,
        text,
        values,
        unsupported,
    }
}

/// Validity of a single constraint.
pub fn check_valid(c: &Constraint, cfg: &SolverConfig) -> Result<SolverVerdict, SolverError> {
    let mut script = emit(std::slice::from_ref(c), Mode::Validity);
    script.name = sanitize(&c.label);
    run(&script, cfg)
}

pub(crate) fn sanitize(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "query".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::rat_frac;
    use crate::checker::ConstraintKind;
    use crate::parser::parse_expr;

    fn constraint(h: &str, c: &str) -> Constraint {
        let hypothesis = parse_expr(h).unwrap();
        let conclusion = parse_expr(c).unwrap();
        let mut sorts = BTreeMap::new();
        for v in hypothesis
            .free_vars()
            .into_iter()
            .chain(conclusion.free_vars())
        {
            let s = if v == "q" || v == "^q" {
                BaseTy::List(Box::new(BaseTy::Num))
            } else {
                BaseTy::Num
            };
            sorts.insert(v, s);
        }
        Constraint {
            kind: ConstraintKind::Odot,
            label: "t".into(),
            span: Default::default(),
            sorts,
            hypothesis,
            conclusion,
        }
    }

    #[test]
    fn literals() {
        assert_eq!(rational_literal(&rat_frac(-3, 1)), "(- 3.0)");
        assert_eq!(rational_literal(&rat_frac(1, 3)), "(/ 1.0 3.0)");
    }

    #[test]
    fn encoding() {
        let e = parse_expr("forall j :: j >= i ==> ^q[j] == 0").unwrap();
        assert_eq!(
            encode(&e).unwrap(),
            "(forall ((|j| Real)) (=> (>= |j| |i|) (= (select |^q| |j|) 0.0)))"
        );
        let e = parse_expr("abs(?a) + (x != 1 ? 2 : 0)").unwrap();
        assert_eq!(
            encode(&e).unwrap(),
            "(+ (ldp_abs |?a|) (ite (not (= |x| 1.0)) 2.0 0.0))"
        );
        assert!(encode(&parse_expr("log(x)").unwrap()).is_err());
        assert_eq!(encode(&parse_expr("log(2 - 1)").unwrap()).unwrap(), "0.0");
    }

    #[test]
    fn integer_names() {
        let mut enc = Encoder::new(["c".to_string(), "n".to_string()].into());
        let e = parse_expr("c + 1 <= n && v == c * eps / (2 * n) && n mod 1 == 0").unwrap();
        assert_eq!(
            enc.encode(&e).unwrap(),
            "(and (and (<= (+ |c| 1) |n|) (= |v| (/ (* (to_real |c|) |eps|) (to_real (* 2 |n|))))) (= (mod |n| 1) 0))"
        );
        let e = parse_expr("forall c :: c >= 0").unwrap();
        assert_eq!(
            enc.encode(&e).unwrap(),
            "(forall ((|c| Real)) (>= |c| 0.0))"
        );
        assert_eq!(
            encode(&parse_expr("x mod 2").unwrap()).unwrap(),
            "(- |x| (* 2.0 (to_real (to_int (/ |x| 2.0)))))"
        );
        assert_eq!(enc.sort_of("c", &BaseTy::Num), "Int");
    }

    #[test]
    fn emit_is_deterministic() {
        let cs = vec![
            constraint(
                "forall j :: -1 <= ^q[j] && ^q[j] <= 1",
                "q[i] + ^q[i] >= ?a",
            ),
            constraint("true", "x > 0"),
        ];
        let a = emit(&cs, Mode::Validity);
        let b = emit(&cs, Mode::Validity);
        assert_eq!(a, b);
        assert!(a.text.contains("(declare-const |^q| (Array Real Real))"));
        assert!(a
            .text
            .contains("(get-value (|?a| |i| |x| (select |q| |i|) (select |^q| |i|)))"));
        let m = emit(&cs, Mode::Minimize(parse_expr("abs(?a)").unwrap()));
        assert!(m.text.contains("(minimize (ldp_abs |?a|))"));
        assert!(m.text.contains(
            "(assert (forall ((|^q| (Array Real Real)) (|i| Real) (|q| (Array Real Real)))"
        ));
    }
}
