//! Canonical forms for arithmetic terms.
//!
//! Numeric terms are flattened into sums of monomials with rational
//! coefficients and integer exponents over atoms. Anything that is not a
//! ring operation (`abs`, `log`, `mod`, ternaries, list indexing) becomes an
//! atom whose children are normalized recursively. Two distances are
//! considered equal when their difference normalizes to zero.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::ast::{BinOp, Expr, Rational, UnOp};

type Mono = Vec<(Expr, i32)>;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
struct Poly(BTreeMap<Mono, Rational>);

impl Poly {
    fn constant(r: Rational) -> Poly {
        let mut m = BTreeMap::new();
        if !r.is_zero() {
            m.insert(Vec::new(), r);
        }
        Poly(m)
    }

    fn atom(e: Expr) -> Poly {
        let mut m = BTreeMap::new();
        m.insert(vec![(e, 1)], Rational::one());
        Poly(m)
    }

    fn as_constant(&self) -> Option<Rational> {
        match self.0.len() {
            0 => Some(Rational::zero()),
            1 => self.0.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    fn add_term(&mut self, mono: Mono, c: Rational) {
        let entry = self.0.entry(mono.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.0.remove(&mono);
        }
    }

    fn add(mut self, other: &Poly) -> Poly {
        for (m, c) in &other.0 {
            self.add_term(m.clone(), c.clone());
        }
        self
    }

    fn scale(&self, k: &Rational) -> Poly {
        if k.is_zero() {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    fn neg(&self) -> Poly {
        self.scale(&-Rational::one())
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                out.add_term(mono_mul(m1, m2), c1 * c2);
            }
        }
        out
    }

    /// Reciprocal of a single-monomial polynomial.
    fn recip(&self) -> Option<Poly> {
        if self.0.len() != 1 {
            return None;
        }
        let (m, c) = self.0.iter().next()?;
        let inv: Mono = m.iter().map(|(a, k)| (a.clone(), -k)).collect();
        let mut out = BTreeMap::new();
        out.insert(inv, c.recip());
        Some(Poly(out))
    }

    fn leading_negative(&self) -> bool {
        self.0.values().next().is_some_and(|c| c.is_negative())
    }
}

fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    let mut acc: BTreeMap<Expr, i32> = BTreeMap::new();
    for (x, k) in a.iter().chain(b.iter()) {
        *acc.entry(x.clone()).or_insert(0) += k;
    }
    acc.into_iter().filter(|(_, k)| *k != 0).collect()
}

/// Normalize any expression. Numeric terms become canonical polynomials;
/// boolean structure is kept with normalized operands and folded constants.
pub fn normalize(e: &Expr) -> Expr {
    match e {
        Expr::Bool(_) => e.clone(),
        Expr::Unary(UnOp::Not, a) => match normalize(a) {
            Expr::Bool(b) => Expr::Bool(!b),
            a => Expr::not(a),
        },
        Expr::Binary(op, a, b) if op.is_comparison() => {
            let (a, b) = (normalize(a), normalize(b));
            match (a.as_num(), b.as_num()) {
                (Some(x), Some(y)) => Expr::Bool(compare(*op, x, y)),
                _ => Expr::bin(*op, a, b),
            }
        }
        Expr::Binary(op, a, b) if op.is_logical() => {
            let (a, b) = (normalize(a), normalize(b));
            fold_logical(*op, a, b)
        }
        Expr::Cons(a, b) => Expr::cons(normalize(a), normalize(b)),
        Expr::Forall(vs, body) => match normalize(body) {
            Expr::Bool(b) => Expr::Bool(b),
            body => Expr::forall(vs.clone(), body),
        },
        _ => from_poly(&to_poly(e)),
    }
}

fn compare(op: BinOp, x: &Rational, y: &Rational) -> bool {
    match op {
        BinOp::Lt => x < y,
        BinOp::Gt => x > y,
        BinOp::Le => x <= y,
        BinOp::Ge => x >= y,
        BinOp::Eq => x == y,
        BinOp::Ne => x != y,
        _ => unreachable!("not a comparison"),
    }
}

fn fold_logical(op: BinOp, a: Expr, b: Expr) -> Expr {
    use Expr::Bool;
    match (op, &a, &b) {
        (BinOp::And, Bool(true), _) => b,
        (BinOp::And, _, Bool(true)) => a,
        (BinOp::And, Bool(false), _) | (BinOp::And, _, Bool(false)) => Bool(false),
        (BinOp::Or, Bool(false), _) => b,
        (BinOp::Or, _, Bool(false)) => a,
        (BinOp::Or, Bool(true), _) | (BinOp::Or, _, Bool(true)) => Bool(true),
        (BinOp::Implies, Bool(true), _) => b,
        (BinOp::Implies, Bool(false), _) | (BinOp::Implies, _, Bool(true)) => Bool(true),
        (BinOp::Iff, Bool(x), Bool(y)) => Bool(x == y),
        _ => Expr::bin(op, a, b),
    }
}

fn to_poly(e: &Expr) -> Poly {
    match e {
        Expr::Num(r) => Poly::constant(r.clone()),
        Expr::Var(_) | Expr::Rand(_) | Expr::Hat(_) | Expr::DVar(_) | Expr::Bool(_) => {
            Poly::atom(e.clone())
        }
        Expr::Unary(UnOp::Neg, a) => to_poly(a).neg(),
        Expr::Binary(BinOp::Add, a, b) => to_poly(a).add(&to_poly(b)),
        Expr::Binary(BinOp::Sub, a, b) => to_poly(a).add(&to_poly(b).neg()),
        Expr::Binary(BinOp::Mul, a, b) => to_poly(a).mul(&to_poly(b)),
        Expr::Binary(BinOp::Div, a, b) => {
            let pb = to_poly(b);
            if pb.0.is_empty() {
                return Poly::atom(Expr::div(normalize(a), Expr::zero()));
            }
            match pb.recip() {
                Some(r) => to_poly(a).mul(&r),
                None => to_poly(a).mul(&Poly::atom(Expr::div(Expr::int(1), from_poly(&pb)))),
            }
        }
        Expr::Binary(BinOp::Mod, a, b) => {
            let (a, b) = (normalize(a), normalize(b));
            Poly::atom(Expr::bin(BinOp::Mod, a, b))
        }
        Expr::Ite(c, a, b) => {
            let c = normalize(c);
            match c {
                Expr::Bool(true) => return to_poly(a),
                Expr::Bool(false) => return to_poly(b),
                _ => {}
            }
            let (pa, pb) = (to_poly(a), to_poly(b));
            if pa == pb {
                return pa;
            }
            Poly::atom(Expr::ite(c, from_poly(&pa), from_poly(&pb)))
        }
        Expr::Abs(a) => abs_poly(to_poly(a)),
        Expr::Log(a) => {
            let pa = to_poly(a);
            if pa.as_constant().is_some_and(|c| c.is_one()) {
                return Poly::default();
            }
            Poly::atom(Expr::log(from_poly(&pa)))
        }
        Expr::Index(a, i) => Poly::atom(Expr::index(normalize(a), normalize(i))),
        _ => Poly::atom(normalize(e)),
    }
}

fn abs_poly(p: Poly) -> Poly {
    if let Some(c) = p.as_constant() {
        return Poly::constant(c.abs());
    }
    if p.0.len() == 1 {
        let (m, c) = p.0.iter().next().unwrap();
        if !c.is_one() {
            let unit = Poly(std::iter::once((m.clone(), Rational::one())).collect());
            return abs_poly(unit).scale(&c.abs());
        }
        if let [(Expr::Ite(cond, a, b), 1)] = m.as_slice() {
            let pa = abs_poly(to_poly(a));
            let pb = abs_poly(to_poly(b));
            if pa == pb {
                return pa;
            }
            return Poly::atom(Expr::ite((**cond).clone(), from_poly(&pa), from_poly(&pb)));
        }
    }
    let p = if p.leading_negative() { p.neg() } else { p };
    Poly::atom(Expr::abs(from_poly(&p)))
}

/// Compound atoms print before plain names inside a product.
fn factor_key(e: &Expr) -> (u8, &Expr) {
    let rank = match e {
        Expr::Var(_) | Expr::Rand(_) | Expr::Hat(_) | Expr::DVar(_) => 2,
        Expr::Index(..) => 1,
        _ => 0,
    };
    (rank, e)
}

fn product(factors: Vec<Expr>) -> Option<Expr> {
    factors.into_iter().reduce(Expr::mul)
}

fn mono_to_expr(coef: &Rational, mono: &Mono) -> Expr {
    let c = coef.abs();
    if mono.is_empty() {
        return Expr::Num(c);
    }
    let mut num_atoms: Vec<(&Expr, i32)> = mono
        .iter()
        .filter(|(_, k)| *k > 0)
        .map(|(a, k)| (a, *k))
        .collect();
    let mut den_atoms: Vec<(&Expr, i32)> = mono
        .iter()
        .filter(|(_, k)| *k < 0)
        .map(|(a, k)| (a, -*k))
        .collect();
    num_atoms.sort_by(|x, y| factor_key(x.0).cmp(&factor_key(y.0)));
    den_atoms.sort_by(|x, y| factor_key(x.0).cmp(&factor_key(y.0)));

    let mut num = Vec::new();
    if !c.numer().is_one() || num_atoms.is_empty() {
        num.push(Expr::Num(Rational::from_integer(c.numer().clone())));
    }
    for (a, k) in num_atoms {
        for _ in 0..k {
            num.push(a.clone());
        }
    }
    let mut den = Vec::new();
    if !c.denom().is_one() {
        den.push(Expr::Num(Rational::from_integer(c.denom().clone())));
    }
    for (a, k) in den_atoms {
        for _ in 0..k {
            den.push(a.clone());
        }
    }
    let num = product(num).expect("numerator is never empty");
    match product(den) {
        None => num,
        Some(d) => Expr::div(num, d),
    }
}

/// Order of summands when printing: constants, hats, indexed terms, then
/// plain names and compound atoms.
fn term_key(m: &Mono) -> Vec<(u8, &Expr, i32)> {
    m.iter()
        .map(|(a, k)| {
            let rank = match a {
                Expr::Hat(_) => 0,
                Expr::Index(..) => 1,
                Expr::Var(_) => 2,
                Expr::Rand(_) => 3,
                Expr::DVar(_) => 4,
                _ => 5,
            };
            (rank, a, *k)
        })
        .collect()
}

fn from_poly(p: &Poly) -> Expr {
    let mut terms: Vec<(&Mono, &Rational)> = p.0.iter().collect();
    terms.sort_by(|x, y| term_key(x.0).cmp(&term_key(y.0)));
    let mut acc: Option<Expr> = None;
    for (m, c) in terms {
        let term = mono_to_expr(c, m);
        let neg = c.is_negative();
        acc = Some(match acc {
            None if neg => match term {
                Expr::Num(r) => Expr::Num(-r),
                t => Expr::neg(t),
            },
            None => term,
            Some(a) if neg => Expr::sub(a, term),
            Some(a) => Expr::add(a, term),
        });
    }
    acc.unwrap_or_else(Expr::zero)
}

/// Solve `e == 0` for the atom `x` when `x` occurs exactly once, linearly,
/// and nowhere inside other atoms.
pub fn solve_linear(e: &Expr, x: &Expr) -> Option<Expr> {
    let p = to_poly(e);
    let unit: Mono = vec![(x.clone(), 1)];
    let coef = p.0.get(&unit)?.clone();
    let mut rest = p.clone();
    rest.0.remove(&unit);
    let mentions = |a: &Expr| {
        let mut hit = false;
        a.visit(&mut |y| hit |= y == x);
        hit
    };
    if rest.0.keys().any(|m| m.iter().any(|(a, _)| mentions(a))) {
        return None;
    }
    Some(from_poly(&rest.scale(&(-Rational::one() / coef))))
}

pub fn is_zero(e: &Expr) -> bool {
    normalize(e).is_zero_literal()
}

/// Equality of distances modulo normalization.
pub fn same_distance(a: &Expr, b: &Expr) -> bool {
    a == b || is_zero(&Expr::sub(a.clone(), b.clone()))
}

/// The rational value of a closed arithmetic term.
pub fn const_value(e: &Expr) -> Option<Rational> {
    match normalize(e) {
        Expr::Num(r) => Some(r),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, print_expr};

    fn n(s: &str) -> String {
        print_expr(&normalize(&parse_expr(s).unwrap()))
    }

    #[test]
    fn linear_solving() {
        let x = Expr::dvar("a");
        let e = parse_expr("^sum + ^q[i] + ?a").unwrap();
        assert_eq!(solve_linear(&e, &x).unwrap().to_string(), "-^sum - ^q[i]");
        let e = parse_expr("2 * ?a - eps").unwrap();
        assert_eq!(solve_linear(&e, &x).unwrap().to_string(), "eps/2");
        let e = parse_expr("?a * ?a + 1").unwrap();
        assert!(solve_linear(&e, &x).is_none());
        let e = parse_expr("?a + (?a > 0 ? 1 : 0)").unwrap();
        assert!(solve_linear(&e, &x).is_none());
    }

    #[test]
    fn folds_constants() {
        assert_eq!(n("0 + 1"), "1");
        assert_eq!(n("2 * 3 - 6"), "0");
        assert_eq!(n("1 / 4 + 1 / 4"), "0.5");
    }

    #[test]
    fn sorts_and_cancels_sums() {
        assert_eq!(n("^sum + ^q[i] - ^sum"), "^q[i]");
        assert_eq!(n("^q[i] + ^sum"), n("^sum + ^q[i]"));
        assert_eq!(n("-(^sum) - ^q[i]"), "-^sum - ^q[i]");
    }

    #[test]
    fn cost_terms_print_compactly() {
        assert_eq!(n("abs(1) / (2 / eps)"), "eps/2");
        assert_eq!(n("abs(-^sum) / (b / eps)"), "abs(^sum)*eps/b");
        assert_eq!(
            n("abs(q[i] + eta2 >= tT ? 2 : 0) / (4 * N / eps)"),
            "(q[i] + eta2 >= tT ? 2 : 0)*eps/(4*N)"
        );
        assert_eq!(n("abs(-^q[i]) / (3 * N / eps)"), "abs(^q[i])*eps/(3*N)");
    }

    #[test]
    fn cancels_quotients() {
        assert_eq!(n("eps / 2 + N * (2 * eps / (4 * N))"), "eps");
    }

    #[test]
    fn ite_with_equal_branches_collapses() {
        assert_eq!(n("x > 0 ? a + 1 : 1 + a"), "1 + a");
        assert_eq!(n("1 > 0 ? a : b"), "a");
    }

    #[test]
    fn abs_is_sign_canonical() {
        assert_eq!(n("abs(-x + y)"), n("abs(x - y)"));
        assert_eq!(n("abs(-2 * x)"), "2*abs(x)");
    }

    #[test]
    fn log_of_one_vanishes() {
        assert_eq!(n("log(1 + 0)"), "0");
        assert_eq!(n("1 + (t > 0 ? 0 : 0)"), "1");
    }

    #[test]
    fn same_distance_modulo_order() {
        let a = parse_expr("?a + ^q[i]").unwrap();
        let b = parse_expr("^q[i] + ?a").unwrap();
        assert!(same_distance(&a, &b));
        assert!(!same_distance(&a, &parse_expr("?a").unwrap()));
    }

    #[test]
    fn boolean_structure_folds() {
        assert_eq!(n("1 < 2 && x > 0"), "x > 0");
        assert_eq!(n("!(1 > 2)"), "true");
    }
}
