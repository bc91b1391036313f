use std::fmt::Write;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::ast::{BaseTy, BinOp, Cmd, Expr, Program, RandExpr, Rational, Ty, UnOp};
use crate::target::{TargetCmd, TargetProgram};

// Binding strength; larger binds tighter.
const P_TOP: u8 = 0;
const P_ITE: u8 = 1;
const P_IFF: u8 = 2;
const P_IMP: u8 = 3;
const P_OR: u8 = 4;
const P_AND: u8 = 5;
const P_NOT: u8 = 6;
const P_CMP: u8 = 7;
const P_CONS: u8 = 8;
const P_ADD: u8 = 9;
const P_MUL: u8 = 10;
const P_UNARY: u8 = 11;
const P_POSTFIX: u8 = 12;
const P_ATOM: u8 = 13;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Num(r) if r.is_negative() => P_UNARY,
        Expr::Num(_)
        | Expr::Bool(_)
        | Expr::Var(_)
        | Expr::Rand(_)
        | Expr::Hat(_)
        | Expr::DVar(_)
        | Expr::Abs(_)
        | Expr::Log(_) => P_ATOM,
        Expr::Index(..) => P_POSTFIX,
        Expr::Unary(UnOp::Neg, _) => P_UNARY,
        Expr::Unary(UnOp::Not, _) => P_NOT,
        Expr::Binary(op, ..) => match op {
            BinOp::Add | BinOp::Sub => P_ADD,
            BinOp::Mul | BinOp::Div | BinOp::Mod => P_MUL,
            BinOp::And => P_AND,
            BinOp::Or => P_OR,
            BinOp::Implies => P_IMP,
            BinOp::Iff => P_IFF,
            _ => P_CMP,
        },
        Expr::Cons(..) => P_CONS,
        Expr::Ite(..) => P_ITE,
        Expr::Forall(..) => P_TOP,
    }
}

/// Exact decimal rendering when the denominator divides a power of ten.
fn decimal(r: &Rational) -> Option<String> {
    let d = r.denom().clone();
    let (mut twos, mut fives, mut rest) = (0usize, 0usize, d.clone());
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&rest % &two).is_zero() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return None;
    }
    let k = twos.max(fives);
    let scaled = r.abs() * Rational::from_integer(num_traits::pow(BigInt::from(10), k));
    let digits = scaled.to_integer().to_string();
    if k == 0 {
        return Some(digits);
    }
    let padded = format!("{digits:0>width$}", width = k + 1);
    let (int, frac) = padded.split_at(padded.len() - k);
    Some(format!("{int}.{frac}"))
}

fn print_num(r: &Rational) -> String {
    let sign = if r.is_negative() { "-" } else { "" };
    match decimal(r) {
        Some(s) => format!("{sign}{s}"),
        None => format!("{sign}({}/{})", r.numer().abs(), r.denom()),
    }
}

fn write_expr(out: &mut String, e: &Expr, ctx: u8) {
    let p = prec(e);
    let paren = p < ctx;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Num(r) => out.push_str(&print_num(r)),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(n) | Expr::Rand(n) => out.push_str(n),
        Expr::Hat(n) => {
            out.push('^');
            out.push_str(n);
        }
        Expr::DVar(n) => {
            out.push('?');
            out.push_str(n);
        }
        Expr::Unary(UnOp::Neg, a) => {
            out.push('-');
            if matches!(**a, Expr::Num(_)) {
                out.push('(');
                write_expr(out, a, P_TOP);
                out.push(')');
            } else {
                write_expr(out, a, P_UNARY);
            }
        }
        Expr::Unary(UnOp::Not, a) => {
            out.push('!');
            if prec(a) < P_POSTFIX {
                out.push('(');
                write_expr(out, a, P_TOP);
                out.push(')');
            } else {
                write_expr(out, a, P_NOT);
            }
        }
        Expr::Binary(op, a, b) => {
            let (lp, rp) = match op {
                BinOp::Add | BinOp::Sub => (P_ADD, P_MUL),
                BinOp::Mul | BinOp::Div | BinOp::Mod => (P_MUL, P_UNARY),
                BinOp::And => (P_AND, P_NOT),
                BinOp::Or => (P_OR, P_AND),
                BinOp::Implies => (P_OR, P_IMP),
                BinOp::Iff => (P_IMP, P_IMP),
                _ => (P_CONS, P_CONS),
            };
            write_expr(out, a, lp);
            match op {
                BinOp::Mul | BinOp::Div => out.push_str(op.symbol()),
                _ => {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
            }
            write_expr(out, b, rp);
        }
        Expr::Cons(a, b) => {
            write_expr(out, a, P_ADD);
            out.push_str(" :: ");
            write_expr(out, b, P_CONS);
        }
        Expr::Index(a, i) => {
            write_expr(out, a, P_POSTFIX);
            out.push('[');
            write_expr(out, i, P_TOP);
            out.push(']');
        }
        Expr::Ite(c, a, b) => {
            write_expr(out, c, P_IFF);
            out.push_str(" ? ");
            write_expr(out, a, P_ITE);
            out.push_str(" : ");
            write_expr(out, b, P_ITE);
        }
        Expr::Abs(a) | Expr::Log(a) => {
            out.push_str(if matches!(e, Expr::Abs(_)) {
                "abs("
            } else {
                "log("
            });
            write_expr(out, a, P_TOP);
            out.push(')');
        }
        Expr::Forall(vs, body) => {
            out.push_str("forall ");
            out.push_str(&vs.join(", "));
            out.push_str(" :: ");
            write_expr(out, body, P_TOP);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, P_TOP);
    s
}

/// Print in a position where a trailing `forall` would be ambiguous.
fn print_closed(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, P_ITE);
    s
}

pub fn print_ty(t: &Ty) -> String {
    match t {
        Ty::Num(d) => format!("num[{}]", print_expr(d)),
        Ty::NumStar => "num[*]".to_string(),
        Ty::Bool => "bool".to_string(),
        Ty::List(t) => format!("list {}", print_ty(t)),
    }
}

fn print_base(t: &BaseTy) -> String {
    match t {
        BaseTy::Num => "num".to_string(),
        BaseTy::Bool => "bool".to_string(),
        BaseTy::List(t) => format!("list {}", print_base(t)),
    }
}

fn indent(n: usize) -> String {
    "  ".repeat(n)
}

fn write_cmd(out: &mut String, c: &Cmd, depth: usize) {
    let pad = indent(depth);
    match c {
        Cmd::Skip => {
            let _ = writeln!(out, "{pad}skip;");
        }
        Cmd::Assign { var, expr, .. } => {
            let _ = writeln!(out, "{pad}{var} := {};", print_expr(expr));
        }
        Cmd::Sample { var, dist, .. } => match dist {
            RandExpr::Laplace(s) => {
                let _ = writeln!(out, "{pad}{var} := lap({});", print_expr(s));
            }
            RandExpr::Uniform => {
                let _ = writeln!(out, "{pad}{var} := uniform;");
            }
        },
        Cmd::Seq(cs) => cs.iter().for_each(|c| write_cmd(out, c, depth)),
        Cmd::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let _ = writeln!(out, "{pad}if ({}) then {{", print_expr(cond));
            write_cmd(out, then_branch, depth + 1);
            if matches!(&**else_branch, Cmd::Seq(cs) if cs.is_empty()) {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                write_cmd(out, else_branch, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Cmd::While {
            cond,
            invariant,
            body,
            ..
        } => {
            let _ = write!(out, "{pad}while ({})", print_expr(cond));
            if let Some(inv) = invariant {
                let _ = write!(out, " invariant {}", print_expr(inv));
            }
            out.push_str(" {\n");
            write_cmd(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Cmd::Return { expr, .. } => {
            let _ = writeln!(out, "{pad}return {};", print_expr(expr));
        }
    }
}

pub fn print_cmd(c: &Cmd) -> String {
    let mut s = String::new();
    write_cmd(&mut s, c, 0);
    s
}

pub fn print_program(p: &Program) -> String {
    let mut s = String::new();
    let params: Vec<String> = p
        .params
        .iter()
        .map(|x| format!("{}: {}", x.name, print_ty(&x.ty)))
        .collect();
    let _ = writeln!(
        s,
        "function {}({}) returns ({}: {})",
        p.name,
        params.join(", "),
        p.ret.name,
        print_ty(&p.ret.ty)
    );
    if p.precondition != Expr::Bool(true) {
        let _ = writeln!(s, "precondition {}", print_expr(&p.precondition));
    }
    if !p.annotations.is_empty() {
        s.push_str("typedef\n");
        for (n, t) in &p.annotations {
            let _ = writeln!(s, "  {n}: {};", print_ty(t));
        }
    }
    if let Some(b) = &p.budget {
        let _ = writeln!(s, "budget {}", print_expr(b));
    }
    s.push_str("{\n");
    write_cmd(&mut s, &p.body, 1);
    s.push_str("}\n");
    s
}

const INST: &str = " /*inst*/";

fn write_target(out: &mut String, c: &TargetCmd, depth: usize) {
    let pad = indent(depth);
    match c {
        TargetCmd::Skip => {
            let _ = writeln!(out, "{pad}skip;");
        }
        TargetCmd::Assign {
            var,
            expr,
            instrumented,
            ..
        } => {
            let mark = if *instrumented { INST } else { "" };
            let _ = writeln!(out, "{pad}{var} := {};{mark}", print_expr(expr));
        }
        TargetCmd::Havoc { var, .. } => {
            let _ = writeln!(out, "{pad}havoc {var};{INST}");
        }
        TargetCmd::Havoc01 { var, .. } => {
            let _ = writeln!(out, "{pad}havoc01 {var};{INST}");
        }
        TargetCmd::Seq(cs) => cs.iter().for_each(|c| write_target(out, c, depth)),
        TargetCmd::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let _ = writeln!(out, "{pad}if ({}) then {{", print_expr(cond));
            write_target(out, then_branch, depth + 1);
            if matches!(&**else_branch, TargetCmd::Seq(cs) if cs.is_empty()) {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                write_target(out, else_branch, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        TargetCmd::While {
            cond,
            invariant,
            body,
            ..
        } => {
            let _ = write!(out, "{pad}while ({})", print_expr(cond));
            if let Some(inv) = invariant {
                let _ = write!(out, " invariant {}", print_closed(inv));
            }
            out.push_str(" {\n");
            write_target(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        TargetCmd::Return { expr, .. } => {
            let _ = writeln!(out, "{pad}return {};", print_expr(expr));
        }
    }
}

pub fn print_target(tp: &TargetProgram) -> String {
    let mut s = String::new();
    let mut params: Vec<String> = tp
        .params
        .iter()
        .map(|(n, t)| format!("{n}: {}", print_base(t)))
        .collect();
    params.extend(tp.dvars.iter().map(|d| format!("?{d}: num")));
    let _ = writeln!(
        s,
        "function {}({}) returns ({}: {})",
        tp.name,
        params.join(", "),
        tp.ret.0,
        print_base(&tp.ret.1)
    );
    if tp.precondition != Expr::Bool(true) {
        let _ = writeln!(s, "precondition {}", print_expr(&tp.precondition));
    }
    if let Some(b) = &tp.budget {
        let _ = writeln!(s, "postcondition v_eps <= {}", print_expr(b));
    }
    s.push_str("{\n");
    write_target(&mut s, &tp.body, 1);
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::rat_frac;
    use crate::parser::parse_expr;

    #[test]
    fn decimals_are_exact() {
        assert_eq!(print_num(&rat_frac(1, 2)), "0.5");
        assert_eq!(print_num(&rat_frac(-5, 4)), "-1.25");
        assert_eq!(print_num(&rat_frac(3, 1)), "3");
        assert_eq!(print_num(&rat_frac(1, 40)), "0.025");
        assert_eq!(print_num(&rat_frac(1, 3)), "(1/3)");
    }

    #[test]
    fn minimal_parentheses() {
        for s in [
            "a - (b - c)",
            "a - b - c",
            "(a ? b : c) ? d : e",
            "a ? b : c ? d : e",
            "!(a < b)",
            "-(a + b)",
            "-(2)",
            "x - -1",
            "(a :: b) :: c",
            "a :: b :: c",
            "(a ==> b) ==> c",
            "a ==> b ==> c",
            "(forall i :: i > 0) && x",
            "abs(^sum)*eps/b",
            "(q[i] + eta2 >= tT ? 2 : 0)*eps/(4*N)",
        ] {
            let e = parse_expr(s).unwrap();
            assert_eq!(print_expr(&e), s);
            assert_eq!(parse_expr(&print_expr(&e)).unwrap(), e);
        }
    }

    #[test]
    fn types_print() {
        assert_eq!(print_ty(&Ty::List(Box::new(Ty::NumStar))), "list num[*]");
        assert_eq!(print_ty(&Ty::Num(Expr::hat("sum"))), "num[^sum]");
    }
}
