//! Structural restrictions that make the typing rules sound.

use std::collections::BTreeSet;

use crate::ast::{BinOp, Cmd, DiagKind, Diagnostic, Expr, Program, RandExpr, Span, Ty};

/// Check the structural side conditions of a program. An empty result means
/// the program may be handed to the checker.
pub fn check_wellformed_program(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let written = p.body.written_vars();
    let rands = p.random_vars();

    // Distances of non-star, non-random variables may only mention
    // variables the body never writes.
    let mut annotated: Vec<(&String, &Ty)> = p.params.iter().map(|x| (&x.name, &x.ty)).collect();
    annotated.extend(p.annotations.iter());
    annotated.push((&p.ret.name, &p.ret.ty));
    for (name, ty) in annotated {
        if rands.contains(name) {
            continue;
        }
        for d in ty.distances() {
            for v in d.free_vars() {
                let base = v.strip_prefix('^').unwrap_or(&v);
                let mutable = if v.starts_with('^') {
                    written.contains(base)
                } else {
                    written.contains(&v)
                };
                if mutable {
                    out.push(Diagnostic::new(
                        DiagKind::Immutability,
                        find_assign_span(&p.body, base),
                        format!(
                            "distance of `{name}` mentions `{v}`, which is assigned in the body"
                        ),
                    ));
                }
            }
        }
    }

    check_random_uses(p, &rands, &mut out);
    check_return(&p.body, &mut out);

    p.body.walk(&mut |c| {
        let span = c.span();
        if let Cmd::Sample {
            var,
            dist: RandExpr::Laplace(scale),
            ..
        } = c
        {
            for v in scale.free_vars() {
                if written.contains(&v) {
                    out.push(Diagnostic::new(
                        DiagKind::Scale,
                        span,
                        format!("scale of `{var}` mentions mutable variable `{v}`"),
                    ));
                }
            }
        }
        if let Cmd::Assign { var, .. } = c {
            if rands.contains(var) {
                out.push(Diagnostic::new(
                    DiagKind::SingleUse,
                    span,
                    format!("random variable `{var}` is overwritten by an assignment"),
                ));
            }
        }
    });

    for (e, span) in body_exprs(&p.body) {
        if e.has_hats() {
            out.push(Diagnostic::new(
                DiagKind::HatInBody,
                span,
                "hat variables may not appear in program statements",
            ));
        }
        e.visit(&mut |x| {
            if let Expr::Binary(BinOp::Div | BinOp::Mod, _, d) = x {
                let bad = match &**d {
                    Expr::Num(r) => num_traits::Zero::is_zero(r),
                    other => other.free_vars().iter().any(|v| written.contains(v)),
                };
                if bad {
                    out.push(Diagnostic::new(
                        DiagKind::Division,
                        span,
                        format!("divisor `{d}` may be zero"),
                    ));
                }
            }
        });
    }
    out
}

fn body_exprs(c: &Cmd) -> Vec<(&Expr, Span)> {
    let mut out = Vec::new();
    fn go<'a>(c: &'a Cmd, out: &mut Vec<(&'a Expr, Span)>) {
        match c {
            Cmd::Assign { expr, span, .. } | Cmd::Return { expr, span } => out.push((expr, *span)),
            Cmd::Sample {
                dist: RandExpr::Laplace(e),
                span,
                ..
            } => out.push((e, *span)),
            Cmd::Seq(cs) => cs.iter().for_each(|c| go(c, out)),
            Cmd::If {
                cond,
                then_branch,
                else_branch,
                span,
            } => {
                out.push((cond, *span));
                go(then_branch, out);
                go(else_branch, out);
            }
            Cmd::While {
                cond, body, span, ..
            } => {
                out.push((cond, *span));
                go(body, out);
            }
            _ => {}
        }
    }
    go(c, &mut out);
    out
}

fn find_assign_span(c: &Cmd, var: &str) -> Span {
    let mut found = None;
    c.walk(&mut |x| {
        if let Cmd::Assign { var: v, span, .. } = x {
            if v == var && found.is_none() {
                found = Some(*span);
            }
        }
    });
    found.unwrap_or_default()
}

/// Reads of `name` inside the guard or expression of a single command,
/// including nested commands.
fn uses_in(c: &Cmd, name: &str) -> usize {
    let mut n = 0;
    for (e, _) in body_exprs(c) {
        n += count_occurrences(e, name);
    }
    n
}

fn count_occurrences(e: &Expr, name: &str) -> usize {
    let mut n = 0;
    e.visit(&mut |x| {
        if matches!(x, Expr::Rand(v) | Expr::Var(v) if v == name) {
            n += 1;
        }
    });
    n
}

/// Each random variable is sampled at exactly one site and read exactly once,
/// by the command that immediately follows the sample.
fn check_random_uses(p: &Program, rands: &BTreeSet<String>, out: &mut Vec<Diagnostic>) {
    for r in rands {
        let mut sites = 0;
        p.body.walk(&mut |c| {
            if matches!(c, Cmd::Sample { var, .. } if var == r) {
                sites += 1;
            }
        });
        let total = uses_in(&p.body, r);
        let mut adjacent = 0;
        let mut sample_span = Span::default();
        p.body.walk(&mut |c| {
            if let Cmd::Seq(cs) = c {
                for (k, x) in cs.iter().enumerate() {
                    if let Cmd::Sample { var, span, .. } = x {
                        if var == r {
                            sample_span = *span;
                            if let Some(next) = cs.get(k + 1) {
                                adjacent += guard_or_expr_uses(next, r);
                            }
                        }
                    }
                }
            }
        });
        if sites != 1 {
            out.push(Diagnostic::new(
                DiagKind::SingleUse,
                sample_span,
                format!("random variable `{r}` is sampled at {sites} sites"),
            ));
        }
        if total != 1 || adjacent != 1 {
            out.push(Diagnostic::new(
                DiagKind::SingleUse,
                sample_span,
                format!(
                    "random variable `{r}` must be read exactly once, by the statement after its sample"
                ),
            ));
        }
    }
}

/// Uses in the top-level expression of a command (an `if`'s guard, not its
/// branches).
fn guard_or_expr_uses(c: &Cmd, name: &str) -> usize {
    match c {
        Cmd::Assign { expr, .. } | Cmd::Return { expr, .. } => count_occurrences(expr, name),
        Cmd::If { cond, .. } | Cmd::While { cond, .. } => count_occurrences(cond, name),
        Cmd::Sample {
            dist: RandExpr::Laplace(e),
            ..
        } => count_occurrences(e, name),
        _ => 0,
    }
}

fn check_return(body: &Cmd, out: &mut Vec<Diagnostic>) {
    let top: Vec<&Cmd> = match body {
        Cmd::Seq(cs) => cs.iter().collect(),
        other => vec![other],
    };
    let mut returns = Vec::new();
    body.walk(&mut |c| {
        if let Cmd::Return { span, .. } = c {
            returns.push(*span);
        }
    });
    let last_is_return = matches!(top.last(), Some(Cmd::Return { .. }));
    let misplaced = returns.len() - usize::from(last_is_return);
    if misplaced > 0 {
        for span in returns.iter().take(misplaced) {
            out.push(Diagnostic::new(
                DiagKind::ReturnNotFinal,
                *span,
                "return must be the final command",
            ));
        }
    }
    if !last_is_return {
        out.push(Diagnostic::new(
            DiagKind::ReturnNotFinal,
            body.span(),
            "program body must end with a return",
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn diags(src: &str) -> Vec<Diagnostic> {
        check_wellformed_program(&parse_program(src).unwrap())
    }

    #[test]
    fn clean_program() {
        let src = "function F(eps: num[0], x: num[*]) returns (r: num[0]) typedef e: num[0]; y: num[0]; budget eps {
            e := lap(1 / eps); y := x + e; return 0; }";
        assert_eq!(diags(src), vec![]);
    }

    #[test]
    fn mutable_distance_dependency() {
        let src = "function F(eps: num[0]) returns (r: num[0]) typedef x: num[y]; y: num[0]; {
            y := 1; x := 2; return 0; }";
        let d = diags(src);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].kind, DiagKind::Immutability);
        assert_eq!(d[0].span.line, 2);
    }

    #[test]
    fn non_adjacent_double_use() {
        let src =
            "function F(eps: num[0]) returns (r: num[0]) typedef e: num[0]; x: num[0]; y: num[0]; {
            e := lap(1 / eps); x := e; y := e; return 0; }";
        let d = diags(src);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].kind, DiagKind::SingleUse);
    }

    #[test]
    fn non_final_return() {
        let src = "function F(eps: num[0]) returns (r: num[0]) { return 1; r := 0; }";
        let d = diags(src);
        assert!(d.iter().all(|x| x.kind == DiagKind::ReturnNotFinal));
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn mutable_divisor_and_hat_in_body() {
        let src = "function F(eps: num[0]) returns (r: num[0]) { y := 1; z := 2 / y; w := ^y; return 0; }";
        let kinds: Vec<DiagKind> = diags(src).into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagKind::Division));
        assert!(kinds.contains(&DiagKind::HatInBody));
    }

    #[test]
    fn mutable_scale() {
        let src = "function F(eps: num[0]) returns (r: num[0]) typedef e: num[0]; {
            s := 1; e := lap(s); r := e; return r; }";
        let kinds: Vec<DiagKind> = diags(src).into_iter().map(|d| d.kind).collect();
        assert_eq!(kinds, vec![DiagKind::Scale]);
    }
}
