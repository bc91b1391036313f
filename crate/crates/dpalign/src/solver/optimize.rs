//! Cost minimization over distance variables.
//!
//! Optimization with quantified constraints is outside what current solvers
//! support reliably, so the universally quantified program variables are
//! eliminated first (`qe` tactic), the optimum is found on the resulting
//! quantifier-free formula over distance variables, and the candidate is
//! then re-checked against the original constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::process::{parse_model, run_text, solver_error};
use super::sexp::{parse_all, Sexp};
use super::{
    check_valid, encode, ground_selects, sort_of, symbol, ModelValue, SolverConfig, SolverError,
    SolverVerdict, PREAMBLE,
};
use crate::ast::{BaseTy, BinOp, Expr, Rational};
use crate::checker::Constraint;
use crate::normalize::{const_value, normalize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum MinimizeOutcome {
    Optimal {
        #[serde(serialize_with = "ser_assignment")]
        assignment: BTreeMap<String, Rational>,
        #[serde(serialize_with = "ser_rat")]
        objective: Rational,
    },
    Unsat,
    Unknown {
        reason: String,
    },
    Timeout,
}

fn ser_rat<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&Expr::Num(r.clone()).to_string())
}

fn ser_assignment<S: serde::Serializer>(
    a: &BTreeMap<String, Rational>,
    s: S,
) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(a.len()))?;
    for (k, v) in a {
        m.serialize_entry(k, &Expr::Num(v.clone()).to_string())?;
    }
    m.end()
}

fn unknown(reason: impl Into<String>) -> MinimizeOutcome {
    MinimizeOutcome::Unknown {
        reason: reason.into(),
    }
}

/// Substitute a distance-variable assignment into a constraint.
pub fn pin(c: &Constraint, assignment: &BTreeMap<String, Rational>) -> Constraint {
    let map: BTreeMap<String, Expr> = assignment
        .iter()
        .map(|(k, v)| (format!("?{k}"), Expr::Num(v.clone())))
        .collect();
    c.subst_map(&map)
}

/// Check whether an assignment of distance variables satisfies every
/// residual constraint: `Sat` when all become valid.
pub fn check_pinned(
    residual: &[Constraint],
    assignment: &BTreeMap<String, Rational>,
    cfg: &SolverConfig,
) -> Result<SolverVerdict, SolverError> {
    for c in residual {
        let pinned = pin(c, assignment);
        if pinned.is_residual() {
            return Ok(SolverVerdict::Unknown(format!(
                "assignment leaves distance variables in `{}`",
                c.label
            )));
        }
        match check_valid(&pinned, cfg)? {
            SolverVerdict::Valid => {}
            SolverVerdict::Invalid(m) => return Ok(SolverVerdict::Invalid(m)),
            other => return Ok(other),
        }
    }
    Ok(SolverVerdict::Sat(
        assignment
            .iter()
            .map(|(k, v)| (k.clone(), ModelValue::Num(v.clone())))
            .collect(),
    ))
}

fn replace_terms(e: &Expr, map: &BTreeMap<Expr, String>) -> Expr {
    if let Some(v) = map.get(e) {
        return Expr::var(v);
    }
    e.map_children(|c| replace_terms(c, map))
}

/// Hypotheses that quantifier elimination over the reals cannot handle.
fn droppable(e: &Expr) -> bool {
    let mut hit = false;
    e.visit(&mut |x| hit |= matches!(x, Expr::Forall(..) | Expr::Binary(BinOp::Mod, ..)));
    hit
}

/// Turn a constraint into a closed formula over scalar variables: quantified
/// hypotheses are instantiated at the index terms in play, leftovers and
/// `mod` facts are dropped (which only strengthens the requirement), and
/// list reads become
/// fresh scalars.
fn scalarize(c: &Constraint, fresh: &mut usize) -> (Vec<(String, BaseTy)>, Expr) {
    let mut indices = BTreeSet::new();
    let mut sel = BTreeSet::new();
    ground_selects(&c.conclusion, &mut sel);
    for h in c.hypothesis.conjuncts() {
        ground_selects(h, &mut sel);
    }
    for s in &sel {
        if let Expr::Index(_, i) = s {
            indices.insert((**i).clone());
        }
    }

    let mut hyps = Vec::new();
    for h in c.hypothesis.conjuncts() {
        match h {
            Expr::Forall(bs, body) => {
                let mut insts = vec![(**body).clone()];
                for b in bs {
                    insts = insts
                        .iter()
                        .flat_map(|e| indices.iter().map(move |i| e.subst(b, i)))
                        .collect();
                }
                hyps.extend(insts.into_iter().filter(|e| !droppable(e)));
            }
            other if !droppable(other) => hyps.push(other.clone()),
            _ => {}
        }
    }

    let hyp = Expr::and_all(hyps);
    let mut all = BTreeSet::new();
    ground_selects(&hyp, &mut all);
    ground_selects(&c.conclusion, &mut all);
    let mut map = BTreeMap::new();
    for s in all {
        map.insert(s, {
            *fresh += 1;
            format!("sel!{fresh}")
        });
    }
    let formula = Expr::implies(
        replace_terms(&hyp, &map),
        replace_terms(&c.conclusion, &map),
    );
    let binders = formula
        .free_vars()
        .into_iter()
        .filter(|v| !v.starts_with('?'))
        .map(|v| {
            let s = c.sorts.get(&v).cloned().unwrap_or(BaseTy::Num);
            (v, s)
        })
        .collect();
    (binders, formula)
}

fn goal_formulas(items: &[Sexp]) -> Option<Vec<Vec<String>>> {
    let goals = items.iter().find(|s| s.head() == Some("goals"))?;
    let mut out = Vec::new();
    for g in goals.as_list()?.iter().skip(1) {
        if g.head() != Some("goal") {
            continue;
        }
        let fs = g.as_list()?[1..]
            .iter()
            .take_while(|x| !x.as_atom().is_some_and(|a| a.starts_with(':')))
            .map(|x| x.to_string())
            .collect();
        out.push(fs);
    }
    Some(out)
}

/// Minimize `objective` over the distance variables of `residual`. Names in
/// the objective that are not distance variables stand for unbounded loop
/// counters and are replaced by `big_m`.
pub fn minimize_cost(
    residual: &[Constraint],
    objective: &Expr,
    big_m: &Rational,
    cfg: &SolverConfig,
) -> Result<MinimizeOutcome, SolverError> {
    let counters: BTreeMap<String, Expr> = objective
        .free_vars()
        .into_iter()
        .filter(|v| !v.starts_with('?'))
        .map(|v| (v, Expr::Num(big_m.clone())))
        .collect();
    let objective = normalize(&objective.subst_map(&counters));

    let mut dvars: BTreeSet<String> = objective.dvars();
    for c in residual {
        dvars.extend(c.dvars());
    }
    let mut decls = String::new();
    for d in &dvars {
        let _ = writeln!(decls, "(declare-const {} Real)", symbol(&format!("?{d}")));
        if cfg.integer_dvars {
            let _ = writeln!(decls, "(assert (is_int {}))", symbol(&format!("?{d}")));
        }
    }

    // Eliminate program variables.
    let mut qe = format!("{PREAMBLE}{decls}");
    let mut fresh = 0;
    for c in residual {
        let (binders, f) = scalarize(c, &mut fresh);
        let Ok(body) = encode(&f) else {
            return Ok(unknown(format!("no SMT encoding for `{}`", c.label)));
        };
        if binders.is_empty() {
            let _ = writeln!(qe, "(assert {body})");
        } else {
            let bs: Vec<String> = binders
                .iter()
                .map(|(n, s)| format!("({} {})", symbol(n), sort_of(s)))
                .collect();
            let _ = writeln!(qe, "(assert (forall ({}) {body}))", bs.join(" "));
        }
    }
    qe.push_str("(apply (then simplify qe simplify))\n");
    let Some(out) = run_text(&qe, "eliminate", cfg)? else {
        return Ok(MinimizeOutcome::Timeout);
    };
    let items = parse_all(&out).map_err(|e| SolverError::Malformed(e.to_string()))?;
    if let Some(e) = solver_error(&items) {
        return Ok(unknown(e));
    }
    let Some(goals) = goal_formulas(&items) else {
        return Err(SolverError::Malformed(out));
    };
    if goals
        .iter()
        .flatten()
        .any(|f| f.contains("forall") || f.contains("exists"))
    {
        return Ok(unknown(
            "quantifier elimination left quantified subformulas",
        ));
    }
    let disjuncts: Vec<String> = goals
        .iter()
        .map(|fs| format!("(and true {})", fs.join(" ")))
        .collect();

    // Optimize over the quantifier-free residue.
    let Ok(obj) = encode(&objective) else {
        return Ok(unknown(format!(
            "no SMT encoding for objective `{objective}`"
        )));
    };
    let mut opt = format!("{PREAMBLE}{decls}");
    let _ = writeln!(opt, "(assert (or false {}))", disjuncts.join(" "));
    let _ = writeln!(opt, "(minimize {obj})");
    opt.push_str("(check-sat)\n(get-objectives)\n");
    let names: Vec<(String, String)> = dvars
        .iter()
        .map(|d| (d.clone(), symbol(&format!("?{d}"))))
        .collect();
    if !names.is_empty() {
        let terms: Vec<&str> = names.iter().map(|(_, t)| t.as_str()).collect();
        let _ = writeln!(opt, "(get-value ({}))", terms.join(" "));
    }
    let Some(out) = run_text(&opt, "minimize", cfg)? else {
        return Ok(MinimizeOutcome::Timeout);
    };
    let items = parse_all(&out).map_err(|e| SolverError::Malformed(e.to_string()))?;
    if let Some(e) = solver_error(&items) {
        return Ok(unknown(e));
    }
    match items.iter().find_map(Sexp::as_atom) {
        Some("unsat") => return Ok(MinimizeOutcome::Unsat),
        Some("sat") => {}
        Some(_) => return Ok(unknown("solver answered unknown")),
        None => return Err(SolverError::Malformed(out)),
    }
    if let Some(objs) = items.iter().find(|s| s.head() == Some("objectives")) {
        let text = objs.to_string();
        if text.contains("oo") {
            return Ok(unknown("objective is unbounded"));
        }
        if text.contains("epsilon") {
            return Ok(unknown("optimum is not attained"));
        }
    }
    let model = parse_model(&items, &names);
    let mut assignment = BTreeMap::new();
    for (d, _) in &names {
        match model.get(d) {
            Some(ModelValue::Num(r)) => {
                assignment.insert(d.clone(), r.clone());
            }
            other => return Ok(unknown(format!("no rational value for `?{d}`: {other:?}"))),
        }
    }

    // Certify against the original constraints.
    match check_pinned(residual, &assignment, cfg)? {
        SolverVerdict::Sat(_) => {}
        SolverVerdict::Timeout => return Ok(MinimizeOutcome::Timeout),
        SolverVerdict::Invalid(_) => {
            return Ok(unknown("candidate assignment failed the full check"))
        }
        other => {
            return Ok(unknown(format!(
                "certification inconclusive: {}",
                other.name()
            )))
        }
    }
    let map: BTreeMap<String, Expr> = assignment
        .iter()
        .map(|(k, v)| (format!("?{k}"), Expr::Num(v.clone())))
        .collect();
    let Some(value) = const_value(&objective.subst_map(&map)) else {
        return Ok(unknown(format!(
            "objective `{objective}` did not evaluate to a constant"
        )));
    };
    Ok(MinimizeOutcome::Optimal {
        assignment,
        objective: value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::rat;
    use crate::infer::infer_program;
    use crate::parser::{parse_expr, parse_program};

    const SV: &str =
        "function SparseVector(T: num[0], N: num[0], size: num[0], eps: num[0], q: list num[*])
        returns (out: list bool)
        precondition (forall i :: -1 <= ^q[i] && ^q[i] <= 1) && N >= 1
        budget eps
        {
          eta1 := lap(2 / eps);
          tT := T + eta1;
          c1 := 0; c2 := 0; i := 0;
          while (c1 < N && i < size) {
            eta2 := lap(4 * N / eps);
            if (q[i] + eta2 >= tT) then { out := true :: out; c1 := c1 + 1; }
            else { out := false :: out; c2 := c2 + 1; }
            i := i + 1;
          }
          return out;
        }";

    fn residual() -> Vec<Constraint> {
        let inf = infer_program(&parse_program(SV).unwrap()).unwrap();
        inf.residual().into_iter().cloned().collect()
    }

    fn assign(a: i64, b: i64, g: i64) -> BTreeMap<String, Rational> {
        [("eta1", a), ("eta2.t", b), ("eta2.f", g)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), rat(v)))
            .collect()
    }

    #[test]
    fn sparse_vector_optimum() {
        let cfg = SolverConfig::default();
        let obj = parse_expr("abs(?eta1)/2 + abs(?eta2.t)/4 + c2*abs(?eta2.f)/4").unwrap();
        let out = minimize_cost(&residual(), &obj, &rat(10000), &cfg).unwrap();
        let MinimizeOutcome::Optimal {
            assignment,
            objective,
        } = out
        else {
            panic!("{out:?}")
        };
        assert_eq!(assignment, assign(1, 2, 0));
        assert_eq!(objective, rat(1));
    }

    #[test]
    fn pinned_alternatives() {
        let cfg = SolverConfig::default();
        let r = residual();
        assert!(matches!(
            check_pinned(&r, &assign(0, 2, -2), &cfg).unwrap(),
            SolverVerdict::Sat(_)
        ));
        assert!(matches!(
            check_pinned(&r, &assign(2, 3, 0), &cfg).unwrap(),
            SolverVerdict::Sat(_)
        ));
        assert!(matches!(
            check_pinned(&r, &assign(0, 0, 0), &cfg).unwrap(),
            SolverVerdict::Invalid(_)
        ));
    }
}
