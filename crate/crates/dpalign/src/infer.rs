//! Distance inference: fresh distance variables for unannotated variables,
//! refinement through assignments and comparisons, loop fixed points, and
//! elimination of linear equalities before the residual constraints are
//! handed to the solver.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ast::{BaseTy, Cmd, Distance, Expr, Program, Prop, RandExpr, Ty, TypingEnv};
use crate::checker::{sort_table, transform, CheckResult, Checker, Constraint, ConstraintKind};
use crate::normalize::{normalize, same_distance, solve_linear};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("refinement of loop at line {line} did not stabilise after {passes} passes")]
    Diverged { line: usize, passes: usize },
}

/// Outcome of running inference on a program.
#[derive(Clone, Debug)]
pub struct Inference {
    /// Environment right after refinement.
    pub refined: TypingEnv,
    /// Environment after eliminating linearly determined distance variables.
    pub env: TypingEnv,
    /// Distance variables solved symbolically, with their solutions.
    pub eliminated: BTreeMap<String, Expr>,
    /// Largest number of passes any loop needed to reach its fixed point.
    pub passes: usize,
    /// Checking result under `env`.
    pub check: CheckResult,
}

impl Inference {
    pub fn residual(&self) -> Vec<&Constraint> {
        self.check.residual()
    }
}

/// Name of the distance variable initially assigned to `x`.
pub fn dvar_name(x: &str) -> String {
    x.to_string()
}

/// Γ for inference: annotations stay fixed, every other numeric variable gets
/// its own distance variable, and bools and lists get zero-distance shells.
pub fn init_env(p: &Program) -> TypingEnv {
    let mut env = TypingEnv::from_annotations(p);
    for (v, b) in p.base_types() {
        if env.get(&v).is_some() {
            continue;
        }
        let ty = match b {
            BaseTy::Num => Ty::Num(Expr::dvar(&dvar_name(&v))),
            other => Ty::default_for(&other),
        };
        env.bind(&v, ty);
    }
    env
}

/// Normalize the distances of all non-annotated bindings.
fn tidy(env: TypingEnv) -> TypingEnv {
    let defs = env.defvars.clone();
    TypingEnv {
        bindings: env
            .bindings
            .into_iter()
            .map(|(k, t)| {
                if defs.contains(&k) {
                    (k, t)
                } else {
                    let t = t.map_distance(&mut |d| normalize(d));
                    (k, t)
                }
            })
            .collect(),
        defvars: defs,
    }
}

/// Refine the binding of `x` with the distance `d` synthesized for a value
/// assigned to it.
///
/// A distance variable is replaced by `d` everywhere. A concrete distance is
/// kept when it equals `d`, or when the two differ only by terms containing
/// distance variables, leaving the equality to the checker. Otherwise `x`
/// becomes starred.
pub fn refine(env: &TypingEnv, x: &str, d: &Distance) -> TypingEnv {
    let d = normalize(d);
    match env.get(x) {
        Some(Ty::Num(Expr::DVar(a))) if !d.dvars().contains(a) => {
            tidy(env.subst(&format!("?{a}"), &d))
        }
        Some(Ty::Num(old)) => {
            if same_distance(old, &d) {
                return env.clone();
            }
            let diff = normalize(&Expr::sub(d.clone(), old.clone()));
            if diff.has_dvars() {
                return env.clone();
            }
            let mut out = env.clone();
            out.bind(x, Ty::NumStar);
            out
        }
        _ => env.clone(),
    }
}

/// Refinement pass over a program body.
pub struct Refiner<'a> {
    program: &'a Program,
    sorts: BTreeMap<String, BaseTy>,
    laplace: BTreeSet<String>,
    /// Largest pass count seen in any loop so far.
    pub max_passes: usize,
}

impl<'a> Refiner<'a> {
    pub fn new(program: &'a Program) -> Self {
        let mut laplace = BTreeSet::new();
        program.body.walk(&mut |c| {
            if let Cmd::Sample {
                var,
                dist: RandExpr::Laplace(_),
                ..
            } = c
            {
                laplace.insert(var.clone());
            }
        });
        Refiner {
            program,
            sorts: sort_table(program),
            laplace,
            max_passes: 0,
        }
    }

    /// Distance of `e` under `env`, if it is numeric.
    fn synthesize(&self, env: &TypingEnv, e: &Expr) -> Option<Distance> {
        let mut ck = Checker::new(env, Expr::tt(), self.sorts.clone());
        match ck.type_expr(e, Default::default())? {
            Ty::Num(d) => Some(normalize(&d)),
            _ => None,
        }
    }

    fn fresh(env: &TypingEnv, base: &str) -> String {
        let used = env.dvars();
        if !used.contains(base) {
            return base.to_string();
        }
        (1..)
            .map(|k| format!("{base}{k}"))
            .find(|n| !used.contains(n))
            .expect("unbounded supply of names")
    }

    /// Expression refinement under a comparison context.
    pub fn refine_expr(&self, env: TypingEnv, ctx: Option<&Prop>, e: &Expr) -> TypingEnv {
        match e {
            Expr::Rand(eta) => match (ctx, env.get(eta)) {
                (Some(c), Some(Ty::Num(Expr::DVar(a)))) if self.laplace.contains(eta) => {
                    let t = Self::fresh(&env, &format!("{a}.t"));
                    let f = Self::fresh(&env, &format!("{a}.f"));
                    let d = Expr::ite(c.clone(), Expr::dvar(&t), Expr::dvar(&f));
                    refine(&env, eta, &d)
                }
                _ => env,
            },
            Expr::Binary(op, a, b) if op.is_comparison() => {
                let cmp = e.clone();
                let inner = match ctx {
                    Some(c) => Expr::and(c.clone(), cmp),
                    None => cmp,
                };
                let env = self.refine_expr(env, Some(&inner), a);
                self.refine_expr(env, Some(&inner), b)
            }
            _ => e
                .children()
                .into_iter()
                .fold(env, |env, x| self.refine_expr(env, ctx, x)),
        }
    }

    pub fn refine_cmd(&mut self, env: TypingEnv, c: &Cmd) -> Result<TypingEnv, InferError> {
        Ok(match c {
            Cmd::Skip | Cmd::Return { .. } | Cmd::Sample { .. } => env,
            Cmd::Assign { var, expr, .. } => {
                let env = self.refine_expr(env, None, expr);
                if env.is_def(var) {
                    env
                } else {
                    match self.synthesize(&env, expr) {
                        Some(d) => refine(&env, var, &d),
                        None => env,
                    }
                }
            }
            Cmd::Seq(cs) => {
                let mut env = env;
                for c in cs {
                    env = self.refine_cmd(env, c)?;
                }
                env
            }
            Cmd::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let env = self.refine_expr(env, None, cond);
                let env = self.refine_cmd(env, then_branch)?;
                self.refine_cmd(env, else_branch)?
            }
            Cmd::While {
                cond, body, span, ..
            } => {
                let (env, passes) = self.fixpoint_while(env, cond, body, span.line)?;
                self.max_passes = self.max_passes.max(passes);
                env
            }
        })
    }

    /// Iterate the loop body until the environment stops changing. Returns
    /// the fixed point and the number of passes that changed it.
    pub fn fixpoint_while(
        &mut self,
        env: TypingEnv,
        guard: &Expr,
        body: &Cmd,
        line: usize,
    ) -> Result<(TypingEnv, usize), InferError> {
        let bound = 2 * self.program.base_types().len().max(1);
        let mut cur = self.refine_expr(env, None, guard);
        let mut passes = 0;
        loop {
            let next = self.refine_cmd(cur.clone(), body)?;
            let next = self.refine_expr(next, None, guard);
            if next == cur {
                return Ok((cur, passes));
            }
            passes += 1;
            if passes > bound {
                return Err(InferError::Diverged { line, passes });
            }
            cur = next;
        }
    }
}

/// Is `b` at least as refined as `a` in the pointwise order where a distance
/// variable sits below any distance and every distance sits below `*`?
pub fn env_le(a: &TypingEnv, b: &TypingEnv) -> bool {
    let mut sigma: BTreeMap<String, Expr> = BTreeMap::new();
    a.bindings.iter().all(|(x, ta)| match b.get(x) {
        None => false,
        Some(tb) => ty_le(ta, tb, &mut sigma),
    })
}

fn ty_le(a: &Ty, b: &Ty, sigma: &mut BTreeMap<String, Expr>) -> bool {
    match (a, b) {
        (_, Ty::NumStar) if matches!(a, Ty::Num(_) | Ty::NumStar) => true,
        (Ty::Num(p), Ty::Num(t)) => matches_instance(p, t, sigma),
        (Ty::List(x), Ty::List(y)) => ty_le(x, y, sigma),
        _ => a == b,
    }
}

/// Does `t` arise from `p` by substituting expressions for distance
/// variables consistently?
fn matches_instance(p: &Expr, t: &Expr, sigma: &mut BTreeMap<String, Expr>) -> bool {
    if let Expr::DVar(a) = p {
        return match sigma.get(a) {
            Some(bound) => same_distance(bound, t),
            None => {
                sigma.insert(a.clone(), t.clone());
                true
            }
        };
    }
    if !p.has_dvars() {
        return same_distance(p, t);
    }
    let (pc, tc) = (p.children(), t.children());
    std::mem::discriminant(p) == std::mem::discriminant(t)
        && same_head(p, t)
        && pc.len() == tc.len()
        && pc
            .iter()
            .zip(tc)
            .all(|(x, y)| matches_instance(x, y, sigma))
}

fn same_head(p: &Expr, t: &Expr) -> bool {
    match (p, t) {
        (Expr::Binary(o1, ..), Expr::Binary(o2, ..)) => o1 == o2,
        (Expr::Unary(o1, _), Expr::Unary(o2, _)) => o1 == o2,
        (Expr::Forall(b1, _), Expr::Forall(b2, _)) => b1 == b2,
        _ => true,
    }
}

/// Pick an equality constraint that determines a distance variable
/// linearly, returning the variable and its solution.
fn solvable_equality(constraints: &[Constraint]) -> Option<(String, Expr)> {
    for c in constraints {
        if c.kind != ConstraintKind::Equality || !c.is_residual() {
            continue;
        }
        let Expr::Binary(crate::ast::BinOp::Eq, a, b) = &c.conclusion else {
            continue;
        };
        let diff = normalize(&Expr::sub((**a).clone(), (**b).clone()));
        for v in diff.dvars() {
            if let Some(sol) = solve_linear(&diff, &Expr::dvar(&v)) {
                return Some((v, normalize(&sol)));
            }
        }
    }
    None
}

/// Refine, eliminate linearly determined distance variables, and check.
pub fn infer_program(p: &Program) -> Result<Inference, InferError> {
    let mut refiner = Refiner::new(p);
    let refined = tidy(refiner.refine_cmd(init_env(p), &p.body)?);
    let passes = refiner.max_passes;

    let mut env = refined.clone();
    let mut eliminated: BTreeMap<String, Expr> = BTreeMap::new();
    let mut check = transform(p, &env);
    let limit = env.dvars().len();
    for _ in 0..limit {
        let Some((v, sol)) = solvable_equality(&check.constraints) else {
            break;
        };
        let key = format!("?{v}");
        for s in eliminated.values_mut() {
            *s = normalize(&s.subst(&key, &sol));
        }
        eliminated.insert(v, sol.clone());
        env = tidy(env.subst(&key, &sol));
        check = transform(p, &env);
    }
    Ok(Inference {
        refined,
        env,
        eliminated,
        passes,
        check,
    })
}
