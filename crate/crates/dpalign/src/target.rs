//! The nonprobabilistic target language produced by the checker.

use std::collections::BTreeSet;

use crate::ast::{BaseTy, Expr, Prop, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetCmd {
    Skip,
    /// `var` may name a hat companion, spelled `^x`.
    Assign {
        var: String,
        expr: Expr,
        instrumented: bool,
        span: Span,
    },
    Havoc {
        var: String,
        span: Span,
    },
    /// Havoc restricted to the unit interval.
    Havoc01 {
        var: String,
        span: Span,
    },
    Seq(Vec<TargetCmd>),
    If {
        cond: Expr,
        then_branch: Box<TargetCmd>,
        else_branch: Box<TargetCmd>,
        span: Span,
    },
    While {
        cond: Expr,
        invariant: Option<Prop>,
        body: Box<TargetCmd>,
        span: Span,
    },
    Return {
        expr: Expr,
        span: Span,
    },
}

impl TargetCmd {
    pub fn walk(&self, f: &mut impl FnMut(&TargetCmd)) {
        f(self);
        match self {
            TargetCmd::Seq(cs) => cs.iter().for_each(|c| c.walk(f)),
            TargetCmd::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                else_branch.walk(f);
            }
            TargetCmd::While { body, .. } => body.walk(f),
            _ => {}
        }
    }

    /// Variables (including `^x` and the cost variable) written anywhere.
    pub fn written_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |c| match c {
            TargetCmd::Assign { var, .. }
            | TargetCmd::Havoc { var, .. }
            | TargetCmd::Havoc01 { var, .. } => {
                out.insert(var.clone());
            }
            _ => {}
        });
        out
    }

    /// Flatten nested sequences into a list of non-sequence commands.
    pub fn flatten(&self) -> Vec<&TargetCmd> {
        let mut out = Vec::new();
        fn go<'a>(c: &'a TargetCmd, out: &mut Vec<&'a TargetCmd>) {
            match c {
                TargetCmd::Seq(cs) => cs.iter().for_each(|c| go(c, out)),
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetProgram {
    pub name: String,
    /// Original parameters followed by hat parameters of starred ones.
    pub params: Vec<(String, BaseTy)>,
    /// Distance variables still present in the body, if any.
    pub dvars: Vec<String>,
    pub ret: (String, BaseTy),
    pub precondition: Prop,
    pub budget: Option<Expr>,
    pub body: TargetCmd,
}

/// Name used for the companion of `x` in target memories.
pub fn hat_name(x: &str) -> String {
    format!("^{x}")
}

/// Target-memory key for a variable reference expression, if it is one.
pub fn var_key(e: &Expr) -> Option<String> {
    match e {
        Expr::Var(n) | Expr::Rand(n) => Some(n.clone()),
        Expr::Hat(n) => Some(hat_name(n)),
        _ => None,
    }
}
