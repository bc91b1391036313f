//! Concrete `.ldp` syntax: lexer, recursive-descent parser and printers.

mod lexer;
mod print;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ast::{BinOp, Cmd, Expr, Param, Program, RandExpr, Span, Ty};
use lexer::{lex, Tok};

pub use print::{print_cmd, print_expr, print_program, print_target, print_ty};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: duplicate annotation for `{name}`")]
    DuplicateAnnotation {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("unknown identifier `{name}` in precondition")]
    UnknownInPrecondition { name: String },
    #[error("{line}:{col}: distance variable `?{name}` is only allowed in loop invariants")]
    MisplacedDistanceVar {
        line: usize,
        col: usize,
        name: String,
    },
}

impl ParseError {
    pub(crate) fn syntax(span: Span, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "function",
    "returns",
    "precondition",
    "typedef",
    "budget",
    "skip",
    "if",
    "then",
    "else",
    "while",
    "invariant",
    "return",
    "lap",
    "uniform",
    "true",
    "false",
    "forall",
    "mod",
    "abs",
    "log",
    "num",
    "bool",
    "list",
];

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::syntax(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        ))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error("an identifier"),
        }
    }

    // ---- programs ----

    fn program(&mut self) -> PResult<Program> {
        self.expect_kw("function")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let pname = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if !(self.eat_sym(",") || self.eat_sym(";")) {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_kw("returns")?;
        self.expect_sym("(")?;
        let rname = self.ident()?;
        self.expect_sym(":")?;
        let rty = self.ty()?;
        self.expect_sym(")")?;
        let ret = Param {
            name: rname,
            ty: rty,
        };

        let precondition = if self.eat_kw("precondition") {
            self.expr()?
        } else {
            Expr::tt()
        };

        let mut annotations = BTreeMap::new();
        if self.eat_kw("typedef") {
            while matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str())) {
                let mut names = vec![(self.span(), self.ident()?)];
                while self.eat_sym(",") {
                    names.push((self.span(), self.ident()?));
                }
                self.expect_sym(":")?;
                let ty = self.ty()?;
                self.expect_sym(";")?;
                for (span, n) in names {
                    let clash = params.iter().any(|p| p.name == n) || ret.name == n;
                    if clash || annotations.contains_key(&n) {
                        return Err(ParseError::DuplicateAnnotation {
                            line: span.line,
                            col: span.col,
                            name: n,
                        });
                    }
                    annotations.insert(n, ty.clone());
                }
            }
        }

        let budget = if self.eat_kw("budget") {
            Some(self.expr()?)
        } else {
            None
        };
        let body = self.block()?;
        if *self.peek() != Tok::Eof {
            return self.error("end of input");
        }

        let program = Program {
            name,
            params,
            ret,
            precondition,
            annotations,
            budget,
            body,
        };
        let program = classify_program(program);
        check_precondition_names(&program)?;
        Ok(program)
    }

    fn ty(&mut self) -> PResult<Ty> {
        if self.eat_kw("num") {
            self.expect_sym("[")?;
            let t = if self.eat_sym("*") {
                Ty::NumStar
            } else {
                Ty::Num(self.expr()?)
            };
            self.expect_sym("]")?;
            Ok(t)
        } else if self.eat_kw("bool") {
            Ok(Ty::Bool)
        } else if self.eat_kw("list") {
            Ok(Ty::List(Box::new(self.ty()?)))
        } else {
            self.error("a type")
        }
    }

    // ---- commands ----

    fn block(&mut self) -> PResult<Cmd> {
        self.expect_sym("{")?;
        let mut cmds = Vec::new();
        while !self.is_sym("}") {
            let (cmd, compound) = self.stmt()?;
            cmds.push(cmd);
            if self.is_sym("}") {
                break;
            }
            if !self.eat_sym(";") && !compound {
                return self.error("`;`");
            }
        }
        self.expect_sym("}")?;
        Ok(Cmd::Seq(cmds))
    }

    /// Returns the command and whether it ended in a block.
    fn stmt(&mut self) -> PResult<(Cmd, bool)> {
        let span = self.span();
        if self.eat_kw("skip") {
            return Ok((Cmd::Skip, false));
        }
        if self.eat_kw("if") {
            let cond = self.expr()?;
            self.expect_kw("then")?;
            let then_branch = self.block()?;
            let else_branch = if self.eat_kw("else") {
                if self.is_kw("if") {
                    let (c, _) = self.stmt()?;
                    Cmd::Seq(vec![c])
                } else {
                    self.block()?
                }
            } else {
                Cmd::Seq(vec![])
            };
            return Ok((
                Cmd::If {
                    cond,
                    then_branch: Box::new(then_branch),
                    else_branch: Box::new(else_branch),
                    span,
                },
                true,
            ));
        }
        if self.eat_kw("while") {
            let cond = self.expr()?;
            let invariant = if self.eat_kw("invariant") {
                Some(self.expr()?)
            } else {
                None
            };
            let body = self.block()?;
            return Ok((
                Cmd::While {
                    cond,
                    invariant,
                    body: Box::new(body),
                    span,
                },
                true,
            ));
        }
        if self.eat_kw("return") {
            let expr = self.expr()?;
            return Ok((Cmd::Return { expr, span }, false));
        }
        let var = self.ident()?;
        self.expect_sym(":=")?;
        if self.is_kw("lap") {
            self.bump();
            self.expect_sym("(")?;
            let scale = self.expr()?;
            self.expect_sym(")")?;
            return Ok((
                Cmd::Sample {
                    var,
                    dist: RandExpr::Laplace(scale),
                    span,
                },
                false,
            ));
        }
        if self.eat_kw("uniform") {
            return Ok((
                Cmd::Sample {
                    var,
                    dist: RandExpr::Uniform,
                    span,
                },
                false,
            ));
        }
        let expr = self.expr()?;
        Ok((Cmd::Assign { var, expr, span }, false))
    }

    // ---- expressions, lowest precedence first ----

    fn expr(&mut self) -> PResult<Expr> {
        let c = self.iff()?;
        if self.eat_sym("?") {
            let a = self.expr()?;
            self.expect_sym(":")?;
            let b = self.expr()?;
            return Ok(Expr::ite(c, a, b));
        }
        Ok(c)
    }

    fn iff(&mut self) -> PResult<Expr> {
        let a = self.implies()?;
        if self.eat_sym("<==>") {
            let b = self.implies()?;
            return Ok(Expr::iff(a, b));
        }
        Ok(a)
    }

    fn implies(&mut self) -> PResult<Expr> {
        let a = self.or()?;
        if self.eat_sym("==>") {
            let b = self.implies()?;
            return Ok(Expr::implies(a, b));
        }
        Ok(a)
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut a = self.and()?;
        while self.eat_sym("||") {
            a = Expr::or(a, self.and()?);
        }
        Ok(a)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut a = self.not()?;
        while self.eat_sym("&&") {
            a = Expr::and(a, self.not()?);
        }
        Ok(a)
    }

    fn not(&mut self) -> PResult<Expr> {
        if self.eat_sym("!") {
            return Ok(Expr::not(self.not()?));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let a = self.cons()?;
        let op = match self.peek() {
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            _ => return Ok(a),
        };
        self.bump();
        let b = self.cons()?;
        Ok(Expr::bin(op, a, b))
    }

    fn cons(&mut self) -> PResult<Expr> {
        let a = self.additive()?;
        if self.eat_sym("::") {
            return Ok(Expr::cons(a, self.cons()?));
        }
        Ok(a)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut a = self.multiplicative()?;
        loop {
            if self.eat_sym("+") {
                a = Expr::add(a, self.multiplicative()?);
            } else if self.eat_sym("-") {
                a = Expr::sub(a, self.multiplicative()?);
            } else {
                return Ok(a);
            }
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut a = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                BinOp::Mul
            } else if self.is_sym("/") {
                BinOp::Div
            } else if self.is_kw("mod") {
                BinOp::Mod
            } else {
                return Ok(a);
            };
            self.bump();
            a = Expr::bin(op, a, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("-") {
            if let Tok::Number(r) = self.peek().clone() {
                self.bump();
                return Ok(Expr::Num(-r));
            }
            return Ok(Expr::neg(self.unary()?));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_sym("[") {
            let i = self.expr()?;
            self.expect_sym("]")?;
            e = Expr::index(e, i);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(r) => {
                self.bump();
                Ok(Expr::Num(r))
            }
            Tok::Hat(n) => {
                self.bump();
                Ok(Expr::Hat(n))
            }
            Tok::DVar(n) => {
                self.bump();
                Ok(Expr::DVar(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(k) if k == "true" || k == "false" => {
                self.bump();
                Ok(Expr::Bool(k == "true"))
            }
            Tok::Ident(k) if k == "abs" || k == "log" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(if k == "abs" {
                    Expr::abs(e)
                } else {
                    Expr::log(e)
                })
            }
            Tok::Ident(k) if k == "forall" => {
                self.bump();
                let mut vs = vec![self.ident()?];
                while self.eat_sym(",") {
                    vs.push(self.ident()?);
                }
                self.expect_sym("::")?;
                let body = self.expr()?;
                Ok(Expr::forall(vs, body))
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            _ => self.error("an expression"),
        }
    }
}

/// Mark sampled variables as random everywhere and reject distance
/// variables outside loop invariants.
fn classify_program(p: Program) -> Program {
    let rands = p.body.sampled_vars();
    let mut cl = |e: &Expr| e.classify_rands(&rands);
    Program {
        precondition: cl(&p.precondition),
        annotations: p
            .annotations
            .iter()
            .map(|(k, t)| (k.clone(), t.map_distance(&mut cl)))
            .collect(),
        params: p
            .params
            .iter()
            .map(|prm| Param {
                name: prm.name.clone(),
                ty: prm.ty.map_distance(&mut cl),
            })
            .collect(),
        ret: Param {
            name: p.ret.name.clone(),
            ty: p.ret.ty.map_distance(&mut cl),
        },
        budget: p.budget.as_ref().map(&mut cl),
        body: p.body.map_exprs(&mut cl),
        name: p.name,
    }
}

fn check_precondition_names(p: &Program) -> PResult<()> {
    let params = p.param_names();
    for n in p.precondition.free_vars() {
        let base = n.strip_prefix('^').unwrap_or(&n);
        if n.starts_with('?') || !params.contains(base) {
            return Err(ParseError::UnknownInPrecondition { name: n });
        }
    }
    Ok(())
}

fn check_distance_vars(p: &Program) -> PResult<()> {
    let misplaced = |e: &Expr, span: Span| -> PResult<()> {
        match e.dvars().into_iter().next() {
            Some(name) => Err(ParseError::MisplacedDistanceVar {
                line: span.line,
                col: span.col,
                name,
            }),
            None => Ok(()),
        }
    };
    let top = Span { line: 1, col: 1 };
    misplaced(&p.precondition, top)?;
    if let Some(b) = &p.budget {
        misplaced(b, top)?;
    }
    for t in p.annotations.values().chain(p.params.iter().map(|x| &x.ty)) {
        for d in t.distances() {
            misplaced(d, top)?;
        }
    }
    let mut result = Ok(());
    p.body.walk(&mut |c| {
        if result.is_err() {
            return;
        }
        let exprs: Vec<&Expr> = match c {
            Cmd::Assign { expr, .. } | Cmd::Return { expr, .. } => vec![expr],
            Cmd::Sample {
                dist: RandExpr::Laplace(e),
                ..
            } => vec![e],
            Cmd::If { cond, .. } | Cmd::While { cond, .. } => vec![cond],
            _ => vec![],
        };
        for e in exprs {
            if let Err(err) = misplaced(e, c.span()) {
                result = Err(err);
                return;
            }
        }
    });
    result
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(text)?;
    let program = p.program()?;
    check_distance_vars(&program)?;
    Ok(program)
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error("end of input");
    }
    Ok(e)
}

pub fn parse_ty(text: &str) -> Result<Ty, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.error("end of input");
    }
    Ok(t)
}

/// Names bound by `forall` anywhere in the expression.
pub fn bound_names(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.visit(&mut |x| {
        if let Expr::Forall(vs, _) = x {
            out.extend(vs.iter().cloned());
        }
    });
    out
}
