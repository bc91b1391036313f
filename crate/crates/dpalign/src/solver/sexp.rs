//! Minimal S-expression reader for solver responses.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::ast::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(xs) => Some(xs),
            Sexp::Atom(_) => None,
        }
    }

    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }

    /// Read a numeric literal: decimals, `(- x)`, `(/ x y)`.
    pub fn to_rational(&self) -> Option<Rational> {
        match self {
            Sexp::Atom(a) => parse_decimal(a),
            Sexp::List(xs) => match (xs.first()?.as_atom()?, xs.len()) {
                ("-", 2) => Some(-xs[1].to_rational()?),
                ("-", 3) => Some(xs[1].to_rational()? - xs[2].to_rational()?),
                ("+", _) => xs[1..].iter().map(Sexp::to_rational).sum(),
                ("*", _) => xs[1..].iter().map(Sexp::to_rational).product(),
                ("/", 3) => {
                    let d = xs[2].to_rational()?;
                    if d.is_zero() {
                        None
                    } else {
                        Some(xs[1].to_rational()? / d)
                    }
                }
                ("to_real", 2) => xs[1].to_rational(),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(xs) => {
                f.write_str("(")?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let mut den = BigInt::one();
    for _ in 0..frac.len() {
        den *= 10;
    }
    Some(Rational::new(digits, den))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed solver output at byte {pos}: {msg}")]
pub struct SexpError {
    pub pos: usize,
    pub msg: String,
}

/// Parse a sequence of S-expressions.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let err = |pos: usize, msg: &str| SexpError {
        pos,
        msg: msg.to_string(),
    };
    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b'(' => {
                stack.push(Vec::new());
                pos += 1;
            }
            b')' => {
                let done = stack.pop().ok_or_else(|| err(pos, "unbalanced `)`"))?;
                stack
                    .last_mut()
                    .ok_or_else(|| err(pos, "unbalanced `)`"))?
                    .push(Sexp::List(done));
                pos += 1;
            }
            b';' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b'"' => {
                let start = pos;
                pos += 1;
                loop {
                    match bytes.get(pos) {
                        None => return Err(err(start, "unterminated string")),
                        Some(b'"') if bytes.get(pos + 1) == Some(&b'"') => pos += 2,
                        Some(b'"') => break,
                        Some(_) => pos += 1,
                    }
                }
                pos += 1;
                stack
                    .last_mut()
                    .unwrap()
                    .push(Sexp::Atom(text[start..pos].to_string()));
            }
            b'|' => {
                let start = pos;
                pos += 1;
                while pos < bytes.len() && bytes[pos] != b'|' {
                    pos += 1;
                }
                if pos >= bytes.len() {
                    return Err(err(start, "unterminated quoted symbol"));
                }
                pos += 1;
                stack
                    .last_mut()
                    .unwrap()
                    .push(Sexp::Atom(text[start..pos].to_string()));
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => {
                let start = pos;
                while pos < bytes.len()
                    && !bytes[pos].is_ascii_whitespace()
                    && !matches!(bytes[pos], b'(' | b')' | b';' | b'"')
                {
                    pos += 1;
                }
                stack
                    .last_mut()
                    .unwrap()
                    .push(Sexp::Atom(text[start..pos].to_string()));
            }
        }
    }
    if stack.len() != 1 {
        return Err(err(text.len(), "unbalanced `(`"));
    }
    Ok(stack.pop().unwrap())
}
