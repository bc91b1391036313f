use num_bigint::BigInt;

use super::ParseError;
use crate::ast::{Rational, Span};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Hat(String),
    DVar(String),
    Number(Rational),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Hat(s) => format!("`^{s}`"),
            Tok::DVar(s) => format!("`?{s}`"),
            Tok::Number(r) => format!("number `{r}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

// Longest symbols first so that `<==>` wins over `<=`.
const SYMBOLS: &[&str] = &[
    "<==>", "==>", ":=", "::", "<=", ">=", "==", "!=", "&&", "||", ":", ";", ",", "(", ")", "[",
    "]", "{", "}", "+", "-", "*", "/", "<", ">", "!", "?",
];

pub fn lex(text: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let span = Span { line, col };
            advance(&mut i, &mut line, &mut col, 2);
            loop {
                if i + 1 >= chars.len() {
                    return Err(ParseError::syntax(span, "unterminated block comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    advance(&mut i, &mut line, &mut col, 2);
                    break;
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let span = Span { line, col };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), span));
            continue;
        }
        if c == '^' {
            advance(&mut i, &mut line, &mut col, 1);
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            if start == i || chars[start].is_ascii_digit() {
                return Err(ParseError::syntax(span, "expected a name after `^`"));
            }
            out.push((Tok::Hat(chars[start..i].iter().collect()), span));
            continue;
        }
        if c == '?'
            && chars
                .get(i + 1)
                .is_some_and(|n| n.is_ascii_alphabetic() || *n == '_')
        {
            advance(&mut i, &mut line, &mut col, 1);
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push((Tok::DVar(chars[start..i].iter().collect()), span));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let int_part: String = chars[start..i].iter().collect();
            let mut frac_part = String::new();
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
                let fs = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut col, 1);
                }
                frac_part = chars[fs..i].iter().collect();
            }
            out.push((Tok::Number(decimal(&int_part, &frac_part)), span));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                advance(&mut i, &mut line, &mut col, s.len());
                out.push((Tok::Sym(s), span));
            }
            None => {
                return Err(ParseError::syntax(
                    span,
                    format!("unexpected character `{c}`"),
                ));
            }
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

fn decimal(int_part: &str, frac_part: &str) -> Rational {
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().expect("digits only");
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Rational::new(numer, denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::rat_frac;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|(t, _)| t).collect()
    }

    #[test]
    fn longest_symbol_wins() {
        assert_eq!(
            toks("a <==> b ==> c <= d"),
            vec![
                Tok::Ident("a".into()),
                Tok::Sym("<==>"),
                Tok::Ident("b".into()),
                Tok::Sym("==>"),
                Tok::Ident("c".into()),
                Tok::Sym("<="),
                Tok::Ident("d".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn hats_dvars_and_decimals() {
        assert_eq!(
            toks("^q ?eta2.t 0.25 ? x"),
            vec![
                Tok::Hat("q".into()),
                Tok::DVar("eta2.t".into()),
                Tok::Number(rat_frac(1, 4)),
                Tok::Sym("?"),
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_are_skipped_and_positions_tracked() {
        let ts = lex("// header\n  x /* c */ := 1").unwrap();
        assert_eq!((ts[0].1.line, ts[0].1.col), (2, 3));
        assert_eq!(ts[1].0, Tok::Sym(":="));
        assert_eq!(ts[1].1.col, 13);
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(lex("x := #").is_err());
        assert!(lex("/* open").is_err());
    }
}
