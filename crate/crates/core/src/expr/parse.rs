//! Recursive-descent parser for the infix expression grammar.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            exponent must fold to a constant
//! atom   := number | 'x' | 't' | 'w' | 'pi' | 'e'
//!         | func '(' expr ')' | '(' expr ')'
//! func   := exp | log | sqrt | sin | cos
//! ```
//!
//! Positions in errors are 1-based character offsets.

use thiserror::Error;

use super::{Expr, Var};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::UnknownIdentifier { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<(usize, char)> = src.chars().enumerate().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let pos = pos + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut seen_dot = false;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                if chars[i].1 == '.' {
                    if seen_dot {
                        return Err(ParseError::Syntax {
                            pos: chars[i].0 + 1,
                            msg: "unexpected `.`".into(),
                        });
                    }
                    seen_dot = true;
                }
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|(_, c)| *c).collect();
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(value), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|(_, c)| *c).collect();
            out.push((Tok::Ident(text), pos));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(ParseError::Syntax {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, pos));
        i += 1;
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        let what = match self.peek() {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(n) => format!("unexpected number `{n}`"),
            Tok::Ident(s) => format!("unexpected identifier `{s}`"),
            Tok::Op(c) => format!("unexpected `{c}`"),
            Tok::LParen => "unexpected `(`".to_string(),
            Tok::RParen => "unexpected `)`".to_string(),
        };
        ParseError::Syntax {
            pos: self.pos(),
            msg: what,
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = lhs * self.unary()?;
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let pos = self.pos();
            let exponent = self.unary()?;
            let p = exponent.as_const().ok_or(ParseError::Syntax {
                pos,
                msg: "exponent must be a constant".into(),
            })?;
            return Ok(Expr::pow(base, p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::constant(n))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let pos = self.pos();
                self.bump();
                match name.as_str() {
                    "x" => Ok(Expr::var(Var::X)),
                    "t" => Ok(Expr::var(Var::T)),
                    "w" => Ok(Expr::var(Var::W)),
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    "e" => Ok(Expr::constant(std::f64::consts::E)),
                    "exp" | "log" | "sqrt" | "sin" | "cos" => {
                        if *self.peek() != Tok::LParen {
                            return Err(self.unexpected());
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(match name.as_str() {
                            "exp" => Expr::exp(arg),
                            "log" => Expr::log(arg),
                            "sqrt" => Expr::sqrt(arg),
                            "sin" => Expr::sin(arg),
                            _ => Expr::cos(arg),
                        })
                    }
                    _ => Err(ParseError::UnknownIdentifier { name, pos }),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

/// Parse an expression string.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, i: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}
