//! Named-constructor expressions used in config files, e.g.
//! `sum([plane(0.5, 20), constant(3)])`.

use crate::error::{Error, Result};
use crate::tiling::AxisBox;

use super::Potential;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    List(Vec<Expr>),
    Call(String, Vec<Expr>),
}

pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Config(format!(
            "{what} at column {} of `{}`",
            self.pos + 1,
            String::from_utf8_lossy(self.s)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let items = self.items(b']')?;
                Ok(Expr::List(items))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                self.expect(b'(')?;
                let args = self.items(b')')?;
                Ok(Expr::Call(name, args))
            }
            Some(_) => {
                let start = self.pos;
                while self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
                    self.pos += 1;
                }
                let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                tok.parse::<f64>()
                    .map(Expr::Number)
                    .map_err(|_| self.error("expected a number, list or constructor"))
            }
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn items(&mut self, close: u8) -> Result<Vec<Expr>> {
        let mut out = Vec::new();
        if self.peek() == Some(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(c) if c == close => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error(&format!("expected `,` or `{}`", close as char))),
            }
        }
    }
}

fn numbers(name: &str, args: &[Expr]) -> Result<Vec<f64>> {
    args.iter()
        .map(|a| match a {
            Expr::Number(v) => Ok(*v),
            _ => Err(Error::Config(format!("`{name}` takes numeric arguments"))),
        })
        .collect()
}

fn arity(name: &str, args: &[f64], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::Config(format!("`{name}` takes {n} argument(s), got {}", args.len())));
    }
    Ok(())
}

/// Builds a potential on `domain` from
/// `constant(c) | sine_density(a) | plane(z0, w) | graph(w, c0, ...) | sum([..])`.
pub fn build_potential(e: &Expr, domain: &AxisBox) -> Result<Potential> {
    match e {
        Expr::Call(name, args) => match name.as_str() {
            "sum" => {
                let parts: Vec<&Expr> = match args.as_slice() {
                    [Expr::List(items)] => items.iter().collect(),
                    _ => args.iter().collect(),
                };
                Ok(Potential::sum(
                    parts.into_iter().map(|p| build_potential(p, domain)).collect::<Result<_>>()?,
                ))
            }
            "constant" => {
                let v = numbers(name, args)?;
                arity(name, &v, 1)?;
                Potential::constant(v[0], domain)
            }
            "sine_density" => {
                let v = numbers(name, args)?;
                arity(name, &v, 1)?;
                Potential::sine_density(v[0], domain)
            }
            "plane" => {
                let v = numbers(name, args)?;
                arity(name, &v, 2)?;
                Potential::plane(v[0], v[1], domain)
            }
            "graph" => {
                let v = numbers(name, args)?;
                if v.len() < 2 {
                    return Err(Error::Config("`graph` takes a weight and >= 1 coefficient".into()));
                }
                Potential::graph(v[0], &v[1..], domain)
            }
            other => Err(Error::Config(format!("unknown potential constructor `{other}`"))),
        },
        _ => Err(Error::Config("potential must be a constructor call".into())),
    }
}

pub fn parse_potential(text: &str, domain: &AxisBox) -> Result<Potential> {
    build_potential(&parse(text)?, domain)
}
