//! Recursive-descent parser for the scalar expression language.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = ("-" | "+") unary | power ;
//! power   = primary [ "^" [ "-" | "+" ] integer ] ;
//! primary = number | "pi" | variable | func "(" expr ")" | "(" expr ")" ;
//! ```

use super::ast::{Func, Node, Var, VarSet};
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allowed: VarSet,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let negative = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(syntax(start, "expected integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let n: i32 = digits
            .parse()
            .map_err(|_| syntax(start, "exponent out of range"))?;
        Ok(Node::Pow(Box::new(base), if negative { -n } else { n }))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return Err(syntax(start, "malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            } else {
                return Err(syntax(q, "malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&s[start..p]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| syntax(start, "malformed number"))?;
        self.pos = p;
        Ok(Node::Num(v))
    }

    fn primary(&mut self) -> Result<Node> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(syntax(self.pos, "unexpected end of input")),
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if !self.eat(b')') {
                return Err(syntax(self.pos, "expected `)`"));
            }
            return Ok(inner);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            if self.peek() == Some(b'(') {
                let func = Func::from_name(name)
                    .ok_or_else(|| syntax(start, format!("unknown function `{name}`")))?;
                self.pos += 1;
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(syntax(self.pos, "expected `)`"));
                }
                return Ok(Node::Call(func, Box::new(arg)));
            }
            if name == "pi" {
                return Ok(Node::Pi);
            }
            let var = Var::from_name(name).ok_or_else(|| Error::UnknownVariable {
                name: name.to_string(),
                offset: start,
            })?;
            if !self.allowed.contains(var) {
                return Err(Error::DisallowedVariable {
                    name: name.to_string(),
                    offset: start,
                });
            }
            return Ok(Node::Var(var));
        }
        Err(syntax(self.pos, format!("unexpected character `{}`", c as char)))
    }
}

pub fn parse(text: &str, allowed: VarSet) -> Result<Node> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        allowed,
    };
    if p.peek().is_none() {
        return Err(syntax(p.pos, "empty expression"));
    }
    let node = p.expr()?;
    if p.peek().is_some() {
        return Err(syntax(p.pos, "trailing input"));
    }
    Ok(node)
}
