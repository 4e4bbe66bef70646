//! Scalar integrands and nonlinearities as parsed, twice-differentiable expressions.
//!
//! An expression is a syntax tree over the variables `x` (alias `x1`), `x2`,
//! `t`, `y`, `u`, `w`, numeric literals, the constant `pi`, the operators
//! `+ - * /`, integer powers `^n`, and the smooth primitives `sin`, `cos`,
//! `exp`. Partial derivatives with respect to `(y, u, w)` up to second order
//! come from forward-mode jets; see [`jet::Jet`]. The grammar is documented in
//! `docs/grammar.md`.

mod ast;
pub mod jet;
mod parse;

use std::fmt;
use std::str::FromStr;

pub use ast::{Func, Node, Var, VarSet};

use crate::error::{Error, Result};

/// Evaluation point `(x, t, y, u, w)`; `x[1]` is only read in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: [f64; 2],
    pub t: f64,
    pub y: f64,
    pub u: f64,
    pub w: f64,
}

impl Point {
    pub fn new(x: [f64; 2], t: f64, y: f64, u: f64, w: f64) -> Self {
        Point { x, t, y, u, w }
    }

    pub fn space(x: [f64; 2]) -> Self {
        Point {
            x,
            ..Default::default()
        }
    }

    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::X => self.x[0],
            Var::X2 => self.x[1],
            Var::T => self.t,
            Var::Y => self.y,
            Var::U => self.u,
            Var::W => self.w,
        }
    }

    pub fn set(&mut self, v: Var, value: f64) {
        match v {
            Var::X => self.x[0] = value,
            Var::X2 => self.x[1] = value,
            Var::T => self.t = value,
            Var::Y => self.y = value,
            Var::U => self.u = value,
            Var::W => self.w = value,
        }
    }
}

/// Value and partial derivatives in `(y, u, w)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivs {
    pub v: f64,
    pub y: f64,
    pub u: f64,
    pub w: f64,
    pub yy: f64,
    pub yu: f64,
    pub uu: f64,
    pub yw: f64,
    pub uw: f64,
    pub ww: f64,
}

impl From<jet::Jet> for Derivs {
    fn from(j: jet::Jet) -> Self {
        Derivs {
            v: j.v,
            y: j.g[0],
            u: j.g[1],
            w: j.g[2],
            yy: j.h[0][0],
            yu: j.h[0][1],
            uu: j.h[1][1],
            yw: j.h[0][2],
            uw: j.h[1][2],
            ww: j.h[2][2],
        }
    }
}

/// A parsed scalar function with automatic first and second partials.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFn2 {
    root: Node,
    allowed: VarSet,
    used: VarSet,
}

impl ScalarFn2 {
    /// Parses `text`, rejecting variables outside `allowed`.
    pub fn parse(text: &str, allowed: VarSet) -> Result<Self> {
        let root = parse::parse(text, allowed)?;
        let mut used = VarSet::EMPTY;
        root.vars(&mut used);
        Ok(ScalarFn2 {
            root,
            allowed,
            used,
        })
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn2 {
            root: Node::Num(c),
            allowed: VarSet::all(),
            used: VarSet::EMPTY,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// Variables the expression was allowed to reference.
    pub fn allowed(&self) -> VarSet {
        self.allowed
    }

    /// Variables the expression actually references.
    pub fn used(&self) -> VarSet {
        self.used
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.used.contains(v)
    }

    /// Re-checks the expression against a (possibly narrower) variable set.
    pub fn restrict(mut self, allowed: VarSet) -> Result<Self> {
        if !self.used.is_subset(allowed) {
            let text = self.to_string();
            // reparse to report the offending offset
            return Err(ScalarFn2::parse(&text, allowed).unwrap_err());
        }
        self.allowed = allowed;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        self.root.eval(p)
    }

    pub fn derivs(&self, p: &Point) -> Derivs {
        self.root.jet(p).into()
    }
}

impl fmt::Display for ScalarFn2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl FromStr for ScalarFn2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScalarFn2::parse(s, VarSet::all())
    }
}

/// Convenience wrapper with the full variable set.
pub fn parse_expression(text: &str, allowed: VarSet) -> Result<ScalarFn2> {
    ScalarFn2::parse(text, allowed)
}
