use std::fmt;

use super::jet::Jet;
use super::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// First spatial coordinate (`x` or `x1`).
    X,
    /// Second spatial coordinate.
    X2,
    T,
    Y,
    U,
    W,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::X2 => "x2",
            Var::T => "t",
            Var::Y => "y",
            Var::U => "u",
            Var::W => "w",
        }
    }

    pub fn from_name(s: &str) -> Option<Var> {
        Some(match s {
            "x" | "x1" => Var::X,
            "x2" => Var::X2,
            "t" => Var::T,
            "y" => Var::Y,
            "u" => Var::U,
            "w" => Var::W,
            _ => return None,
        })
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A set of expression variables, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct VarSet(u8);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn of(vars: &[Var]) -> VarSet {
        VarSet(vars.iter().fold(0, |m, v| m | v.bit()))
    }

    /// Every variable.
    pub fn all() -> VarSet {
        VarSet::of(&[Var::X, Var::X2, Var::T, Var::Y, Var::U, Var::W])
    }

    /// Spatial coordinates only.
    pub fn space() -> VarSet {
        VarSet::of(&[Var::X, Var::X2])
    }

    pub fn contains(self, v: Var) -> bool {
        self.0 & v.bit() != 0
    }

    pub fn insert(&mut self, v: Var) {
        self.0 |= v.bit();
    }

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn vars(&self, set: &mut VarSet) {
        match self {
            Node::Num(_) | Node::Pi => {}
            Node::Var(v) => set.insert(*v),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.vars(set),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.vars(set);
                b.vars(set);
            }
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            Node::Num(c) => *c,
            Node::Pi => std::f64::consts::PI,
            Node::Var(v) => p.get(*v),
            Node::Neg(a) => -a.eval(p),
            Node::Add(a, b) => a.eval(p) + b.eval(p),
            Node::Sub(a, b) => a.eval(p) - b.eval(p),
            Node::Mul(a, b) => a.eval(p) * b.eval(p),
            Node::Div(a, b) => a.eval(p) / b.eval(p),
            Node::Pow(a, n) => a.eval(p).powi(*n),
            Node::Call(f, a) => {
                let z = a.eval(p);
                match f {
                    Func::Sin => z.sin(),
                    Func::Cos => z.cos(),
                    Func::Exp => z.exp(),
                }
            }
        }
    }

    pub fn jet(&self, p: &Point) -> Jet {
        match self {
            Node::Num(c) => Jet::constant(*c),
            Node::Pi => Jet::constant(std::f64::consts::PI),
            Node::Var(v) => match v {
                Var::Y => Jet::variable(p.y, 0),
                Var::U => Jet::variable(p.u, 1),
                Var::W => Jet::variable(p.w, 2),
                other => Jet::constant(p.get(*other)),
            },
            Node::Neg(a) => -a.jet(p),
            Node::Add(a, b) => a.jet(p) + b.jet(p),
            Node::Sub(a, b) => a.jet(p) - b.jet(p),
            Node::Mul(a, b) => a.jet(p) * b.jet(p),
            Node::Div(a, b) => a.jet(p) / b.jet(p),
            Node::Pow(a, n) => {
                let base = a.jet(p);
                if *n < 0 {
                    base.powi(-n).recip()
                } else {
                    base.powi(*n)
                }
            }
            Node::Call(f, a) => {
                let z = a.jet(p);
                match f {
                    Func::Sin => z.sin(),
                    Func::Cos => z.cos(),
                    Func::Exp => z.exp(),
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Num(c) if *c < 0.0 || c.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_child(&self, child: &Node, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if child.precedence() < min_prec {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) => write!(f, "{c}"),
            Node::Pi => f.write_str("pi"),
            Node::Var(v) => f.write_str(v.name()),
            Node::Neg(a) => {
                f.write_str("-")?;
                self.fmt_child(a, 3, f)
            }
            Node::Add(a, b) => {
                self.fmt_child(a, 1, f)?;
                f.write_str(" + ")?;
                self.fmt_child(b, 2, f)
            }
            Node::Sub(a, b) => {
                self.fmt_child(a, 1, f)?;
                f.write_str(" - ")?;
                self.fmt_child(b, 2, f)
            }
            Node::Mul(a, b) => {
                self.fmt_child(a, 2, f)?;
                f.write_str("*")?;
                self.fmt_child(b, 3, f)
            }
            Node::Div(a, b) => {
                self.fmt_child(a, 2, f)?;
                f.write_str("/")?;
                self.fmt_child(b, 3, f)
            }
            Node::Pow(a, n) => {
                self.fmt_child(a, 5, f)?;
                write!(f, "^{n}")
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
