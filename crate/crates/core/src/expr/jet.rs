//! Second-order forward-mode jets in the three active variables `(y, u, w)`.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const NACT: usize = 3;

/// Value, gradient and (symmetric) Hessian with respect to `(y, u, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; NACT],
    pub h: [[f64; NACT]; NACT],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; NACT],
            h: [[0.0; NACT]; NACT],
        }
    }

    pub fn variable(v: f64, slot: usize) -> Self {
        let mut j = Jet::constant(v);
        j.g[slot] = 1.0;
        j
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Jet::constant(f0);
        for i in 0..NACT {
            out.g[i] = f1 * self.g[i];
            for j in 0..NACT {
                out.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                let a = self.v;
                self.chain(a.powi(n), nf * a.powi(n - 1), nf * (nf - 1.0) * a.powi(n - 2))
            }
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..NACT {
            self.g[i] += o.g[i];
            for j in 0..NACT {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.v = -self.v;
        for i in 0..NACT {
            self.g[i] = -self.g[i];
            for j in 0..NACT {
                self.h[i][j] = -self.h[i][j];
            }
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..NACT {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..NACT {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_hessian() {
        // (y*u) has mixed second derivative 1
        let y = Jet::variable(2.0, 0);
        let u = Jet::variable(3.0, 1);
        let p = y * u;
        assert_eq!(p.v, 6.0);
        assert_eq!(p.g, [3.0, 2.0, 0.0]);
        assert_eq!(p.h[0][1], 1.0);
        assert_eq!(p.h[1][0], 1.0);
        assert_eq!(p.h[0][0], 0.0);
    }

    #[test]
    fn quotient_and_power() {
        let y = Jet::variable(2.0, 0);
        let q = Jet::constant(1.0) / y;
        assert!((q.g[0] + 0.25).abs() < 1e-15);
        assert!((q.h[0][0] - 0.25).abs() < 1e-15);
        let c = y.powi(3);
        assert_eq!(c.v, 8.0);
        assert_eq!(c.g[0], 12.0);
        assert_eq!(c.h[0][0], 12.0);
    }
}
