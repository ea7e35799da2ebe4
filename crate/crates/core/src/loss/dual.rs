//! Forward-mode scalars carrying a 4-wide tangent.
//!
//! Every loss is evaluated once over [`Dual`] values seeded on the four
//! predicted-box parameters `(cx, cy, w, h)`, which yields the exact
//! analytic gradient alongside the value. The `ns` flag records that the
//! evaluation crossed a non-differentiable seam (a tie inside `min`/`max`
//! or an `abs` kink); at such points the propagated derivative is the
//! symmetric subgradient — the average of the two one-sided slopes, which
//! is also what a central finite difference measures there.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: [f64; 4],
    pub ns: bool,
}

impl Dual {
    pub fn con(v: f64) -> Self {
        Self {
            v,
            d: [0.0; 4],
            ns: false,
        }
    }

    /// Variable seeded on parameter `i` of the predicted box.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 4];
        d[i] = 1.0;
        Self { v, d, ns: false }
    }

    fn map(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            d: self.d.map(|x| x * dv),
            ns: self.ns,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.map(e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.map(s, 0.5 / s)
    }

    pub fn atan(self) -> Self {
        self.map(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }

    pub fn powf(self, e: f64) -> Self {
        // Base 0 with exponent > 1 has slope 0; avoid 0^(e-1) blowups.
        let dv = if self.v == 0.0 && e > 1.0 {
            0.0
        } else {
            e * self.v.powf(e - 1.0)
        };
        self.map(self.v.powf(e), dv)
    }

    pub fn sq(self) -> Self {
        self.map(self.v * self.v, 2.0 * self.v)
    }

    /// `|x|`; at the kink the subgradient is 0 (average of the ±1 slopes).
    pub fn abs(self) -> Self {
        if self.v > 0.0 {
            self
        } else if self.v < 0.0 {
            -self
        } else {
            Self {
                v: 0.0,
                d: [0.0; 4],
                ns: true,
            }
        }
    }

    /// Minimum with tie-averaged subgradient.
    pub fn min(self, o: Self) -> Self {
        if self.v < o.v {
            Self {
                ns: self.ns || o.ns,
                ..self
            }
        } else if o.v < self.v {
            Self {
                ns: self.ns || o.ns,
                ..o
            }
        } else {
            Self {
                v: self.v,
                d: avg(self.d, o.d),
                ns: true,
            }
        }
    }

    /// Maximum with tie-averaged subgradient.
    pub fn max(self, o: Self) -> Self {
        if self.v > o.v {
            Self {
                ns: self.ns || o.ns,
                ..self
            }
        } else if o.v > self.v {
            Self {
                ns: self.ns || o.ns,
                ..o
            }
        } else {
            Self {
                v: self.v,
                d: avg(self.d, o.d),
                ns: true,
            }
        }
    }

    /// `max(x, 0)` — the clamp used on intersection edge factors.
    pub fn clamp_min0(self) -> Self {
        self.max(Dual::con(0.0))
    }
}

fn avg(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        (a[0] + b[0]) / 2.0,
        (a[1] + b[1]) / 2.0,
        (a[2] + b[2]) / 2.0,
        (a[3] + b[3]) / 2.0,
    ]
}

/// Minimum of several candidates. On a multi-way value tie the tangent is
/// the per-component midpoint of the attaining branches' extreme slopes,
/// which is exactly what a central finite difference measures across the
/// seam (the right slope is the branch minimum, the left the maximum).
pub(crate) fn min_multi(cands: &[Dual]) -> Dual {
    let ns_any = cands.iter().any(|c| c.ns);
    let m = cands.iter().map(|c| c.v).fold(f64::INFINITY, f64::min);
    let attaining: Vec<&Dual> = cands.iter().filter(|c| c.v == m).collect();
    if attaining.len() == 1 {
        return Dual {
            ns: ns_any,
            ..*attaining[0]
        };
    }
    let mut d = [0.0; 4];
    for (j, slot) in d.iter_mut().enumerate() {
        let lo = attaining.iter().map(|c| c.d[j]).fold(f64::INFINITY, f64::min);
        let hi = attaining
            .iter()
            .map(|c| c.d[j])
            .fold(f64::NEG_INFINITY, f64::max);
        *slot = (lo + hi) / 2.0;
    }
    Dual { v: m, d, ns: true }
}

fn zip(a: [f64; 4], b: [f64; 4], f: impl Fn(f64, f64) -> f64) -> [f64; 4] {
    [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2]), f(a[3], b[3])]
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: zip(self.d, o.d, |a, b| a + b),
            ns: self.ns || o.ns,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: zip(self.d, o.d, |a, b| a - b),
            ns: self.ns || o.ns,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + o.d[0] * self.v,
                self.d[1] * o.v + o.d[1] * self.v,
                self.d[2] * o.v + o.d[2] * self.v,
                self.d[3] * o.v + o.d[3] * self.v,
            ],
            ns: self.ns || o.ns,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        // the value must be a single rounded division so quotients like
        // x/x collapse to exactly 1; only the tangent uses the reciprocal
        let v = self.v / o.v;
        let inv = 1.0 / o.v;
        Dual {
            v,
            d: [
                (self.d[0] - v * o.d[0]) * inv,
                (self.d[1] - v * o.d[1]) * inv,
                (self.d[2] - v * o.d[2]) * inv,
                (self.d[3] - v * o.d[3]) * inv,
            ],
            ns: self.ns || o.ns,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: self.d.map(|x| -x),
            ns: self.ns,
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual {
            v: self.v + o,
            ..self
        }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual {
            v: self.v - o,
            ..self
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual {
            v: self.v * o,
            d: self.d.map(|x| x * o),
            ns: self.ns,
        }
    }
}

impl Sub<Dual> for f64 {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self - o.v,
            d: o.d.map(|x| -x),
            ns: o.ns,
        }
    }
}
