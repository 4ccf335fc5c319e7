//! Double-double arithmetic for high-precision test oracles.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let z = s - a;
        Dd { hi: s, lo: (a - (s - z)) + (b - z) }
    }

    fn quick(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let s = Dd::quick(s.hi, s.lo + t.hi);
        Dd::quick(s.hi, s.lo + t.lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        Dd::quick(q1, q2) + Dd::from(q3)
    }
}

/// Gauss–Jordan inverse with partial pivoting in double-double, plus
/// ln|det| and the sign of det.
pub fn dd_inverse(a: &[f64], n: usize) -> Option<(Vec<Dd>, f64, f64)> {
    let mut m: Vec<Dd> = a.iter().map(|&v| Dd::from(v)).collect();
    let mut inv: Vec<Dd> = (0..n * n).map(|k| Dd::from(if k / n == k % n { 1.0 } else { 0.0 })).collect();
    let mut log_det = 0.0;
    let mut sign = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].hi.abs().total_cmp(&m[j * n + col].hi.abs()))?;
        if m[piv * n + col].hi == 0.0 {
            return None;
        }
        if piv != col {
            sign = -sign;
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let p = m[col * n + col];
        if p.hi < 0.0 {
            sign = -sign;
        }
        log_det += p.to_f64().abs().ln();
        for k in 0..n {
            m[col * n + k] = m[col * n + k] / p;
            inv[col * n + k] = inv[col * n + k] / p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f.hi == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] = m[r * n + k] - f * m[col * n + k];
                inv[r * n + k] = inv[r * n + k] - f * inv[col * n + k];
            }
        }
    }
    Some((inv, log_det, sign))
}

pub fn dd_matvec(m: &[Dd], n: usize, v: &[f64]) -> Vec<Dd> {
    (0..n)
        .map(|i| (0..n).fold(Dd::ZERO, |acc, j| acc + m[i * n + j] * Dd::from(v[j])))
        .collect()
}

pub fn dd_dot(a: &[f64], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(Dd::ZERO, |acc, (&x, &y)| acc + Dd::from(x) * y)
}
