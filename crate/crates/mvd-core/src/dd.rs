//! Double-double arithmetic: an unevaluated sum of two `f64`s giving
//! roughly 31 significant digits.
//!
//! The residual oracle differentiates candidate solutions with centered
//! stencils; at usable step sizes the second-difference numerator lives
//! around 1e-10, far below what plain `f64` evaluation of the candidate
//! can resolve. Evaluating the candidate in double-double keeps the
//! stencil truncation-limited instead of rounding-limited.
//!
//! Only the operations the builtin solutions need are provided: the four
//! arithmetic ops, negation, and `exp`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Residue of ln 2 below its nearest f64; (LN_2, LN2_LO) is ln 2 to
/// double-double precision.
const LN2_LO: f64 = 2.3190468138462996e-17;

/// Two-`f64` extended-precision value; `hi` is the nearest `f64`, `lo`
/// the residue, with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum: returns `(s, e)` with `s + e == a + b` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

/// Error-free sum assuming `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free product via FMA: `p + e == a * b` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn hi(self) -> f64 {
        self.hi
    }

    /// Nearest `f64` (exact for a normalized value).
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    /// Exact scaling by a power of two.
    fn ldexp(self, k: i32) -> Dd {
        let f = exp2i(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    /// e^self, accurate to roughly 1e-31 relative.
    pub fn exp(self) -> Dd {
        if self.hi <= -709.0 {
            return Dd::ZERO;
        }
        if self.hi >= 709.0 {
            return Dd::new(f64::INFINITY, 0.0);
        }
        // Range-reduce: self = k*ln2 + r with |r| <= ln2/2, then Taylor.
        let ln2 = std::f64::consts::LN_2;
        let k = (self.hi / ln2).round();
        let r = self - Dd::new(ln2, LN2_LO) * Dd::from(k);
        let mut sum = Dd::ONE + r;
        let mut term = r;
        let mut i = 2.0;
        while i <= 32.0 {
            term = term * r / Dd::from(i);
            sum = sum + term;
            if term.hi.abs() < 1e-35 * sum.hi.abs() {
                break;
            }
            i += 1.0;
        }
        sum.ldexp(k as i32)
    }
}

fn exp2i(k: i32) -> f64 {
    // Grid scales stay far from the subnormal range; a plain powi is exact.
    2.0f64.powi(k)
}

impl From<f64> for Dd {
    #[inline]
    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, rhs: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, rhs.hi);
        let (t1, t2) = two_sum(self.lo, rhs.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, rhs: Dd) -> Dd {
        self + (-rhs)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, rhs: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        // Three long-division steps, then renormalize.
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Dd::from(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Dd::from(q2);
        let q3 = r.hi / rhs.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd::new(s, e + q3)
    }
}
