use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Q = Rational64;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(n)
}

pub fn q_to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Integer part when `x` is an integer.
pub fn q_int(x: Q) -> Option<i64> {
    if x.is_integer() {
        Some(x.to_integer())
    } else {
        None
    }
}

/// Default float comparison tolerance, overridable through `VOACALC_TOL`.
pub fn default_tol() -> f64 {
    std::env::var("VOACALC_TOL")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-10)
}

pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    const EXACT: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_q(x: Q) -> Self;
    fn from_i64(n: i64) -> Self {
        Self::from_q(qi(n))
    }
    /// Exact zero test (used for sparsity, not for tolerance comparisons).
    fn is_zero(&self) -> bool;
    fn conj(&self) -> Self;
    fn inv(&self) -> Option<Self>;
    /// e^{iπr}.
    fn phase(r: Q) -> Result<Self>;
    fn to_c64(&self) -> Complex64;
    /// Float value as a scalar; the exact backend refuses.
    fn from_c64(z: Complex64) -> Result<Self>;
    fn abs(&self) -> f64 {
        self.to_c64().norm()
    }
    /// Magnitude used for pivoting.
    fn pivot_size(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.abs()
        }
    }
}

impl Scalar for Complex64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_q(x: Q) -> Self {
        Complex64::new(q_to_f64(x), 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn conj(&self) -> Self {
        Complex64::conj(self)
    }
    fn inv(&self) -> Option<Self> {
        if Scalar::is_zero(self) {
            None
        } else {
            Some(Complex64::inv(self))
        }
    }
    fn phase(r: Q) -> Result<Self> {
        // exact values on quarter-integers keep float data symmetric
        let r8 = r * qi(4);
        if r8.is_integer() {
            let k = r8.to_integer().rem_euclid(8);
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let v = [
                (1.0, 0.0),
                (h, h),
                (0.0, 1.0),
                (-h, h),
                (-1.0, 0.0),
                (-h, -h),
                (0.0, -1.0),
                (h, -h),
            ][k as usize];
            return Ok(Complex64::new(v.0, v.1));
        }
        Ok(Complex64::from_polar(1.0, std::f64::consts::PI * q_to_f64(r)))
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
    fn from_c64(z: Complex64) -> Result<Self> {
        Ok(z)
    }
}

/// Element of Q(ζ) with ζ = e^{iπ/4}, stored as (a0 + a1 ζ + a2 ζ² + a3 ζ³)/den.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cyc8 {
    num: [i64; 4],
    den: i64,
}

fn narrow(x: i128) -> i64 {
    i64::try_from(x).expect("Cyc8 coefficient overflow")
}

impl Cyc8 {
    pub fn new(num: [i64; 4], den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::normalized([num[0] as i128, num[1] as i128, num[2] as i128, num[3] as i128], den as i128)
    }

    fn normalized(mut n: [i128; 4], mut d: i128) -> Self {
        if n.iter().all(|x| *x == 0) {
            return Cyc8 { num: [0; 4], den: 1 };
        }
        if d < 0 {
            d = -d;
            for x in n.iter_mut() {
                *x = -*x;
            }
        }
        if d != 1 {
            let mut g = d;
            for x in n.iter() {
                g = g.gcd(x);
                if g == 1 {
                    break;
                }
            }
            if g > 1 {
                d /= g;
                for x in n.iter_mut() {
                    *x /= g;
                }
            }
        }
        Cyc8 { num: [narrow(n[0]), narrow(n[1]), narrow(n[2]), narrow(n[3])], den: narrow(d) }
    }

    pub fn zeta_pow(k: i64) -> Self {
        let k = k.rem_euclid(8);
        let mut num = [0i64; 4];
        if k < 4 {
            num[k as usize] = 1;
        } else {
            num[(k - 4) as usize] = -1;
        }
        Cyc8 { num, den: 1 }
    }

    pub fn i() -> Self {
        Self::zeta_pow(2)
    }

    pub fn sqrt2() -> Self {
        // ζ + ζ⁻¹ = ζ - ζ³
        Cyc8 { num: [0, 1, 0, -1], den: 1 }
    }

    pub fn coeffs(&self) -> ([i64; 4], i64) {
        (self.num, self.den)
    }

    /// Rational value when the element lies in Q.
    pub fn as_rational(&self) -> Option<Q> {
        if self.num[1] == 0 && self.num[2] == 0 && self.num[3] == 0 {
            Some(Q::new(self.num[0], self.den))
        } else {
            None
        }
    }

    fn galois(&self, k: i64) -> Self {
        let [a0, a1, a2, a3] = self.num;
        let num = match k.rem_euclid(8) {
            1 => [a0, a1, a2, a3],
            3 => [a0, a3, -a2, a1],
            5 => [a0, -a1, a2, -a3],
            7 => [a0, -a3, -a2, -a1],
            _ => panic!("not a unit mod 8"),
        };
        Cyc8 { num, den: self.den }
    }

    /// Best exact element within `tol` of `z` of the form ζ^k (p/d) or ζ^k (p/d) √2 with d ≤ `max_den`.
    pub fn recognize(z: Complex64, max_den: i64, tol: f64) -> Option<Self> {
        if z.norm() < tol {
            return Some(Self::zero_val());
        }
        let mut best: Option<(f64, Cyc8)> = None;
        for k in 0..8 {
            let u = Self::zeta_pow(k);
            let w = z * u.to_c64().conj();
            for (scale, base) in [(1.0, Cyc8::one_val()), (std::f64::consts::SQRT_2, Cyc8::sqrt2())] {
                let r = w.re / scale;
                for d in 1..=max_den {
                    let p = (r * d as f64).round();
                    if p == 0.0 || p.abs() > 1e15 {
                        continue;
                    }
                    let cand = u * base * Cyc8::from_q(Q::new(p as i64, d));
                    let err = (cand.to_c64() - z).norm();
                    if err < tol && best.as_ref().map_or(true, |(e, _)| err < *e) {
                        best = Some((err, cand));
                    }
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn zero_val() -> Self {
        Cyc8 { num: [0; 4], den: 1 }
    }

    fn one_val() -> Self {
        Cyc8 { num: [1, 0, 0, 0], den: 1 }
    }
}

impl fmt::Debug for Cyc8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Cyc8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["", "z", "z^2", "z^3"];
        let mut parts = Vec::new();
        for (k, c) in self.num.iter().enumerate() {
            if *c == 0 {
                continue;
            }
            let s = if k == 0 {
                format!("{}", c)
            } else if *c == 1 {
                names[k].to_string()
            } else if *c == -1 {
                format!("-{}", names[k])
            } else {
                format!("{}*{}", c, names[k])
            };
            parts.push(s);
        }
        let body = if parts.is_empty() { "0".to_string() } else { parts.join(" + ").replace("+ -", "- ") };
        if self.den == 1 {
            write!(f, "{}", body)
        } else {
            write!(f, "({})/{}", body, self.den)
        }
    }
}

impl Add for Cyc8 {
    type Output = Cyc8;
    fn add(self, o: Cyc8) -> Cyc8 {
        if self.den == o.den {
            let n = [
                self.num[0] as i128 + o.num[0] as i128,
                self.num[1] as i128 + o.num[1] as i128,
                self.num[2] as i128 + o.num[2] as i128,
                self.num[3] as i128 + o.num[3] as i128,
            ];
            return Cyc8::normalized(n, self.den as i128);
        }
        let l = (self.den as i128).lcm(&(o.den as i128));
        let a = l / self.den as i128;
        let b = l / o.den as i128;
        let mut n = [0i128; 4];
        for k in 0..4 {
            n[k] = self.num[k] as i128 * a + o.num[k] as i128 * b;
        }
        Cyc8::normalized(n, l)
    }
}

impl Neg for Cyc8 {
    type Output = Cyc8;
    fn neg(self) -> Cyc8 {
        Cyc8 { num: [-self.num[0], -self.num[1], -self.num[2], -self.num[3]], den: self.den }
    }
}

impl Sub for Cyc8 {
    type Output = Cyc8;
    fn sub(self, o: Cyc8) -> Cyc8 {
        self + (-o)
    }
}

impl Mul for Cyc8 {
    type Output = Cyc8;
    fn mul(self, o: Cyc8) -> Cyc8 {
        let a = self.num.map(|x| x as i128);
        let b = o.num.map(|x| x as i128);
        let mut c = [0i128; 4];
        for i in 0..4 {
            if a[i] == 0 {
                continue;
            }
            for j in 0..4 {
                let p = a[i] * b[j];
                let k = i + j;
                if k < 4 {
                    c[k] += p;
                } else {
                    c[k - 4] -= p;
                }
            }
        }
        let d = self.den as i128 * o.den as i128;
        if d == 1 {
            return Cyc8 { num: c.map(narrow), den: 1 };
        }
        Cyc8::normalized(c, d)
    }
}

impl Scalar for Cyc8 {
    const EXACT: bool = true;
    fn zero() -> Self {
        Self::zero_val()
    }
    fn one() -> Self {
        Self::one_val()
    }
    fn from_q(x: Q) -> Self {
        Cyc8::new([*x.numer(), 0, 0, 0], *x.denom())
    }
    fn is_zero(&self) -> bool {
        self.num == [0; 4]
    }
    fn conj(&self) -> Self {
        self.galois(7)
    }
    fn inv(&self) -> Option<Self> {
        if Scalar::is_zero(self) {
            return None;
        }
        let p = self.galois(3) * self.galois(5) * self.galois(7);
        let n = *self * p;
        let nq = n.as_rational().expect("norm is rational");
        Some(p * Cyc8::from_q(nq.recip()))
    }
    fn phase(r: Q) -> Result<Self> {
        let r4 = r * qi(4);
        if !r4.is_integer() {
            return Err(Error::NotExact(format!("e^(i pi {}) is outside Q(zeta_8)", r)));
        }
        Ok(Cyc8::zeta_pow(r4.to_integer()))
    }
    fn to_c64(&self) -> Complex64 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let [a0, a1, a2, a3] = self.num.map(|x| x as f64);
        let d = self.den as f64;
        Complex64::new((a0 + h * a1 - h * a3) / d, (h * a1 + a2 + h * a3) / d)
    }
    fn from_c64(z: Complex64) -> Result<Self> {
        Err(Error::NotExact(format!("float value {} in the exact backend", z)))
    }
}

/// Rational helpers used in combinatorial coefficients.
pub fn binom_q(top: Q, k: i64) -> Q {
    // generalized binomial C(top, k), k ≥ 0
    let mut r = Q::one();
    for j in 0..k {
        r = r * (top - qi(j)) / qi(j + 1);
    }
    r
}

pub fn binom_i(top: i64, k: i64) -> Q {
    if k < 0 {
        return Q::zero();
    }
    binom_q(qi(top), k)
}

pub fn factorial(n: i64) -> Q {
    (1..=n).fold(Q::one(), |a, k| a * qi(k))
}

pub fn q_abs(x: Q) -> Q {
    x.abs()
}

pub fn q_floor(x: Q) -> i64 {
    x.floor().to_integer()
}

pub fn q_f(x: Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
