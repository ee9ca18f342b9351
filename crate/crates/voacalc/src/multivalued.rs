use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{q_f, Scalar, Q};

/// Nonzero complex number with an unreduced argument.
///
/// `arg_pi` keeps an exact copy of arg/π when it is known to be rational; it lets
/// unit-modulus powers stay inside the exact backend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngledComplex {
    pub modulus: f64,
    pub arg: f64,
    pub arg_pi: Option<Q>,
}

impl AngledComplex {
    pub fn new(modulus: f64, arg: f64) -> Self {
        assert!(modulus > 0.0, "AngledComplex needs a positive modulus");
        AngledComplex { modulus, arg, arg_pi: None }
    }

    /// e^{iπr} with exact bookkeeping.
    pub fn unit_pi(r: Q) -> Self {
        AngledComplex { modulus: 1.0, arg: PI * q_f(r), arg_pi: Some(r) }
    }

    pub fn real(x: f64) -> Self {
        Self::new(x, 0.0)
    }

    pub fn one() -> Self {
        Self::unit_pi(Q::zero())
    }

    /// Principal argument in (-π, π].
    pub fn from_c64(z: Complex64) -> Self {
        Self::new(z.norm(), z.arg())
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::from_polar(self.modulus, self.arg)
    }

    pub fn mul(&self, o: &AngledComplex) -> AngledComplex {
        let arg_pi = match (self.arg_pi, o.arg_pi) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        AngledComplex { modulus: self.modulus * o.modulus, arg: self.arg + o.arg, arg_pi }
    }

    pub fn conj(&self) -> AngledComplex {
        AngledComplex { modulus: self.modulus, arg: -self.arg, arg_pi: self.arg_pi.map(|a| -a) }
    }

    pub fn inv(&self) -> AngledComplex {
        AngledComplex { modulus: 1.0 / self.modulus, arg: -self.arg, arg_pi: self.arg_pi.map(|a| -a) }
    }

    pub fn pow(&self, s: Q) -> AngledComplex {
        let sf = q_f(s);
        AngledComplex { modulus: self.modulus.powf(sf), arg: self.arg * sf, arg_pi: self.arg_pi.map(|a| a * s) }
    }

    pub fn powf(&self, s: f64) -> AngledComplex {
        AngledComplex { modulus: self.modulus.powf(s), arg: self.arg * s, arg_pi: None }
    }

    /// z^s in the scalar backend `S`.
    pub fn pow_scalar<S: Scalar>(&self, s: Q) -> Result<S> {
        let p = self.pow(s);
        if S::EXACT {
            match p.arg_pi {
                Some(r) if p.modulus == 1.0 => S::phase(r),
                _ => Err(Error::NotExact(format!("power {} of a non-exact number", s))),
            }
        } else {
            S::from_c64(p.to_c64())
        }
    }
}

/// Continuous argument of `f` at t = 1, transported from `start_arg` at t = 0.
pub fn arg_transport(f: &dyn Fn(f64) -> Complex64, start_arg: f64) -> Result<f64> {
    let f0 = f(0.0);
    if f0.norm() == 0.0 {
        return Err(Error::Invalid("path through zero".into()));
    }
    let mut arg = start_arg;
    let mut prev = f0;
    let mut t: f64 = 0.0;
    let mut h = 1.0 / 64.0;
    while t < 1.0 {
        let t1 = (t + h).min(1.0);
        let v = f(t1);
        if v.norm() == 0.0 || !v.norm().is_finite() {
            return Err(Error::Invalid("path through zero".into()));
        }
        let d = (v / prev).arg();
        if d.abs() >= PI / 2.0 {
            h /= 2.0;
            if h < 1e-14 {
                return Err(Error::Invalid("path through zero".into()));
            }
            continue;
        }
        arg += d;
        prev = v;
        t = t1;
        if d.abs() < PI / 8.0 {
            h *= 2.0;
        }
    }
    Ok(arg)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct QpsTerm {
    pub exp: Vec<Q>,
    pub re: f64,
    pub im: f64,
}

/// Quasi power series Σ c_μ z^μ with exponents in (finite coset set) + Z_{≥0}.
#[derive(Clone, Debug, Default)]
pub struct QuasiPowerSeries {
    pub nvars: usize,
    pub cosets: Vec<Vec<Q>>,
    pub terms: BTreeMap<Vec<Q>, Complex64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QpsJson {
    pub cosets: Vec<Vec<String>>,
    pub terms: Vec<QpsTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpsValue {
    pub value: Complex64,
    pub tail_bound: f64,
    pub ratio: f64,
}

impl QuasiPowerSeries {
    pub fn new(nvars: usize) -> Self {
        QuasiPowerSeries { nvars, cosets: vec![Vec::new(); nvars], terms: BTreeMap::new() }
    }

    fn coset_base(&self, var: usize, e: Q) -> Q {
        for b in &self.cosets[var] {
            let d = e - *b;
            if d.is_integer() && d >= Q::zero() {
                return *b;
            }
        }
        panic!("exponent {} outside declared cosets", e)
    }

    fn register(&mut self, var: usize, e: Q) {
        let list = &mut self.cosets[var];
        for b in list.iter_mut() {
            let d = e - *b;
            if d.is_integer() {
                if d < Q::zero() {
                    *b = e;
                }
                return;
            }
        }
        list.push(e);
        list.sort();
    }

    pub fn add_term(&mut self, exp: Vec<Q>, c: Complex64) {
        assert_eq!(exp.len(), self.nvars);
        for (v, e) in exp.iter().enumerate() {
            self.register(v, *e);
        }
        *self.terms.entry(exp).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn degree(&self, exp: &[Q]) -> i64 {
        exp.iter().enumerate().map(|(v, e)| (*e - self.coset_base(v, *e)).to_integer()).sum()
    }

    pub fn max_degree(&self) -> i64 {
        self.terms.keys().map(|e| self.degree(e)).max().unwrap_or(0)
    }

    fn term_value(exp: &[Q], c: Complex64, point: &[AngledComplex]) -> Complex64 {
        let mut z = AngledComplex::one();
        for (e, p) in exp.iter().zip(point) {
            z = z.mul(&p.pow(*e));
        }
        c * z.to_c64()
    }

    /// Absolute degree sums and signed degree sums at a point.
    pub fn degree_sums(&self, point: &[AngledComplex]) -> (Vec<f64>, Vec<Complex64>) {
        let d = self.max_degree().max(0) as usize;
        let mut abs = vec![0.0; d + 1];
        let mut sig = vec![Complex64::new(0.0, 0.0); d + 1];
        for (e, c) in &self.terms {
            let t = Self::term_value(e, *c, point);
            let k = self.degree(e) as usize;
            abs[k] += t.norm();
            sig[k] += t;
        }
        (abs, sig)
    }

    pub fn eval(&self, point: &[AngledComplex]) -> Result<QpsValue> {
        assert_eq!(point.len(), self.nvars);
        let (abs, sig) = self.degree_sums(point);
        let value: Complex64 = sig.iter().sum();
        if abs.iter().all(|x| *x == 0.0) {
            return Ok(QpsValue { value, tail_bound: 0.0, ratio: 0.0 });
        }
        let rho = fit_ratio(&abs);
        let last = *abs.last().unwrap();
        match rho {
            Some(r) if r < 1.0 => Ok(QpsValue { value, tail_bound: last * r / (1.0 - r), ratio: r }),
            Some(r) => Err(Error::NotConvergent(format!("no convergence evidence (ratio {:.4})", r))),
            None => Ok(QpsValue { value, tail_bound: 0.0, ratio: 0.0 }),
        }
    }

    pub fn to_json(&self) -> QpsJson {
        QpsJson {
            cosets: self.cosets.iter().map(|c| c.iter().map(|x| x.to_string()).collect()).collect(),
            terms: self.terms.iter().map(|(e, c)| QpsTerm { exp: e.clone(), re: c.re, im: c.im }).collect(),
        }
    }
}

/// Ratio of successive degree sums over the top half of the stored degrees.
///
/// The limit is extrapolated linearly in 1/d and the larger of limit and last ratio is
/// returned; power-law prefactors approach the limit monotonically, so this stays on the
/// conservative side for them.
pub fn fit_ratio(sums: &[f64]) -> Option<f64> {
    let n = sums.len();
    let start = n / 2;
    let mut pts = Vec::new();
    for d in start.max(1)..n {
        if sums[d - 1] > 0.0 && sums[d] > 0.0 {
            pts.push((1.0 / d as f64, sums[d] / sums[d - 1]));
        }
    }
    if pts.is_empty() {
        // only trailing zeros: the stored sum is exact as far as it goes
        return if sums.last().copied().unwrap_or(0.0) == 0.0 { None } else { Some(0.0) };
    }
    let last = pts.last().unwrap().1;
    if pts.len() < 3 {
        return Some(last);
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let den = m * sxx - sx * sx;
    if den.abs() < 1e-300 {
        return Some(last);
    }
    let slope = (m * sxy - sx * sy) / den;
    let intercept = (sy - slope * sx) / m;
    Some(intercept.max(last))
}

/// Estimated signed remainder of a one-parameter series from its trailing terms.
///
/// Fits t_d / t_{d-1} = (a d + b)/(d + c) on the top half of the terms (a + b/d when too few
/// terms) and continues the recursion. Exact for hypergeometric-type terms.
pub fn ratio_model_tail(terms: &[Complex64]) -> Option<Complex64> {
    let n = terms.len();
    let mut rows = Vec::new();
    for d in (n / 2).max(1)..n {
        if terms[d - 1].norm() > 0.0 && terms[d].norm() > 0.0 {
            rows.push((d as f64, terms[d] / terms[d - 1]));
        }
    }
    if rows.len() < 3 {
        return None;
    }
    let one = Complex64::new(1.0, 0.0);
    // r_d (d + c) = a d + b  ⇔  a·d + b - c·r_d = r_d·d
    let rational = if rows.len() >= 4 {
        let m = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
            0 => one * rows[i].0,
            1 => one,
            _ => -rows[i].1,
        });
        let y = DVector::from_fn(rows.len(), |i, _| rows[i].1 * rows[i].0);
        m.svd(true, true).solve(&y, 1e-13).ok().map(|x| (x[0], x[1], x[2]))
    } else {
        None
    };
    let (a, b, c) = rational.unwrap_or_else(|| {
        let m = rows.len() as f64;
        let sx: f64 = rows.iter().map(|r| 1.0 / r.0).sum();
        let sxx: f64 = rows.iter().map(|r| 1.0 / (r.0 * r.0)).sum();
        let sy: Complex64 = rows.iter().map(|r| r.1).sum();
        let sxy: Complex64 = rows.iter().map(|r| r.1 / r.0).sum();
        let den = m * sxx - sx * sx;
        let b = (sxy * m - sy * sx) / den;
        ((sy - b * sx) / m, b, Complex64::new(0.0, 0.0))
    });
    if a.norm() >= 1.0 {
        return None;
    }
    let mut t = terms[n - 1];
    let mut acc = Complex64::new(0.0, 0.0);
    let mut d = n as f64;
    for _ in 0..100_000 {
        let den = c + d;
        if den.norm() < 1e-12 {
            return None;
        }
        t *= (a * d + b) / den;
        acc += t;
        if t.norm() <= 1e-17 * acc.norm().max(1e-300) {
            break;
        }
        d += 1.0;
    }
    Some(acc)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroCheck {
    pub zero: bool,
    pub max_sample: f64,
    pub leading_exp: Option<Vec<Q>>,
    pub leading_coeff: Option<Complex64>,
}

/// Finite form of the uniqueness statement for quasi power series: the sampled values vanish and
/// the leading coefficient extracted as lim f(z) z^{-μ} vanishes.
pub fn qps_assert_zero_by_sampling(s: &QuasiPowerSeries, samples: &[Vec<AngledComplex>], tol: f64) -> ZeroCheck {
    let mut max_sample: f64 = 0.0;
    let mut last_val = Complex64::new(0.0, 0.0);
    for p in samples {
        let v: Complex64 = s.terms.iter().map(|(e, c)| QuasiPowerSeries::term_value(e, *c, p)).sum();
        max_sample = max_sample.max(v.norm());
        last_val = v;
    }
    let scale: f64 = s.terms.values().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
    let lead = s.terms.iter().find(|(_, c)| c.norm() > tol * scale).map(|(e, _)| e.clone());
    let (leading_exp, leading_coeff) = match (&lead, samples.last()) {
        (Some(mu), Some(p)) => {
            let mut z = AngledComplex::one();
            for (e, x) in mu.iter().zip(p) {
                z = z.mul(&x.pow(-*e));
            }
            (Some(mu.clone()), Some(last_val * z.to_c64()))
        }
        _ => (None, None),
    };
    let lead_zero = leading_coeff.map_or(true, |c| c.norm() <= tol * scale);
    ZeroCheck { zero: max_sample <= tol * scale && lead_zero, max_sample, leading_exp, leading_coeff }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RadialLimit {
    pub value: Complex64,
    pub error: f64,
}

/// Limit of f(r) as r → 1⁻ from r = 1 - 2^{-k}, k = 3..kmax, with second-order Richardson.
pub fn radial_limit(f: &dyn Fn(f64) -> Result<Complex64>, kmax: usize) -> Result<RadialLimit> {
    let mut vals = Vec::new();
    for k in 3..=kmax {
        let r = 1.0 - 2f64.powi(-(k as i32));
        vals.push(f(r)?);
    }
    if vals.len() < 3 {
        return Err(Error::Invalid("need at least three radii".into()));
    }
    let r1: Vec<Complex64> = vals.windows(2).map(|w| w[1] * 2.0 - w[0]).collect();
    let r2: Vec<Complex64> = r1.windows(2).map(|w| (w[1] * 4.0 - w[0]) / 3.0).collect();
    let n = r2.len();
    let value = r2[n - 1];
    let error = if n >= 2 { (r2[n - 1] - r2[n - 2]).norm() } else { (r1[r1.len() - 1] - r1[r1.len() - 2]).norm() };
    let raw_step = (vals[vals.len() - 1] - vals[vals.len() - 2]).norm();
    if !value.norm().is_finite() || error > 1e-2 * value.norm().max(1.0) && error > raw_step {
        return Err(Error::NotConvergent("radial limit not stabilizing".into()));
    }
    Ok(RadialLimit { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, qi};
    use proptest::prelude::*;

    #[test]
    fn argument_bookkeeping() {
        let m1 = AngledComplex::unit_pi(qi(1));
        let p = m1.mul(&m1);
        assert!((p.arg - 2.0 * PI).abs() < 1e-15);
        assert_eq!(p.arg_pi, Some(qi(2)));
        let h = p.pow(q(1, 2));
        assert!((h.to_c64() + 1.0).norm() < 1e-15);
        let r = AngledComplex::new(2.0, 0.3).pow(qi(2));
        assert!((r.modulus - 4.0).abs() < 1e-15 && (r.arg - 0.6).abs() < 1e-15);
        assert_eq!(AngledComplex::new(3.0, 1.0).pow(qi(0)).to_c64(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn transport_around_loop() {
        let f = |t: f64| Complex64::from_polar(1.0, 2.0 * PI * t);
        let a = arg_transport(&f, 0.0).unwrap();
        // oracle: unwrap on a fine uniform grid
        let mut acc = 0.0;
        let n = 10_000;
        for k in 0..n {
            acc += (f((k + 1) as f64 / n as f64) / f(k as f64 / n as f64)).arg();
        }
        assert!((a - acc).abs() < 1e-9 && (a - 2.0 * PI).abs() < 1e-9);
        assert_eq!(arg_transport(&|_| Complex64::new(0.0, 2.0), 0.5).unwrap(), 0.5);
        assert!(arg_transport(&|t| Complex64::new(t - 0.5, 0.0), 0.0).is_err());
    }

    #[test]
    fn geometric_series() {
        let mut s = QuasiPowerSeries::new(1);
        for n in 0..=40 {
            s.add_term(vec![qi(n)], Complex64::new(1.0, 0.0));
        }
        let v = s.eval(&[AngledComplex::real(0.5)]).unwrap();
        assert!((v.value - 2.0).norm() <= v.tail_bound * 1.0001);
        assert!((v.ratio - 0.5).abs() < 1e-12);
        let z = QuasiPowerSeries::new(2);
        let v = z.eval(&[AngledComplex::real(0.5), AngledComplex::real(0.5)]).unwrap();
        assert_eq!((v.value, v.tail_bound, v.ratio), (Complex64::new(0.0, 0.0), 0.0, 0.0));
        let mut g = QuasiPowerSeries::new(1);
        for n in 0..10 {
            g.add_term(vec![qi(n)], Complex64::new(1.0, 0.0));
        }
        assert!(matches!(g.eval(&[AngledComplex::real(1.5)]), Err(Error::NotConvergent(_))));
    }

    #[test]
    fn ratio_model_is_exact_for_binomial_series() {
        // (1 - x)^{1/2}
        let x: f64 = 0.625;
        let mut terms = Vec::new();
        let mut c = 1.0;
        for k in 0..8 {
            terms.push(Complex64::new(c * x.powi(k), 0.0));
            c *= (0.5 - k as f64) / (k + 1) as f64 * -1.0;
        }
        let partial: Complex64 = terms.iter().sum();
        let tail = ratio_model_tail(&terms).unwrap();
        assert!((partial + tail - (1.0f64 - x).sqrt()).norm() < 1e-12);
    }

    #[test]
    fn zero_by_sampling() {
        let samples: Vec<Vec<AngledComplex>> = (1..20).map(|k| vec![AngledComplex::real(2f64.powi(-k))]).collect();
        let z = QuasiPowerSeries::new(1);
        assert!(qps_assert_zero_by_sampling(&z, &samples, 1e-10).zero);
        let mut c = QuasiPowerSeries::new(1);
        c.add_term(vec![q(1, 2)], Complex64::new(1.0, 0.0));
        c.add_term(vec![q(1, 2)], Complex64::new(-1.0, 0.0));
        assert!(qps_assert_zero_by_sampling(&c, &samples, 1e-10).zero);
        let mut f = QuasiPowerSeries::new(1);
        f.add_term(vec![q(1, 4)], Complex64::new(1.0, 0.0));
        let r = qps_assert_zero_by_sampling(&f, &samples, 1e-10);
        assert!(!r.zero);
        assert!((r.leading_coeff.unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn radial_limits() {
        let c = radial_limit(&|_| Ok(Complex64::new(2.0, 1.0)), 12).unwrap();
        assert!((c.value - Complex64::new(2.0, 1.0)).norm() < 1e-14);
        let r = radial_limit(&|r: f64| Ok(Complex64::new(r.powf(0.25), 0.0)), 12).unwrap();
        assert!((r.value - 1.0).norm() < 1e-8 && r.error < 1e-8);
    }

    #[test]
    fn joint_and_iterated_summation_agree() {
        // Σ_{m,n} x^m y^n / (m+n+1)
        let mut s = QuasiPowerSeries::new(2);
        for m in 0..30 {
            for n in 0..30 - m {
                s.add_term(vec![qi(m), qi(n)], Complex64::new(1.0 / (m + n + 1) as f64, 0.0));
            }
        }
        let (x, y) = (0.3, 0.2);
        let joint = s.eval(&[AngledComplex::real(x), AngledComplex::real(y)]).unwrap().value;
        let mut it = 0.0;
        for m in 0..30 {
            let mut inner = 0.0;
            for n in 0..30 - m {
                inner += y.powi(n) / (m + n + 1) as f64;
            }
            it += x.powi(m) * inner;
        }
        assert!((joint.re - it).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn ac_laws(m1 in 0.1f64..3.0, a1 in -10.0f64..10.0, m2 in 0.1f64..3.0, a2 in -10.0f64..10.0,
                   s in -8i64..8, t in -8i64..8, d in 1i64..6) {
            let a = AngledComplex::new(m1, a1);
            let b = AngledComplex::new(m2, a2);
            let ab = a.mul(&b);
            let ba = b.mul(&a);
            prop_assert!((ab.modulus - ba.modulus).abs() < 1e-12 && (ab.arg - ba.arg).abs() < 1e-12);
            let (s, t) = (q(s, d), q(t, d));
            let lhs = a.pow(s + t);
            let rhs = a.pow(s).mul(&a.pow(t));
            prop_assert!((lhs.arg - rhs.arg).abs() < 1e-9);
            prop_assert!((lhs.modulus - rhs.modulus).abs() < 1e-9 * lhs.modulus.max(1.0));
            prop_assert!((a.conj().arg + a.arg).abs() == 0.0);
        }

        #[test]
        fn transport_is_additive(w in 0.5f64..6.0) {
            let f = |t: f64| Complex64::new(2.0, 0.0) + Complex64::from_polar(1.5, w * t);
            let whole = arg_transport(&f, 0.0).unwrap();
            let first = arg_transport(&|t| f(t * 0.5), 0.0).unwrap();
            let second = arg_transport(&|t| f(0.5 + 0.5 * t), first).unwrap();
            prop_assert!((whole - second).abs() < 1e-12);
            let back = arg_transport(&|t| f(1.0 - t), whole).unwrap();
            prop_assert!(back.abs() < 1e-12);
        }
    }
}
