//! Energy bounds, smeared intertwining operators, and finite-dimensional shadows of strong
//! commutativity. Float backend throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlate::{bra, product_series};
use crate::error::{Error, Result};
use crate::graded::{gram_sqrt, BlockOperator, GradedVector, Space};
use crate::linalg::{exp_i_hermitian, op_norm, Mat};
use crate::multivalued::{radial_limit, AngledComplex};
use crate::report::Report;
use crate::scalar::{binom_i, q_to_f64, qi, Q};
use crate::transforms::Family;
use crate::voa::{Intertwiner, Module};

type C = Complex64;
type Func = Arc<dyn Fn(f64) -> C + Send + Sync>;

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

// ---------------------------------------------------------------------------------------------
// Sobolev norms

/// ‖(1+L_0)^r ξ‖
pub fn sobolev(xi: &GradedVector<C>, r: f64) -> Result<f64> {
    let sp = &xi.space;
    let mut acc = 0.0;
    for b in 0..sp.nblocks() {
        let p = xi.project(sp.weights[b]);
        if p.is_zero() {
            continue;
        }
        let n = p.norm()?;
        acc += (1.0 + q_to_f64(sp.weights[b])).powf(2.0 * r) * n * n;
    }
    Ok(acc.sqrt())
}

// ---------------------------------------------------------------------------------------------
// test functions

/// Function on S¹ parametrized by θ ∈ (-π, π), with its angular derivative.
#[derive(Clone)]
pub struct TestFunction {
    /// closed support arc inside (-π, π); None for functions on the whole circle
    pub arc: Option<(f64, f64)>,
    f: Func,
    df: Func,
    pub grid_log2: u32,
    samples: Arc<Vec<C>>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "TestFunction(arc={:?}, grid=2^{})", self.arc, self.grid_log2)
    }
}

fn bump_profile(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - x * x;
    let v = (-1.0 / d).exp();
    (v, v * (-2.0 * x / (d * d)))
}

impl TestFunction {
    pub fn new(arc: Option<(f64, f64)>, f: Func, df: Func, grid_log2: u32) -> Result<Self> {
        if let Some((a, b)) = arc {
            if !(-PI < a && a < b && b < PI) {
                return Err(Error::Invalid(format!("arc [{}, {}] must lie inside (-π, π)", a, b)));
            }
        }
        let n = 1usize << grid_log2;
        let samples = (0..n).map(|k| f(-PI + 2.0 * PI * k as f64 / n as f64)).collect();
        Ok(TestFunction { arc, f, df, grid_log2, samples: Arc::new(samples) })
    }

    /// exp(-1/(1-x²)) scaled to the arc [a, b].
    pub fn bump(a: f64, b: f64) -> Result<Self> {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        let f = move |t: f64| c(bump_profile((t - mid) / half).0);
        let df = move |t: f64| c(bump_profile((t - mid) / half).1 / half);
        TestFunction::new(Some((a, b)), Arc::new(f), Arc::new(df), 12)
    }

    /// e^{i s θ} on the whole circle; for integer s its only mode is s.
    pub fn single_mode(s: i64) -> Self {
        let f = move |t: f64| C::from_polar(1.0, s as f64 * t);
        let df = move |t: f64| C::new(0.0, s as f64) * C::from_polar(1.0, s as f64 * t);
        TestFunction::new(None, Arc::new(f), Arc::new(df), 12).expect("whole circle")
    }

    pub fn with_grid(&self, grid_log2: u32) -> Self {
        TestFunction::new(self.arc, self.f.clone(), self.df.clone(), grid_log2).expect("same arc")
    }

    pub fn eval(&self, theta: f64) -> C {
        (self.f)(theta)
    }

    pub fn deriv(&self) -> TestFunction {
        let df = self.df.clone();
        // second derivative is only needed through sampling, use a centred difference
        let d2 = {
            let df = self.df.clone();
            move |t: f64| (df(t + 1e-5) - df(t - 1e-5)) / 2e-5
        };
        TestFunction::new(self.arc, df, Arc::new(d2), self.grid_log2).expect("same arc")
    }

    /// f̂(s) = ∫ f(e^{iθ}) e^{-isθ} dθ/2π, trapezoidal rule on the grid.
    pub fn fhat(&self, s: f64) -> C {
        let n = self.samples.len();
        let mut acc = C::new(0.0, 0.0);
        for (k, v) in self.samples.iter().enumerate() {
            if *v == C::new(0.0, 0.0) {
                continue;
            }
            let t = -PI + 2.0 * PI * k as f64 / n as f64;
            acc += v * C::from_polar(1.0, -s * t);
        }
        acc / n as f64
    }

    fn map(&self, arc: Option<(f64, f64)>, f: impl Fn(f64, C) -> C + Send + Sync + 'static, df: impl Fn(f64, C, C) -> C + Send + Sync + 'static) -> TestFunction {
        let (g, dg) = (self.f.clone(), self.df.clone());
        let g2 = g.clone();
        TestFunction::new(arc, Arc::new(move |t| f(t, g(t))), Arc::new(move |t| df(t, g2(t), dg(t))), self.grid_log2).expect("valid arc")
    }

    /// e_r f
    pub fn mul_e(&self, r: f64) -> TestFunction {
        self.map(self.arc, move |t, v| C::from_polar(1.0, r * t) * v, move |t, v, dv| C::from_polar(1.0, r * t) * (dv + C::new(0.0, r) * v))
    }

    pub fn conj(&self) -> TestFunction {
        self.map(self.arc, |_, v| v.conj(), |_, _, dv| dv.conj())
    }

    pub fn scale(&self, k: C) -> TestFunction {
        self.map(self.arc, move |_, v| k * v, move |_, _, dv| k * dv)
    }

    /// a f + b f'
    pub fn with_derivative(&self, a: C, b: C) -> TestFunction {
        let (f, df) = (self.f.clone(), self.df.clone());
        let df2 = self.df.clone();
        let df3 = self.df.clone();
        let h = move |t: f64| (df3(t + 1e-5) - df3(t - 1e-5)) / 2e-5;
        TestFunction::new(self.arc, Arc::new(move |t| a * f(t) + b * df(t)), Arc::new(move |t| a * df2(t) + b * h(t)), self.grid_log2).expect("same arc")
    }

    /// 𝔯(t) g = g ∘ 𝔯(-t)
    pub fn rotate(&self, t: f64) -> Result<TestFunction> {
        let arc = match self.arc {
            Some((a, b)) => Some((a + t, b + t)),
            None => None,
        };
        let (f, df) = (self.f.clone(), self.df.clone());
        let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
        TestFunction::new(arc, Arc::new(move |x| f(wrap(x - t))), Arc::new(move |x| df(wrap(x - t))), self.grid_log2)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.samples.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn max_abs_diff(&self, o: &TestFunction) -> f64 {
        self.samples.iter().zip(o.samples.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// f with e^{iπΔ/2} e_{1-Δ} f real: f = e^{-iπΔ/2} e_{Δ-1} h for real h.
pub fn phase_symmetric(h: &TestFunction, delta: f64) -> TestFunction {
    h.mul_e(delta - 1.0).scale(C::from_polar(1.0, -PI * delta / 2.0))
}

pub fn phase_symmetry_defect(f: &TestFunction, delta: f64) -> f64 {
    let g = f.mul_e(1.0 - delta).scale(C::from_polar(1.0, PI * delta / 2.0));
    g.samples.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
}

/// Fractional parts of Δ_i + Δ_j - Δ_k over the given irreducible modules.
pub fn zv_cosets(modules: &[&Module<C>]) -> Vec<Q> {
    let mut out = BTreeSet::new();
    for a in modules {
        for b in modules {
            for k in modules {
                let d = a.space.lowest_weight + b.space.lowest_weight - k.space.lowest_weight;
                out.insert(d - d.floor());
            }
        }
    }
    out.into_iter().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VNorm {
    pub value: f64,
    /// estimated remainder beyond |s| > s_max
    pub tail: f64,
    pub s_max: i64,
}

/// |f|_{V,t} = Σ_{s ∈ ℤ_V, |s| ≤ s_max} (1+|s|)^t |f̂(s)|. The tail estimate continues the ratio
/// of the last two quarter-window sums geometrically.
pub fn vnorm(f: &TestFunction, t: f64, cosets: &[Q], s_max: i64) -> VNorm {
    let mut total = 0.0;
    let q = (s_max / 4).max(1);
    let mut quarters = vec![0.0; 5];
    for d in cosets {
        let d = q_to_f64(*d);
        for n in -s_max - 1..=s_max {
            let s = n as f64 + d;
            if s.abs() > s_max as f64 {
                continue;
            }
            let v = (1.0 + s.abs()).powf(t) * f.fhat(s).norm();
            total += v;
            let k = ((s.abs() as i64) / q).min(4) as usize;
            quarters[k] += v;
        }
    }
    let (a, b) = (quarters[2], quarters[3]);
    let tail = if a > 0.0 && b > 0.0 && b < a {
        let r = b / a;
        b * r / (1.0 - r)
    } else if b == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    VNorm { value: total, tail, s_max }
}

// ---------------------------------------------------------------------------------------------
// energy bounds

/// ‖A‖ for A: block b of `src` → block t of `tgt`, measured in the inner products.
fn block_norm(src: &Space<C>, tgt: &Space<C>, t: usize, b: usize, a: &Mat<C>) -> f64 {
    let (gt, _) = crate::linalg::sqrt_psd(&tgt.gram[t].to_dmatrix());
    let (_, gbi) = crate::linalg::sqrt_psd(&src.gram[b].to_dmatrix());
    op_norm(&(gt * a.to_dmatrix() * gbi))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyBoundFit {
    pub r: f64,
    pub m: f64,
    pub t: f64,
    /// (s, ‖𝒴(w,s)(1+L_0)^{-r}‖) over the stored window
    pub profile: Vec<(f64, f64)>,
}

/// Mode norms of 𝒴_α(w, ·)(1+L_0)^{-r} over the stored window.
pub fn mode_norms(alpha: &Intertwiner<C>, w: &GradedVector<C>, r: f64) -> Result<BTreeMap<Q, f64>> {
    let dw = w.weight().ok_or_else(|| Error::Invalid("energy bounds need a homogeneous charge".into()))?;
    let bl = alpha.combine(w)?;
    let mut out: BTreeMap<Q, f64> = BTreeMap::new();
    for ((t, b), a) in &bl {
        let s = dw + alpha.source.weights[*b] - alpha.target.weights[*t] - qi(1);
        let n = block_norm(&alpha.source, &alpha.target, *t, *b, a) * (1.0 + q_to_f64(alpha.source.weights[*b])).powf(-r);
        let e = out.entry(s).or_insert(0.0);
        *e = e.max(n);
    }
    Ok(out)
}

/// Smallest half-integer t ≥ 0 above the large-|s| log-log slope, then the least M for that t.
pub fn fit_energy_bound(alpha: &Intertwiner<C>, w: &GradedVector<C>, r: f64) -> Result<EnergyBoundFit> {
    let norms = mode_norms(alpha, w, r)?;
    let profile: Vec<(f64, f64)> = norms.iter().map(|(s, n)| (q_to_f64(*s), *n)).collect();
    // only |s| reached by both signs: the window edge is one-sided
    let kpos = profile.iter().filter(|p| p.0 > 0.0).map(|p| p.0.round() as i64).max();
    let kneg = profile.iter().filter(|p| p.0 < 0.0).map(|p| (-p.0).round() as i64).max();
    let kmax = match (kpos, kneg) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b).unwrap_or(0),
    };
    let mut by_abs: BTreeMap<i64, f64> = BTreeMap::new();
    for (s, n) in profile.iter().filter(|p| p.0.abs().round() as i64 <= kmax) {
        let k = s.abs().round() as i64;
        let e = by_abs.entry(k).or_insert(0.0);
        *e = e.max(*n);
    }
    let pts: Vec<(f64, f64)> = by_abs.iter().filter(|(k, n)| **k >= 1 && **n > 0.0).map(|(k, n)| ((1.0 + *k as f64).ln(), n.ln())).collect();
    let half = &pts[pts.len() / 2..];
    let slope = if half.len() >= 2 {
        let m = half.len() as f64;
        let sx: f64 = half.iter().map(|p| p.0).sum();
        let sy: f64 = half.iter().map(|p| p.1).sum();
        let sxx: f64 = half.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = half.iter().map(|p| p.0 * p.1).sum();
        (m * sxy - sx * sy) / (m * sxx - sx * sx)
    } else {
        0.0
    };
    let t = ((2.0 * slope - 1e-9).ceil() / 2.0).max(0.0);
    let m = profile.iter().map(|(s, n)| n / (1.0 + s.abs()).powf(t)).fold(0.0, f64::max);
    Ok(EnergyBoundFit { r, m, t, profile })
}

/// Fits along a cutoff sweep are stable when t agrees and M moves by at most `rel` between
/// consecutive entries.
pub fn fits_stable(fits: &[EnergyBoundFit], rel: f64) -> bool {
    fits.windows(2).all(|w| w[0].t == w[1].t && (w[1].m - w[0].m).abs() <= rel * w[0].m.max(w[1].m))
}

/// ‖𝒴(w,s)ξ‖_p ≤ M_p (1+|s|)^{|p|+t} ‖ξ‖_{p+r} with M_p = 2^{|p|}(1+Δ_w)^{|p|} M, block by block.
pub fn check_sobolev_lift(alpha: &Intertwiner<C>, w: &GradedVector<C>, fit: &EnergyBoundFit, p: f64) -> Result<Report> {
    let dw = w.weight().ok_or_else(|| Error::Invalid("homogeneous charge required".into()))?;
    let mp = 2f64.powf(p.abs()) * (1.0 + q_to_f64(dw)).powf(p.abs()) * fit.m;
    let mut rep = Report::new();
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for ((t, b), a) in alpha.combine(w)? {
        let s = q_to_f64(dw + alpha.source.weights[b] - alpha.target.weights[t] - qi(1));
        let (dt, db) = (q_to_f64(alpha.target.weights[t]), q_to_f64(alpha.source.weights[b]));
        let lhs = block_norm(&alpha.source, &alpha.target, t, b, &a) * (1.0 + dt).powf(p);
        let rhs = mp * (1.0 + s.abs()).powf(p.abs() + fit.t) * (1.0 + db).powf(p + fit.r);
        let ratio = lhs / rhs;
        worst = worst.max(ratio);
        if ratio > 1.0 + 1e-12 {
            violations.push(format!("s={} Δ_ξ={}", s, db));
        }
    }
    let subject = format!("{} p={} (M_p={:.4})", alpha.label, p, mp);
    if violations.is_empty() {
        rep.tol("sobolev_lift", subject, worst, 1.0 + 1e-12);
    } else {
        rep.push_detail("sobolev_lift", subject, crate::report::Status::Fail, worst, violations.join("; "));
    }
    Ok(rep)
}

/// Modes of 𝒴_α(Y_i(u,n)w, s) assembled from the Jacobi identity,
/// Σ_l (-1)^l C(n,l) [u_{n-l}𝒴(w, s+l) - (-1)^n 𝒴(w, n+s-l)u_l], n ≥ 0, checked against the
/// direct modes on the blocks where every intermediate weight is stored; then fitted.
/// For n < 0 only the direct fit is made.
#[allow(clippy::too_many_arguments)]
pub fn check_descendant_bounds(
    alpha: &Intertwiner<C>,
    charge: &Module<C>,
    source: &Module<C>,
    target: &Module<C>,
    u: &GradedVector<C>,
    n: i64,
    w: &GradedVector<C>,
    r: f64,
    tol: f64,
) -> Result<(Report, EnergyBoundFit)> {
    let du = u.weight().ok_or_else(|| Error::Invalid("homogeneous u required".into()))?;
    let dw = w.weight().ok_or_else(|| Error::Invalid("homogeneous w required".into()))?;
    let desc = charge.action.mode_vec(u, qi(n))?.apply(w)?;
    let dd = du + dw - qi(n) - qi(1);
    let mut rep = Report::new();
    if desc.is_zero() {
        rep.skip("descendant_bounds", format!("{} u_{} w", alpha.label, n), "descendant vanishes");
        let fit = EnergyBoundFit { r, m: 0.0, t: 0.0, profile: vec![] };
        return Ok((rep, fit));
    }
    if n < 0 {
        // the expansion is infinite; fit the direct modes only
        rep.skip("descendant_assembly", format!("{} u_{} w", alpha.label, n), "finite assembly needs n ≥ 0");
        return Ok((rep, fit_energy_bound(alpha, &desc, r)?));
    }
    let direct = alpha.combine(&desc)?;
    let (wj, wk) = (&alpha.source, &alpha.target);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for ((t, b), a) in &direct {
        let s = dd + wj.weights[*b] - wk.weights[*t] - qi(1);
        let mut acc: Mat<C> = Mat::zeros(a.rows, a.cols);
        let mut complete = true;
        for l in 0..=n {
            let coef = binom_i(n, l) * if l % 2 == 0 { qi(1) } else { qi(-1) };
            if coef == qi(0) {
                continue;
            }
            let k = C::new(q_to_f64(coef), 0.0);
            // u_{n-l} 𝒴(w, s+l): intermediate in W_k
            let mid = wj.weights[*b] + dw - s - qi(l) - qi(1);
            if mid > wk.cutoff {
                complete = false;
            } else if let Some(mi) = wk.weight_index(mid) {
                let y = alpha.mode_vec(w, s + qi(l))?;
                let um = target.action.mode_vec(u, qi(n - l))?;
                if let (Some(x1), Some(x2)) = (y.get(mi, *b), um.get(*t, mi)) {
                    acc.axpy(&k, &x2.mul(x1));
                }
            }
            // 𝒴(w, n+s-l) u_l: intermediate in W_j
            let mid = wj.weights[*b] + du - qi(l) - qi(1);
            if mid > wj.cutoff {
                complete = false;
            } else if let Some(mi) = wj.weight_index(mid) {
                let ul = source.action.mode_vec(u, qi(l))?;
                let y = alpha.mode_vec(w, qi(n) + s - qi(l))?;
                let sign = if n % 2 == 0 { -k } else { k };
                if let (Some(x1), Some(x2)) = (ul.get(mi, *b), y.get(*t, mi)) {
                    acc.axpy(&sign, &x2.mul(x1));
                }
            }
        }
        if complete {
            compared += 1;
            worst = worst.max(acc.dist(a));
        }
    }
    let subject = format!("{} (u_{} w) over {} blocks", alpha.label, n, compared);
    rep.tol("descendant_assembly", subject, worst, tol);
    let fit = fit_energy_bound(alpha, &desc, r)?;
    Ok((rep, fit))
}

// ---------------------------------------------------------------------------------------------
// smeared operators

#[derive(Clone, Debug)]
pub struct SmearedOperator {
    pub op: BlockOperator<C>,
    pub label: String,
}

impl SmearedOperator {
    pub fn dense(&self) -> DMatrix<C> {
        self.op.to_dmatrix()
    }
}

fn check_support(alpha: &Intertwiner<C>, w: &GradedVector<C>, f: &TestFunction) -> Result<()> {
    let integral = w.support().iter().all(|d| {
        let s = *d + alpha.source.lowest_weight - alpha.target.lowest_weight;
        s.is_integer()
    });
    if f.arc.is_none() && !integral {
        return Err(Error::Invalid(format!("{} has non-integer modes: the test function must avoid -1", alpha.label)));
    }
    Ok(())
}

/// 𝒴_α(w, f) = Σ_s 𝒴_α(w, s) f̂(s) on the stored blocks.
pub fn smear(alpha: &Intertwiner<C>, w: &GradedVector<C>, f: &TestFunction) -> Result<SmearedOperator> {
    check_support(alpha, w, f)?;
    let mut op = BlockOperator::new(&alpha.source, &alpha.target, None);
    let mut cache: BTreeMap<Q, C> = BTreeMap::new();
    for cb in 0..alpha.charge.nblocks() {
        let dw = alpha.charge.weights[cb];
        let part = w.project(dw);
        if part.is_zero() {
            continue;
        }
        for ((t, b), a) in alpha.combine(&part)? {
            let s = dw + alpha.source.weights[b] - alpha.target.weights[t] - qi(1);
            let fs = *cache.entry(s).or_insert_with(|| f.fhat(q_to_f64(s)));
            let m = a.scale(&fs);
            match op.blocks.get_mut(&(t, b)) {
                Some(x) => x.add_assign(&m),
                None => {
                    op.blocks.insert((t, b), m);
                }
            }
        }
    }
    Ok(SmearedOperator { op, label: format!("{}(w,f)", alpha.label) })
}

/// ∫ 𝒴_α(w, e^{iθ}) f(e^{iθ}) e^{iθ}dθ/2π by the trapezoidal rule on 2^grid points.
pub fn smear_quadrature(alpha: &Intertwiner<C>, w: &GradedVector<C>, f: &TestFunction, grid_log2: u32) -> Result<DMatrix<C>> {
    let n = 1usize << grid_log2;
    let mut out = DMatrix::zeros(alpha.target.total_dim(), alpha.source.total_dim());
    let mut blocks: Vec<((usize, usize), f64, DMatrix<C>)> = Vec::new();
    for cb in 0..alpha.charge.nblocks() {
        let dw = alpha.charge.weights[cb];
        let part = w.project(dw);
        if part.is_zero() {
            continue;
        }
        for ((t, b), a) in alpha.combine(&part)? {
            let e = q_to_f64(alpha.target.weights[t] - alpha.source.weights[b] - dw);
            blocks.push(((t, b), e, a.to_dmatrix()));
        }
    }
    for k in 0..n {
        let th = -PI + 2.0 * PI * k as f64 / n as f64;
        let fv = f.eval(th);
        if fv == C::new(0.0, 0.0) {
            continue;
        }
        let meas = fv * C::from_polar(1.0, th) / n as f64;
        for ((t, b), e, a) in &blocks {
            let z = C::from_polar(1.0, e * th) * meas;
            let (r0, c0) = (alpha.target.offsets[*t], alpha.source.offsets[*b]);
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    out[(r0 + i, c0 + j)] += a[(i, j)] * z;
                }
            }
        }
    }
    Ok(out)
}

fn dense_dist(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Right-hand side of the smeared adjoint relation,
/// Σ_m e^{-iπΔ_w}/m! 𝒴_{α*}(conj(L_1^m w), conj(e_{m+2-2Δ_w} f)).
pub fn smeared_adjoint_rhs(alpha_star: &Intertwiner<C>, w: &GradedVector<C>, f: &TestFunction, fam: &Family<C>) -> Result<BlockOperator<C>> {
    let dw = w.weight().ok_or_else(|| Error::Invalid("homogeneous charge required".into()))?;
    let l1 = fam.ln(&w.space, 1)?;
    let phase = C::from_polar(1.0, -PI * q_to_f64(dw));
    let mut acc = BlockOperator::new(&alpha_star.source, &alpha_star.target, None);
    let mut lw = w.clone();
    let mut fact = 1.0;
    let mut m = 0i64;
    while !lw.is_zero() {
        let cw = lw.dual_conjugation(&alpha_star.charge)?;
        let g = f.mul_e(q_to_f64(qi(m + 2) - qi(2) * dw)).conj();
        let sm = smear(alpha_star, &cw, &g)?.op.scale(&(phase / fact));
        acc = acc.add(&sm)?;
        m += 1;
        fact *= m as f64;
        lw = l1.apply(&lw)?;
    }
    Ok(acc)
}

/// Gram adjoint of 𝒴_α(w, f) against the adjoint-intertwiner side; also returns the grid-doubling change.
pub fn check_smeared_adjoint(alpha: &Intertwiner<C>, w: &GradedVector<C>, f: &TestFunction, fam: &Family<C>, tol: f64) -> Result<(Report, f64)> {
    let star = crate::transforms::adjoint(alpha, fam)?;
    let lhs = smear(alpha, w, f)?.op.adjoint();
    let rhs = smeared_adjoint_rhs(&star, w, f, fam)?;
    let d = dense_dist(&lhs.to_dmatrix(), &rhs.to_dmatrix());
    let f2 = f.with_grid(f.grid_log2 + 1);
    let rhs2 = smeared_adjoint_rhs(&star, w, &f2, fam)?;
    let g = dense_dist(&rhs.to_dmatrix(), &rhs2.to_dmatrix());
    let mut rep = Report::new();
    rep.tol("smeared_adjoint", format!("{} Δ_w={}", alpha.label, w.weight().map(|x| x.to_string()).unwrap_or_default()), d, tol);
    Ok((rep, g))
}

/// [L_0, 𝒴(w,g)] = 𝒴(w, (Δ_w-1)g + i g') and e^{itL_0}𝒴(w,g)e^{-itL_0} = 𝒴(w, e^{i(Δ_w-1)t} 𝔯(t)g).
pub fn check_rotation_covariance(alpha: &Intertwiner<C>, w: &GradedVector<C>, g: &TestFunction, ts: &[f64], tol: f64) -> Result<Report> {
    let dw = q_to_f64(w.weight().ok_or_else(|| Error::Invalid("homogeneous charge required".into()))?);
    let sm = smear(alpha, w, g)?.op;
    let mut comm = sm.clone();
    for ((t, b), m) in comm.blocks.iter_mut() {
        let d = q_to_f64(alpha.target.weights[*t] - alpha.source.weights[*b]);
        *m = m.scale(&c(d));
    }
    let rhs = smear(alpha, w, &g.with_derivative(c(dw - 1.0), C::new(0.0, 1.0)))?.op;
    let mut rep = Report::new();
    rep.tol("rotation_commutator", alpha.label.clone(), dense_dist(&comm.to_dmatrix(), &rhs.to_dmatrix()), tol);
    for &t in ts {
        let mut lhs = sm.clone();
        for ((tb, b), m) in lhs.blocks.iter_mut() {
            let d = q_to_f64(alpha.target.weights[*tb] - alpha.source.weights[*b]);
            *m = m.scale(&C::from_polar(1.0, d * t));
        }
        let gr = g.rotate(t)?.scale(C::from_polar(1.0, (dw - 1.0) * t));
        let rhs = smear(alpha, w, &gr)?.op;
        rep.tol("rotation_conjugation", format!("{} t={}", alpha.label, t), dense_dist(&lhs.to_dmatrix(), &rhs.to_dmatrix()), tol);
    }
    Ok(rep)
}

/// ⟨𝒴_2(w_2,f_2)𝒴_1(w_1,f_1)x | y⟩ from the truncated smeared matrices, and from the double
/// quadrature of the on-circle correlator (radial limits of the product series).
#[allow(clippy::too_many_arguments)]
pub fn smeared_product_pair(
    a1: &Intertwiner<C>,
    a2: &Intertwiner<C>,
    w1: &GradedVector<C>,
    w2: &GradedVector<C>,
    f1: &TestFunction,
    f2: &TestFunction,
    x: &GradedVector<C>,
    y: &GradedVector<C>,
    nodes: usize,
    kmax: usize,
) -> Result<(C, C)> {
    let s1 = smear(a1, w1, f1)?.op;
    let s2 = smear(a2, w2, f2)?.op;
    let v = s2.apply(&s1.apply(x)?)?;
    let lhs = v.inner(y)?;
    let (Some((l1, h1)), Some((l2, h2))) = (f1.arc, f2.arc) else {
        return Err(Error::Invalid("product quadrature needs arcs".into()));
    };
    let series = product_series(&[a1, a2], &[w1.clone(), w2.clone()], x, &bra(y), 2)?;
    // trapezoid on each arc; the bumps vanish to all orders at the ends
    let nodes_on = |a: f64, b: f64| -> Vec<f64> { (1..nodes).map(|k| a + (b - a) * k as f64 / nodes as f64).collect() };
    let (t1, t2) = (nodes_on(l1, h1), nodes_on(l2, h2));
    let (d1, d2) = ((h1 - l1) / nodes as f64, (h2 - l2) / nodes as f64);
    let mut rhs = C::new(0.0, 0.0);
    for &a in &t1 {
        let fa = f1.eval(a);
        if fa.norm() < 1e-300 {
            continue;
        }
        for &b in &t2 {
            let fb = f2.eval(b);
            if fb.norm() < 1e-300 {
                continue;
            }
            let g = |r: f64| -> Result<C> { Ok(series.eval(&[AngledComplex::new(r, a), AngledComplex::new(1.0, b)])?.extrapolated) };
            let val = radial_limit(&g, kmax)?.value;
            rhs += val * fa * fb * C::from_polar(1.0, a + b) * d1 * d2 / (4.0 * PI * PI);
        }
    }
    Ok((lhs, rhs))
}

/// Smeared product (n = 2) against the quadrature of the correlator, over pairs of basis vectors.
#[allow(clippy::too_many_arguments)]
pub fn check_smeared_product(
    a1: &Intertwiner<C>,
    a2: &Intertwiner<C>,
    w1: &GradedVector<C>,
    w2: &GradedVector<C>,
    f1: &TestFunction,
    f2: &TestFunction,
    pairs: &[(GradedVector<C>, GradedVector<C>)],
    nodes: usize,
    tol: f64,
) -> Result<(Report, f64)> {
    if let (Some((a, b)), Some((c2, d))) = (f1.arc, f2.arc) {
        if !(b < c2 || d < a) {
            return Err(Error::Invalid("supports must be disjoint".into()));
        }
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (x, y) in pairs {
        let (l, r) = smeared_product_pair(a1, a2, w1, w2, f1, f2, x, y, nodes, 8)?;
        worst = worst.max((l - r).norm());
        scale = scale.max(l.norm().max(r.norm()));
    }
    let rel = if scale > 0.0 { worst / scale } else { worst };
    let mut rep = Report::new();
    rep.tol("smeared_product", format!("{}·{} over {} matrix elements", a2.label, a1.label, pairs.len()), rel, tol);
    Ok((rep, rel))
}

/// Relative difference of the two truncated products on the corner of weights ≤ lowest + `level`
/// in the common source and target.
#[allow(clippy::too_many_arguments)]
pub fn smeared_braid_residual(
    lhs: (&Intertwiner<C>, &Intertwiner<C>),
    rhs: (&Intertwiner<C>, &Intertwiner<C>),
    wi: &GradedVector<C>,
    wj: &GradedVector<C>,
    f: &TestFunction,
    g: &TestFunction,
    level: i64,
) -> Result<f64> {
    let (a, b) = lhs;
    let (b2, a2) = rhs;
    let left = smear(a, wi, f)?.op.compose(&smear(b, wj, g)?.op)?;
    let right = smear(b2, wj, g)?.op.compose(&smear(a2, wi, f)?.op)?;
    let src = &left.source;
    let tgt = &left.target;
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let keys: BTreeSet<(usize, usize)> = left.blocks.keys().chain(right.blocks.keys()).copied().collect();
    for (t, s) in keys {
        if src.weights[s] - src.lowest_weight > qi(level) || tgt.weights[t] - tgt.lowest_weight > qi(level) {
            continue;
        }
        let z = Mat::zeros(tgt.dims[t], src.dims[s]);
        let (x, y) = (left.get(t, s).unwrap_or(&z), right.get(t, s).unwrap_or(&z));
        diff = diff.max(x.dist(y));
        scale = scale.max(x.max_abs()).max(y.max_abs());
    }
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// 𝒴_α(w_i,f)𝒴_β(w_j,g) = 𝒴_{β'}(w_j,g)𝒴_{α'}(w_i,f) for f on an arc anticlockwise of g's arc.
#[allow(clippy::too_many_arguments)]
pub fn check_smeared_braid(
    lhs: (&Intertwiner<C>, &Intertwiner<C>),
    rhs: (&Intertwiner<C>, &Intertwiner<C>),
    wi: &GradedVector<C>,
    wj: &GradedVector<C>,
    f: &TestFunction,
    g: &TestFunction,
    level: i64,
    tol: f64,
) -> Result<(Report, f64)> {
    match (f.arc, g.arc) {
        (Some((a, _)), Some((_, d))) if d < a => {}
        (None, _) | (_, None) => {}
        _ => return Err(Error::Invalid("the arc of f must lie anticlockwise of the arc of g".into())),
    }
    let r = smeared_braid_residual(lhs, rhs, wi, wj, f, g, level)?;
    let mut rep = Report::new();
    rep.tol("smeared_braid", format!("{}·{} vs {}·{}", lhs.0.label, lhs.1.label, rhs.0.label, rhs.1.label), r, tol);
    Ok((rep, r))
}

// ---------------------------------------------------------------------------------------------
// Appendix B: polar decompositions and generated algebras

#[derive(Clone, Debug)]
pub struct Polar {
    pub u: DMatrix<C>,
    pub h: DMatrix<C>,
}

/// Left (A = uH, H = |A|) or right (A = Hu, H = |A*|) polar decomposition; u is the partial
/// isometry on the support.
pub fn polar_decompose(a: &DMatrix<C>, left: bool) -> Polar {
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|k| svd.singular_values[*k] > 1e-12 * smax.max(1e-300)).collect();
    let n = a.nrows();
    let m = a.ncols();
    let mut iso = DMatrix::zeros(n, m);
    let mut h = if left { DMatrix::zeros(m, m) } else { DMatrix::zeros(n, n) };
    for &k in &keep {
        let uk = u.column(k);
        let vk = vt.row(k);
        iso += &uk * &vk;
        let s = c(svd.singular_values[k]);
        if left {
            h += vk.adjoint() * &vk * s;
        } else {
            h += &uk * uk.adjoint() * s;
        }
    }
    Polar { u: iso, h }
}

/// Orthonormal (Frobenius) basis of the unital *-algebra generated by the given matrices.
pub fn generated_algebra(gens: &[DMatrix<C>], tol: f64) -> Vec<DMatrix<C>> {
    let n = gens.first().map_or(0, |g| g.nrows());
    let mut all: Vec<DMatrix<C>> = gens.to_vec();
    all.extend(gens.iter().map(|g| g.adjoint()));
    let mut basis: Vec<DMatrix<C>> = Vec::new();
    let add = |basis: &mut Vec<DMatrix<C>>, m: DMatrix<C>| -> bool {
        let mut r = m;
        for _ in 0..2 {
            for b in basis.iter() {
                let p = b.dotc(&r);
                r -= b * p;
            }
        }
        let nr = r.norm();
        if nr > tol {
            basis.push(r / c(nr));
            true
        } else {
            false
        }
    };
    add(&mut basis, DMatrix::identity(n, n));
    for g in &all {
        add(&mut basis, g.clone());
    }
    let mut start = 0;
    while start < basis.len() {
        let end = basis.len();
        for i in start..end {
            for g in &all {
                let p = g * &basis[i];
                add(&mut basis, p);
            }
        }
        start = end;
        if basis.len() >= n * n {
            break;
        }
    }
    basis
}

/// Dimension of the span of two families together, compared with each alone: equal spans.
pub fn same_span(a: &[DMatrix<C>], b: &[DMatrix<C>], tol: f64) -> bool {
    let mut joint = a.to_vec();
    joint.extend(b.iter().cloned());
    let rank = |ms: &[DMatrix<C>]| -> usize {
        if ms.is_empty() {
            return 0;
        }
        let d = ms[0].len();
        let m = DMatrix::from_fn(d, ms.len(), |i, j| ms[j][i]);
        m.singular_values().iter().filter(|s| **s > tol).count()
    };
    let (ra, rb, rj) = (rank(a), rank(b), rank(&joint));
    ra == rj && rb == rj
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongCommutation {
    pub strong: bool,
    pub commutes: bool,
    pub polar_parts: bool,
}

/// Three conditions for strong commutation with a unitary v, evaluated directly:
/// (a) v commutes with the *-algebra generated by A, (b) vA = Av, (c) v commutes with u and e^{itH}.
pub fn strong_commutation_conditions(a: &DMatrix<C>, v: &DMatrix<C>, ts: &[f64], tol: f64) -> StrongCommutation {
    let comm = |x: &DMatrix<C>| (v * x - x * v).norm() <= tol * x.norm().max(1.0);
    let alg = generated_algebra(&[a.clone()], 1e-10);
    let strong = alg.iter().all(comm);
    let commutes = comm(a);
    let p = polar_decompose(a, true);
    let polar_parts = comm(&p.u) && ts.iter().all(|t| comm(&exp_i_hermitian(&p.h, *t)));
    StrongCommutation { strong, commutes, polar_parts }
}

// ---------------------------------------------------------------------------------------------
// strong intertwining, finite shadow

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongIntertwining {
    pub hermitian_defect: f64,
    /// ‖AB - BA‖/‖B‖
    pub commutator: f64,
    pub residuals: Vec<(f64, f64)>,
    /// the same residuals compressed to weights ≤ lowest + corner on both sides
    pub corner_residuals: Vec<(f64, f64)>,
}

/// A = Y_j(v,f) ⊕ Y_k(v,f) and B = 𝒴_α(w,g) extended by zero on W_k, in orthonormal coordinates;
/// ‖e^{itA}B - Be^{itA}‖/‖B‖ over the t grid.
#[allow(clippy::too_many_arguments)]
pub fn strong_intertwining(
    source: &Module<C>,
    target: &Module<C>,
    alpha: &Intertwiner<C>,
    v: &GradedVector<C>,
    f: &TestFunction,
    w: &GradedVector<C>,
    g: &TestFunction,
    ts: &[f64],
    corner: i64,
) -> Result<StrongIntertwining> {
    let dv = q_to_f64(v.weight().ok_or_else(|| Error::Invalid("homogeneous v required".into()))?);
    if phase_symmetry_defect(f, dv) > 1e-12 {
        return Err(Error::Invalid("f violates the reality condition e^{iπΔ/2}e_{1-Δ}f = conj(...)".into()));
    }
    let onb = |m: &DMatrix<C>, src: &Space<C>, tgt: &Space<C>| -> DMatrix<C> {
        let (gt, _) = gram_sqrt(tgt);
        let (_, gsi) = gram_sqrt(src);
        gt * m * gsi
    };
    let aj = onb(&smear(&source.action, v, f)?.dense(), &source.space, &source.space);
    let ak = onb(&smear(&target.action, v, f)?.dense(), &target.space, &target.space);
    let bm = onb(&smear(alpha, w, g)?.dense(), &alpha.source, &alpha.target);
    let (nj, nk) = (aj.nrows(), ak.nrows());
    let mut a = DMatrix::zeros(nj + nk, nj + nk);
    a.view_mut((0, 0), (nj, nj)).copy_from(&aj);
    a.view_mut((nj, nj), (nk, nk)).copy_from(&ak);
    let mut b = DMatrix::zeros(nj + nk, nj + nk);
    b.view_mut((nj, 0), (nk, nj)).copy_from(&bm);
    let herm = (&a - a.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max);
    let bn = op_norm(&b).max(1e-300);
    let low = |sp: &Space<C>, shift: usize| -> Vec<usize> {
        (0..sp.nblocks()).filter(|k| sp.weights[*k] - sp.lowest_weight <= qi(corner)).flat_map(|k| sp.range(k)).map(|i| i + shift).collect()
    };
    let mut keep = low(&source.space, 0);
    keep.extend(low(&target.space, nj));
    let compress = |m: &DMatrix<C>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    let bc = op_norm(&compress(&b)).max(1e-300);
    let commutator = op_norm(&(&a * &b - &b * &a)) / bn;
    let mut residuals = Vec::new();
    let mut corner_residuals = Vec::new();
    for &t in ts {
        let e = exp_i_hermitian(&a, t);
        let d = &e * &b - &b * &e;
        residuals.push((t, op_norm(&d) / bn));
        corner_residuals.push((t, op_norm(&compress(&d)) / bc));
    }
    Ok(StrongIntertwining { hermitian_defect: herm, commutator, residuals, corner_residuals })
}
