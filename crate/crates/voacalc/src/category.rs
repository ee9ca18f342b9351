//! Fusion and ribbon category data for multiplicity-free label sets: axiom checks, a numerical
//! pentagon/hexagon solver, and extraction of the data from intertwining operators.
//!
//! Conventions. F^{abc}_d is a matrix with rows e ∈ a⊗b (the (ab)c channel) and columns
//! f ∈ b⊗c (the a(bc) channel). R^{ab}_c is the braiding scalar on the channel a⊗b → c.
//! ev_a: ā⊗a → 0 and coev_a: 0 → a⊗ā are scalars on the unit channels.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlate::{bra, solve_fusion, FusionSample};
use crate::error::{Error, Result};
use crate::graded::{GradedVector, Space};
use crate::linalg::{op_norm, sqrt_psd, Mat};
use crate::multivalued::AngledComplex;
use crate::report::{Report, Status};
use crate::scalar::{q_to_f64, Cyc8, Scalar, Q};
use crate::transforms::{braid, Family};
use crate::voa::{Intertwiner, Module};

type C = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct FBlock<S> {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub m: Mat<S>,
}

#[derive(Clone, Debug)]
pub struct CategoryData<S> {
    pub labels: Vec<String>,
    pub dual: Vec<usize>,
    /// n[i][j][k] = N^k_{ij}
    pub n: Vec<Vec<Vec<u32>>>,
    pub f: BTreeMap<[usize; 4], FBlock<S>>,
    pub r: BTreeMap<[usize; 3], S>,
    pub twist: Vec<S>,
    pub ev: Vec<S>,
    pub coev: Vec<S>,
    /// inner products of the basis vectors of 𝒱(k; i j)*, keyed [i, j, k]
    pub gram: Option<BTreeMap<[usize; 3], f64>>,
}

impl<S: Scalar> CategoryData<S> {
    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn fuse(&self, a: usize, b: usize) -> Vec<usize> {
        (0..self.rank()).filter(|k| self.n[a][b][*k] > 0).collect()
    }

    pub fn allowed(&self, a: usize, b: usize, c: usize) -> bool {
        self.n[a][b][c] > 0
    }

    /// Row and column labels of F^{abc}_d.
    pub fn f_shape(&self, a: usize, b: usize, c: usize, d: usize) -> (Vec<usize>, Vec<usize>) {
        let rows = (0..self.rank()).filter(|e| self.allowed(a, b, *e) && self.allowed(*e, c, d)).collect();
        let cols = (0..self.rank()).filter(|f| self.allowed(b, c, *f) && self.allowed(a, *f, d)).collect();
        (rows, cols)
    }

    pub fn fget(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> S {
        let Some(bl) = self.f.get(&[a, b, c, d]) else { return S::zero() };
        match (bl.rows.iter().position(|x| *x == e), bl.cols.iter().position(|x| *x == f)) {
            (Some(i), Some(j)) => bl.m.get(i, j).clone(),
            _ => S::zero(),
        }
    }

    pub fn rget(&self, a: usize, b: usize, c: usize) -> S {
        self.r.get(&[a, b, c]).cloned().unwrap_or_else(S::zero)
    }

    /// Unit, dual, multiplicity-freeness, fusion symmetries and block shapes.
    pub fn validate(&self) -> Result<()> {
        let k = self.rank();
        let bad = |m: String| Err(Error::Invalid(m));
        if self.dual.len() != k || self.n.len() != k || self.twist.len() != k || self.ev.len() != k || self.coev.len() != k {
            return bad("label-indexed data has the wrong length".into());
        }
        if self.dual[0] != 0 {
            return bad("the unit must be self-dual".into());
        }
        for i in 0..k {
            if self.dual[self.dual[i]] != i {
                return bad(format!("dual map is not an involution at {}", self.labels[i]));
            }
            for j in 0..k {
                if self.n[0][j][i] != u32::from(i == j) || self.n[j][0][i] != u32::from(i == j) {
                    return bad(format!("N^{}_{{0 {}}} is not δ", self.labels[i], self.labels[j]));
                }
                for l in 0..k {
                    let v = self.n[i][j][l];
                    if v > 1 {
                        return bad(format!("N^{}_{{{} {}}} = {}: only multiplicity-free data is supported", self.labels[l], self.labels[i], self.labels[j], v));
                    }
                    if v != self.n[self.dual[j]][self.dual[i]][self.dual[l]] || v != self.n[self.dual[i]][l][j] {
                        return bad(format!("fusion symmetry fails at ({}, {}; {})", self.labels[i], self.labels[j], self.labels[l]));
                    }
                }
            }
            if self.n[i][self.dual[i]][0] != 1 {
                return bad(format!("N^0_{{{} {}}} ≠ 1", self.labels[i], self.labels[self.dual[i]]));
            }
        }
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        let (rows, cols) = self.f_shape(a, b, c, d);
                        match self.f.get(&[a, b, c, d]) {
                            None if rows.is_empty() => {}
                            None => return bad(format!("missing F^{{{} {} {}}}_{}", a, b, c, d)),
                            Some(bl) => {
                                if bl.rows != rows || bl.cols != cols || bl.m.rows != rows.len() || bl.m.cols != cols.len() {
                                    return bad(format!("F^{{{} {} {}}}_{} has the wrong shape", a, b, c, d));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Gauge-invariant data: twists, monodromies R^{ba}_c R^{ab}_c, and F^{aaa}_a[0,0] for
    /// self-dual a.
    pub fn invariants(&self) -> Vec<(String, C)> {
        let k = self.rank();
        let mut out = Vec::new();
        for a in 0..k {
            out.push((format!("theta_{}", self.labels[a]), self.twist[a].to_c64()));
        }
        for a in 0..k {
            for b in a..k {
                for c in self.fuse(a, b) {
                    let m = self.rget(b, a, c) * self.rget(a, b, c);
                    out.push((format!("monodromy_{}{}_{}", self.labels[a], self.labels[b], self.labels[c]), m.to_c64()));
                }
            }
        }
        for a in 0..k {
            if self.dual[a] == a {
                out.push((format!("F_{}{}{}_{}[0,0]", self.labels[a], self.labels[a], self.labels[a], self.labels[a]), self.fget(a, a, a, a, 0, 0).to_c64()));
            }
        }
        out
    }

    pub fn to_c64(&self) -> CategoryData<C> {
        CategoryData {
            labels: self.labels.clone(),
            dual: self.dual.clone(),
            n: self.n.clone(),
            f: self.f.iter().map(|(k, b)| (*k, FBlock { rows: b.rows.clone(), cols: b.cols.clone(), m: b.m.to_c64() })).collect(),
            r: self.r.iter().map(|(k, v)| (*k, v.to_c64())).collect(),
            twist: self.twist.iter().map(|v| v.to_c64()).collect(),
            ev: self.ev.iter().map(|v| v.to_c64()).collect(),
            coev: self.coev.iter().map(|v| v.to_c64()).collect(),
            gram: self.gram.clone(),
        }
    }

    pub fn to_json(&self) -> CategoryJson {
        let cx = |v: &S| v.to_c64();
        CategoryJson {
            schema_version: 1,
            labels: self.labels.clone(),
            dual: self.dual.clone(),
            n: self.n.clone(),
            f: self
                .f
                .iter()
                .map(|(k, b)| FJson { abcd: *k, rows: b.rows.clone(), cols: b.cols.clone(), matrix: (0..b.m.rows).map(|i| (0..b.m.cols).map(|j| cx(b.m.get(i, j))).collect()).collect() })
                .collect(),
            r: self.r.iter().map(|(k, v)| RJson { abc: *k, value: cx(v) }).collect(),
            twist: self.twist.iter().map(cx).collect(),
            ev: self.ev.iter().map(cx).collect(),
            coev: self.coev.iter().map(cx).collect(),
            gram: self.gram.as_ref().map(|g| g.iter().map(|(k, v)| GramJson { ijk: *k, value: *v }).collect()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FJson {
    pub abcd: [usize; 4],
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub matrix: Vec<Vec<C>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RJson {
    pub abc: [usize; 3],
    pub value: C,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GramJson {
    pub ijk: [usize; 3],
    pub value: f64,
}

/// Serialized form; complex numbers are [re, im] pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CategoryJson {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub dual: Vec<usize>,
    pub n: Vec<Vec<Vec<u32>>>,
    pub f: Vec<FJson>,
    pub r: Vec<RJson>,
    pub twist: Vec<C>,
    pub ev: Vec<C>,
    pub coev: Vec<C>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<Vec<GramJson>>,
}

fn schema_v1() -> u32 {
    1
}

impl CategoryJson {
    pub fn into_data(self) -> Result<CategoryData<C>> {
        if self.schema_version != 1 {
            return Err(Error::Invalid(format!("unsupported schema_version {}", self.schema_version)));
        }
        let mut f = BTreeMap::new();
        for b in self.f {
            let (r, c) = (b.rows.len(), b.cols.len());
            if b.matrix.len() != r || b.matrix.iter().any(|row| row.len() != c) {
                return Err(Error::Invalid(format!("F block {:?} does not match its labels", b.abcd)));
            }
            f.insert(b.abcd, FBlock { rows: b.rows, cols: b.cols, m: Mat::from_fn(r, c, |i, j| b.matrix[i][j]) });
        }
        let data = CategoryData {
            labels: self.labels,
            dual: self.dual,
            n: self.n,
            f,
            r: self.r.into_iter().map(|x| (x.abc, x.value)).collect(),
            twist: self.twist,
            ev: self.ev,
            coev: self.coev,
            gram: self.gram.map(|g| g.into_iter().map(|x| (x.ijk, x.value)).collect()),
        };
        data.validate()?;
        Ok(data)
    }
}

fn res<S: Scalar>(a: S, b: S) -> f64 {
    let d = a - b;
    if d.is_zero() {
        0.0
    } else {
        d.abs()
    }
}

fn lab<S>(c: &CategoryData<S>, xs: &[usize]) -> String {
    xs.iter().map(|x| c.labels[*x].as_str()).collect::<Vec<_>>().join(",")
}

struct Worst {
    max: f64,
    first: Option<String>,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Worst { max: 0.0, first: None, count: 0 }
    }
    fn see(&mut self, r: f64, tol: f64, exact: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        self.max = self.max.max(r);
        let bad = if exact { r != 0.0 } else { r > tol };
        if bad && self.first.is_none() {
            self.first = Some(what());
        }
    }
    fn report<S: Scalar>(self, rep: &mut Report, check: &str, tol: f64) {
        let subject = format!("{} equations", self.count);
        match self.first {
            Some(w) => rep.push_detail(check, subject, Status::Fail, self.max, format!("first violation at {}", w)),
            None => rep.backend(S::EXACT, check, subject, self.max, tol),
        }
    }
}

/// Σ_h F^{abc}_g[f,h] F^{ahd}_e[g,k] F^{bcd}_k[h,l] = F^{fcd}_e[g,l] F^{abl}_e[f,k].
pub fn pentagon_check<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Report {
    let k = c.rank();
    let mut w = Worst::new();
    for a in 0..k {
        for b in 0..k {
            for cc in 0..k {
                for d in 0..k {
                    for e in 0..k {
                        for f in c.fuse(a, b) {
                            for g in c.fuse(f, cc) {
                                if !c.allowed(g, d, e) {
                                    continue;
                                }
                                for l in c.fuse(cc, d) {
                                    for kk in c.fuse(b, l) {
                                        if !c.allowed(a, kk, e) {
                                            continue;
                                        }
                                        let lhs = c.fget(f, cc, d, e, g, l) * c.fget(a, b, l, e, f, kk);
                                        let mut rhs = S::zero();
                                        for h in c.fuse(b, cc) {
                                            rhs = rhs + c.fget(a, b, cc, g, f, h) * c.fget(a, h, d, e, g, kk) * c.fget(b, cc, d, kk, h, l);
                                        }
                                        w.see(res(lhs, rhs), tol, S::EXACT, || format!("(a,b,c,d,e)=({}) f={} g={} k={} l={}", lab(c, &[a, b, cc, d, e]), c.labels[f], c.labels[g], c.labels[kk], c.labels[l]));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut rep = Report::new();
    w.report::<S>(&mut rep, "pentagon", tol);
    rep
}

/// R^{ac}_e F^{acb}_d[e,g] R^{bc}_g = Σ_f F^{cab}_d[e,f] R^{fc}_d F^{abc}_d[f,g]; sign -1 replaces
/// every R^{xy}_z by (R^{yx}_z)^{-1}.
pub fn hexagon_check<S: Scalar>(c: &CategoryData<S>, sign: i64, tol: f64) -> Result<Report> {
    let k = c.rank();
    let rr = |x: usize, y: usize, z: usize| -> Result<S> {
        if sign > 0 {
            Ok(c.rget(x, y, z))
        } else {
            c.rget(y, x, z).inv().ok_or_else(|| Error::Singular(format!("R^{{{} {}}}_{} vanishes", c.labels[y], c.labels[x], c.labels[z])))
        }
    };
    let mut w = Worst::new();
    for a in 0..k {
        for b in 0..k {
            for cc in 0..k {
                for d in 0..k {
                    for e in c.fuse(a, cc) {
                        for g in c.fuse(b, cc) {
                            if !(c.allowed(e, b, d) && c.allowed(a, g, d)) {
                                continue;
                            }
                            let lhs = rr(a, cc, e)? * c.fget(a, cc, b, d, e, g) * rr(b, cc, g)?;
                            let mut rhs = S::zero();
                            for f in c.fuse(a, b) {
                                if c.allowed(f, cc, d) {
                                    rhs = rhs + c.fget(cc, a, b, d, e, f) * rr(f, cc, d)? * c.fget(a, b, cc, d, f, g);
                                }
                            }
                            w.see(res(lhs, rhs), tol, S::EXACT, || format!("(a,b,c,d)=({}) e={} g={}", lab(c, &[a, b, cc, d]), c.labels[e], c.labels[g]));
                        }
                    }
                }
            }
        }
    }
    let mut rep = Report::new();
    w.report::<S>(&mut rep, if sign > 0 { "hexagon+" } else { "hexagon-" }, tol);
    Ok(rep)
}

/// With trivial unitors the triangle axiom reads F^{a0b}_c = 1; the unit rows F^{0bc}_d and
/// F^{ab0}_d and the unit braidings are checked along with it.
pub fn triangle_check<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Report {
    let k = c.rank();
    let mut w = Worst::new();
    for a in 0..k {
        for b in 0..k {
            for d in c.fuse(a, b) {
                w.see(res(c.fget(a, 0, b, d, a, b), S::one()), tol, S::EXACT, || format!("F^{{{} 0 {}}}_{}", c.labels[a], c.labels[b], c.labels[d]));
                w.see(res(c.fget(0, a, b, d, a, d), S::one()), tol, S::EXACT, || format!("F^{{0 {} {}}}_{}", c.labels[a], c.labels[b], c.labels[d]));
                w.see(res(c.fget(a, b, 0, d, d, b), S::one()), tol, S::EXACT, || format!("F^{{{} {} 0}}_{}", c.labels[a], c.labels[b], c.labels[d]));
            }
            w.see(res(c.rget(0, a, a), S::one()), tol, S::EXACT, || format!("R^{{0 {}}}", c.labels[a]));
            w.see(res(c.rget(a, 0, a), S::one()), tol, S::EXACT, || format!("R^{{{} 0}}", c.labels[a]));
        }
    }
    let mut rep = Report::new();
    w.report::<S>(&mut rep, "triangle", tol);
    rep
}

/// (id_i⊗ev_i)(coev_i⊗id_i) = coev_i F^{i ī i}_i[0,0] ev_i and
/// (ev_i⊗id_ī)(id_ī⊗coev_i) = coev_i (F^{ī i ī}_ī)^{-1}[0,0] ev_i, both required to be 1.
pub fn rigidity_check<S: Scalar>(c: &CategoryData<S>, i: usize, tol: f64) -> Result<Report> {
    let ib = c.dual[i];
    let zig1 = c.coev[i].clone() * c.fget(i, ib, i, i, 0, 0) * c.ev[i].clone();
    let bl = c.f.get(&[ib, i, ib, ib]).ok_or_else(|| Error::Invalid(format!("missing F^{{{0} {1} {0}}}_{0}", c.labels[ib], c.labels[i])))?;
    let inv = bl.m.inverse()?;
    let (r0, c0) = (bl.cols.iter().position(|x| *x == 0), bl.rows.iter().position(|x| *x == 0));
    let (Some(r0), Some(c0)) = (r0, c0) else { return Err(Error::Invalid("unit channel missing from F".into())) };
    let zig2 = c.coev[i].clone() * inv.get(r0, c0).clone() * c.ev[i].clone();
    let mut rep = Report::new();
    rep.backend(S::EXACT, "rigidity_zigzag", c.labels[i].clone(), res(zig1, S::one()), tol);
    rep.backend(S::EXACT, "rigidity_zigzag_inverse", c.labels[i].clone(), res(zig2, S::one()), tol);
    Ok(rep)
}

/// R^{ba}_c R^{ab}_c = ϑ_c / (ϑ_a ϑ_b).
pub fn balancing_check<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Result<Report> {
    let k = c.rank();
    let mut w = Worst::new();
    for a in 0..k {
        for b in 0..k {
            for cc in c.fuse(a, b) {
                let lhs = c.rget(b, a, cc) * c.rget(a, b, cc) * c.twist[a].clone() * c.twist[b].clone();
                w.see(res(lhs, c.twist[cc].clone()), tol, S::EXACT, || format!("({})", lab(c, &[a, b, cc])));
            }
        }
    }
    let mut rep = Report::new();
    w.report::<S>(&mut rep, "balancing", tol);
    Ok(rep)
}

fn gram_of(c: &CategoryData<impl Scalar>, i: usize, j: usize, k: usize) -> f64 {
    c.gram.as_ref().and_then(|g| g.get(&[i, j, k]).copied()).unwrap_or(1.0)
}

/// Unitarity against the supplied gram: associators, unitors, braidings, twists, and eq. 143/144
/// for ev/coev, after searching a rescaling coev → λ coev, ev → ev/λ that fixes eq. 143.
pub fn unitarity_check<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Result<Report> {
    if c.gram.is_none() {
        return Err(Error::Invalid("unitarity needs a gram on the multiplicity spaces".into()));
    }
    let cd = c.to_c64();
    let k = c.rank();
    let mut rep = Report::new();
    let mut w = Worst::new();
    for (key, bl) in &cd.f {
        let [a, b, cc, d] = *key;
        let dr: Vec<f64> = bl.rows.iter().map(|e| gram_of(c, a, b, *e) * gram_of(c, *e, cc, d)).collect();
        let dc: Vec<f64> = bl.cols.iter().map(|f| gram_of(c, b, cc, *f) * gram_of(c, a, *f, d)).collect();
        let u = DMatrix::from_fn(bl.rows.len(), bl.cols.len(), |i, j| bl.m.get(i, j) * (dc[j] / dr[i]).sqrt());
        let dev = (&u * u.adjoint() - DMatrix::identity(u.nrows(), u.nrows())).iter().map(|x| x.norm()).fold(0.0, f64::max);
        w.see(dev, tol, false, || format!("F^{{{}}}", lab(c, &[a, b, cc, d])));
    }
    w.report::<C>(&mut rep, "unitary_associator", tol);
    let mut w = Worst::new();
    for i in 0..k {
        w.see((gram_of(c, 0, i, i) - 1.0).abs(), tol, false, || format!("λ_{}", c.labels[i]));
        w.see((gram_of(c, i, 0, i) - 1.0).abs(), tol, false, || format!("ρ_{}", c.labels[i]));
    }
    w.report::<C>(&mut rep, "unitary_unitors", tol);
    let mut w = Worst::new();
    for (key, r) in &cd.r {
        let [a, b, cc] = *key;
        let m = r.norm() * (gram_of(c, b, a, cc) / gram_of(c, a, b, cc)).sqrt();
        w.see((m - 1.0).abs(), tol, false, || format!("R^{{{}}}", lab(c, &[a, b, cc])));
    }
    w.report::<C>(&mut rep, "unitary_braiding", tol);
    let mut w = Worst::new();
    for i in 0..k {
        w.see((cd.twist[i].norm() - 1.0).abs(), tol, false, || format!("ϑ_{}", c.labels[i]));
    }
    w.report::<C>(&mut rep, "unitary_twist", tol);
    for i in 0..k {
        let ib = c.dual[i];
        let (gi, gb) = (gram_of(c, i, ib, 0), gram_of(c, ib, i, 0));
        let (e, co) = (cd.ev[i], cd.coev[i]);
        let (th, r1, r2) = (cd.twist[i], cd.r.get(&[i, ib, 0]).copied().unwrap_or_default(), cd.r.get(&[ib, i, 0]).copied().unwrap_or_default());
        // conj(λ c) g_i = ϑ R e / λ  ⇒  |λ|² = ϑ R e / (conj(c) g_i)
        let rho = th * r1 * e / (co.conj() * gi);
        let (co, e, note) = if (rho.im.abs() <= tol) && rho.re > 0.0 && (rho.re - 1.0).abs() > tol {
            let l = rho.re.sqrt();
            (co * l, e / l, format!(" (rescaled by λ = {:.6})", l))
        } else {
            (co, e, String::new())
        };
        let r_coev = (co.conj() * gi - th * r1 * e).norm();
        let r_ev = if r2.norm() == 0.0 { f64::INFINITY } else { (e.conj() / gb - co / (th * r2)).norm() };
        rep.tol("unitary_coev_adjoint", format!("{}{}", c.labels[i], note), r_coev, tol);
        rep.tol("unitary_ev_adjoint", format!("{}{}", c.labels[i], note), r_ev, tol);
    }
    Ok(rep)
}

/// Everything that applies to the data: pentagon, both hexagons, triangle, rigidity for every
/// label, balancing; unitarity when a gram is present.
pub fn full_check<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Result<Report> {
    c.validate()?;
    let mut rep = pentagon_check(c, tol);
    rep.extend(hexagon_check(c, 1, tol)?);
    rep.extend(hexagon_check(c, -1, tol)?);
    rep.extend(triangle_check(c, tol));
    for i in 0..c.rank() {
        rep.extend(rigidity_check(c, i, tol)?);
    }
    rep.extend(balancing_check(c, tol)?);
    if c.gram.is_some() {
        rep.extend(unitarity_check(c, tol)?);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------------------------
// C* structure of hom spaces

/// *-involution, antilinearity, submultiplicativity, the C* identity and positivity on a family
/// of square matrices of equal size.
pub fn cstar_check(maps: &[DMatrix<C>], seed: u64, tol: f64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::new();
    let (mut inv, mut anti, mut sub, mut cst, mut pos) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for f in maps {
        inv = inv.max((f.adjoint().adjoint() - f).norm());
        let l = C::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        anti = anti.max(((f * l).adjoint() - f.adjoint() * l.conj()).norm());
        let nf = op_norm(f);
        let ff = f.adjoint() * f;
        cst = cst.max((op_norm(&ff) - nf * nf).abs() / nf.max(1.0).powi(2));
        let (r, _) = sqrt_psd(&ff);
        pos = pos.max((r.adjoint() * &r - &ff).norm() / ff.norm().max(1.0));
        for g in maps {
            if g.ncols() == f.nrows() {
                sub = sub.max(op_norm(&(g * f)) - op_norm(g) * nf);
            }
        }
    }
    rep.tol("cstar_involution", format!("{} maps", maps.len()), inv, tol);
    rep.tol("cstar_antilinear", format!("{} maps", maps.len()), anti, tol);
    rep.tol("cstar_submultiplicative", format!("{} maps", maps.len()), sub.max(0.0), tol);
    rep.tol("cstar_identity", format!("{} maps", maps.len()), cst, tol);
    rep.tol("cstar_positivity", format!("{} maps", maps.len()), pos, tol);
    rep
}

/// Basis of the weight-preserving maps T: W_1 → W_2 with T Y_1(u,s) = Y_2(u,s) T on the stored
/// window, for u among the generators.
pub fn module_homs(m1: &Module<C>, m2: &Module<C>, generators: &[GradedVector<C>], tol: f64) -> Result<Vec<DMatrix<C>>> {
    let (s1, s2) = (&m1.space, &m2.space);
    // unknowns: one block per common weight
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new(); // (block in W1, block in W2, offset)
    let mut nvar = 0;
    for b1 in 0..s1.nblocks() {
        if let Some(b2) = s2.weight_index(s1.weights[b1]) {
            blocks.push((b1, b2, nvar));
            nvar += s1.dims[b1] * s2.dims[b2];
        }
    }
    if nvar == 0 {
        return Ok(vec![]);
    }
    let var = |b1: usize, i: usize, j: usize| -> Option<usize> {
        // T block W1[b1] → W2[same weight], entry (i, j)
        blocks.iter().find(|x| x.0 == b1).map(|(b1, b2, off)| {
            let _ = b2;
            off + i * s1.dims[*b1] + j
        })
    };
    let mut rows: Vec<Vec<(usize, C)>> = Vec::new();
    for u in generators {
        let y1 = m1.action.combine(u)?;
        let y2 = m2.action.combine(u)?;
        // modes as maps between weights: for each source weight x of W1 and target weight x'
        for b in 0..s1.nblocks() {
            for t in 0..s1.nblocks() {
                let (Some(tb), Some(bb)) = (s2.weight_index(s1.weights[t]), s2.weight_index(s1.weights[b])) else { continue };
                let z1 = Mat::zeros(s1.dims[t], s1.dims[b]);
                let z2 = Mat::zeros(s2.dims[tb], s2.dims[bb]);
                let a1 = y1.get(&(t, b)).unwrap_or(&z1);
                let a2 = y2.get(&(tb, bb)).unwrap_or(&z2);
                if a1.is_zero() && a2.is_zero() {
                    continue;
                }
                // (Y2 T_b)(p, q) - (T_t Y1)(p, q) = 0
                for p in 0..s2.dims[tb] {
                    for q in 0..s1.dims[b] {
                        let mut row = Vec::new();
                        for r in 0..s2.dims[bb] {
                            let c = *a2.get(p, r);
                            if c != C::new(0.0, 0.0) {
                                row.push((var(b, r, q).unwrap(), c));
                            }
                        }
                        for r in 0..s1.dims[t] {
                            let c = *a1.get(r, q);
                            if c != C::new(0.0, 0.0) {
                                row.push((var(t, p, r).unwrap(), -c));
                            }
                        }
                        if !row.is_empty() {
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
    let nr = rows.len().max(nvar);
    let mut a = DMatrix::<C>::zeros(nr, nvar);
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in row {
            a[(i, *j)] += c;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut out = Vec::new();
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] <= tol * smax {
            let v = vt.row(k);
            let mut t = DMatrix::<C>::zeros(s2.total_dim(), s1.total_dim());
            for (b1, b2, off) in &blocks {
                for i in 0..s2.dims[*b2] {
                    for j in 0..s1.dims[*b1] {
                        t[(s2.offsets[*b2] + i, s1.offsets[*b1] + j)] = v[off + i * s1.dims[*b1] + j].conj();
                    }
                }
            }
            out.push(t);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------------------
// tensor products

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorModule {
    pub i: usize,
    pub j: usize,
    /// (k, N^k_{ij})
    pub parts: Vec<(usize, u32)>,
}

/// ⊕_k 𝒱(k; i j)* ⊗ W_k as multiplicity bookkeeping.
pub fn build_tensor_module<S: Scalar>(c: &CategoryData<S>, i: usize, j: usize) -> TensorModule {
    TensorModule { i, j, parts: c.fuse(i, j).into_iter().map(|k| (k, c.n[i][j][k])).collect() }
}

impl TensorModule {
    pub fn graded_dims(&self, spaces: &[&Space<C>]) -> BTreeMap<Q, usize> {
        let mut out = BTreeMap::new();
        for (k, m) in &self.parts {
            let sp = spaces[*k];
            for b in 0..sp.nblocks() {
                *out.entry(sp.weights[b]).or_insert(0) += sp.dims[b] * *m as usize;
            }
        }
        out
    }
}

/// R_𝒴(w_i ⊠ w_j) = 𝒴(w_i, z)w_j, summed over the stored modes.
pub fn represent(alpha: &Intertwiner<C>, wi: &GradedVector<C>, wj: &GradedVector<C>, z: AngledComplex) -> Result<GradedVector<C>> {
    let mut out = GradedVector::zero(&alpha.target);
    for cb in 0..alpha.charge.nblocks() {
        let part = wi.project(alpha.charge.weights[cb]);
        if part.is_zero() {
            continue;
        }
        for ((t, b), m) in alpha.combine(&part)? {
            let src = wj.block(b);
            if src.iter().all(|x| *x == C::new(0.0, 0.0)) {
                continue;
            }
            let s = alpha.charge.weights[cb] + alpha.source.weights[b] - alpha.target.weights[t] - crate::scalar::qi(1);
            let zc = z.pow(-s - crate::scalar::qi(1)).to_c64();
            let v = m.mul_vec(&src);
            for (i, x) in alpha.target.range(t).zip(v) {
                out.data[i] += x * zc;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------------------
// extraction from a VOA model

pub struct VoaCategorySource<'a> {
    pub modules: Vec<&'a Module<C>>,
    pub dual: Vec<usize>,
    /// basis intertwiner of 𝒱(k; i j), keyed [k, i, j]
    pub bases: BTreeMap<[usize; 3], &'a Intertwiner<C>>,
    pub family: &'a Family<C>,
}

impl<'a> VoaCategorySource<'a> {
    pub fn basis(&self, k: usize, i: usize, j: usize) -> Result<&'a Intertwiner<C>> {
        self.bases.get(&[k, i, j]).copied().ok_or_else(|| Error::Invalid(format!("no basis intertwiner of type ({}; {} {})", self.modules[k].label, self.modules[i].label, self.modules[j].label)))
    }
}

/// Sample pairs (z_i, z_j) with 0 < |z_i - z_j| < |z_j| < |z_i|.
pub fn default_fusion_points() -> Vec<(AngledComplex, AngledComplex)> {
    let p = |x: f64, y: f64| AngledComplex::from_c64(C::new(x, y));
    vec![(p(0.8, 0.1), p(0.55, 0.0)), (p(0.7, -0.3), p(0.5, -0.1))]
}

fn probes(m: &Module<C>, level: i64) -> Vec<GradedVector<C>> {
    let sp = &m.space;
    (0..sp.nblocks())
        .filter(|b| sp.weights[*b] - sp.lowest_weight <= crate::scalar::qi(level))
        .flat_map(|b| sp.range(b))
        .map(|i| GradedVector::basis(sp, i))
        .collect()
}

/// One fusion matrix F^{abc}_d from the correlators: the product through f is expanded in the
/// iterates through e, and that coefficient is F[e, f].
pub fn extract_f(src: &VoaCategorySource, ncat: &CategoryData<C>, abcd: [usize; 4], points: &[(AngledComplex, AngledComplex)]) -> Result<(FBlock<C>, f64)> {
    let [a, b, c, d] = abcd;
    let (rows, cols) = ncat.f_shape(a, b, c, d);
    let mut m = Mat::zeros(rows.len(), cols.len());
    let mut spread: f64 = 0.0;
    for (j, f) in cols.iter().enumerate() {
        let alpha = src.basis(d, a, *f)?;
        let beta = src.basis(*f, b, c)?;
        let basis: Vec<(&Intertwiner<C>, &Intertwiner<C>)> = rows.iter().map(|e| Ok((src.basis(d, *e, c)?, src.basis(*e, a, b)?))).collect::<Result<_>>()?;
        let mut last = Err(Error::Singular("no samples".into()));
        for level in 0..=1 {
            let mut samples = Vec::new();
            for (zi, zj) in points {
                for wi in probes(src.modules[a], level) {
                    for wj in probes(src.modules[b], level) {
                        for x in probes(src.modules[c], level) {
                            for phi in probes(src.modules[d], level) {
                                samples.push(FusionSample { phi: bra(&phi), x: x.clone(), wi: wi.clone(), wj: wj.clone(), zi: *zi, zj: *zj });
                            }
                        }
                    }
                }
            }
            last = solve_fusion(alpha, beta, &basis, &samples);
            if last.is_ok() {
                break;
            }
        }
        let sol = last?;
        spread = spread.max(sol.spread);
        for (i, x) in sol.coefficients.iter().enumerate() {
            m.set(i, j, *x);
        }
    }
    Ok((FBlock { rows, cols, m }, spread))
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub data: CategoryData<C>,
    /// largest disagreement of the two half-sample solves over all F entries
    pub spread: f64,
}

/// Fusion rules from the registered bases, F from the correlators, braiding from B_+, twists
/// e^{2πiΔ}, ev = 1 and coev fixed by the first zig-zag, unit gram.
pub fn extract_from_voa(src: &VoaCategorySource, points: &[(AngledComplex, AngledComplex)], tol: f64) -> Result<Extraction> {
    let k = src.modules.len();
    let mut n = vec![vec![vec![0u32; k]; k]; k];
    for [kk, i, j] in src.bases.keys() {
        n[*i][*j][*kk] = 1;
    }
    let mut data = CategoryData {
        labels: src.modules.iter().map(|m| m.label.clone()).collect(),
        dual: src.dual.clone(),
        n,
        f: BTreeMap::new(),
        r: BTreeMap::new(),
        twist: src.modules.iter().map(|m| C::from_polar(1.0, 2.0 * std::f64::consts::PI * q_to_f64(m.space.lowest_weight))).collect(),
        ev: vec![C::new(1.0, 0.0); k],
        coev: vec![C::new(1.0, 0.0); k],
        gram: Some(src.bases.keys().map(|[kk, i, j]| ([*i, *j, *kk], 1.0)).collect()),
    };
    for ([kk, i, j], alpha) in &src.bases {
        let b = braid(alpha, 1, src.family)?;
        let target = src.basis(*kk, *j, *i)?;
        let lam = b.ratio_to(target, tol).ok_or_else(|| Error::Invalid(format!("B_+({}) is not a multiple of {}", alpha.label, target.label)))?;
        data.r.insert([*i, *j, *kk], lam);
    }
    let mut spread: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                for d in 0..k {
                    if data.f_shape(a, b, c, d).0.is_empty() {
                        continue;
                    }
                    let (bl, s) = extract_f(src, &data, [a, b, c, d], points)?;
                    spread = spread.max(s);
                    data.f.insert([a, b, c, d], bl);
                }
            }
        }
    }
    for a in 0..k {
        let ab = data.dual[a];
        let f00 = data.fget(a, ab, a, a, 0, 0);
        data.coev[a] = C::new(1.0, 0.0) / f00;
    }
    data.validate()?;
    Ok(Extraction { data, spread })
}

/// Rounds every entry to the nearest element of Q(ζ_8) of small height.
pub fn snap_exact(c: &CategoryData<C>, tol: f64) -> Result<CategoryData<Cyc8>> {
    let snap = |z: &C| Cyc8::recognize(*z, 8, tol).ok_or_else(|| Error::NotExact(format!("{} is not recognizably in Q(ζ_8)", z)));
    let snap_all = |v: &[C]| v.iter().map(snap).collect::<Result<Vec<_>>>();
    let mut f = BTreeMap::new();
    for (key, b) in &c.f {
        let mut m = Mat::zeros(b.m.rows, b.m.cols);
        for i in 0..b.m.rows {
            for j in 0..b.m.cols {
                m.set(i, j, snap(b.m.get(i, j))?);
            }
        }
        f.insert(*key, FBlock { rows: b.rows.clone(), cols: b.cols.clone(), m });
    }
    let mut r = BTreeMap::new();
    for (key, v) in &c.r {
        r.insert(*key, snap(v)?);
    }
    Ok(CategoryData {
        labels: c.labels.clone(),
        dual: c.dual.clone(),
        n: c.n.clone(),
        f,
        r,
        twist: snap_all(&c.twist)?,
        ev: snap_all(&c.ev)?,
        coev: snap_all(&c.coev)?,
        gram: c.gram.clone(),
    })
}

// ---------------------------------------------------------------------------------------------
// solver

#[derive(Clone, Debug)]
pub struct FusionRing {
    pub labels: Vec<String>,
    pub dual: Vec<usize>,
    pub n: Vec<Vec<Vec<u32>>>,
}

/// {1, ε, σ} with ε² = 1, εσ = σ, σ² = 1 + ε.
pub fn ising_ring() -> FusionRing {
    let mut n = vec![vec![vec![0u32; 3]; 3]; 3];
    let mut set = |a: usize, b: usize, c: usize| {
        n[a][b][c] = 1;
        n[b][a][c] = 1;
    };
    for a in 0..3 {
        set(0, a, a);
    }
    set(1, 1, 0);
    set(1, 2, 2);
    set(2, 2, 0);
    set(2, 2, 1);
    FusionRing { labels: vec!["1".into(), "eps".into(), "sigma".into()], dual: vec![0, 1, 2], n }
}

#[derive(Clone, Copy)]
enum Slot {
    Fixed(C),
    Var(usize),
}

struct Layout {
    cat: CategoryData<C>,
    f_slots: BTreeMap<[usize; 6], Slot>,
    r_slots: BTreeMap<[usize; 3], Slot>,
    nvar: usize,
}

impl Layout {
    fn new(ring: &FusionRing) -> Self {
        let k = ring.labels.len();
        let cat = CategoryData::<C> {
            labels: ring.labels.clone(),
            dual: ring.dual.clone(),
            n: ring.n.clone(),
            f: BTreeMap::new(),
            r: BTreeMap::new(),
            twist: vec![C::new(1.0, 0.0); k],
            ev: vec![C::new(1.0, 0.0); k],
            coev: vec![C::new(1.0, 0.0); k],
            gram: None,
        };
        // gauge parameters: vertices (a, b; c) with a, b ≠ 0
        let mut vertex = BTreeMap::new();
        for a in 1..k {
            for b in 1..k {
                for c in cat.fuse(a, b) {
                    let next = vertex.len();
                    vertex.insert([a, b, c], next);
                }
            }
        }
        let exponent = |a: usize, b: usize, c: usize, d: usize, e: usize, f: usize| -> DVector<f64> {
            let mut v = DVector::zeros(vertex.len());
            for (key, s) in [([a, b, e], 1.0), ([e, c, d], 1.0), ([b, c, f], -1.0), ([a, f, d], -1.0)] {
                if let Some(i) = vertex.get(&key) {
                    v[*i] += s;
                }
            }
            v
        };
        let mut f_slots = BTreeMap::new();
        let mut nvar = 0;
        let mut fixed_rows: Vec<DVector<f64>> = Vec::new();
        let rank = |rows: &[DVector<f64>]| -> usize {
            if rows.is_empty() {
                return 0;
            }
            let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
            m.singular_values().iter().filter(|s| **s > 1e-9).count()
        };
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        let (rows, cols) = cat.f_shape(a, b, c, d);
                        if rows.is_empty() {
                            continue;
                        }
                        for e in &rows {
                            for f in &cols {
                                let key = [a, b, c, d, *e, *f];
                                if a == 0 || b == 0 || c == 0 {
                                    f_slots.insert(key, Slot::Fixed(C::new(1.0, 0.0)));
                                    continue;
                                }
                                if rows.len() == 1 && cols.len() == 1 {
                                    let v = exponent(a, b, c, d, *e, *f);
                                    let mut trial = fixed_rows.clone();
                                    trial.push(v.clone());
                                    if rank(&trial) > rank(&fixed_rows) {
                                        fixed_rows = trial;
                                        f_slots.insert(key, Slot::Fixed(C::new(1.0, 0.0)));
                                        continue;
                                    }
                                }
                                f_slots.insert(key, Slot::Var(nvar));
                                nvar += 1;
                            }
                        }
                    }
                }
            }
        }
        let mut r_slots = BTreeMap::new();
        for a in 0..k {
            for b in 0..k {
                for c in cat.fuse(a, b) {
                    if a == 0 || b == 0 {
                        r_slots.insert([a, b, c], Slot::Fixed(C::new(1.0, 0.0)));
                    } else {
                        r_slots.insert([a, b, c], Slot::Var(nvar));
                        nvar += 1;
                    }
                }
            }
        }
        Layout { cat, f_slots, r_slots, nvar }
    }

    fn fill(&self, x: &[C]) -> CategoryData<C> {
        let mut cat = self.cat.clone();
        let val = |s: &Slot| match s {
            Slot::Fixed(v) => *v,
            Slot::Var(i) => x[*i],
        };
        let k = cat.rank();
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        let (rows, cols) = cat.f_shape(a, b, c, d);
                        if rows.is_empty() {
                            continue;
                        }
                        let m = Mat::from_fn(rows.len(), cols.len(), |i, j| val(&self.f_slots[&[a, b, c, d, rows[i], cols[j]]]));
                        cat.f.insert([a, b, c, d], FBlock { rows, cols, m });
                    }
                }
            }
        }
        for (key, s) in &self.r_slots {
            cat.r.insert(*key, val(s));
        }
        cat
    }
}

/// Complex residuals of pentagon, both hexagons, block unitarity and |R| = 1.
fn residuals(cat: &CategoryData<C>) -> Vec<C> {
    let k = cat.rank();
    let mut out = Vec::new();
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                for d in 0..k {
                    for e in 0..k {
                        for f in cat.fuse(a, b) {
                            for g in cat.fuse(f, c) {
                                if !cat.allowed(g, d, e) {
                                    continue;
                                }
                                for l in cat.fuse(c, d) {
                                    for kk in cat.fuse(b, l) {
                                        if !cat.allowed(a, kk, e) {
                                            continue;
                                        }
                                        let lhs = cat.fget(f, c, d, e, g, l) * cat.fget(a, b, l, e, f, kk);
                                        let rhs: C = cat.fuse(b, c).into_iter().map(|h| cat.fget(a, b, c, g, f, h) * cat.fget(a, h, d, e, g, kk) * cat.fget(b, c, d, kk, h, l)).sum();
                                        out.push(lhs - rhs);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for sign in [1, -1] {
        let rr = |x: usize, y: usize, z: usize| if sign > 0 { cat.rget(x, y, z) } else { C::new(1.0, 0.0) / cat.rget(y, x, z) };
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        for e in cat.fuse(a, c) {
                            for g in cat.fuse(b, c) {
                                if !(cat.allowed(e, b, d) && cat.allowed(a, g, d)) {
                                    continue;
                                }
                                let lhs = rr(a, c, e) * cat.fget(a, c, b, d, e, g) * rr(b, c, g);
                                let rhs: C = cat.fuse(a, b).into_iter().filter(|f| cat.allowed(*f, c, d)).map(|f| cat.fget(c, a, b, d, e, f) * rr(f, c, d) * cat.fget(a, b, c, d, f, g)).sum();
                                out.push(lhs - rhs);
                            }
                        }
                    }
                }
            }
        }
    }
    for bl in cat.f.values() {
        let m = bl.m.to_dmatrix();
        let u = &m * m.adjoint() - DMatrix::identity(m.nrows(), m.nrows());
        out.extend(u.iter().copied());
    }
    for r in cat.r.values() {
        out.push(C::new(r.norm_sqr() - 1.0, 0.0));
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverStats {
    pub restarts: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Levenberg-Marquardt over the entries left after fixing the triangle normalization and a
/// maximal set of gauge-variant 1×1 blocks to 1; random restarts from `seed`.
pub fn solve_category(ring: &FusionRing, seed: u64, restarts: usize, tol: f64) -> Result<(CategoryData<C>, SolverStats)> {
    solve_category_where(ring, seed, restarts, tol, |_| true)
}

/// As [`solve_category`], discarding solutions that `accept` rejects (e.g. to pick one Galois
/// conjugate by its twists).
pub fn solve_category_where(ring: &FusionRing, seed: u64, restarts: usize, tol: f64, accept: impl Fn(&CategoryData<C>) -> bool) -> Result<(CategoryData<C>, SolverStats)> {
    let layout = Layout::new(ring);
    let n = layout.nvar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pack = |x: &DVector<f64>| -> Vec<C> { (0..n).map(|i| C::new(x[2 * i], x[2 * i + 1])).collect() };
    let eval = |x: &DVector<f64>| -> DVector<f64> {
        let r = residuals(&layout.fill(&pack(x)));
        DVector::from_iterator(2 * r.len(), r.iter().flat_map(|z| [z.re, z.im]))
    };
    let mut iterations = 0;
    for attempt in 0..restarts {
        let mut x = DVector::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0));
        let mut r = eval(&x);
        let mut mu = 1e-3;
        let mut history = Vec::new();
        let mut converged_at: Option<usize> = None;
        for step_no in 0..400 {
            history.push(r.norm());
            // abandon restarts that stall far from a solution
            if step_no >= 40 && history[step_no] > 0.5 * history[step_no - 40] && history[step_no] > 1e-4 {
                break;
            }
            iterations += 1;
            let h = 1e-7;
            let mut jac = DMatrix::zeros(r.len(), 2 * n);
            for j in 0..2 * n {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let col = (eval(&xp) - eval(&xm)) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let jt = jac.transpose();
            let jtj = &jt * &jac;
            let g = &jt * &r;
            let mut improved = false;
            for _ in 0..20 {
                let mut a = jtj.clone();
                for i in 0..2 * n {
                    a[(i, i)] += mu * (1.0 + jtj[(i, i)]);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    mu *= 10.0;
                    continue;
                };
                let xn = &x + step;
                let rn = eval(&xn);
                if rn.norm() < r.norm() {
                    x = xn;
                    r = rn;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst <= tol {
                converged_at.get_or_insert(step_no);
            }
            // a few extra steps past convergence bring the residual to rounding level
            if converged_at.is_some_and(|k| step_no >= k + 6 || !improved) {
                let mut cat = layout.fill(&pack(&x));
                finish(&mut cat);
                if accept(&cat) {
                    return Ok((cat, SolverStats { restarts: attempt + 1, iterations, residual: worst }));
                }
                break;
            }
            if !improved {
                break;
            }
        }
    }
    Err(Error::Singular(format!("no solution below {} after {} restarts", tol, restarts)))
}

/// Quantum dimensions from F, twists ϑ_a = Σ_c (d_c/d_a) R^{aa}_c, unitary ev/coev, unit gram.
fn finish(cat: &mut CategoryData<C>) {
    let k = cat.rank();
    let d: Vec<f64> = (0..k).map(|a| 1.0 / cat.fget(a, cat.dual[a], a, a, 0, 0).norm()).collect();
    for a in 0..k {
        let th: C = cat.fuse(a, a).into_iter().map(|c| cat.rget(a, a, c) * (d[c] / d[a])).sum();
        cat.twist[a] = if cat.fuse(a, a).is_empty() { C::new(1.0, 0.0) } else { th };
        let f00 = cat.fget(a, cat.dual[a], a, a, 0, 0);
        let e = (1.0 / f00.norm()).sqrt();
        cat.ev[a] = C::new(e, 0.0);
        cat.coev[a] = C::new(1.0, 0.0) / (f00 * e);
    }
    let mut g = BTreeMap::new();
    for a in 0..k {
        for b in 0..k {
            for c in cat.fuse(a, b) {
                g.insert([a, b, c], 1.0);
            }
        }
    }
    cat.gram = Some(g);
}

// ---------------------------------------------------------------------------------------------
// negative controls

#[derive(Clone, Debug)]
pub struct NegativeControl {
    pub name: String,
    /// check name prefix that must fail ("associativity" covers pentagon and both hexagons)
    pub target: String,
    pub data: CategoryData<C>,
}

/// Perturbations of a valid category, each aimed at one check.
pub fn negative_controls(base: &CategoryData<C>) -> Vec<NegativeControl> {
    let mut out = Vec::new();
    // sign flip of an F entry away from the unit rows
    if let Some((key, _)) = base.f.iter().filter(|(k, _)| k[0] != 0 && k[1] != 0 && k[2] != 0).max_by_key(|(k, b)| (b.rows.len(), std::cmp::Reverse(**k))) {
        let mut d = base.clone();
        let bl = d.f.get_mut(key).unwrap();
        let v = *bl.m.get(0, 0);
        bl.m.set(0, 0, -v);
        out.push(NegativeControl { name: format!("F{:?} sign flip", key), target: "associativity".into(), data: d });
    }
    // braiding off by a phase on a non-unit channel
    if let Some((key, _)) = base.r.iter().find(|(k, _)| k[0] != 0 && k[1] != 0) {
        let mut d = base.clone();
        let v = d.r[key];
        d.r.insert(*key, v * C::new(0.0, 1.0));
        out.push(NegativeControl { name: format!("R{:?} times i", key), target: "hexagon".into(), data: d });
    }
    // coev doubled
    if base.rank() > 1 {
        let mut d = base.clone();
        d.coev[1] *= 2.0;
        out.push(NegativeControl { name: format!("coev_{} doubled", base.labels[1]), target: "rigidity".into(), data: d });
    }
    // asymmetric gram: g(x,0;x) ≠ g(0,x;x) makes F^{x0x} non-unitary
    if base.gram.is_some() && base.rank() > 1 {
        let mut d = base.clone();
        let x = base.rank() - 1;
        if let Some(g) = d.gram.as_mut() {
            g.insert([x, 0, x], 2.0);
        }
        out.push(NegativeControl { name: format!("gram({},0) doubled", base.labels[x]), target: "unitary_associator".into(), data: d });
    }
    // broken triangle normalization
    {
        let mut d = base.clone();
        if let Some(bl) = d.f.get_mut(&[0, 0, 0, 0]) {
            bl.m.set(0, 0, C::new(-1.0, 0.0));
        }
        out.push(NegativeControl { name: "F^{000}_0 = -1".into(), target: "triangle".into(), data: d });
    }
    out
}

/// Runs the targeted check; true when it fails as intended.
pub fn control_fails(ctl: &NegativeControl, tol: f64) -> Result<bool> {
    let d = &ctl.data;
    let rep = match ctl.target.as_str() {
        "associativity" => {
            let mut r = pentagon_check(d, tol);
            r.extend(hexagon_check(d, 1, tol)?);
            r.extend(hexagon_check(d, -1, tol)?);
            return Ok(r.failures().iter().any(|e| e.check.starts_with("pentagon") || e.check.starts_with("hexagon")));
        }
        "hexagon" => {
            let mut r = hexagon_check(d, 1, tol)?;
            r.extend(hexagon_check(d, -1, tol)?);
            r
        }
        "triangle" => triangle_check(d, tol),
        "rigidity" => {
            let mut r = Report::new();
            for i in 0..d.rank() {
                r.extend(rigidity_check(d, i, tol)?);
            }
            r
        }
        _ => unitarity_check(d, tol)?,
    };
    Ok(rep.failures().iter().any(|e| e.check.starts_with(&ctl.target)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> CategoryData<Cyc8> {
        let mut f = BTreeMap::new();
        f.insert([0, 0, 0, 0], FBlock { rows: vec![0], cols: vec![0], m: Mat::identity(1) });
        let mut r = BTreeMap::new();
        r.insert([0, 0, 0], Cyc8::one());
        let mut g = BTreeMap::new();
        g.insert([0, 0, 0], 1.0);
        CategoryData { labels: vec!["0".into()], dual: vec![0], n: vec![vec![vec![1]]], f, r, twist: vec![Cyc8::one()], ev: vec![Cyc8::one()], coev: vec![Cyc8::one()], gram: Some(g) }
    }

    #[test]
    fn trivial_category_passes_everything() {
        let c = trivial();
        let rep = full_check(&c, 0.0).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        assert_eq!(rep.count(Status::Fail), 0);
    }

    #[test]
    fn ring_axioms() {
        let r = ising_ring();
        assert_eq!(r.n[1][1], vec![1, 0, 0]);
        assert_eq!(r.n[2][2], vec![1, 1, 0]);
    }

    #[test]
    fn json_round_trip() {
        let c = trivial().to_c64();
        let j = serde_json::to_string(&c.to_json()).unwrap();
        let back: CategoryJson = serde_json::from_str(&j).unwrap();
        assert_eq!(back, c.to_json());
        back.into_data().unwrap();
    }
}
