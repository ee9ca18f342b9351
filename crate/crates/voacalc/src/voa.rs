use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graded::{mat_json, BlockOperator, GradedSpace, GradedVector, Space};
use crate::linalg::Mat;
use crate::report::Report;
use crate::scalar::{binom_i, factorial, qi, Scalar, Q};

/// Blocks of Σ_s 𝒴(c, s) for one charge basis vector c, keyed by (target block, source block).
///
/// Because every mode shifts energy by a fixed amount, the block (t, b) belongs to exactly one mode,
/// s = wt(c) + wt(b) - wt(t) - 1, so this map holds the whole mode family.
pub type Blocks<S> = BTreeMap<(usize, usize), Mat<S>>;

/// Intertwining operator of type (k; i j): charge W_i, source W_j, target W_k.
#[derive(Clone, Debug)]
pub struct Intertwiner<S> {
    pub label: String,
    pub charge: Space<S>,
    pub source: Space<S>,
    pub target: Space<S>,
    /// None for charge vectors outside the computed window
    pub ops: Vec<Option<Blocks<S>>>,
}

impl<S: Scalar> Intertwiner<S> {
    pub fn new(label: &str, charge: &Space<S>, source: &Space<S>, target: &Space<S>) -> Self {
        Intertwiner { label: label.into(), charge: charge.clone(), source: source.clone(), target: target.clone(), ops: vec![None; charge.total_dim()] }
    }

    /// "(k; i j)" with primes on dual labels.
    pub fn type_label(&self) -> String {
        format!("({}; {} {})", self.target.display_label(), self.charge.display_label(), self.source.display_label())
    }

    pub fn same_type(&self, o: &Intertwiner<S>) -> bool {
        self.charge.same_as(&o.charge) && self.source.same_as(&o.source) && self.target.same_as(&o.target)
    }

    /// Representative in [0, 1) of the mode coset Δ_i + Δ_j - Δ_k.
    pub fn coset(&self) -> Q {
        let d = self.charge.lowest_weight + self.source.lowest_weight - self.target.lowest_weight;
        d - d.floor()
    }

    pub fn mode_index(&self, c: usize, t: usize, b: usize) -> Q {
        self.charge.weight_of(c) + self.source.weights[b] - self.target.weights[t] - qi(1)
    }

    pub fn charges(&self) -> Vec<usize> {
        (0..self.ops.len()).filter(|c| self.ops[*c].is_some()).collect()
    }

    pub fn has(&self, c: usize) -> bool {
        self.ops[c].is_some()
    }

    pub fn blocks(&self, c: usize) -> Result<&Blocks<S>> {
        self.ops[c].as_ref().ok_or_else(|| Error::OutsideCutoff(format!("{}: charge {} not computed", self.label, self.charge.basis_labels[c])))
    }

    pub fn block(&self, c: usize, t: usize, b: usize) -> Result<Option<&Mat<S>>> {
        Ok(self.blocks(c)?.get(&(t, b)))
    }

    /// 𝒴(e_c, s).
    pub fn mode(&self, c: usize, s: Q) -> Result<BlockOperator<S>> {
        let shift = self.charge.weight_of(c) - s - qi(1);
        let mut op = BlockOperator::new(&self.source, &self.target, Some(shift));
        for ((t, b), m) in self.blocks(c)? {
            if self.target.weights[*t] - self.source.weights[*b] == shift {
                op.blocks.insert((*t, *b), m.clone());
            }
        }
        Ok(op)
    }

    /// Σ_c w_c (blocks of c).
    pub fn combine(&self, w: &GradedVector<S>) -> Result<Blocks<S>> {
        if !w.space.same_as(&self.charge) {
            return Err(Error::SpaceMismatch(format!("charge of {} is {}, got {}", self.label, self.charge.display_label(), w.space.display_label())));
        }
        let mut out: Blocks<S> = BTreeMap::new();
        for (c, x) in w.data.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (k, m) in self.blocks(c)? {
                match out.get_mut(k) {
                    Some(acc) => acc.axpy(x, m),
                    None => {
                        out.insert(*k, m.scale(x));
                    }
                }
            }
        }
        out.retain(|_, m| !m.is_zero());
        Ok(out)
    }

    /// 𝒴(w, s) for an arbitrary (possibly inhomogeneous) charge vector.
    pub fn mode_vec(&self, w: &GradedVector<S>, s: Q) -> Result<BlockOperator<S>> {
        let mut acc: Option<BlockOperator<S>> = None;
        for b in 0..self.charge.nblocks() {
            let part = w.project(self.charge.weights[b]);
            if part.is_zero() {
                continue;
            }
            let shift = self.charge.weights[b] - s - qi(1);
            let bl = self.combine(&part)?;
            let mut op = BlockOperator::new(&self.source, &self.target, Some(shift));
            for ((t, src), m) in bl {
                if self.target.weights[t] - self.source.weights[src] == shift {
                    op.blocks.insert((t, src), m);
                }
            }
            acc = Some(match acc {
                None => op,
                Some(a) => a.add(&op)?,
            });
        }
        Ok(acc.unwrap_or_else(|| BlockOperator::new(&self.source, &self.target, None)))
    }

    /// Modes present for charge c.
    pub fn modes(&self, c: usize) -> Result<BTreeSet<Q>> {
        Ok(self.blocks(c)?.keys().map(|(t, b)| self.mode_index(c, *t, *b)).collect())
    }

    pub fn scale(&self, x: &S) -> Intertwiner<S> {
        let mut out = self.clone();
        for o in out.ops.iter_mut().flatten() {
            for m in o.values_mut() {
                *m = m.scale(x);
            }
            o.retain(|_, m| !m.is_zero());
        }
        out
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    /// Largest entrywise difference on the charges computed in both; errors on type mismatch.
    pub fn dist(&self, o: &Intertwiner<S>) -> Result<f64> {
        if !self.same_type(o) {
            return Err(Error::TypeMismatch(format!("{} vs {}", self.type_label(), o.type_label())));
        }
        let mut d: f64 = 0.0;
        for c in 0..self.ops.len() {
            let (Some(a), Some(b)) = (&self.ops[c], &o.ops[c]) else { continue };
            let keys: BTreeSet<_> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let x = match (a.get(k), b.get(k)) {
                    (Some(x), Some(y)) => x.dist(y),
                    (Some(x), None) | (None, Some(x)) => x.max_abs(),
                    _ => 0.0,
                };
                d = d.max(x);
            }
        }
        Ok(d)
    }

    /// Exact equality on the common charge window (and the windows agree).
    pub fn equals(&self, o: &Intertwiner<S>) -> bool {
        self.same_type(o) && self.charges() == o.charges() && self.dist(o).map(|d| d == 0.0).unwrap_or(false)
    }

    /// Ratio λ with self = λ·o, when it exists exactly (exact backend) or within tol.
    pub fn ratio_to(&self, o: &Intertwiner<S>, tol: f64) -> Option<S> {
        // ratio read off at the largest entry of o; float comparison relative to that entry
        let mut best: Option<(f64, S)> = None;
        for c in 0..self.ops.len() {
            let (Some(a), Some(b)) = (&self.ops[c], &o.ops[c]) else { continue };
            for (k, m) in b {
                let zeros = vec![S::zero(); m.data.len()];
                let xs = a.get(k).map(|ma| &ma.data).unwrap_or(&zeros);
                for (x, y) in xs.iter().zip(&m.data) {
                    if y.is_zero() {
                        continue;
                    }
                    let size = y.abs();
                    if best.as_ref().map_or(true, |(s, _)| size > *s) {
                        best = Some((size, x.clone() * y.inv()?));
                    }
                    if S::EXACT {
                        break;
                    }
                }
                if S::EXACT && best.is_some() {
                    break;
                }
            }
        }
        let (size, lam) = best?;
        let d = self.dist(&o.scale(&lam)).ok()?;
        if (S::EXACT && d == 0.0) || (!S::EXACT && d <= tol * size.max(1.0) * lam.abs().max(1.0)) {
            Some(lam)
        } else {
            None
        }
    }

    pub fn to_c64(&self, charge: &Space<Complex64>, source: &Space<Complex64>, target: &Space<Complex64>) -> Intertwiner<Complex64> {
        Intertwiner {
            label: self.label.clone(),
            charge: charge.clone(),
            source: source.clone(),
            target: target.clone(),
            ops: self.ops.iter().map(|o| o.as_ref().map(|bl| bl.iter().map(|(k, m)| (*k, m.to_c64())).collect())).collect(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "label": self.label,
            "type": self.type_label(),
            "coset": self.coset().to_string(),
            "charges": self.charges().iter().map(|c| {
                let bl = self.ops[*c].as_ref().unwrap();
                json!({
                    "charge": self.charge.basis_labels[*c],
                    "blocks": bl.iter().map(|((t, b), m)| json!({
                        "mode": self.mode_index(*c, *t, *b).to_string(),
                        "target_weight": self.target.weights[*t].to_string(),
                        "source_weight": self.source.weights[*b].to_string(),
                        "matrix": mat_json(m),
                    })).collect::<Vec<_>>(),
                })
            }).collect::<Vec<_>>(),
        })
    }
}

pub fn space_to_c64<S: Scalar>(s: &GradedSpace<S>) -> Space<Complex64> {
    Arc::new(GradedSpace {
        label: s.label.clone(),
        weights: s.weights.clone(),
        dims: s.dims.clone(),
        offsets: s.offsets.clone(),
        gram: s.gram.iter().map(|g| g.to_c64()).collect(),
        gram_inv: s.gram_inv.iter().map(|g| g.to_c64()).collect(),
        cutoff: s.cutoff,
        lowest_weight: s.lowest_weight,
        unitary: s.unitary,
        dual: s.dual,
        basis_labels: s.basis_labels.clone(),
    })
}

/// Module over V: its space, the action Y_i (an intertwiner of type (i; 0 i)), and Virasoro modes.
#[derive(Clone, Debug)]
pub struct Module<S> {
    pub label: String,
    pub space: Space<S>,
    pub action: Intertwiner<S>,
    /// L_n = Y_i(ν, n+1)
    pub l: BTreeMap<i64, BlockOperator<S>>,
}

impl<S: Scalar> Module<S> {
    pub fn from_action(label: &str, action: Intertwiner<S>, nu: &GradedVector<S>) -> Result<Self> {
        let space = action.source.clone();
        let n = (space.cutoff - space.lowest_weight).ceil().to_integer() + 1;
        let mut l = BTreeMap::new();
        for k in -n..=n {
            l.insert(k, action.mode_vec(nu, qi(k + 1))?);
        }
        Ok(Module { label: label.into(), space, action, l })
    }

    pub fn ln(&self, n: i64) -> Result<&BlockOperator<S>> {
        self.l.get(&n).ok_or_else(|| Error::OutsideCutoff(format!("L_{} not stored", n)))
    }

    /// Y_i(u, k) w for u in V and w in this module.
    pub fn act(&self, u: &GradedVector<S>, k: Q, w: &GradedVector<S>) -> Result<GradedVector<S>> {
        self.action.mode_vec(u, k)?.apply(w)
    }

    pub fn to_c64(&self, v: &Space<Complex64>) -> Module<Complex64> {
        let sp = space_to_c64(&self.space);
        Module {
            label: self.label.clone(),
            space: sp.clone(),
            action: self.action.to_c64(v, &sp, &sp),
            l: self.l.iter().map(|(k, op)| (*k, op_to_c64(op, &sp, &sp))).collect(),
        }
    }
}

pub fn op_to_c64<S: Scalar>(op: &BlockOperator<S>, src: &Space<Complex64>, tgt: &Space<Complex64>) -> BlockOperator<Complex64> {
    BlockOperator { source: src.clone(), target: tgt.clone(), blocks: op.blocks.iter().map(|(k, m)| (*k, m.to_c64())).collect(), shift: op.shift }
}

/// Unitary VOA at finite cutoff.
#[derive(Clone, Debug)]
pub struct Voa<S> {
    pub module: Module<S>,
    pub vacuum: GradedVector<S>,
    pub nu: GradedVector<S>,
    pub central_charge: Q,
    /// PCT operator θ(a) = T·conj(a)
    pub theta: Mat<S>,
}

impl<S: Scalar> Voa<S> {
    pub fn space(&self) -> &Space<S> {
        &self.module.space
    }

    pub fn y(&self) -> &Intertwiner<S> {
        &self.module.action
    }

    pub fn apply_theta(&self, v: &GradedVector<S>) -> GradedVector<S> {
        let conj: Vec<S> = v.data.iter().map(|x| x.conj()).collect();
        GradedVector { space: v.space.clone(), data: self.theta.mul_vec(&conj), exact: v.exact }
    }
}

// ---------------------------------------------------------------------------------------------
// checks

fn residual<S: Scalar>(m: &Mat<S>) -> f64 {
    m.max_abs()
}

/// Y(Ω, n) = δ_{n,-1}; Y(v, n)Ω = 0 for n ≥ 0; Y(v, -1)Ω = v.
pub fn check_vacuum<S: Scalar>(v: &Voa<S>, tol: f64) -> Report {
    let mut rep = Report::new();
    let y = v.y();
    let sp = v.space();
    let omega = v.vacuum.data.iter().position(|x| !x.is_zero()).unwrap_or(0);
    match y.blocks(omega) {
        Ok(bl) => {
            for b in 0..sp.nblocks() {
                let id = Mat::identity(sp.dims[b]);
                let d = bl.get(&(b, b)).map(|m| m.dist(&id)).unwrap_or(1.0);
                rep.backend(S::EXACT, "vacuum", format!("Y(Omega,-1) at weight {}", sp.weights[b]), d, tol);
            }
            for ((t, b), m) in bl {
                if t != b {
                    let n = y.mode_index(omega, *t, *b);
                    rep.backend(S::EXACT, "vacuum", format!("Y(Omega,{})", n), residual(m), tol);
                }
            }
        }
        Err(e) => rep.push_detail("vacuum", "Y(Omega)", crate::report::Status::Fail, f64::INFINITY, e.to_string()),
    }
    let ob = sp.block_of(omega);
    for c in y.charges() {
        let bl = y.ops[c].as_ref().unwrap();
        let qc = sp.weight_of(c);
        for t in 0..sp.nblocks() {
            let n = qc - sp.weights[t] - qi(1);
            let col: Vec<S> = match bl.get(&(t, ob)) {
                Some(m) => (0..m.rows).map(|i| m.get(i, 0).clone()).collect(),
                None => vec![S::zero(); sp.dims[t]],
            };
            if n >= Q::zero() {
                let r = col.iter().map(|x| x.abs()).fold(0.0, f64::max);
                rep.backend(S::EXACT, "vacuum", format!("Y({},{})Omega", sp.basis_labels[c], n), r, tol);
            } else if n == qi(-1) {
                let r = sp.range(t).zip(&col).map(|(i, x)| (x.clone() - if i == c { S::one() } else { S::zero() }).abs()).fold(0.0, f64::max);
                rep.backend(S::EXACT, "vacuum", format!("Y({},-1)Omega", sp.basis_labels[c]), r, tol);
            }
        }
    }
    rep
}

/// [L_m, L_n] = (m-n)L_{m+n} + c/12 (m³-m) δ_{m,-n} on source weights ≤ cutoff - max(|m|,|n|).
pub fn check_virasoro<S: Scalar>(m: &Module<S>, c: Q, window: i64, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let sp = &m.space;
    for a in -window..=window {
        for b in -window..=window {
            let la = m.ln(a)?;
            let lb = m.ln(b)?;
            let comm = la.compose(lb)?.add(&lb.compose(la)?.scale(&-S::one()))?;
            let rhs = m.ln(a + b)?.scale(&S::from_i64(a - b));
            let centre = if a + b == 0 { c * qi(a * a * a - a) / qi(12) } else { Q::zero() };
            let rhs = rhs.add(&BlockOperator::diagonal(sp, |_| S::from_q(centre)))?;
            let lim = sp.cutoff - qi(a.abs().max(b.abs()));
            let mut r: f64 = 0.0;
            for s in 0..sp.nblocks() {
                if sp.weights[s] > lim {
                    continue;
                }
                for t in 0..sp.nblocks() {
                    let x = comm.get(t, s);
                    let y = rhs.get(t, s);
                    let d = match (x, y) {
                        (Some(x), Some(y)) => x.dist(y),
                        (Some(x), None) | (None, Some(x)) => x.max_abs(),
                        _ => 0.0,
                    };
                    r = r.max(d);
                }
            }
            rep.backend(S::EXACT, "virasoro", format!("{} [L_{},L_{}]", m.label, a, b), r, tol);
        }
    }
    Ok(rep)
}

/// 𝒴(L_{-1}w, s) = -s 𝒴(w, s-1) for every charge basis vector whose L_{-1} image is in the window.
pub fn check_translation<S: Scalar>(alpha: &Intertwiner<S>, lm1: &BlockOperator<S>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    for c in alpha.charges() {
        let e = GradedVector::basis(&alpha.charge, c);
        let le = lm1.apply(&e)?;
        if !le.exact {
            rep.skip("translation", format!("{} charge {}", alpha.label, alpha.charge.basis_labels[c]), "window exceeded");
            continue;
        }
        let lhs = match alpha.combine(&le) {
            Ok(x) => x,
            Err(_) => {
                rep.skip("translation", format!("{} charge {}", alpha.label, alpha.charge.basis_labels[c]), "window exceeded");
                continue;
            }
        };
        let bl = alpha.blocks(c)?;
        let mut r: f64 = 0.0;
        let keys: BTreeSet<_> = lhs.keys().chain(bl.keys()).copied().collect();
        for (t, b) in keys {
            // block (t,b) of L_{-1}c is mode s, the same block of c is mode s-1
            let s = alpha.mode_index(c, t, b) + qi(1);
            let rhs = bl.get(&(t, b)).map(|m| m.scale(&S::from_q(-s)));
            let d = match (lhs.get(&(t, b)), rhs) {
                (Some(x), Some(y)) => x.dist(&y),
                (Some(x), None) => x.max_abs(),
                (None, Some(y)) => y.max_abs(),
                _ => 0.0,
            };
            r = r.max(d);
        }
        rep.backend(S::EXACT, "translation", format!("{} charge {}", alpha.label, alpha.charge.basis_labels[c]), r, tol);
    }
    Ok(rep)
}

/// Every block of 𝒴(c, ·) sits at a mode in the coset Δ_i + Δ_j - Δ_k + Z and shifts energy by
/// wt(c) - s - 1.
pub fn check_energy_shift<S: Scalar>(alpha: &Intertwiner<S>) -> Report {
    let mut rep = Report::new();
    let d = alpha.coset();
    let mut bad = 0usize;
    for c in alpha.charges() {
        for (t, b) in alpha.ops[c].as_ref().unwrap().keys() {
            let s = alpha.mode_index(c, *t, *b);
            if !(s - d).is_integer() {
                bad += 1;
                rep.push("energy_shift", format!("{} charge {} block ({},{})", alpha.label, alpha.charge.basis_labels[c], alpha.target.weights[*t], alpha.source.weights[*b]), crate::report::Status::Fail, 1.0);
            }
        }
    }
    if bad == 0 {
        rep.exact("energy_shift", alpha.label.clone(), 0.0);
    }
    rep
}

/// φ Y_1(v, x) = Y_2(v, x) φ for all computed charges, φ grading-preserving.
pub fn check_homomorphism<S: Scalar>(phi: &BlockOperator<S>, m1: &Module<S>, m2: &Module<S>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let graded = phi.blocks.keys().all(|(t, s)| m2.space.weights[*t] == m1.space.weights[*s]);
    rep.exact("homomorphism", "grading", if graded { 0.0 } else { 1.0 });
    for c in m1.action.charges() {
        if !m2.action.has(c) {
            continue;
        }
        let a1 = BlockOperator { source: m1.space.clone(), target: m1.space.clone(), blocks: m1.action.ops[c].clone().unwrap(), shift: None };
        let a2 = BlockOperator { source: m2.space.clone(), target: m2.space.clone(), blocks: m2.action.ops[c].clone().unwrap(), shift: None };
        let lhs = phi.compose(&a1)?;
        let rhs = a2.compose(phi)?;
        let r = lhs.dist(&rhs);
        rep.backend(S::EXACT, "homomorphism", format!("charge {}", m1.action.charge.basis_labels[c]), r, tol);
    }
    Ok(rep)
}

/// Y_i(v,x)† = Y_i(e^{xL_1}(-x^{-2})^{L_0}θv, x^{-1}) for each generator v; in modes
/// Y_i(v,k)† = Σ_m (-1)^{Δ_v}/m! Y_i(L_1^m θv, -k-m-2+2Δ_v).
pub fn check_module_unitarity<S: Scalar>(v: &Voa<S>, m: &Module<S>, generators: &[GradedVector<S>], tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let l1 = v.module.ln(1)?;
    for g in generators {
        let dv = g.weight().ok_or_else(|| Error::Invalid("generators must be homogeneous".into()))?;
        let name = describe(g);
        let sign = S::phase(dv)?;
        let lhs_bl = m.action.combine(g)?;
        // Σ_m sign/m! L_1^m θv
        let mut dressed = GradedVector::zero(v.space());
        let mut term = v.apply_theta(g);
        let mut k = 0i64;
        while !term.is_zero() {
            dressed = dressed.add(&term.scale(&(sign.clone() * S::from_q(Q::one() / factorial(k)))))?;
            term = l1.apply(&term)?;
            k += 1;
        }
        let rhs_bl = m.action.combine(&dressed)?;
        let sp = &m.space;
        let mut r: f64 = 0.0;
        for t in 0..sp.nblocks() {
            for b in 0..sp.nblocks() {
                // adjoint of the (b <- t) block of Y(v, ·)
                let adj = lhs_bl.get(&(b, t)).map(|x| sp.gram_inv[t].mul(&x.h()).mul(&sp.gram[b]));
                let d = match (adj, rhs_bl.get(&(t, b))) {
                    (Some(x), Some(y)) => x.dist(y),
                    (Some(x), None) => x.max_abs(),
                    (None, Some(y)) => y.max_abs(),
                    _ => 0.0,
                };
                r = r.max(d);
            }
        }
        rep.backend(S::EXACT, "module_unitarity", format!("{} v={}", m.label, name), r, tol);
    }
    Ok(rep)
}

pub fn describe<S: Scalar>(v: &GradedVector<S>) -> String {
    let parts: Vec<String> = v
        .data
        .iter()
        .enumerate()
        .filter(|(_, x)| !x.is_zero())
        .map(|(i, x)| if x == &S::one() { v.space.basis_labels[i].clone() } else { format!("({:?}){}", x, v.space.basis_labels[i]) })
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join("+")
    }
}

/// Modules acting on the three spaces of an intertwiner, as needed by the Jacobi identity.
pub struct JacobiCtx<'a, S> {
    pub charge: &'a Module<S>,
    pub source: &'a Module<S>,
    pub target: &'a Module<S>,
}

/// Outcome of one Jacobi/residue evaluation at a fixed (u, w, m, n, s) and source block.
pub enum JacobiOutcome {
    Residual(f64),
    WindowExceeded,
}

/// Three sums of the Jacobi identity for 𝒴 of type (k; i j), restricted to the source block `b`:
///   Σ_l C(m,l) 𝒴(Y_i(u,n+l)w, m+s-l)
/// = Σ_l (-1)^l C(n,l) Y_k(u,m+n-l) 𝒴(w,s+l) - Σ_l (-1)^{l+n} C(n,l) 𝒴(w,n+s-l) Y_j(u,m+l).
pub fn jacobi_terms<S: Scalar>(
    ctx: &JacobiCtx<S>,
    alpha: &Intertwiner<S>,
    u: usize,
    w: usize,
    m: i64,
    n: i64,
    s: Q,
    b: usize,
) -> Result<Option<[Mat<S>; 3]>> {
    let v = &ctx.charge.action.charge;
    let (wi, wj, wk) = (&alpha.charge, &alpha.source, &alpha.target);
    let (qu, qw, qb) = (v.weight_of(u), wi.weight_of(w), wj.weights[b]);
    let qt = qu + qw + qb - qi(m + n) - s - qi(2);
    let Some(t) = wk.weight_index(qt) else {
        // above the cutoff nothing is known; below the lowest weight every term vanishes
        return Ok(if qt > wk.cutoff { None } else { Some(empty3()) });
    };
    let (rows, cols) = (wk.dims[t], wj.dims[b]);
    let mut a = Mat::zeros(rows, cols);
    let mut bsum = Mat::zeros(rows, cols);
    let mut csum = Mat::zeros(rows, cols);
    let yu_i = ctx.charge.action.blocks(u)?;
    let yu_j = ctx.source.action.blocks(u)?;
    let yu_k = ctx.target.action.blocks(u)?;
    let wb = wi.block_of(w);
    let wloc = w - wi.offsets[wb];

    // iterate side: v_l = Y_i(u, n+l) w at weight qu + qw - n - l - 1
    let mut l = 0i64;
    loop {
        let qv = qu + qw - qi(n + l) - qi(1);
        if qv < wi.lowest_weight {
            break;
        }
        let coef = binom_i(m, l);
        if qv > wi.cutoff {
            if !coef.is_zero() {
                return Ok(None);
            }
            l += 1;
            continue;
        }
        if let Some(vb) = wi.weight_index(qv) {
            if !coef.is_zero() {
                if let Some(blk) = yu_i.get(&(vb, wb)) {
                    for r in 0..blk.rows {
                        let x = blk.get(r, wloc);
                        if x.is_zero() {
                            continue;
                        }
                        let c = wi.offsets[vb] + r;
                        let bl = match alpha.blocks(c) {
                            Ok(bl) => bl,
                            Err(_) => return Ok(None),
                        };
                        if let Some(mm) = bl.get(&(t, b)) {
                            a.axpy(&(S::from_q(coef) * x.clone()), mm);
                        }
                    }
                }
            }
        }
        l += 1;
    }

    let aw = alpha.blocks(w)?;
    // Y_k(u) 𝒴(w) through intermediate weight q_mid = qw + qb - s - l - 1
    let mut l = 0i64;
    loop {
        let qm = qw + qb - s - qi(l) - qi(1);
        if qm < wk.lowest_weight || (n >= 0 && l > n) {
            break;
        }
        let coef = binom_i(n, l) * if l % 2 == 0 { qi(1) } else { qi(-1) };
        if qm > wk.cutoff {
            if !coef.is_zero() {
                return Ok(None);
            }
            l += 1;
            continue;
        }
        if let Some(mid) = wk.weight_index(qm) {
            if let (Some(x), Some(y)) = (yu_k.get(&(t, mid)), aw.get(&(mid, b))) {
                bsum.axpy(&S::from_q(coef), &x.mul(y));
            }
        }
        l += 1;
    }
    // 𝒴(w) Y_j(u) through q_mid = qu + qb - m - l - 1
    let mut l = 0i64;
    loop {
        let qm = qu + qb - qi(m + l) - qi(1);
        if qm < wj.lowest_weight || (n >= 0 && l > n) {
            break;
        }
        let coef = binom_i(n, l) * if (l + n).rem_euclid(2) == 0 { qi(1) } else { qi(-1) };
        if qm > wj.cutoff {
            if !coef.is_zero() {
                return Ok(None);
            }
            l += 1;
            continue;
        }
        if let Some(mid) = wj.weight_index(qm) {
            if let (Some(x), Some(y)) = (aw.get(&(t, mid)), yu_j.get(&(mid, b))) {
                csum.axpy(&S::from_q(coef), &x.mul(y));
            }
        }
        l += 1;
    }
    Ok(Some([a, bsum, csum]))
}

fn empty3<S: Scalar>() -> [Mat<S>; 3] {
    [Mat::zeros(0, 0), Mat::zeros(0, 0), Mat::zeros(0, 0)]
}

#[derive(Clone, Debug)]
pub struct JacobiWindow {
    pub u: Vec<usize>,
    pub w: Vec<usize>,
    pub m: Vec<i64>,
    pub n: Vec<i64>,
    pub h: Vec<i64>,
}

/// Jacobi identity over a window of (u, w, m, n, s = coset + h), all source blocks.
/// Entries escaping the truncation are recorded as skipped.
pub fn check_jacobi<S: Scalar>(ctx: &JacobiCtx<S>, alpha: &Intertwiner<S>, win: &JacobiWindow, tol: f64) -> Result<Report> {
    let d = alpha.coset();
    let mut jobs = Vec::new();
    for &u in &win.u {
        for &w in &win.w {
            for &m in &win.m {
                for &n in &win.n {
                    for &h in &win.h {
                        jobs.push((u, w, m, n, h));
                    }
                }
            }
        }
    }
    let v = &ctx.charge.action.charge;
    let results: Vec<Result<(String, Option<f64>)>> = jobs
        .par_iter()
        .map(|&(u, w, m, n, h)| {
            let s = d + qi(h);
            let mut r: f64 = 0.0;
            let mut any = false;
            let mut exceeded = false;
            for b in 0..alpha.source.nblocks() {
                match jacobi_terms(ctx, alpha, u, w, m, n, s, b)? {
                    None => exceeded = true,
                    Some([a, bb, c]) => {
                        if a.rows == 0 {
                            continue;
                        }
                        any = true;
                        r = r.max(a.sub(&bb.sub(&c)).max_abs());
                    }
                }
            }
            let subject = format!("{} u={} w={} m={} n={} s={}", alpha.label, v.basis_labels[u], alpha.charge.basis_labels[w], m, n, s);
            Ok((subject, if exceeded && !any { None } else { Some(r) }))
        })
        .collect();
    let mut rep = Report::new();
    for x in results {
        let (subject, r) = x?;
        match r {
            Some(r) => rep.backend(S::EXACT, "jacobi", subject, r, tol),
            None => rep.skip("jacobi", subject, "window exceeded"),
        }
    }
    Ok(rep)
}

impl<S: Scalar> Intertwiner<S> {
    /// Sum of two intertwiners of the same type.
    pub fn add(&self, o: &Intertwiner<S>) -> Result<Intertwiner<S>> {
        if !self.same_type(o) {
            return Err(Error::TypeMismatch(format!("{} vs {}", self.type_label(), o.type_label())));
        }
        let mut out = self.clone();
        for c in 0..out.ops.len() {
            match (&mut out.ops[c], &o.ops[c]) {
                (Some(a), Some(b)) => {
                    for (k, m) in b {
                        match a.get_mut(k) {
                            Some(x) => x.add_assign(m),
                            None => {
                                a.insert(*k, m.clone());
                            }
                        }
                    }
                    a.retain(|_, m| !m.is_zero());
                }
                (x, _) => *x = None,
            }
        }
        Ok(out)
    }
}
