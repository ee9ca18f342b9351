//! Braiding, contragredient, adjoint and conjugate intertwiners, computed block by block.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::{BlockOperator, GradedSpace, GradedVector, Space};
use crate::linalg::Mat;
use crate::report::Report;
use crate::scalar::{factorial, qi, Scalar, Q};
use crate::voa::{Blocks, Intertwiner, Module, Voa};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformTag {
    BraidPlus,
    BraidMinus,
    Contra,
    ContraInv,
    Adjoint,
    Conjugate,
}

impl std::str::FromStr for TransformTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "braid+" => TransformTag::BraidPlus,
            "braid-" => TransformTag::BraidMinus,
            "contra" | "contra+" => TransformTag::Contra,
            "contra-" | "contra-inv" => TransformTag::ContraInv,
            "adjoint" => TransformTag::Adjoint,
            "conjugate" => TransformTag::Conjugate,
            _ => return Err(Error::Invalid(format!("unknown transform {}", s))),
        })
    }
}

/// Modules of a VOA together with their contragredients, so every transform can find L_{±1} on
/// whichever space it needs.
#[derive(Clone, Debug)]
pub struct Family<S> {
    pub voa: Voa<S>,
    pub modules: Vec<Module<S>>,
}

impl<S: Scalar> Family<S> {
    /// `modules` are the non-dual modules other than V itself; contragredients are added.
    pub fn new(voa: &Voa<S>, modules: &[&Module<S>]) -> Result<Self> {
        let mut all = vec![voa.module.clone()];
        all.extend(modules.iter().map(|m| (*m).clone()));
        let duals: Vec<Module<S>> = all.iter().map(|m| dual_module(voa, m)).collect::<Result<_>>()?;
        all.extend(duals);
        Ok(Family { voa: voa.clone(), modules: all })
    }

    pub fn find(&self, sp: &GradedSpace<S>) -> Result<&Module<S>> {
        self.modules.iter().find(|m| m.space.same_as(sp)).ok_or_else(|| Error::Invalid(format!("no module on {}", sp.display_label())))
    }

    pub fn ln(&self, sp: &GradedSpace<S>, n: i64) -> Result<&BlockOperator<S>> {
        self.find(sp)?.ln(n)
    }

    pub fn dual(&self, m: &Module<S>) -> Result<&Module<S>> {
        self.find(&m.space.dual_space())
    }
}

/// Contragredient module: action C Y_i on W_i'.
pub fn dual_module<S: Scalar>(v: &Voa<S>, m: &Module<S>) -> Result<Module<S>> {
    let sp: Space<S> = Arc::new(m.space.dual_space());
    let l1 = v.module.ln(1)?;
    let y = contragredient_with(&m.action, 1, l1, &sp, &sp)?;
    Module::from_action(&format!("{}'", m.label), y.relabel(&format!("{}'", m.action.label)), &v.nu)
}

fn empty_like<S: Scalar>(label: &str, charge: &Space<S>, source: &Space<S>, target: &Space<S>) -> Intertwiner<S> {
    Intertwiner::new(label, charge, source, target)
}

fn add_block<S: Scalar>(bl: &mut Blocks<S>, key: (usize, usize), c: &S, m: &Mat<S>) {
    match bl.get_mut(&key) {
        Some(acc) => acc.axpy(c, m),
        None => {
            bl.insert(key, m.scale(c));
        }
    }
}

fn finish<S: Scalar>(mut bl: Blocks<S>) -> Blocks<S> {
    bl.retain(|_, m| !m.is_zero());
    bl
}

/// B±: (B±𝒴)(w_j, x) w_i = e^{xL_{-1}} 𝒴(w_i, e^{±iπ}x) w_j. `sign` is +1 or -1.
pub fn braid<S: Scalar>(alpha: &Intertwiner<S>, sign: i64, fam: &Family<S>) -> Result<Intertwiner<S>> {
    if alpha.ops.iter().any(|o| o.is_none()) {
        return Err(Error::OutsideCutoff(format!("braiding {} needs every charge vector", alpha.label)));
    }
    let lm1 = fam.ln(&alpha.target, -1)?;
    let (wi, wj, wk) = (&alpha.charge, &alpha.source, &alpha.target);
    let mut out: Vec<Blocks<S>> = vec![BTreeMap::new(); wj.total_dim()];
    for c in 0..wi.total_dim() {
        let cc = wi.block_of(c);
        let cl = c - wi.offsets[cc];
        for ((tt, bb), m) in alpha.blocks(c)? {
            let s = alpha.mode_index(c, *tt, *bb);
            let phase = S::phase(qi(-sign) * (s + qi(1)))?;
            let mut cur = m.clone();
            let mut t = *tt;
            let mut n = 0i64;
            loop {
                let coef = phase.clone() * S::from_q(Q::from_integer(1) / factorial(n));
                for col in 0..cur.cols {
                    let b = wj.offsets[*bb] + col;
                    let mut colm = Mat::zeros(cur.rows, wi.dims[cc]);
                    for r in 0..cur.rows {
                        colm.set(r, cl, cur.get(r, col).clone());
                    }
                    if !colm.is_zero() {
                        add_block(&mut out[b], (t, cc), &coef, &colm);
                    }
                }
                let Some(next) = wk.weight_index(wk.weights[t] + qi(1)) else { break };
                match lm1.get(next, t) {
                    Some(l) => cur = l.mul(&cur),
                    None => break,
                }
                if cur.is_zero() {
                    break;
                }
                t = next;
                n += 1;
            }
        }
    }
    let tag = if sign > 0 { "B+" } else { "B-" };
    let mut res = empty_like(&format!("{}({})", tag, alpha.label), wj, wi, wk);
    res.ops = out.into_iter().map(|b| Some(finish(b))).collect();
    Ok(res)
}

/// Σ_m phase/m! 𝒴(L_1^m w, ·) as blocks, for a homogeneous charge vector w.
fn dressed<S: Scalar>(alpha: &Intertwiner<S>, w: &GradedVector<S>, phase: &S, l1: &BlockOperator<S>) -> Result<Blocks<S>> {
    let mut acc: Blocks<S> = BTreeMap::new();
    let mut term = w.clone();
    let mut m = 0i64;
    while !term.is_zero() {
        let c = phase.clone() * S::from_q(Q::from_integer(1) / factorial(m));
        for (k, blk) in alpha.combine(&term)? {
            add_block(&mut acc, k, &c, &blk);
        }
        term = l1.apply(&term)?;
        m += 1;
    }
    Ok(acc)
}

fn contragredient_with<S: Scalar>(alpha: &Intertwiner<S>, sign: i64, l1: &BlockOperator<S>, src: &Space<S>, tgt: &Space<S>) -> Result<Intertwiner<S>> {
    let wi = &alpha.charge;
    let tag = if sign > 0 { "C" } else { "C^-1" };
    let mut res = empty_like(&format!("{}({})", tag, alpha.label), wi, src, tgt);
    for c in 0..wi.total_dim() {
        if !alpha.has(c) {
            continue;
        }
        let q = wi.weight_of(c);
        let phase = S::phase(qi(-sign) * q)?;
        let e = GradedVector::basis(wi, c);
        let bl = match dressed(alpha, &e, &phase, l1) {
            Ok(b) => b,
            Err(Error::OutsideCutoff(_)) => continue,
            Err(e) => return Err(e),
        };
        res.ops[c] = Some(finish(bl.into_iter().map(|((t, b), m)| ((b, t), m.transpose())).collect()));
    }
    Ok(res)
}

/// C^{±1}: 𝒴_{C^{±1}α}(w, x) = 𝒴_α(e^{xL_1}(e^{∓iπ}x^{-2})^{L_0} w, x^{-1})ᵀ, of type (j'; i k').
pub fn contragredient<S: Scalar>(alpha: &Intertwiner<S>, sign: i64, fam: &Family<S>) -> Result<Intertwiner<S>> {
    let l1 = fam.ln(&alpha.charge, 1)?;
    let src = fam.find(&alpha.target.dual_space())?.space.clone();
    let tgt = fam.find(&alpha.source.dual_space())?.space.clone();
    contragredient_with(alpha, sign, l1, &src, &tgt)
}

/// Column c of the inverse gram: the vector w with C w = e'_c.
fn conj_preimage<S: Scalar>(sp: &Space<S>, c: usize) -> GradedVector<S> {
    let b = sp.block_of(c);
    let cl = c - sp.offsets[b];
    let mut w = GradedVector::zero(sp);
    for (r, i) in sp.range(b).enumerate() {
        w.data[i] = sp.gram_inv[b].get(r, cl).clone();
    }
    w
}

/// 𝒴_{α*}(C w, s) = Σ_m e^{iπΔ_w}/m! 𝒴(L_1^m w, -s-m-2+2Δ_w)†, of type (j; i' k).
pub fn adjoint<S: Scalar>(alpha: &Intertwiner<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    for sp in [&alpha.charge, &alpha.source, &alpha.target] {
        if !sp.unitary {
            return Err(Error::NoInnerProduct(sp.display_label()));
        }
    }
    let l1 = fam.ln(&alpha.charge, 1)?;
    let ci = fam.find(&alpha.charge.dual_space())?.space.clone();
    let (wi, wj, wk) = (&alpha.charge, &alpha.source, &alpha.target);
    let mut res = empty_like(&format!("{}*", alpha.label), &ci, wk, wj);
    for c in 0..wi.total_dim() {
        if !alpha.has(c) {
            continue;
        }
        let w = conj_preimage(wi, c);
        // the phase e^{iπΔ} sits outside the dagger, so it enters conjugated here
        let phase = S::phase(-wi.weight_of(c))?;
        let bl = match dressed(alpha, &w, &phase, l1) {
            Ok(b) => b,
            Err(Error::OutsideCutoff(_)) => continue,
            Err(e) => return Err(e),
        };
        let adj = bl.into_iter().map(|((t, b), m)| ((b, t), wj.gram_inv[b].mul(&m.h()).mul(&wk.gram[t]))).collect();
        res.ops[c] = Some(finish(adj));
    }
    Ok(res)
}

/// 𝒴_ᾱ(C w, x) = C_k 𝒴_α(w, x) C_j^{-1}, of type (k'; i' j').
pub fn conjugate<S: Scalar>(alpha: &Intertwiner<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    let d = |sp: &Space<S>| -> Result<Space<S>> { Ok(fam.find(&sp.dual_space())?.space.clone()) };
    let (wi, wj, wk) = (&alpha.charge, &alpha.source, &alpha.target);
    let mut res = empty_like(&format!("conj({})", alpha.label), &d(wi)?, &d(wj)?, &d(wk)?);
    for c in 0..wi.total_dim() {
        if !alpha.has(c) {
            continue;
        }
        let w = conj_preimage(wi, c);
        let bl = match alpha.combine(&w) {
            Ok(b) => b,
            Err(Error::OutsideCutoff(_)) => continue,
            Err(e) => return Err(e),
        };
        let out = bl.into_iter().map(|((t, b), m)| ((t, b), wk.gram[t].mul(&m).mul(&wj.gram_inv[b]).conj())).collect();
        res.ops[c] = Some(finish(out));
    }
    Ok(res)
}

pub fn apply<S: Scalar>(tag: TransformTag, alpha: &Intertwiner<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    match tag {
        TransformTag::BraidPlus => braid(alpha, 1, fam),
        TransformTag::BraidMinus => braid(alpha, -1, fam),
        TransformTag::Contra => contragredient(alpha, 1, fam),
        TransformTag::ContraInv => contragredient(alpha, -1, fam),
        TransformTag::Adjoint => adjoint(alpha, fam),
        TransformTag::Conjugate => conjugate(alpha, fam),
    }
}

/// Post-composition with a grading-preserving map on the target.
pub fn map_target<S: Scalar>(alpha: &Intertwiner<S>, phi: &BlockOperator<S>) -> Result<Intertwiner<S>> {
    if !phi.source.same_as(&alpha.target) {
        return Err(Error::SpaceMismatch(format!("{} vs {}", phi.source.display_label(), alpha.target.display_label())));
    }
    let mut res = empty_like(&alpha.label, &alpha.charge, &alpha.source, &phi.target);
    for c in alpha.charges() {
        let mut bl: Blocks<S> = BTreeMap::new();
        for ((t, b), m) in alpha.blocks(c)? {
            for ((t2, s2), p) in &phi.blocks {
                if s2 == t {
                    add_block(&mut bl, (*t2, *b), &S::one(), &p.mul(m));
                }
            }
        }
        res.ops[c] = Some(finish(bl));
    }
    Ok(res)
}

/// Scales the charge argument by e^{2πi k L_0}: 𝒴(ϑ^k w, x).
pub fn twist_charge<S: Scalar>(alpha: &Intertwiner<S>, k: i64) -> Result<Intertwiner<S>> {
    let mut res = alpha.clone();
    for c in alpha.charges() {
        let p = S::phase(qi(2 * k) * alpha.charge.weight_of(c))?;
        for m in res.ops[c].as_mut().unwrap().values_mut() {
            *m = m.scale(&p);
        }
    }
    Ok(res)
}

/// Composes with ϑ^k on the source: 𝒴(w, x) ϑ^k.
pub fn twist_source<S: Scalar>(alpha: &Intertwiner<S>, k: i64) -> Result<Intertwiner<S>> {
    let mut res = alpha.clone();
    for c in alpha.charges() {
        for ((_, b), m) in res.ops[c].as_mut().unwrap().iter_mut() {
            let p = S::phase(qi(2 * k) * alpha.source.weights[*b])?;
            *m = m.scale(&p);
        }
    }
    Ok(res)
}

/// V' → V, inverse of v ↦ C_0 θ v, whose matrix is conj(G T).
pub fn vacuum_dual_iso<S: Scalar>(fam: &Family<S>) -> Result<BlockOperator<S>> {
    let v = &fam.voa;
    let sp = v.space();
    let dual = fam.find(&sp.dual_space())?.space.clone();
    let mut out = BlockOperator::new(&dual, sp, Some(Q::from_integer(0)));
    for b in 0..sp.nblocks() {
        let r = sp.offsets[b];
        let t = v.theta.block(r, r, sp.dims[b], sp.dims[b]);
        let m = sp.gram[b].mul(&t).conj().inverse()?;
        out.blocks.insert((b, b), m);
    }
    Ok(out)
}

/// 𝒴^i_{i0} = B_+ Y_i.
pub fn creation<S: Scalar>(m: &Module<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    Ok(braid(&m.action, 1, fam)?.relabel(&format!("creation({})", m.label)))
}

/// 𝒴^0_{ī i} = C^{-1} B_± Y_ī with target V' identified with V.
pub fn annihilation<S: Scalar>(m: &Module<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    let raw = annihilation_raw(m, fam)?;
    Ok(map_target(&raw, &vacuum_dual_iso(fam)?)?.relabel(&format!("annihilation({})", m.label)))
}

/// C^{-1} B_+ Y_ī, with target V'.
pub fn annihilation_raw<S: Scalar>(m: &Module<S>, fam: &Family<S>) -> Result<Intertwiner<S>> {
    let bar = fam.dual(m)?;
    contragredient(&braid(&bar.action, 1, fam)?, -1, fam)
}

fn compare<S: Scalar>(rep: &mut Report, check: &str, subject: String, a: &Intertwiner<S>, b: &Intertwiner<S>, tol: f64) -> Result<()> {
    if !a.same_type(b) {
        rep.push_detail(check, subject, crate::report::Status::Fail, f64::INFINITY, format!("types {} vs {}", a.type_label(), b.type_label()));
        return Ok(());
    }
    let d = a.dist(b)?;
    rep.backend(S::EXACT, check, subject, d, tol);
    Ok(())
}

/// 𝒴^0_{iī}(w,x) = (B_+𝒴^0_{īi})(ϑ_i w,x) = (B_-𝒴^0_{īi})(ϑ_i^{-1} w,x) and the variants with ϑ on
/// the source. Targets stay V' on both sides.
pub fn twist_relations_check<S: Scalar>(m: &Module<S>, fam: &Family<S>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let bar = fam.dual(m)?;
    // 𝒴^0_{iī} = C^{-1} 𝒴^i_{i0}
    let y_i_ibar = contragredient(&creation(m, fam)?, -1, fam)?;
    let y_ibar_i = annihilation_raw(m, fam)?;
    let bp = braid(&y_ibar_i, 1, fam)?;
    let bm = braid(&y_ibar_i, -1, fam)?;
    compare(&mut rep, "twist", format!("{} B+ charge twist", m.label), &y_i_ibar, &twist_charge(&bp, 1)?, tol)?;
    compare(&mut rep, "twist", format!("{} B- charge twist", m.label), &y_i_ibar, &twist_charge(&bm, -1)?, tol)?;
    compare(&mut rep, "twist", format!("{} B+ source twist", m.label), &y_i_ibar, &twist_source(&bp, 1)?, tol)?;
    compare(&mut rep, "twist", format!("{} B- source twist", m.label), &y_i_ibar, &twist_source(&bm, -1)?, tol)?;
    // ϑ_i is e^{2πiΔ_i} on an irreducible module: a single phase on every weight space
    let d = m.space.lowest_weight;
    let theta = S::phase(qi(2) * d)?;
    let mut r: f64 = 0.0;
    for w in &m.space.weights {
        r = r.max((S::phase(qi(2) * *w)? - theta.clone()).abs());
    }
    rep.backend(S::EXACT, "twist", format!("{} scalar twist e^(2 pi i {})", m.label, d), r, tol);
    let _ = bar;
    Ok(rep)
}

/// Labels with a duality map; N[k][i][j] = N^k_{ij}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusionRules {
    pub labels: Vec<String>,
    pub dual: Vec<usize>,
    pub n: Vec<Vec<Vec<usize>>>,
}

/// N^k_{ij} = N^{j̄}_{i k̄} = N^k_{ji} = N^{k̄}_{ī j̄} = N^j_{ī k}.
pub fn fusion_rule_symmetries(f: &FusionRules) -> Report {
    let mut rep = Report::new();
    let n = f.labels.len();
    let d = &f.dual;
    let mut bad = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let base = f.n[k][i][j];
                let others = [f.n[d[j]][i][d[k]], f.n[k][j][i], f.n[d[k]][d[i]][d[j]], f.n[j][d[i]][k]];
                if others.iter().any(|x| *x != base) {
                    bad += 1;
                    rep.push("fusion_symmetry", format!("N^{}_{{{} {}}}", f.labels[k], f.labels[i], f.labels[j]), crate::report::Status::Fail, 1.0);
                }
            }
        }
    }
    if bad == 0 {
        rep.exact("fusion_symmetry", format!("{} labels", n), 0.0);
    }
    rep
}
