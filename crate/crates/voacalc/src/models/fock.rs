//! Heisenberg Fock spaces with momentum and the vertex operators acting between them.
//!
//! One boson a with ⟨a,a⟩ = κ. Momenta are β_b = b·g with ⟨a, β_b⟩ = b·ag and ⟨β_b, β_c⟩ = bc·gg.
//! A basis vector p_λ e^{β_b} stands for a(-λ_1)a(-λ_2)… e^{β_b}; a(-n) acts by multiplication with
//! p_n and a(n) by nκ ∂/∂p_n, so the Gram matrix is diagonal with entries z_λ κ^{len λ}.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::Result;
use crate::graded::{GradedSpace, Space};
use crate::linalg::Mat;
use crate::scalar::{binom_i, qi, Scalar, Q};
use crate::voa::{Blocks, Intertwiner};

pub type Partition = Vec<u32>;

#[derive(Clone, Copy, Debug)]
pub struct Lattice {
    pub kappa: Q,
    pub ag: Q,
    pub gg: Q,
}

impl Lattice {
    pub fn weight(&self, b: i64, level: u32) -> Q {
        qi(b * b) * self.gg / qi(2) + qi(level as i64)
    }

    /// ⟨a, β_b⟩
    pub fn a_dot(&self, b: i64) -> Q {
        qi(b) * self.ag
    }
}

#[derive(Clone, Debug)]
pub struct FockSpace<S> {
    pub space: Space<S>,
    pub basis: Vec<(i64, Partition)>,
    pub index: HashMap<(i64, Partition), usize>,
}

/// Partitions of n, parts in descending order.
pub fn partitions(n: u32) -> Vec<Partition> {
    fn rec(n: u32, max: u32, cur: &mut Partition, out: &mut Vec<Partition>) {
        if n == 0 {
            out.push(cur.clone());
            return;
        }
        for k in (1..=n.min(max)).rev() {
            cur.push(k);
            rec(n - k, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// z_λ = ∏ n^{m_n} m_n!
pub fn z_lambda(p: &[u32]) -> Q {
    let mut r = Q::from_integer(1);
    let mut counts: BTreeMap<u32, i64> = BTreeMap::new();
    for k in p {
        *counts.entry(*k).or_insert(0) += 1;
    }
    for (n, m) in counts {
        for j in 1..=m {
            r = r * qi(n as i64) * qi(j);
        }
    }
    r
}

pub fn basis_label(b: i64, p: &[u32]) -> String {
    let mut s: String = p.iter().map(|k| format!("a(-{})", k)).collect();
    if b == 0 {
        s.push('Ω');
    } else {
        s.push_str(&format!("e^{{{}g}}", b));
    }
    s
}

impl<S: Scalar> FockSpace<S> {
    pub fn build(label: &str, lat: &Lattice, momenta: &[i64], cutoff: Q) -> Result<Self> {
        let mut by_weight: BTreeMap<Q, Vec<(i64, Partition)>> = BTreeMap::new();
        let mut ms = momenta.to_vec();
        ms.sort();
        for &b in &ms {
            let w0 = lat.weight(b, 0);
            if w0 > cutoff {
                continue;
            }
            let maxlev = (cutoff - w0).floor().to_integer() as u32;
            for lev in 0..=maxlev {
                for p in partitions(lev) {
                    by_weight.entry(w0 + qi(lev as i64)).or_default().push((b, p));
                }
            }
        }
        let mut weights = Vec::new();
        let mut gram = Vec::new();
        let mut basis = Vec::new();
        for (w, list) in by_weight {
            weights.push(w);
            let d: Vec<S> = list.iter().map(|(_, p)| S::from_q(z_lambda(p) * pow_q(lat.kappa, p.len()))).collect();
            gram.push(Mat::diag(&d));
            basis.extend(list);
        }
        let labels = basis.iter().map(|(b, p)| basis_label(*b, p)).collect();
        let space = GradedSpace::new(label, weights, gram, cutoff, true, labels)?;
        let index = basis.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(FockSpace { space: Arc::new(space), basis, index })
    }

    pub fn idx(&self, b: i64, p: &[u32]) -> Option<usize> {
        self.index.get(&(b, p.to_vec())).copied()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

pub fn pow_q(x: Q, n: usize) -> Q {
    (0..n).fold(qi(1), |a, _| a * x)
}

fn sorted_desc(mut p: Partition) -> Partition {
    p.sort_unstable_by(|a, b| b.cmp(a));
    p
}

/// Multiplication by p_J on a target space (entries dropped past the cutoff).
fn mult_op<S: Scalar>(sp: &FockSpace<S>, j: u32, coef: &S) -> Vec<(usize, usize, S)> {
    let mut out = Vec::new();
    for (i, (b, p)) in sp.basis.iter().enumerate() {
        let mut q = p.clone();
        q.push(j);
        if let Some(r) = sp.idx(*b, &sorted_desc(q)) {
            out.push((r, i, coef.clone()));
        }
    }
    out
}

/// a(m) = mκ ∂/∂p_m on a source space.
fn deriv_op<S: Scalar>(sp: &FockSpace<S>, lat: &Lattice, m: u32) -> Vec<(usize, usize, Q)> {
    let mut out = Vec::new();
    for (i, (b, p)) in sp.basis.iter().enumerate() {
        let cnt = p.iter().filter(|x| **x == m).count();
        if cnt == 0 {
            continue;
        }
        let mut q = p.clone();
        let pos = q.iter().position(|x| *x == m).unwrap();
        q.remove(pos);
        if let Some(r) = sp.idx(*b, &q) {
            out.push((r, i, qi(m as i64) * lat.kappa * qi(cnt as i64)));
        }
    }
    out
}

fn to_mat<S: Scalar>(rows: usize, cols: usize, entries: impl IntoIterator<Item = (usize, usize, S)>) -> Mat<S> {
    let mut m = Mat::zeros(rows, cols);
    for (r, c, v) in entries {
        m.add_at(r, c, v);
    }
    m
}

/// Sparse polynomial in the p_n: partition → coefficient.
type Poly = BTreeMap<Partition, Q>;

fn poly_mul(a: &Poly, b: &Poly, max_level: u32) -> Poly {
    let mut out = Poly::new();
    for (pa, ca) in a {
        let la: u32 = pa.iter().sum();
        for (pb, cb) in b {
            let lb: u32 = pb.iter().sum();
            if la + lb > max_level {
                continue;
            }
            let mut p = pa.clone();
            p.extend(pb);
            let p = sorted_desc(p);
            *out.entry(p).or_insert(qi(0)) += *ca * *cb;
        }
    }
    out.retain(|_, c| *c != qi(0));
    out
}

/// exp(Σ_n x p_n / n) up to the given level: coefficient of p_ν is ∏ (x/n)^{m_n}/m_n!.
fn exp_series(x: Q, max_level: u32) -> Poly {
    let mut out = Poly::new();
    for lev in 0..=max_level {
        for p in partitions(lev) {
            let mut c = qi(1);
            let mut counts: BTreeMap<u32, i64> = BTreeMap::new();
            for k in &p {
                *counts.entry(*k).or_insert(0) += 1;
            }
            for (n, m) in counts {
                for j in 1..=m {
                    c = c * x / qi(n as i64) / qi(j);
                }
            }
            if c != qi(0) {
                out.insert(p, c);
            }
        }
    }
    out
}

/// ∏_i (p_{μ_i} - shift)
fn translate(mu: &[u32], shift: Q) -> Poly {
    let mut out = Poly::new();
    out.insert(Vec::new(), qi(1));
    for &k in mu {
        let mut next = Poly::new();
        for (p, c) in &out {
            let mut q = p.clone();
            q.push(k);
            *next.entry(sorted_desc(q)).or_insert(qi(0)) += *c;
            *next.entry(p.clone()).or_insert(qi(0)) += -*c * shift;
        }
        next.retain(|_, c| *c != qi(0));
        out = next;
    }
    out
}

/// Cocycle value attached to the pair of momenta (b, c), as a scalar.
pub type Cocycle<S> = dyn Fn(i64, i64) -> S + Sync;

/// Vertex operators Y(v, x) for charges v in `charge`, acting from `source` to `target`, stored
/// as x = 1 block data. `charge_limit` restricts which charge vectors are computed.
pub fn build_intertwiner<S: Scalar>(
    label: &str,
    lat: &Lattice,
    charge: &FockSpace<S>,
    source: &FockSpace<S>,
    target: &FockSpace<S>,
    eps: &Cocycle<S>,
    charge_limit: Q,
) -> Result<Intertwiner<S>> {
    let (nt, ns) = (target.dim(), source.dim());
    let tcut = target.space.cutoff;
    let max_k = charge.basis.iter().map(|(_, p)| p.first().copied().unwrap_or(0)).max().unwrap_or(0);
    let max_j = (tcut - target.space.lowest_weight).floor().to_integer().max(0) as u32 + 1;
    // A⁻_k = Σ_{J≥k} C(J-1,k-1) p_J on the target
    let mut a_minus = Vec::new();
    let mut a_plus = Vec::new();
    for k in 1..=max_k {
        let mut e = Vec::new();
        for j in k..=max_j {
            let c = S::from_q(binom_i(j as i64 - 1, k as i64 - 1));
            e.extend(mult_op(target, j, &c));
        }
        a_minus.push(to_mat(nt, nt, e));
        // A⁺_k = (-1)^{k-1}⟨a,γ⟩ + Σ_{m≥1} C(-m-1,k-1) a(m) on the source
        let mut e: Vec<(usize, usize, S)> = Vec::new();
        let sign = if k % 2 == 1 { qi(1) } else { qi(-1) };
        for (i, (b, _)) in source.basis.iter().enumerate() {
            let v = sign * lat.a_dot(*b);
            if v != qi(0) {
                e.push((i, i, S::from_q(v)));
            }
        }
        let max_m = (source.space.cutoff - source.space.lowest_weight).floor().to_integer().max(0) as u32;
        for m in 1..=max_m {
            let c = binom_i(-(m as i64) - 1, k as i64 - 1);
            for (r, cc, v) in deriv_op(source, lat, m) {
                e.push((r, cc, S::from_q(c * v)));
            }
        }
        a_plus.push(to_mat(ns, ns, e));
    }

    let mut full: HashMap<usize, Mat<S>> = HashMap::new();
    let mut order: Vec<usize> = (0..charge.dim()).filter(|c| charge.space.weight_of(*c) <= charge_limit).collect();
    order.sort_by_key(|c| charge.basis[*c].1.iter().sum::<u32>());
    let mut out = Intertwiner::new(label, &charge.space, &source.space, &target.space);
    for c in order {
        let (bq, lam) = &charge.basis[c];
        let m = if lam.is_empty() {
            let mut m = Mat::zeros(nt, ns);
            let shift = lat.a_dot(*bq);
            let em_coef = shift / lat.kappa;
            for (i, (gc, mu)) in source.basis.iter().enumerate() {
                let tb = bq + gc;
                let w0 = lat.weight(tb, 0);
                if w0 > tcut {
                    continue;
                }
                let max_level = (tcut - w0).floor().to_integer() as u32;
                let poly = poly_mul(&exp_series(em_coef, max_level), &translate(mu, shift), max_level);
                let e = eps(*bq, *gc);
                for (p, coef) in poly {
                    if let Some(r) = target.idx(tb, &p) {
                        m.add_at(r, i, e.clone() * S::from_q(coef));
                    }
                }
            }
            m
        } else {
            let k = lam[0];
            let rest: Partition = lam[1..].to_vec();
            let prev = charge.idx(*bq, &rest).expect("charge basis closed under removing parts");
            let mp = full.get(&prev).expect("charges ordered by level");
            let ak = (k - 1) as usize;
            let mut m = a_minus[ak].mul(mp);
            m.add_assign(&mp.mul(&a_plus[ak]));
            m
        };
        let mut bl: Blocks<S> = BTreeMap::new();
        for t in 0..target.space.nblocks() {
            for s in 0..source.space.nblocks() {
                let sub = m.block(target.space.offsets[t], source.space.offsets[s], target.space.dims[t], source.space.dims[s]);
                if !sub.is_zero() {
                    bl.insert((t, s), sub);
                }
            }
        }
        out.ops[c] = Some(bl);
        full.insert(c, m);
    }
    Ok(out)
}

/// θ(p_λ e^{β_b}) = (-1)^{len λ} p_λ e^{β_{-b}} (antilinear; this is the matrix part).
pub fn pct_matrix<S: Scalar>(sp: &FockSpace<S>) -> Mat<S> {
    let n = sp.dim();
    let mut t = Mat::zeros(n, n);
    for (i, (b, p)) in sp.basis.iter().enumerate() {
        if let Some(j) = sp.idx(-b, p) {
            let s = if p.len() % 2 == 0 { S::one() } else { -S::one() };
            t.set(j, i, s);
        }
    }
    t
}
