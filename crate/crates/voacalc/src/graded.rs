use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::multivalued::AngledComplex;
use crate::scalar::{Scalar, Q};

/// Truncated energy-graded inner-product space with an explicit basis per weight block.
///
/// Vectors are stored as dense coordinate columns in the concatenated basis. A dual space has the
/// same weights and basis indices (read as the dual basis), `dual = true`, and gram conj(G⁻¹), so
/// that the conjugation map C(a) = conj(G a) is isometric.
#[derive(Clone, Debug)]
pub struct GradedSpace<S> {
    pub label: String,
    pub weights: Vec<Q>,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub gram: Vec<Mat<S>>,
    pub gram_inv: Vec<Mat<S>>,
    pub cutoff: Q,
    pub lowest_weight: Q,
    pub unitary: bool,
    pub dual: bool,
    pub basis_labels: Vec<String>,
}

pub type Space<S> = Arc<GradedSpace<S>>;

impl<S: Scalar> GradedSpace<S> {
    pub fn new(label: &str, weights: Vec<Q>, gram: Vec<Mat<S>>, cutoff: Q, unitary: bool, basis_labels: Vec<String>) -> Result<Self> {
        if weights.len() != gram.len() {
            return Err(Error::Invalid("one gram block per weight".into()));
        }
        for w in weights.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Invalid("weights must ascend".into()));
            }
        }
        let dims: Vec<usize> = gram.iter().map(|g| g.rows).collect();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for d in &dims {
            offsets.push(acc);
            acc += d;
        }
        if basis_labels.len() != acc {
            return Err(Error::Invalid("one label per basis vector".into()));
        }
        let gram_inv = gram.iter().map(|g| g.inverse()).collect::<Result<Vec<_>>>()?;
        let lowest_weight = weights.first().copied().unwrap_or_else(Q::zero);
        Ok(GradedSpace { label: label.to_string(), weights, dims, offsets, gram, gram_inv, cutoff, lowest_weight, unitary, dual: false, basis_labels })
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn nblocks(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_index(&self, s: Q) -> Option<usize> {
        self.weights.binary_search(&s).ok()
    }

    pub fn range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b] + self.dims[b]
    }

    /// Block index of a global basis index.
    pub fn block_of(&self, idx: usize) -> usize {
        match self.offsets.binary_search(&idx) {
            Ok(mut b) => {
                while self.dims[b] == 0 {
                    b += 1;
                }
                b
            }
            Err(b) => b - 1,
        }
    }

    pub fn weight_of(&self, idx: usize) -> Q {
        self.weights[self.block_of(idx)]
    }

    pub fn display_label(&self) -> String {
        if self.dual {
            format!("{}'", self.label)
        } else {
            self.label.clone()
        }
    }

    pub fn same_as(&self, o: &GradedSpace<S>) -> bool {
        self.label == o.label && self.dual == o.dual && self.dims == o.dims && self.weights == o.weights
    }

    pub fn dual_space(&self) -> GradedSpace<S> {
        GradedSpace {
            label: self.label.clone(),
            weights: self.weights.clone(),
            dims: self.dims.clone(),
            offsets: self.offsets.clone(),
            gram: self.gram_inv.iter().map(|g| g.conj()).collect(),
            gram_inv: self.gram.iter().map(|g| g.conj()).collect(),
            cutoff: self.cutoff,
            lowest_weight: self.lowest_weight,
            unitary: self.unitary,
            dual: !self.dual,
            basis_labels: self.basis_labels.iter().map(|l| if self.dual { l.trim_end_matches('*').to_string() } else { format!("{}*", l) }).collect(),
        }
    }

    /// Full gram matrix in the concatenated basis.
    pub fn gram_dense(&self) -> Mat<S> {
        let n = self.total_dim();
        let mut g = Mat::zeros(n, n);
        for b in 0..self.nblocks() {
            g.set_block(self.offsets[b], self.offsets[b], &self.gram[b]);
        }
        g
    }

    pub fn gram_inv_dense(&self) -> Mat<S> {
        let n = self.total_dim();
        let mut g = Mat::zeros(n, n);
        for b in 0..self.nblocks() {
            g.set_block(self.offsets[b], self.offsets[b], &self.gram_inv[b]);
        }
        g
    }

    /// Structural checks: Hermitian positive-definite gram blocks, weights in Δ + Z≥0, nonnegative
    /// weights for unitary spaces. Returns the list of failures.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for (b, g) in self.gram.iter().enumerate() {
            if g.dist(&g.h()) > 1e-12 {
                bad.push(format!("gram block {} not Hermitian", b));
            }
            if g.rows > 0 {
                let d = g.to_dmatrix();
                let h = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
                let ev = h.symmetric_eigen().eigenvalues;
                if ev.iter().any(|x| *x <= 0.0) {
                    bad.push(format!("gram block {} not positive definite", b));
                }
            }
        }
        for w in &self.weights {
            if !(*w - self.lowest_weight).is_integer() || *w < self.lowest_weight {
                bad.push(format!("weight {} outside lowest weight + Z>=0", w));
            }
            if self.unitary && *w < Q::zero() {
                bad.push(format!("negative weight {} in a unitary space", w));
            }
            if *w > self.cutoff {
                bad.push(format!("weight {} beyond cutoff", w));
            }
        }
        bad
    }

    pub fn to_json(&self) -> Value {
        json!({
            "label": self.display_label(),
            "weights": self.weights.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "dims": self.dims,
            "cutoff": self.cutoff.to_string(),
            "lowest_weight": self.lowest_weight.to_string(),
            "unitary": self.unitary,
            "gram": self.gram.iter().map(mat_json).collect::<Vec<_>>(),
            "basis": self.basis_labels,
        })
    }
}

pub fn scalar_json<S: Scalar>(x: &S) -> Value {
    if S::EXACT {
        Value::String(format!("{:?}", x))
    } else {
        let z = x.to_c64();
        json!([z.re, z.im])
    }
}

pub fn mat_json<S: Scalar>(m: &Mat<S>) -> Value {
    Value::Array((0..m.rows).map(|i| Value::Array((0..m.cols).map(|j| scalar_json(m.get(i, j))).collect())).collect())
}

#[derive(Clone, Debug)]
pub struct GradedVector<S> {
    pub space: Space<S>,
    pub data: Vec<S>,
    /// false once truncation may have dropped contributions
    pub exact: bool,
}

impl<S: Scalar> GradedVector<S> {
    pub fn zero(space: &Space<S>) -> Self {
        GradedVector { space: space.clone(), data: vec![S::zero(); space.total_dim()], exact: true }
    }

    pub fn basis(space: &Space<S>, idx: usize) -> Self {
        let mut v = Self::zero(space);
        v.data[idx] = S::one();
        v
    }

    pub fn from_data(space: &Space<S>, data: Vec<S>) -> Self {
        assert_eq!(data.len(), space.total_dim());
        GradedVector { space: space.clone(), data, exact: true }
    }

    pub fn block(&self, b: usize) -> &[S] {
        &self.data[self.space.range(b)]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Weights carrying a nonzero component.
    pub fn support(&self) -> Vec<Q> {
        (0..self.space.nblocks()).filter(|b| self.block(*b).iter().any(|x| !x.is_zero())).map(|b| self.space.weights[b]).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.support().len() <= 1
    }

    /// Weight of a homogeneous nonzero vector.
    pub fn weight(&self) -> Option<Q> {
        let s = self.support();
        if s.len() == 1 {
            Some(s[0])
        } else {
            None
        }
    }

    fn check_same(&self, o: &GradedVector<S>) -> Result<()> {
        if !self.space.same_as(&o.space) {
            return Err(Error::SpaceMismatch(format!("{} vs {}", self.space.display_label(), o.space.display_label())));
        }
        Ok(())
    }

    pub fn add(&self, o: &GradedVector<S>) -> Result<GradedVector<S>> {
        self.check_same(o)?;
        Ok(GradedVector { space: self.space.clone(), data: self.data.iter().zip(&o.data).map(|(a, b)| a.clone() + b.clone()).collect(), exact: self.exact && o.exact })
    }

    pub fn sub(&self, o: &GradedVector<S>) -> Result<GradedVector<S>> {
        self.add(&o.scale(&(-S::one())))
    }

    pub fn scale(&self, c: &S) -> GradedVector<S> {
        GradedVector { space: self.space.clone(), data: self.data.iter().map(|a| c.clone() * a.clone()).collect(), exact: self.exact }
    }

    /// Weight-s component.
    pub fn project(&self, s: Q) -> GradedVector<S> {
        let mut out = GradedVector::zero(&self.space);
        out.exact = self.exact;
        if let Some(b) = self.space.weight_index(s) {
            for i in self.space.range(b) {
                out.data[i] = self.data[i].clone();
            }
        }
        out
    }

    /// ⟨self | o⟩, linear in `self`.
    pub fn inner(&self, o: &GradedVector<S>) -> Result<S> {
        self.check_same(o)?;
        if !self.space.unitary {
            return Err(Error::NoInnerProduct(self.space.display_label()));
        }
        let mut acc = S::zero();
        for b in 0..self.space.nblocks() {
            let r = self.space.range(b);
            let gx = self.space.gram[b].mul_vec(&self.data[r.clone()]);
            for (y, g) in o.data[r].iter().zip(gx) {
                acc = acc + y.conj() * g;
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> Result<f64> {
        Ok(self.inner(self)?.to_c64().re.max(0.0).sqrt())
    }

    /// Bilinear pairing of a dual vector with a vector.
    pub fn pair(&self, v: &GradedVector<S>) -> Result<S> {
        if self.space.dual == v.space.dual || self.space.label != v.space.label {
            return Err(Error::SpaceMismatch("pairing needs a space and its dual".into()));
        }
        Ok(self.data.iter().zip(&v.data).fold(S::zero(), |a, (x, y)| a + x.clone() * y.clone()))
    }

    /// C_i: antilinear map into the dual space with ⟨C v, w⟩ = ⟨w|v⟩.
    pub fn dual_conjugation(&self, dual: &Space<S>) -> Result<GradedVector<S>> {
        if !self.space.unitary {
            return Err(Error::NoInnerProduct(self.space.display_label()));
        }
        if dual.label != self.space.label || dual.dual == self.space.dual || dual.dims != self.space.dims {
            return Err(Error::SpaceMismatch("contragredient space not registered".into()));
        }
        let mut out = GradedVector::zero(dual);
        out.exact = self.exact;
        for b in 0..self.space.nblocks() {
            let r = self.space.range(b);
            let gx = self.space.gram[b].mul_vec(&self.data[r.clone()]);
            for (i, x) in r.zip(gx) {
                out.data[i] = x.conj();
            }
        }
        Ok(out)
    }

    /// z^{L_0} v with arguments tracked.
    pub fn apply_scaling(&self, z: &AngledComplex) -> Result<GradedVector<S>> {
        let mut out = GradedVector::zero(&self.space);
        out.exact = self.exact;
        for b in 0..self.space.nblocks() {
            let r = self.space.range(b);
            if self.data[r.clone()].iter().all(|x| x.is_zero()) {
                continue;
            }
            let f: S = z.pow_scalar(self.space.weights[b])?;
            for i in r {
                out.data[i] = f.clone() * self.data[i].clone();
            }
        }
        Ok(out)
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.data.iter().map(|x| x.to_c64()).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "space": self.space.display_label(),
            "exact": self.exact,
            "components": (0..self.space.nblocks()).filter(|b| self.block(*b).iter().any(|x| !x.is_zero()))
                .map(|b| json!({"weight": self.space.weights[b].to_string(), "coeffs": self.block(b).iter().map(scalar_json).collect::<Vec<_>>()}))
                .collect::<Vec<_>>(),
        })
    }
}

/// Weight-block-indexed linear map. Keys are (target block, source block).
#[derive(Clone, Debug)]
pub struct BlockOperator<S> {
    pub source: Space<S>,
    pub target: Space<S>,
    pub blocks: BTreeMap<(usize, usize), Mat<S>>,
    pub shift: Option<Q>,
}

impl<S: Scalar> BlockOperator<S> {
    pub fn new(source: &Space<S>, target: &Space<S>, shift: Option<Q>) -> Self {
        BlockOperator { source: source.clone(), target: target.clone(), blocks: BTreeMap::new(), shift }
    }

    pub fn identity(space: &Space<S>) -> Self {
        let mut op = Self::new(space, space, Some(Q::zero()));
        for b in 0..space.nblocks() {
            op.blocks.insert((b, b), Mat::identity(space.dims[b]));
        }
        op
    }

    /// Diagonal operator f(weight) on every block.
    pub fn diagonal(space: &Space<S>, f: impl Fn(Q) -> S) -> Self {
        let mut op = Self::new(space, space, Some(Q::zero()));
        for b in 0..space.nblocks() {
            op.blocks.insert((b, b), Mat::identity(space.dims[b]).scale(&f(space.weights[b])));
        }
        op
    }

    /// Projection P_s.
    pub fn projection(space: &Space<S>, s: Q) -> Self {
        let mut op = Self::new(space, space, Some(Q::zero()));
        if let Some(b) = space.weight_index(s) {
            op.blocks.insert((b, b), Mat::identity(space.dims[b]));
        }
        op
    }

    pub fn set_block(&mut self, t: usize, s: usize, m: Mat<S>) -> Result<()> {
        if let Some(d) = self.shift {
            if self.target.weights[t] - self.source.weights[s] != d {
                return Err(Error::Invalid("block violates the energy shift".into()));
            }
        }
        if m.rows != self.target.dims[t] || m.cols != self.source.dims[s] {
            return Err(Error::Invalid("block dimensions".into()));
        }
        if !m.is_zero() {
            self.blocks.insert((t, s), m);
        }
        Ok(())
    }

    pub fn get(&self, t: usize, s: usize) -> Option<&Mat<S>> {
        self.blocks.get(&(t, s))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|m| m.is_zero())
    }

    pub fn apply(&self, v: &GradedVector<S>) -> Result<GradedVector<S>> {
        if !v.space.same_as(&self.source) {
            return Err(Error::SpaceMismatch(format!("operator source {} vs vector in {}", self.source.display_label(), v.space.display_label())));
        }
        let mut out = GradedVector::zero(&self.target);
        out.exact = v.exact;
        for ((t, s), m) in &self.blocks {
            let x = v.block(*s);
            if x.iter().all(|a| a.is_zero()) {
                continue;
            }
            let y = m.mul_vec(x);
            for (i, val) in self.target.range(*t).zip(y) {
                let old = std::mem::replace(&mut out.data[i], S::zero());
                out.data[i] = old + val;
            }
        }
        if let Some(d) = self.shift {
            for b in 0..self.source.nblocks() {
                let w = self.source.weights[b] + d;
                if self.target.weight_index(w).is_none() && w > self.target.cutoff && v.block(b).iter().any(|a| !a.is_zero()) {
                    out.exact = false;
                }
            }
        }
        Ok(out)
    }

    /// self ∘ o
    pub fn compose(&self, o: &BlockOperator<S>) -> Result<BlockOperator<S>> {
        if !o.target.same_as(&self.source) {
            return Err(Error::SpaceMismatch("composition".into()));
        }
        let shift = match (self.shift, o.shift) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        let mut out = BlockOperator::new(&o.source, &self.target, shift);
        for ((m, s), b) in &o.blocks {
            for ((t, m2), a) in self.blocks.range((0, 0)..) {
                if m2 != m {
                    continue;
                }
                let p = a.mul(b);
                match out.blocks.get_mut(&(*t, *s)) {
                    Some(x) => x.add_assign(&p),
                    None => {
                        out.blocks.insert((*t, *s), p);
                    }
                }
            }
        }
        out.blocks.retain(|_, m| !m.is_zero());
        Ok(out)
    }

    pub fn add(&self, o: &BlockOperator<S>) -> Result<BlockOperator<S>> {
        if !self.source.same_as(&o.source) || !self.target.same_as(&o.target) {
            return Err(Error::SpaceMismatch("sum of operators".into()));
        }
        let shift = if self.shift == o.shift { self.shift } else { None };
        let mut out = BlockOperator { source: self.source.clone(), target: self.target.clone(), blocks: self.blocks.clone(), shift };
        for (k, m) in &o.blocks {
            match out.blocks.get_mut(k) {
                Some(x) => x.add_assign(m),
                None => {
                    out.blocks.insert(*k, m.clone());
                }
            }
        }
        out.blocks.retain(|_, m| !m.is_zero());
        Ok(out)
    }

    pub fn scale(&self, c: &S) -> BlockOperator<S> {
        let mut out = self.clone();
        for m in out.blocks.values_mut() {
            *m = m.scale(c);
        }
        out.blocks.retain(|_, m| !m.is_zero());
        out
    }

    /// Gram adjoint: ⟨A x | y⟩ = ⟨x | A† y⟩.
    pub fn adjoint(&self) -> BlockOperator<S> {
        let mut out = BlockOperator::new(&self.target, &self.source, self.shift.map(|d| -d));
        for ((t, s), m) in &self.blocks {
            let a = self.source.gram_inv[*s].mul(&m.h()).mul(&self.target.gram[*t]);
            out.blocks.insert((*s, *t), a);
        }
        out
    }

    /// Transpose between the dual spaces: ⟨Aᵀφ, v⟩ = ⟨φ, A v⟩.
    pub fn transpose(&self, src_dual: &Space<S>, tgt_dual: &Space<S>) -> BlockOperator<S> {
        let mut out = BlockOperator::new(tgt_dual, src_dual, self.shift.map(|d| -d));
        for ((t, s), m) in &self.blocks {
            out.blocks.insert((*s, *t), m.transpose());
        }
        out
    }

    pub fn to_dense(&self) -> Mat<S> {
        let mut d = Mat::zeros(self.target.total_dim(), self.source.total_dim());
        for ((t, s), m) in &self.blocks {
            d.set_block(self.target.offsets[*t], self.source.offsets[*s], m);
        }
        d
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        self.to_dense().to_dmatrix()
    }

    pub fn from_dense(source: &Space<S>, target: &Space<S>, m: &Mat<S>, shift: Option<Q>) -> Self {
        let mut out = BlockOperator::new(source, target, shift);
        for t in 0..target.nblocks() {
            for s in 0..source.nblocks() {
                let b = m.block(target.offsets[t], source.offsets[s], target.dims[t], source.dims[s]);
                if !b.is_zero() {
                    out.blocks.insert((t, s), b);
                }
            }
        }
        out
    }

    /// Largest entry of self - o over all blocks.
    pub fn dist(&self, o: &BlockOperator<S>) -> f64 {
        self.to_dense().dist(&o.to_dense())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "source": self.source.display_label(),
            "target": self.target.display_label(),
            "energy_shift": self.shift.map(|d| d.to_string()),
            "blocks": self.blocks.iter().map(|((t, s), m)| json!({
                "target_weight": self.target.weights[*t].to_string(),
                "source_weight": self.source.weights[*s].to_string(),
                "matrix": mat_json(m),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Σ_m z^m A^m v / m!, dropping terms that leave the cutoff.
pub fn apply_exp<S: Scalar>(a: &BlockOperator<S>, z: &S, v: &GradedVector<S>) -> Result<GradedVector<S>> {
    let d = a.shift.ok_or_else(|| Error::Invalid("apply_exp needs a fixed energy shift".into()))?;
    if d == Q::zero() {
        return Err(Error::Invalid("apply_exp needs a nonzero energy shift".into()));
    }
    let mut out = v.clone();
    let mut term = v.clone();
    let mut m = 1i64;
    loop {
        term = a.apply(&term)?;
        if term.is_zero() {
            out.exact = out.exact && term.exact;
            break;
        }
        term = term.scale(&(z.clone() * S::from_q(Q::new(1, m))));
        out = out.add(&term)?;
        m += 1;
        if m > 10_000 {
            return Err(Error::Invalid("exponential series did not terminate".into()));
        }
    }
    Ok(out)
}

/// Block-diagonal matrix of an operator's dense form, as used by the analytic layer.
pub fn gram_sqrt(space: &GradedSpace<impl Scalar>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    crate::linalg::sqrt_psd(&space.gram_dense().to_dmatrix())
}
