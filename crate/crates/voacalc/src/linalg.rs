use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn diag(d: &[S]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, x) in d.iter().enumerate() {
            m.data[i * n + i] = x.clone();
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: S) {
        let k = i * self.cols + j;
        let old = std::mem::replace(&mut self.data[k], S::zero());
        self.data[k] = old + v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn mul(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, o.rows, "dimension mismatch in product");
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let row = &o.data[k * o.cols..(k + 1) * o.cols];
                for (j, b) in row.iter().enumerate() {
                    if b.is_zero() {
                        continue;
                    }
                    let idx = i * o.cols + j;
                    let old = std::mem::replace(&mut out.data[idx], S::zero());
                    out.data[idx] = old + a.clone() * b.clone();
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![S::zero(); self.rows];
        for i in 0..self.rows {
            let mut acc = S::zero();
            for (k, x) in v.iter().enumerate() {
                if x.is_zero() {
                    continue;
                }
                let a = &self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                acc = acc + a.clone() * x.clone();
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, o: &Mat<S>) {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            if b.is_zero() {
                continue;
            }
            let old = std::mem::replace(a, S::zero());
            *a = old + b.clone();
        }
    }

    /// self += c * o
    pub fn axpy(&mut self, c: &S, o: &Mat<S>) {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        if c.is_zero() {
            return;
        }
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            if b.is_zero() {
                continue;
            }
            let old = std::mem::replace(a, S::zero());
            *a = old + c.clone() * b.clone();
        }
    }

    pub fn scale(&self, c: &S) -> Mat<S> {
        let data = self.data.iter().map(|a| if a.is_zero() { S::zero() } else { c.clone() * a.clone() }).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn conj(&self) -> Mat<S> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.conj()).collect() }
    }

    /// Conjugate transpose.
    pub fn h(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat<S> {
        Mat::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j).clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat<S>) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.set(r0 + i, c0 + j, b.get(i, j).clone());
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn inverse(&self) -> Result<Mat<S>> {
        if self.rows != self.cols {
            return Err(Error::Singular("non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv: Mat<S> = Mat::identity(n);
        for col in 0..n {
            let mut piv = None;
            let mut best = 0.0;
            for r in col..n {
                let s = a.get(r, col).pivot_size();
                if s > best {
                    best = s;
                    piv = Some(r);
                    if S::EXACT {
                        break;
                    }
                }
            }
            let p = piv.ok_or_else(|| Error::Singular(format!("no pivot in column {}", col)))?;
            if p != col {
                for j in 0..n {
                    a.data.swap(p * n + j, col * n + j);
                    inv.data.swap(p * n + j, col * n + j);
                }
            }
            let d = a.get(col, col).inv().ok_or_else(|| Error::Singular("zero pivot".into()))?;
            for j in 0..n {
                let x = a.get(col, j).clone() * d.clone();
                a.set(col, j, x);
                let y = inv.get(col, j).clone() * d.clone();
                inv.set(col, j, y);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let x = a.get(r, j).clone() - f.clone() * a.get(col, j).clone();
                    a.set(r, j, x);
                    let y = inv.get(r, j).clone() - f.clone() * inv.get(col, j).clone();
                    inv.set(r, j, y);
                }
            }
        }
        Ok(inv)
    }

    pub fn to_c64(&self) -> Mat<Complex64> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x.to_c64()).collect() }
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_c64())
    }

    /// Largest |entry| of self - o.
    pub fn dist(&self, o: &Mat<S>) -> f64 {
        self.sub(o).max_abs()
    }
}

pub fn from_dmatrix(m: &DMatrix<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Positive square root of a Hermitian positive semidefinite matrix, and its inverse.
pub fn sqrt_psd(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut s = DMatrix::zeros(n, n);
    let mut si = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        let p = &v * v.adjoint();
        s += &p * Complex64::new(lam.sqrt(), 0.0);
        if lam > 0.0 {
            si += &p * Complex64::new(1.0 / lam.sqrt(), 0.0);
        }
    }
    (s, si)
}

/// e^{itA} for Hermitian A.
pub fn exp_i_hermitian(a: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    let n = a.nrows();
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        out += (&v * v.adjoint()) * Complex64::from_polar(1.0, t * eig.eigenvalues[k]);
    }
    out
}
