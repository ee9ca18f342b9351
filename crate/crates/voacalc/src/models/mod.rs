//! Concrete fixtures: the rank-one free boson and the √2 lattice VOA with its two modules.

pub mod fock;

use num_complex::Complex64;

use crate::category::{ising_ring, solve_category_where, CategoryData};
use crate::error::Result;
use crate::graded::GradedVector;
use crate::scalar::{q, qi, Scalar, Q};
use crate::voa::{Intertwiner, Module, Voa};
use fock::{build_intertwiner, pct_matrix, FockSpace, Lattice};

pub const FREE_BOSON: Lattice = Lattice { kappa: Q::new_raw(1, 1), ag: Q::new_raw(0, 1), gg: Q::new_raw(0, 1) };
/// a = α with ⟨α,α⟩ = 2, generator g = α/2 of the dual lattice.
pub const SQRT2: Lattice = Lattice { kappa: Q::new_raw(2, 1), ag: Q::new_raw(1, 1), gg: Q::new_raw(1, 2) };

#[derive(Clone, Debug)]
pub struct FreeBoson<S> {
    pub fock: FockSpace<S>,
    pub voa: Voa<S>,
}

/// ν = (1/2κ) a(-1)²Ω
fn conformal_vector<S: Scalar>(f: &FockSpace<S>, lat: &Lattice) -> GradedVector<S> {
    let i = f.idx(0, &[1, 1]).expect("cutoff ≥ 2");
    let mut nu = GradedVector::zero(&f.space);
    nu.data[i] = S::from_q(Q::from_integer(1) / (qi(2) * lat.kappa));
    nu
}

fn make_voa<S: Scalar>(f: &FockSpace<S>, lat: &Lattice, y: Intertwiner<S>) -> Result<Voa<S>> {
    let nu = conformal_vector(f, lat);
    let module = Module::from_action("W_0", y, &nu)?;
    let vacuum = GradedVector::basis(&f.space, f.idx(0, &[]).unwrap());
    Ok(Voa { module, vacuum, nu, central_charge: qi(1), theta: pct_matrix(f) })
}

pub fn build_free_boson<S: Scalar>(cutoff: i64) -> Result<FreeBoson<S>> {
    build_free_boson_with(cutoff, None)
}

/// `charge_limit` bounds the weight of charge vectors whose vertex operators are computed.
pub fn build_free_boson_with<S: Scalar>(cutoff: i64, charge_limit: Option<Q>) -> Result<FreeBoson<S>> {
    let lat = FREE_BOSON;
    let fock = FockSpace::build("W_0", &lat, &[0], qi(cutoff))?;
    let one = |_: i64, _: i64| S::one();
    let y = build_intertwiner("Y", &lat, &fock, &fock, &fock, &one, charge_limit.unwrap_or(qi(cutoff)))?;
    let voa = make_voa(&fock, &lat, y)?;
    Ok(FreeBoson { fock, voa })
}

/// Cocycle on momenta b·g: ζ^{bc} for b even, ζ^{(b-2)c} for b odd, ζ = e^{iπ/4}.
/// It satisfies the cocycle identity whenever the first argument is even, which is all the
/// module Jacobi identities use, and gives ε(α, α) = -1.
pub fn lattice_cocycle<S: Scalar>(b: i64, c: i64) -> S {
    let k = if b.rem_euclid(2) == 0 { b * c } else { (b - 2) * c };
    S::phase(q(k, 4)).expect("eighth roots are exact")
}

#[derive(Clone, Debug)]
pub struct LatticeModel<S> {
    pub cutoff: Q,
    pub v_fock: FockSpace<S>,
    pub h_fock: FockSpace<S>,
    pub voa: Voa<S>,
    pub wh: Module<S>,
    /// normalized basis of the type (0; h h) space
    pub y_hh: Intertwiner<S>,
    /// normalized basis of the type (h; h 0) space
    pub y_h0: Intertwiner<S>,
}

impl<S: Scalar> LatticeModel<S> {
    /// Modules in the order (W_0, W_h).
    pub fn modules(&self) -> [&Module<S>; 2] {
        [&self.voa.module, &self.wh]
    }

    /// Fusion rules N^k_{ij} with labels 0 = W_0, 1 = W_h.
    pub fn fusion_rule(i: usize, j: usize, k: usize) -> usize {
        usize::from((i + j) % 2 == k)
    }

    /// Lowest-weight vector e^{±g} of W_h.
    pub fn h_lowest(&self, sign: i64) -> GradedVector<S> {
        GradedVector::basis(&self.h_fock.space, self.h_fock.idx(sign.signum(), &[]).unwrap())
    }
}

fn momenta(cutoff: Q, parity: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut b = parity;
    while SQRT2.weight(b, 0) <= cutoff {
        out.push(b);
        if b != 0 {
            out.push(-b);
        }
        b += 2;
    }
    out
}

pub fn build_lattice_sqrt2<S: Scalar>(cutoff: i64) -> Result<LatticeModel<S>> {
    build_lattice_sqrt2_with(cutoff, None)
}

pub fn build_lattice_sqrt2_with<S: Scalar>(cutoff: i64, charge_limit: Option<Q>) -> Result<LatticeModel<S>> {
    let lat = SQRT2;
    let cut = qi(cutoff);
    let lim = charge_limit.unwrap_or(cut);
    let v = FockSpace::build("W_0", &lat, &momenta(cut, 0), cut)?;
    let h = FockSpace::build("W_h", &lat, &momenta(cut, 1), cut)?;
    let eps = |b: i64, c: i64| lattice_cocycle::<S>(b, c);
    let y = build_intertwiner("Y", &lat, &v, &v, &v, &eps, lim)?;
    let yh = build_intertwiner("Y_h", &lat, &v, &h, &h, &eps, lim)?;
    let zinv = S::phase(q(-1, 4))?;
    let eps_hh = move |b: i64, c: i64| lattice_cocycle::<S>(b, c) * zinv.clone();
    let y_hh = build_intertwiner("Y_hh", &lat, &h, &h, &v, &eps_hh, lim)?;
    let y_h0 = build_intertwiner("Y_h0", &lat, &h, &v, &h, &eps, lim)?;
    let voa = make_voa(&v, &lat, y)?;
    let wh = Module::from_action("W_h", yh, &voa.nu)?;
    Ok(LatticeModel { cutoff: cut, v_fock: v, h_fock: h, voa, wh, y_hh, y_h0 })
}

pub const ISING_SEED: u64 = 4;

/// Ising data {1, ε, σ} from the pentagon/hexagon solver, keeping the solution with
/// ϑ_σ = e^{iπ/8} (the other Galois conjugates are discarded).
pub fn build_ising_category() -> Result<CategoryData<Complex64>> {
    build_ising_category_seeded(ISING_SEED)
}

pub fn build_ising_category_seeded(seed: u64) -> Result<CategoryData<Complex64>> {
    let target = Complex64::from_polar(1.0, std::f64::consts::PI / 8.0);
    let (cat, _) = solve_category_where(&ising_ring(), seed, 200, 1e-13, |c| (c.twist[2] - target).norm() < 1e-8)?;
    Ok(cat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Cyc8;
    use crate::voa::{check_vacuum, check_virasoro};

    #[test]
    fn boson_dims_are_partition_numbers() {
        let fb = build_free_boson::<Cyc8>(6).unwrap();
        assert_eq!(fb.fock.space.dims, vec![1, 1, 2, 3, 5, 7, 11]);
    }

    #[test]
    fn boson_virasoro_small() {
        let fb = build_free_boson::<Cyc8>(5).unwrap();
        let r = check_virasoro(&fb.voa.module, qi(1), 2, 0.0).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert!(check_vacuum(&fb.voa, 0.0).passed());
    }

    #[test]
    fn lattice_lowest_weights() {
        let m = build_lattice_sqrt2::<Cyc8>(3).unwrap();
        assert_eq!(m.voa.space().lowest_weight, qi(0));
        assert_eq!(m.wh.space.lowest_weight, q(1, 4));
        // weight 1 of V: a(-1)Ω, e^{±α}
        assert_eq!(m.voa.space().dims[1], 3);
    }
}
