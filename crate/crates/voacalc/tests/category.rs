use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use proptest::collection::vec as pvec;
use voacalc::category::*;
use voacalc::graded::GradedVector;
use voacalc::linalg::Mat;
use voacalc::models::{build_free_boson, build_ising_category, build_lattice_sqrt2, LatticeModel};
use voacalc::multivalued::AngledComplex;
use voacalc::report::Status;
use voacalc::scalar::{Cyc8, Scalar};
use voacalc::transforms::Family;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ising.json");

fn lattice_source<'a>(m: &'a LatticeModel<C>, fam: &'a Family<C>) -> VoaCategorySource<'a> {
    let mut bases = BTreeMap::new();
    bases.insert([0, 0, 0], &m.voa.module.action);
    bases.insert([1, 0, 1], &m.wh.action);
    bases.insert([1, 1, 0], &m.y_h0);
    bases.insert([0, 1, 1], &m.y_hh);
    VoaCategorySource { modules: vec![&m.voa.module, &m.wh], dual: vec![0, 1], bases, family: fam }
}

fn extract_lattice(cutoff: i64, points: &[(AngledComplex, AngledComplex)]) -> Extraction {
    let m = build_lattice_sqrt2::<C>(cutoff).unwrap();
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    extract_from_voa(&lattice_source(&m, &fam), points, 1e-9).unwrap()
}

fn lattice8() -> &'static Extraction {
    static E: OnceLock<Extraction> = OnceLock::new();
    E.get_or_init(|| extract_lattice(8, &default_fusion_points()))
}

fn ising() -> &'static CategoryData<C> {
    static I: OnceLock<CategoryData<C>> = OnceLock::new();
    I.get_or_init(|| build_ising_category().unwrap())
}

fn close(a: C, b: C, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn lattice_category_is_the_semion() {
    let ex = lattice8();
    assert!(ex.spread < 1e-6, "half-sample spread {}", ex.spread);
    let c = snap_exact(&ex.data, 1e-8).unwrap();
    let h = 1;
    assert_eq!(c.fuse(h, h), vec![0]);
    assert_eq!(c.fget(h, h, h, h, 0, 0), -Cyc8::one());
    assert_eq!(c.rget(h, h, 0), Cyc8::i());
    // ϑ_h = e^{2πi/4}
    assert_eq!(c.twist[h], Cyc8::i());
    assert_eq!(c.ev[h], Cyc8::one());
    assert_eq!(c.coev[h], -Cyc8::one());
    let rep = full_check(&c, 0.0).unwrap();
    assert!(rep.passed(), "{:?}", rep.failures());
    for name in ["pentagon", "hexagon+", "hexagon-", "triangle", "rigidity_zigzag", "rigidity_zigzag_inverse", "balancing", "unitary_coev_adjoint", "unitary_ev_adjoint"] {
        assert!(rep.entries.iter().any(|e| e.check == name && matches!(e.status, Status::ExactPass | Status::TolPass)), "{} missing", name);
    }
    // exact pentagon residuals are zero for 1-dimensional multiplicity spaces
    assert_eq!(pentagon_check(&c, 0.0).max_residual(), 0.0);
}

#[test]
fn lattice_extraction_stable_under_sample_points() {
    let ex = lattice8();
    let p = |x: f64, y: f64| AngledComplex::from_c64(C::new(x, y));
    let other = extract_lattice(8, &[(p(0.6, 0.2), p(0.45, 0.05)), (p(0.9, 0.0), p(0.6, -0.1))]);
    for (k, b) in &ex.data.f {
        let d = b.m.dist(&other.data.f[k].m);
        assert!(d < 1e-6, "F{:?} moved by {}", k, d);
    }
}

#[test]
fn lattice_extraction_improves_with_cutoff() {
    let err = |cut: i64| (extract_lattice(cut, &default_fusion_points()).data.fget(1, 1, 1, 1, 0, 0) + C::new(1.0, 0.0)).norm();
    let (e4, e6) = (err(4), err(6));
    let e8 = (lattice8().data.fget(1, 1, 1, 1, 0, 0) + C::new(1.0, 0.0)).norm();
    assert!(e4 > e6 && e6 > e8, "{} {} {}", e4, e6, e8);
}

#[test]
fn lattice_braiding_squared_matches_twists() {
    let c = &lattice8().data;
    // R^{hh}_0 R^{hh}_0 = ϑ_0 / ϑ_h²
    let lhs = c.rget(1, 1, 0) * c.rget(1, 1, 0);
    assert!(close(lhs, c.twist[0] / (c.twist[1] * c.twist[1]), 1e-12), "{}", lhs);
    assert!(balancing_check(c, 1e-12).unwrap().passed());
}

#[test]
fn vacuum_only_model_gives_the_trivial_category() {
    let fb = build_free_boson::<C>(4).unwrap();
    let fam = Family::new(&fb.voa, &[]).unwrap();
    let mut bases = BTreeMap::new();
    bases.insert([0, 0, 0], &fb.voa.module.action);
    let src = VoaCategorySource { modules: vec![&fb.voa.module], dual: vec![0], bases, family: &fam };
    let ex = extract_from_voa(&src, &default_fusion_points(), 1e-9).unwrap();
    let c = snap_exact(&ex.data, 1e-8).unwrap();
    assert_eq!(c.rank(), 1);
    assert_eq!(c.fget(0, 0, 0, 0, 0, 0), Cyc8::one());
    assert_eq!(c.rget(0, 0, 0), Cyc8::one());
    assert!(full_check(&c, 0.0).unwrap().passed());
}

#[test]
fn tensor_products_of_lattice_modules() {
    let m = build_lattice_sqrt2::<C>(4).unwrap();
    let c = &lattice8().data;
    let hh = build_tensor_module(c, 1, 1);
    assert_eq!(hh.parts, vec![(0, 1)]);
    let spaces = [&m.voa.module.space, &m.wh.space];
    let dims = hh.graded_dims(&spaces);
    let v = &m.voa.module.space;
    assert_eq!(dims.len(), v.weights.len());
    for (b, w) in v.weights.iter().enumerate() {
        assert_eq!(dims[w], v.dims[b]);
    }
    assert_eq!(build_tensor_module(c, 0, 1).parts, vec![(1, 1)]);
    assert_eq!(build_tensor_module(c, 1, 0).parts, vec![(1, 1)]);
}

#[test]
fn unit_constraints_are_represented_by_module_actions() {
    let m = build_lattice_sqrt2::<C>(4).unwrap();
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    let z = AngledComplex::from_c64(C::new(0.3, 0.2));
    let vac = m.voa.vacuum.clone();
    // λ_h: Y_h(Ω, z)w = w
    for i in 0..m.wh.space.total_dim() {
        let w = GradedVector::basis(&m.wh.space, i);
        let out = represent(&m.wh.action, &vac, &w, z).unwrap();
        assert!(out.add(&w.scale(&C::new(-1.0, 0.0))).unwrap().norm().unwrap() < 1e-12);
    }
    // ρ_h: 𝒴^h_{h0}(w, z)Ω = e^{zL_{-1}}w, whose lowest-weight part is w
    let cr = voacalc::transforms::creation(&m.wh, &fam).unwrap();
    let w = m.h_lowest(1);
    let out = represent(&cr, &w, &vac, z).unwrap();
    assert!(out.project(m.wh.space.lowest_weight).add(&w.scale(&C::new(-1.0, 0.0))).unwrap().norm().unwrap() < 1e-12);
}

#[test]
fn ising_from_the_solver() {
    let c = ising();
    let (s, e) = (2, 1);
    let f = &c.f[&[s, s, s, s]];
    assert_eq!((f.rows.clone(), f.cols.clone()), (vec![0, 1], vec![0, 1]));
    for i in 0..2 {
        for j in 0..2 {
            assert!((f.m.get(i, j).norm() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }
    assert!(close(c.twist[s], C::from_polar(1.0, PI / 8.0), 1e-12));
    assert!(close(c.twist[e], C::new(-1.0, 0.0), 1e-12));
    assert!(close(c.rget(s, s, 0), C::from_polar(1.0, -PI / 8.0), 1e-12));
    assert!(close(c.rget(s, s, e), C::from_polar(1.0, 3.0 * PI / 8.0), 1e-12));
    assert!(close(c.ev[s], C::new(2f64.powf(0.25), 0.0), 1e-12));
    let mut rep = pentagon_check(c, 1e-12);
    rep.extend(hexagon_check(c, 1, 1e-12).unwrap());
    rep.extend(hexagon_check(c, -1, 1e-12).unwrap());
    assert!(rep.passed(), "{:?}", rep.failures());
    let u = unitarity_check(c, 1e-12).unwrap();
    assert!(u.passed(), "{:?}", u.failures());
    assert!(full_check(c, 1e-12).unwrap().passed());
}

#[test]
fn ising_fixture_is_reproduced() {
    let built = ising().to_json();
    if std::env::var("VOACALC_REGEN_FIXTURES").is_ok() {
        std::fs::write(FIXTURE, serde_json::to_string_pretty(&built).unwrap() + "\n").unwrap();
    }
    let text = std::fs::read_to_string(FIXTURE).unwrap();
    let golden = serde_json::from_str::<CategoryJson>(&text).unwrap().into_data().unwrap();
    for (k, b) in &golden.f {
        assert!(b.m.dist(&ising().f[k].m) <= 1e-12, "F{:?}", k);
    }
    for (k, r) in &golden.r {
        assert!(close(*r, ising().r[k], 1e-12), "R{:?}", k);
    }
    // rebuilding is bit-identical
    let again = build_ising_category().unwrap().to_json();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&built).unwrap());
}

#[test]
fn negative_controls_fail_their_targets() {
    let lat = snap_exact(&lattice8().data, 1e-8).unwrap().to_c64();
    for base in [&lat, ising()] {
        let ctls = negative_controls(base);
        assert!(ctls.len() >= 4);
        for ctl in &ctls {
            assert!(control_fails(ctl, 1e-9).unwrap(), "{} did not fail {}", ctl.name, ctl.target);
        }
    }
}

#[test]
fn rigidity_examples() {
    let c = ising();
    let r = rigidity_check(c, 0, 1e-12).unwrap();
    assert!(r.passed());
    assert_eq!((c.ev[0], c.coev[0]), (C::new(1.0, 0.0), C::new(1.0, 0.0)));
    let lat = snap_exact(&lattice8().data, 1e-8).unwrap();
    assert!(rigidity_check(&lat, 1, 0.0).unwrap().passed());
    let mut bad = lat.clone();
    bad.coev[1] = bad.coev[1].clone() * Cyc8::from_q(2.into());
    let r = rigidity_check(&bad, 1, 0.0).unwrap();
    // both zig-zags come out as 2 instead of 1
    assert_eq!(r.count(Status::Fail), 2);
    assert!(r.entries.iter().all(|e| e.residual == 1.0));
}

#[test]
fn asymmetric_gram_breaks_unitarity() {
    let mut c = ising().clone();
    c.gram.as_mut().unwrap().insert([2, 2, 1], 3.0);
    let r = unitarity_check(&c, 1e-9).unwrap();
    assert!(r.failures().iter().any(|e| e.check == "unitary_associator"));
}

#[test]
fn json_round_trip_and_rejections() {
    let j = ising().to_json();
    let back: CategoryJson = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
    assert_eq!(back, j);
    let mut broken = j.clone();
    broken.n[0][1][1] = 0;
    assert!(broken.into_data().is_err());
    let mut broken = j.clone();
    broken.f.retain(|b| b.abcd != [2, 2, 2, 2]);
    assert!(broken.into_data().is_err());
    let mut broken = j;
    broken.dual = vec![0, 2, 1];
    assert!(broken.into_data().is_err());
}

#[test]
fn hom_spaces_obey_schur_and_cstar_laws() {
    let m = build_lattice_sqrt2::<C>(4).unwrap();
    let sp = m.voa.space();
    let gens: Vec<_> = sp.range(1).map(|i| GradedVector::basis(sp, i)).collect();
    let hh = module_homs(&m.wh, &m.wh, &gens, 1e-10).unwrap();
    assert_eq!(hh.len(), 1);
    let t = &hh[0];
    let scal = t[(0, 0)];
    assert!((t - DMatrix::identity(t.nrows(), t.ncols()) * scal).norm() < 1e-9);
    assert!(module_homs(&m.wh, &m.voa.module, &gens, 1e-10).unwrap().is_empty());
    // End(W ⊗ ℂ²) ≅ M_2(ℂ), realized on the level-0 block
    let mats: Vec<DMatrix<C>> = (0..6)
        .map(|s| DMatrix::from_fn(2, 2, |i, j| C::new(((s * 7 + i * 3 + j) % 5) as f64 - 2.0, ((s + i + 2 * j) % 3) as f64 - 1.0)))
        .collect();
    let rep = cstar_check(&mats, 11, 1e-10);
    assert!(rep.passed(), "{:?}", rep.failures());
    let scalars = vec![DMatrix::from_element(1, 1, C::new(0.3, -1.2)), DMatrix::from_element(1, 1, C::new(2.0, 0.0))];
    assert!(cstar_check(&scalars, 1, 1e-12).passed());
}

#[test]
fn gauge_invariants_of_the_two_categories() {
    let lat = snap_exact(&lattice8().data, 1e-8).unwrap().to_c64();
    let inv: BTreeMap<_, _> = lat.invariants().into_iter().collect();
    assert!(close(inv["monodromy_W_hW_h_W_0"], C::new(-1.0, 0.0), 1e-12));
    let inv: BTreeMap<_, _> = ising().invariants().into_iter().collect();
    assert!(close(inv["monodromy_sigmasigma_1"], C::from_polar(1.0, -PI / 4.0), 1e-12));
    assert!(close(inv["monodromy_sigmasigma_eps"], C::from_polar(1.0, 3.0 * PI / 4.0), 1e-12));
}

fn gauge(c: &CategoryData<C>, u: &BTreeMap<[usize; 3], C>) -> CategoryData<C> {
    let g = |a: usize, b: usize, k: usize| u.get(&[a, b, k]).copied().unwrap_or(C::new(1.0, 0.0));
    let mut out = c.clone();
    for (key, bl) in out.f.iter_mut() {
        let [a, b, cc, d] = *key;
        let m = Mat::from_fn(bl.rows.len(), bl.cols.len(), |i, j| {
            let (e, f) = (bl.rows[i], bl.cols[j]);
            bl.m.get(i, j) * g(a, b, e) * g(e, cc, d) / (g(b, cc, f) * g(a, f, d))
        });
        bl.m = m;
    }
    for (key, r) in out.r.iter_mut() {
        let [a, b, k] = *key;
        *r = *r * g(b, a, k) / g(a, b, k);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vertex_gauge_changes_preserve_the_axioms(phases in pvec(0.0f64..(2.0 * PI), 12)) {
        let c = ising();
        let mut u = BTreeMap::new();
        let mut it = phases.iter();
        for a in 1..3 {
            for b in 1..3 {
                for k in c.fuse(a, b) {
                    if k != 0 {
                        u.insert([a, b, k], C::from_polar(1.0, *it.next().unwrap()));
                    }
                }
            }
        }
        let g = gauge(c, &u);
        let rep = full_check(&g, 1e-11).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.failures());
        let (a, b): (BTreeMap<_, _>, BTreeMap<_, _>) = (c.invariants().into_iter().collect(), g.invariants().into_iter().collect());
        for (k, v) in &a {
            prop_assert!(close(*v, b[k], 1e-11), "{}", k);
        }
    }
}
