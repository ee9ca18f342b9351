use voacalc::models::build_lattice_sqrt2;
use voacalc::scalar::{qi, Cyc8};
use voacalc::voa::*;
use voacalc::graded::GradedVector;

fn window(u: usize, w: usize, r: i64) -> JacobiWindow {
    let rr: Vec<i64> = (-r..=r).collect();
    JacobiWindow { u: (0..u).collect(), w: (0..w).collect(), m: rr.clone(), n: rr.clone(), h: rr }
}

#[test]
fn lattice_axioms_exact() {
    let m = build_lattice_sqrt2::<Cyc8>(4).unwrap();
    let v = &m.voa;
    let r = check_vacuum(v, 0.0);
    assert!(r.passed(), "{:?}", r.failures());
    for md in m.modules() {
        let r = check_virasoro(md, qi(1), 2, 0.0).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
    }
    let nv = v.space().dims[0] + v.space().dims[1];
    let nh = m.wh.space.dims[0] + m.wh.space.dims[1];
    let ctx = JacobiCtx { charge: &v.module, source: &v.module, target: &v.module };
    let r = check_jacobi(&ctx, v.y(), &window(nv, nv, 2), 0.0).unwrap();
    assert!(r.passed(), "Y {:?}", &r.failures()[..r.failures().len().min(3)]);
    let ctx = JacobiCtx { charge: &v.module, source: &m.wh, target: &m.wh };
    let r = check_jacobi(&ctx, &m.wh.action, &window(nv, nv, 2), 0.0).unwrap();
    assert!(r.passed(), "Yh {:?}", &r.failures()[..r.failures().len().min(3)]);
    let ctx = JacobiCtx { charge: &m.wh, source: &m.wh, target: &v.module };
    let r = check_jacobi(&ctx, &m.y_hh, &window(nv, nh, 2), 0.0).unwrap();
    assert!(r.passed(), "Yhh {:?}", &r.failures()[..r.failures().len().min(3)]);
    let ctx = JacobiCtx { charge: &m.wh, source: &v.module, target: &m.wh };
    let r = check_jacobi(&ctx, &m.y_h0, &window(nv, nh, 2), 0.0).unwrap();
    assert!(r.passed(), "Yh0 {:?}", &r.failures()[..r.failures().len().min(3)]);
    println!("{}", r.summary());
}

#[test]
fn lattice_unitarity_and_translation() {
    let m = build_lattice_sqrt2::<Cyc8>(4).unwrap();
    let v = &m.voa;
    let sp = v.space();
    let gens: Vec<GradedVector<Cyc8>> = (0..sp.dims[0] + sp.dims[1]).map(|i| GradedVector::basis(sp, i)).collect();
    for md in m.modules() {
        let r = check_module_unitarity(v, md, &gens, 0.0).unwrap();
        assert!(r.passed(), "{} {:?}", md.label, r.failures());
    }
    let l = v.module.ln(-1).unwrap();
    let lh = m.wh.ln(-1).unwrap();
    for (a, op) in [(v.y(), l), (&m.wh.action, l), (&m.y_hh, lh), (&m.y_h0, lh)] {
        let r = check_translation(a, op, 0.0).unwrap();
        assert!(r.passed(), "{} {:?}", a.label, r.failures());
        assert!(check_energy_shift(a).passed());
    }
}
