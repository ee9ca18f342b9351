//! One test per acceptance criterion. Each prints a single PASS/FAIL line with its measured
//! values and asserts the pinned tolerance.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex64 as C;
use voacalc::analytic::*;
use voacalc::category::*;
use voacalc::correlate::{bra, creation_braid, creation_fusion, check_vertex_intertwining};
use voacalc::graded::GradedVector;
use voacalc::models::{build_free_boson, build_ising_category, build_lattice_sqrt2, LatticeModel};
use voacalc::multivalued::AngledComplex;
use voacalc::report::{Report, Status};
use voacalc::scalar::{q, qi, Cyc8, Scalar};
use voacalc::suite::{category_from_model, fixture_convergence, shipped_correlator_fixtures, ModelKind, EXTRACTION_CUTOFF};
use voacalc::transforms::*;
use voacalc::voa::{check_jacobi, check_virasoro, JacobiCtx, JacobiWindow};

// the heavy criteria build cutoff-8 models; running them one at a time keeps memory bounded
static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(n: u32, ok: bool, started: Instant, msg: String) {
    let line = format!("criterion {:2} {} ({:.1} s): {}\n", n, if ok { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64(), msg);
    // bypass the harness's output capture so passing criteria show up too
    match std::fs::OpenOptions::new().append(true).open("/dev/stderr") {
        Ok(mut f) => {
            let _ = f.write_all(line.as_bytes());
        }
        Err(_) => eprint!("{}", line),
    }
    assert!(ok, "criterion {}: {}", n, msg);
}

fn lat(cutoff: i64) -> LatticeModel<C> {
    build_lattice_sqrt2::<C>(cutoff).unwrap()
}

fn ev(m: &LatticeModel<C>, b: i64) -> GradedVector<C> {
    GradedVector::basis(&m.v_fock.space, m.v_fock.idx(b, &[]).unwrap())
}

fn exact_zero(r: &Report) -> bool {
    r.passed() && r.entries.iter().all(|e| e.status != Status::TolPass) && r.count(Status::ExactPass) > 0
}

#[test]
fn c01_virasoro_free_boson() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let fb = build_free_boson::<Cyc8>(8).unwrap();
    let r = check_virasoro(&fb.voa.module, qi(1), 3, 0.0).unwrap();
    let has_l2 = r.entries.iter().any(|e| e.subject.contains("[L_2,L_-2]") && e.status == Status::ExactPass);
    let ok = exact_zero(&r) && has_l2 && r.max_residual() == 0.0;
    verdict(1, ok, t, format!("{} commutators |m|,|n| ≤ 3, max residual {}, [L_2,L_-2] present: {}", r.entries.len(), r.max_residual(), has_l2));
}

#[test]
fn c02_jacobi_and_residues_lattice() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = build_lattice_sqrt2::<Cyc8>(6).unwrap();
    let v = m.voa.space();
    let h = &m.wh.space;
    let r: Vec<i64> = (-3..=3).collect();
    let win = JacobiWindow {
        u: (0..v.total_dim()).filter(|i| v.weight_of(*i) <= qi(2)).collect(),
        w: (0..h.total_dim()).filter(|i| h.weight_of(*i) <= h.lowest_weight + qi(1)).collect(),
        m: r.clone(),
        n: r.clone(),
        h: r,
    };
    let ctx = JacobiCtx { charge: &m.wh, source: &m.wh, target: &m.voa.module };
    let j = check_jacobi(&ctx, &m.y_hh, &win, 0.0).unwrap();
    let res = check_vertex_intertwining(&ctx, &m.y_hh, &win, 0.0).unwrap();
    let ok = exact_zero(&j) && exact_zero(&res);
    verdict(
        2,
        ok,
        t,
        format!("Y_hh, {} u × {} w: jacobi {} / residues {}", win.u.len(), win.w.len(), j.summary(), res.summary()),
    );
}

#[test]
fn c03_transform_involutions() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = build_lattice_sqrt2::<Cyc8>(6).unwrap();
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    let mut bad = Vec::new();
    for a in [&m.y_hh, &m.y_h0, &m.wh.action] {
        let checks = [
            ("B-B+", braid(&braid(a, 1, &fam).unwrap(), -1, &fam).unwrap()),
            ("C^-1 C", contragredient(&contragredient(a, 1, &fam).unwrap(), -1, &fam).unwrap()),
            ("**", adjoint(&adjoint(a, &fam).unwrap(), &fam).unwrap()),
            ("conj²", conjugate(&conjugate(a, &fam).unwrap(), &fam).unwrap()),
        ];
        for (name, b) in checks {
            if !(b.same_type(a) && a.equals(&b)) {
                bad.push(format!("{} {}", name, a.label));
            }
        }
    }
    for md in [&m.voa.module, &m.wh] {
        let ad = adjoint(&creation(md, &fam).unwrap(), &fam).unwrap();
        let an = annihilation(md, &fam).unwrap();
        if !(ad.same_type(&an) && ad.equals(&an)) {
            bad.push(format!("adjoint(creation) {}", md.label));
        }
    }
    verdict(3, bad.is_empty(), t, format!("4 involutions × 3 intertwiners + 2 creation adjoints, exact mismatches: {:?}", bad));
}

#[test]
fn c04_twist_relations() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = build_lattice_sqrt2::<Cyc8>(6).unwrap();
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    let mut rep = Report::new();
    for md in [&m.voa.module, &m.wh] {
        rep.extend(twist_relations_check(md, &fam, 0.0).unwrap());
    }
    // ϑ_h = e^{2πiL_0} on every weight space of W_h, against the oracle e^{2πi/4}
    let oracle = Cyc8::phase(q(1, 2)).unwrap();
    let theta_ok = m.wh.space.weights.iter().all(|w| Cyc8::phase(qi(2) * *w).unwrap() == oracle);
    let ok = exact_zero(&rep) && theta_ok && oracle == Cyc8::i();
    verdict(4, ok, t, format!("twist relations {}; ϑ_h = e^{{iπ/2}} on all weights: {}", rep.summary(), theta_ok));
}

#[test]
fn c05_creation_fusion() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let z = [AngledComplex::from_c64(C::new(0.5, 0.0)), AngledComplex::from_c64(C::new(0.8, 0.0))];
    // extrapolated values (the relation's error) and raw truncated sums
    let (mut errs, mut raw) = (Vec::new(), Vec::new());
    for cutoff in [4, 5, 6] {
        let m = lat(cutoff);
        let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
        let ins = [m.h_lowest(1), m.h_lowest(-1)];
        let phis: Vec<_> = [0, 2, -2].iter().map(|b| bra(&ev(&m, *b))).collect();
        let rs = creation_fusion(&fam, &[&m.y_hh], &ins, &phis, &z).unwrap();
        errs.push(rs.iter().map(|r| r.rel_error).fold(0.0, f64::max));
        raw.push(rs.iter().map(|r| (r.lhs.value - r.rhs.value).norm() / r.lhs.value.norm().max(r.rhs.value.norm()).max(1e-300)).fold(0.0, f64::max));
    }
    let ok = errs[2] <= 1e-4 && errs[0] >= errs[1] && errs[1] >= errs[2] && raw[0] > raw[1] && raw[1] > raw[2];
    verdict(
        5,
        ok,
        t,
        format!("relative error at cutoffs 4/5/6: {:.3e} / {:.3e} / {:.3e}; raw truncated sums {:.3e} / {:.3e} / {:.3e}", errs[0], errs[1], errs[2], raw[0], raw[1], raw[2]),
    );
}

#[test]
fn c06_braid_relation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = lat(6);
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    let b = braid(&m.y_hh, 1, &fam).unwrap();
    let lm1 = fam.ln(&m.voa.module.space, -1).unwrap();
    let (wi, wj) = (m.h_lowest(1), m.h_lowest(-1));
    let mut worst_braid: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for phi_b in [0i64, 2, -2] {
        let phi = bra(&ev(&m, phi_b));
        // ⟨φ, 𝒴(w_i, z_i)𝒴(w_j, z_j)Ω⟩ is homogeneous of degree Δ_φ - Δ_i - Δ_j
        let degree = (phi_b * phi_b) as f64 / 4.0 - 0.5;
        for (ai, aj) in [(1.0, 0.2), (2.5, -0.5)] {
            let at = |r: f64| creation_braid(&m.y_hh, &b, lm1, &wi, &wj, &phi, &AngledComplex::new(r, ai), &AngledComplex::new(r, aj), 10).unwrap();
            let (c1, c2) = (at(0.6), at(0.45));
            for c in [&c1, &c2] {
                worst_braid = worst_braid.max(c.diff / c.lhs.norm().max(1.0));
            }
            let rescaled = c2.lhs * (0.6f64 / 0.45).powf(degree);
            worst_scale = worst_scale.max((rescaled - c1.lhs).norm());
        }
    }
    let ok = worst_braid <= 1e-4 && worst_scale <= 1e-6;
    verdict(6, ok, t, format!("orderings differ by {:.3e} (relative); common scaling 0.6 → 0.45 moves extrapolants by {:.3e}", worst_braid, worst_scale));
}

#[test]
fn c07_series_convergence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let fixtures = shipped_correlator_fixtures();
    let conv = fixture_convergence(&fixtures).unwrap();
    let bad_ratio: Vec<_> = conv.iter().filter(|c| !(c.ratio < 0.95)).map(|c| c.name.clone()).collect();
    let outside: Vec<_> = conv.iter().filter(|c| !c.within_tail).map(|c| c.name.clone()).collect();
    let frac = 1.0 - outside.len() as f64 / conv.len() as f64;
    let four_point_ok = outside.iter().all(|n| !n.contains("4-point"));
    let ok = bad_ratio.is_empty() && frac >= 0.95 && four_point_ok;
    let worst = conv.iter().map(|c| c.ratio).fold(0.0, f64::max);
    verdict(
        7,
        ok,
        t,
        format!("{} fixtures, cutoff {} → {}: max ρ {:.3}, {:.0}% within tail bound, failures {:?}", conv.len(), fixtures.cutoff, 2 * fixtures.cutoff, worst, 100.0 * frac, outside),
    );
}

#[test]
fn c08_smeared_adjoint() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = lat(6);
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    let f = TestFunction::bump(0.0, PI / 2.0).unwrap();
    assert_eq!(f.grid_log2, 12);
    let w = m.h_lowest(1);
    let mut worst: f64 = 0.0;
    let mut grid: f64 = 0.0;
    let mut ok = true;
    for a in [&m.y_hh, &m.y_h0] {
        let (rep, g) = check_smeared_adjoint(a, &w, &f, &fam, 1e-8).unwrap();
        ok &= rep.passed();
        worst = worst.max(rep.max_residual());
        grid = grid.max(g);
    }
    ok &= worst <= 1e-8 && grid <= 1e-9;
    verdict(8, ok, t, format!("e^g (quasi-primary), bump on [0, π/2], grid 2^12: residual {:.3e}, grid doubling {:.3e}", worst, grid));
}

#[test]
fn c09_rotation_covariance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = lat(6);
    let f = TestFunction::bump(0.0, PI / 2.0).unwrap();
    let ts = [0.1, -0.1, 0.2, -0.2];
    let mut rep = Report::new();
    for (a, w) in [(&m.y_hh, m.h_lowest(1)), (&m.y_h0, m.h_lowest(-1)), (&m.voa.module.action, ev(&m, 2))] {
        rep.extend(check_rotation_covariance(a, &w, &f, &ts, 1e-8).unwrap());
    }
    let comm = rep.entries.iter().filter(|e| e.check == "rotation_commutator").map(|e| e.residual).fold(0.0, f64::max);
    let ok = rep.passed() && rep.max_residual() <= 1e-8;
    verdict(9, ok, t, format!("commutator {:.3e}, conjugation at t = ±0.1, ±0.2 max {:.3e}", comm, rep.max_residual()));
}

#[test]
fn c10_smeared_braid_and_product() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let f1 = TestFunction::bump(-PI / 2.0, -PI / 6.0).unwrap();
    let f2 = TestFunction::bump(PI / 6.0, PI / 2.0).unwrap();
    let (mut prod, mut br) = (Vec::new(), Vec::new());
    for cutoff in [6, 8] {
        let m = lat(cutoff);
        let omega = m.voa.vacuum.clone();
        let (hp, hm) = (m.h_lowest(1), m.h_lowest(-1));
        let (_, rel) = check_smeared_product(&m.y_h0, &m.y_hh, &hm, &hp, &f1, &f2, &[(omega.clone(), omega)], 48, 1e-3).unwrap();
        prod.push(rel);
        let bp = m.y_hh.scale(&C::new(0.0, 1.0));
        let (_, res) = check_smeared_braid((&m.y_hh, &m.y_h0), (&bp, &m.y_h0), &hp, &hm, &f2, &f1, 1, 1e-3).unwrap();
        br.push(res);
    }
    let ok = prod[0] <= 1e-3 && br[0] <= 1e-3 && prod[1] < prod[0] && br[1] < br[0];
    verdict(
        10,
        ok,
        t,
        format!("arcs of width π/3 separated by π/3; product {:.3e} → {:.3e}, braid {:.3e} → {:.3e} (cutoff 6 → 8), required ≤ 1e-3 at 6", prod[0], prod[1], br[0], br[1]),
    );
}

#[test]
fn c11_strong_intertwining() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let m = lat(6);
    let f = phase_symmetric(&TestFunction::bump(0.3, 1.5).unwrap(), 2.0);
    let g = TestFunction::bump(-2.0, -0.5).unwrap();
    let ts: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let s = strong_intertwining(&m.wh, &m.voa.module, &m.y_hh, &m.voa.nu, &f, &m.h_lowest(1), &g, &ts, 1).unwrap();
    let worst = s.residuals.iter().map(|x| x.1).fold(0.0, f64::max);
    let corner = s.corner_residuals.iter().map(|x| x.1).fold(0.0, f64::max);
    // float matrices: Hermitian up to rounding
    let ok = s.hermitian_defect <= 1e-14 && worst <= 1e-10;
    verdict(
        11,
        ok,
        t,
        format!("cutoff 6, 9-point t grid: ‖A - A†‖ = {:.1e}, max residual {:.3e} (low-weight corner {:.3e}), required ≤ 1e-10", s.hermitian_defect, worst, corner),
    );
}

#[test]
fn c12_energy_bounds() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let cutoffs: Vec<i64> = (4..=10).collect();
    let mut fits = Vec::new();
    for &c in &cutoffs {
        let fb = build_free_boson::<C>(c).unwrap();
        fits.push(fit_energy_bound(&fb.voa.module.action, &fb.voa.nu, 1.0).unwrap());
    }
    let stable = fits_stable(&fits, 0.1);
    let mut lift = Report::new();
    let fb = build_free_boson::<C>(10).unwrap();
    for p in [-1.0, 0.0, 1.0, 2.0] {
        lift.extend(check_sobolev_lift(&fb.voa.module.action, &fb.voa.nu, fits.last().unwrap(), p).unwrap());
    }
    let m = lat(6);
    for (a, w) in [(&m.y_hh, m.h_lowest(1)), (&m.y_h0, m.h_lowest(-1))] {
        let fit = fit_energy_bound(a, &w, 1.0).unwrap();
        for p in [-1.0, 0.0, 1.0, 2.0] {
            lift.extend(check_sobolev_lift(a, &w, &fit, p).unwrap());
        }
    }
    let ok = stable && lift.passed() && lift.failures().is_empty();
    let ms: Vec<String> = fits.iter().map(|f| format!("{:.3}", f.m)).collect();
    verdict(
        12,
        ok,
        t,
        format!("ν fit r = 1, t = {} across cutoffs 4..10, M = [{}], stable within 10%: {}; Sobolev lift violations: {}", fits[0].t, ms.join(", "), stable, lift.failures().len()),
    );
}

#[test]
fn c13_category_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (lattice, spread) = category_from_model(ModelKind::LatticeSqrt2, EXTRACTION_CUTOFF).unwrap();
    let mut exact = pentagon_check(&lattice, 0.0);
    exact.extend(hexagon_check(&lattice, 1, 0.0).unwrap());
    exact.extend(hexagon_check(&lattice, -1, 0.0).unwrap());
    exact.extend(triangle_check(&lattice, 0.0));
    for i in 0..lattice.rank() {
        exact.extend(rigidity_check(&lattice, i, 0.0).unwrap());
    }
    let lattice_ok = exact_zero(&exact);

    let ising = build_ising_category().unwrap();
    let mut ph = pentagon_check(&ising, 1e-12);
    ph.extend(hexagon_check(&ising, 1, 1e-12).unwrap());
    ph.extend(hexagon_check(&ising, -1, 1e-12).unwrap());
    let unit_gram = ising.gram.as_ref().map_or(false, |g| g.values().all(|x| *x == 1.0));
    let uni = unitarity_check(&ising, 1e-12).unwrap();
    let ising_ok = ph.passed() && uni.passed() && unit_gram;

    let mut missed = Vec::new();
    let mut ncontrols = 0;
    for base in [lattice.to_c64(), ising.clone()] {
        for ctl in negative_controls(&base) {
            ncontrols += 1;
            if !control_fails(&ctl, 1e-12).unwrap() {
                missed.push(ctl.name.clone());
            }
        }
    }
    let ok = lattice_ok && ising_ok && missed.is_empty();
    verdict(
        13,
        ok,
        t,
        format!(
            "lattice (cutoff {}, spread {:.1e}): {}; Ising pentagon/hexagon max {:.1e}, unitarity {}; {} negative controls, not caught: {:?}",
            EXTRACTION_CUTOFF,
            spread,
            exact.summary(),
            ph.max_residual(),
            uni.summary(),
            ncontrols,
            missed
        ),
    );
}
