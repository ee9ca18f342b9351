//! Model files, correlator fixtures and the checker suites run by the command line.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    check_rotation_covariance, check_smeared_adjoint, check_smeared_braid, check_smeared_product, check_sobolev_lift, phase_symmetric, fit_energy_bound, fits_stable,
    strong_intertwining, TestFunction,
};
use crate::category::{
    control_fails, default_fusion_points, extract_from_voa, full_check, negative_controls, snap_exact, CategoryData, VoaCategorySource,
};
use crate::correlate::{bra, creation_braid, creation_fusion, eval_iterate, eval_product, CorrValue};
use crate::error::{Error, Result};
use crate::graded::GradedVector;
use crate::models::fock::FockSpace;
use crate::models::{build_free_boson, build_lattice_sqrt2, FreeBoson, LatticeModel};
use crate::multivalued::AngledComplex;
use crate::report::{Report, Status};
use crate::scalar::{q_to_f64, qi, Scalar, Q};
use crate::transforms::{adjoint, annihilation, braid, contragredient, conjugate, creation, fusion_rule_symmetries, twist_relations_check, Family, FusionRules};
use crate::voa::{check_energy_shift, check_jacobi, check_module_unitarity, check_translation, check_vacuum, check_virasoro, Intertwiner, JacobiCtx, JacobiWindow, Module, Voa};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn check_schema(v: u32, what: &str) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Invalid(format!("{}: schema_version {} (expected {})", what, v, SCHEMA_VERSION)));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FreeBoson,
    LatticeSqrt2,
    IsingCategory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    Float,
}

/// Properties a model file claims; the voa suite checks them against the built model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Declared {
    pub central_charge: String,
    /// Δ of each module, in module order
    pub lowest_weights: Vec<String>,
    /// nonzero fusion rules as [k, i, j]
    pub fusion: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub kind: ModelKind,
    pub cutoff: i64,
    pub backend: Backend,
    pub declared: Declared,
}

fn parse_q(s: &str) -> Result<Q> {
    s.trim().parse::<Q>().map_err(|_| Error::Invalid(format!("not a rational number: {:?}", s)))
}

impl ModelFile {
    pub fn new(kind: ModelKind, cutoff: i64, backend: Backend) -> Self {
        let declared = match kind {
            ModelKind::FreeBoson => Declared { central_charge: "1".into(), lowest_weights: vec!["0".into()], fusion: vec![[0, 0, 0]] },
            ModelKind::LatticeSqrt2 => Declared {
                central_charge: "1".into(),
                lowest_weights: vec!["0".into(), "1/4".into()],
                fusion: vec![[0, 0, 0], [1, 0, 1], [1, 1, 0], [0, 1, 1]],
            },
            ModelKind::IsingCategory => Declared {
                central_charge: "1/2".into(),
                lowest_weights: vec!["0".into(), "1/2".into(), "1/16".into()],
                fusion: vec![],
            },
        };
        ModelFile { schema_version: SCHEMA_VERSION, kind, cutoff, backend, declared }
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "model file")?;
        if self.cutoff < 2 {
            return Err(Error::Invalid(format!("cutoff {} < 2", self.cutoff)));
        }
        parse_q(&self.declared.central_charge)?;
        for w in &self.declared.lowest_weights {
            parse_q(w)?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| Error::Invalid(format!("model file: {}", e)))?;
        m.validate()?;
        Ok(m)
    }
}

/// A built VOA model with its registered modules and basis intertwiners.
pub enum Model<S> {
    Boson(FreeBoson<S>),
    Lattice(LatticeModel<S>),
}

impl<S: Scalar> Model<S> {
    pub fn build(kind: ModelKind, cutoff: i64) -> Result<Self> {
        match kind {
            ModelKind::FreeBoson => Ok(Model::Boson(build_free_boson(cutoff)?)),
            ModelKind::LatticeSqrt2 => Ok(Model::Lattice(build_lattice_sqrt2(cutoff)?)),
            ModelKind::IsingCategory => Err(Error::Invalid("ising-category is category data, not a VOA model".into())),
        }
    }

    pub fn voa(&self) -> &Voa<S> {
        match self {
            Model::Boson(b) => &b.voa,
            Model::Lattice(l) => &l.voa,
        }
    }

    pub fn modules(&self) -> Vec<&Module<S>> {
        match self {
            Model::Boson(b) => vec![&b.voa.module],
            Model::Lattice(l) => vec![&l.voa.module, &l.wh],
        }
    }

    /// Basis intertwiners keyed [k, i, j] (type (k; i j)), with their names.
    pub fn intertwiners(&self) -> Vec<(&'static str, [usize; 3], &Intertwiner<S>)> {
        match self {
            Model::Boson(b) => vec![("Y", [0, 0, 0], &b.voa.module.action)],
            Model::Lattice(l) => vec![("Y", [0, 0, 0], &l.voa.module.action), ("Y_h", [1, 0, 1], &l.wh.action), ("Y_h0", [1, 1, 0], &l.y_h0), ("Y_hh", [0, 1, 1], &l.y_hh)],
        }
    }

    pub fn intertwiner(&self, name: &str) -> Result<&Intertwiner<S>> {
        self.intertwiners().into_iter().find(|x| x.0 == name).map(|x| x.2).ok_or_else(|| Error::Invalid(format!("unknown intertwiner {:?}", name)))
    }

    pub fn family(&self) -> Result<Family<S>> {
        let ms = self.modules();
        Family::new(self.voa(), &ms[1..])
    }

    pub fn fusion_rules(&self) -> FusionRules {
        let ms = self.modules();
        let k = ms.len();
        let mut n = vec![vec![vec![0; k]; k]; k];
        for (_, [a, b, c], _) in self.intertwiners() {
            n[a][b][c] = 1;
        }
        FusionRules { labels: ms.iter().map(|m| m.label.clone()).collect(), dual: (0..k).collect(), n }
    }

    fn fock(&self, module: char) -> Result<&FockSpace<S>> {
        match (self, module) {
            (Model::Boson(b), 'v') => Ok(&b.fock),
            (Model::Lattice(l), 'v') => Ok(&l.v_fock),
            (Model::Lattice(l), 'h') => Ok(&l.h_fock),
            _ => Err(Error::Invalid(format!("model has no module {:?}", module))),
        }
    }

    /// Basis vector from a spec "v:b" or "h:b", optionally ":p1,p2,…" for the oscillator partition.
    pub fn vector(&self, spec: &str) -> Result<GradedVector<S>> {
        let bad = || Error::Invalid(format!("bad vector spec {:?} (expected v:b[:parts] or h:b[:parts])", spec));
        let mut it = spec.split(':');
        let module = it.next().and_then(|s| s.chars().next()).ok_or_else(bad)?;
        let b: i64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let parts: Vec<u32> = match it.next() {
            Some(p) if !p.is_empty() => p.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?,
            _ => vec![],
        };
        let f = self.fock(module)?;
        let i = f.idx(b, &parts).ok_or_else(|| Error::OutsideCutoff(format!("{} is not in the truncated space", spec)))?;
        Ok(GradedVector::basis(&f.space, i))
    }
}

/// Basis indices of a space up to `levels` above its lowest weight.
fn low_basis<S: Scalar>(m: &Module<S>, levels: i64) -> Vec<usize> {
    let sp = &m.space;
    (0..sp.total_dim()).filter(|i| sp.weight_of(*i) <= sp.lowest_weight + qi(levels)).collect()
}

pub fn jacobi_window<S: Scalar>(v: &Module<S>, charge: &Module<S>, levels: i64, range: i64) -> JacobiWindow {
    let r: Vec<i64> = (-range..=range).collect();
    JacobiWindow { u: low_basis(v, levels), w: low_basis(charge, levels), m: r.clone(), n: r.clone(), h: r }
}

/// Axioms, declared data, transforms and twists of a VOA model.
pub fn voa_suite<S: Scalar>(file: &ModelFile, model: &Model<S>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let voa = model.voa();
    let modules = model.modules();
    let fam = model.family()?;

    let c = parse_q(&file.declared.central_charge)?;
    rep.exact("declared_central_charge", "V", q_to_f64(c - voa.central_charge).abs());
    if file.declared.lowest_weights.len() != modules.len() {
        rep.push_detail("declared_lowest_weight", "modules", Status::Fail, 1.0, format!("{} declared, {} built", file.declared.lowest_weights.len(), modules.len()));
    }
    for (m, w) in modules.iter().zip(&file.declared.lowest_weights) {
        rep.exact("declared_lowest_weight", m.label.clone(), q_to_f64(parse_q(w)? - m.space.lowest_weight).abs());
    }
    let declared: BTreeSet<[usize; 3]> = file.declared.fusion.iter().copied().collect();
    let built: BTreeSet<[usize; 3]> = model.intertwiners().iter().map(|x| x.1).collect();
    let diff = declared.symmetric_difference(&built).count();
    rep.exact("declared_fusion", format!("{} nonzero N^k_ij", built.len()), diff as f64);

    rep.extend(check_vacuum(voa, tol));
    // [L_m, L_n] needs L_{m+n}, which the truncation stores up to the cutoff
    let vir = (file.cutoff / 2).clamp(1, 3);
    for m in &modules {
        rep.extend(check_virasoro(m, c, vir, tol)?);
        let gens: Vec<_> = low_basis(&voa.module, 1).into_iter().map(|i| GradedVector::basis(voa.space(), i)).collect();
        rep.extend(check_module_unitarity(voa, m, &gens, tol)?);
        rep.extend(twist_relations_check(m, &fam, tol)?);
        let cr = creation(m, &fam)?;
        let an = annihilation(m, &fam)?;
        let ad = adjoint(&cr, &fam)?;
        rep.backend(S::EXACT, "adjoint_creation", m.label.clone(), ad.dist(&an)?, tol);
    }
    for (name, [k, i, j], a) in model.intertwiners() {
        let ctx = JacobiCtx { charge: modules[i], source: modules[j], target: modules[k] };
        let win = jacobi_window(&voa.module, modules[i], 1, 2);
        rep.extend(check_jacobi(&ctx, a, &win, tol)?);
        rep.extend(crate::correlate::check_vertex_intertwining(&ctx, a, &win, tol)?);
        rep.extend(check_translation(a, modules[i].ln(-1)?, tol)?);
        rep.extend(check_energy_shift(a));
        let b = braid(&braid(a, 1, &fam)?, -1, &fam)?;
        rep.backend(S::EXACT, "involution_braid", name, a.dist(&b)?, tol);
        let cc = contragredient(&contragredient(a, 1, &fam)?, -1, &fam)?;
        rep.backend(S::EXACT, "involution_contragredient", name, a.dist(&cc)?, tol);
        let s = adjoint(&adjoint(a, &fam)?, &fam)?;
        rep.backend(S::EXACT, "involution_adjoint", name, a.dist(&s)?, tol);
        let k2 = conjugate(&conjugate(a, &fam)?, &fam)?;
        rep.backend(S::EXACT, "involution_conjugate", name, a.dist(&k2)?, tol);
    }
    rep.extend(fusion_rule_symmetries(&model.fusion_rules()));
    Ok(rep)
}

// correlator fixtures

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrFixture {
    pub name: String,
    /// intertwiner names, innermost first
    pub chain: Vec<String>,
    pub insertions: Vec<String>,
    pub x: String,
    pub phi: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrFixtureFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub model: ModelKind,
    pub cutoff: i64,
    pub fixtures: Vec<CorrFixture>,
}

impl CorrFixtureFile {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: CorrFixtureFile = serde_json::from_str(s).map_err(|e| Error::Invalid(format!("correlator fixtures: {}", e)))?;
        check_schema(f.schema_version, "correlator fixtures")?;
        Ok(f)
    }
}

pub fn shipped_correlator_fixtures() -> CorrFixtureFile {
    CorrFixtureFile::from_json(include_str!("../fixtures/correlators.json")).expect("shipped fixtures parse")
}

pub fn points(ps: &[[f64; 2]]) -> Vec<AngledComplex> {
    ps.iter().map(|p| AngledComplex::from_c64(C::new(p[0], p[1]))).collect()
}

pub fn eval_fixture(model: &Model<C>, fx: &CorrFixture) -> Result<CorrValue> {
    let chain: Vec<&Intertwiner<C>> = fx.chain.iter().map(|n| model.intertwiner(n)).collect::<Result<_>>()?;
    let ins: Vec<GradedVector<C>> = fx.insertions.iter().map(|s| model.vector(s)).collect::<Result<_>>()?;
    eval_product(&chain, &ins, &model.vector(&fx.x)?, &bra(&model.vector(&fx.phi)?), &points(&fx.points))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Convergence {
    pub name: String,
    pub ratio: f64,
    pub value: C,
    pub tail_bound: f64,
    pub doubled: C,
    pub change: f64,
    pub within_tail: bool,
}

/// Evaluates every fixture at the file's cutoff and at twice that cutoff.
pub fn fixture_convergence(file: &CorrFixtureFile) -> Result<Vec<Convergence>> {
    let lo = Model::<C>::build(file.model, file.cutoff)?;
    let hi = Model::<C>::build(file.model, 2 * file.cutoff)?;
    let mut out = Vec::new();
    for fx in &file.fixtures {
        let a = eval_fixture(&lo, fx)?;
        let b = eval_fixture(&hi, fx)?;
        let change = (a.value - b.value).norm();
        out.push(Convergence { name: fx.name.clone(), ratio: a.ratio, value: a.value, tail_bound: a.tail_bound, doubled: b.value, change, within_tail: change <= a.tail_bound });
    }
    Ok(out)
}

pub fn convergence_report(conv: &[Convergence]) -> Report {
    let mut rep = Report::new();
    for c in conv {
        rep.tol("series_ratio", c.name.clone(), c.ratio, 0.95);
        let st = if c.within_tail { Status::TolPass } else { Status::Fail };
        rep.push_detail("cutoff_doubling", c.name.clone(), st, c.change, format!("tail bound {:.3e}", c.tail_bound));
    }
    rep
}

/// Correlator checks on a float model: fixture convergence, product against iterate,
/// creation fusion and the creation braid (lattice only).
pub fn correlators_suite(model: &Model<C>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let fixtures = shipped_correlator_fixtures();
    rep.extend(convergence_report(&fixture_convergence(&fixtures)?));
    let y = &model.voa().module.action;
    let z = points(&[[0.5, 0.0], [0.8, 0.0]]);
    let ps: &[(&str, &str, &str, &str)] = match model {
        Model::Boson(_) => &[("v:0", "v:0:1", "v:0:1", "v:0:1,1")],
        Model::Lattice(_) => &[("v:2", "v:-2", "v:2", "v:2"), ("v:0", "v:2", "v:-2", "v:0")],
    };
    for (x, w1, w2, phi) in ps {
        let ins = [model.vector(w1)?, model.vector(w2)?];
        let (x, phi) = (model.vector(x)?, bra(&model.vector(phi)?));
        let p = eval_product(&[y, y], &ins, &x, &phi, &z)?;
        let i = eval_iterate(y, &[y], &ins, &x, &phi, &z)?;
        let scale = i.extrapolated.norm().max(1.0);
        rep.tol("product_vs_iterate", format!("{} {}", w1, w2), (p.extrapolated - i.extrapolated).norm() / scale, 1e-3);
    }
    if let Model::Lattice(m) = model {
        let fam = model.family()?;
        let ins = [m.h_lowest(1), m.h_lowest(-1)];
        let phis: Vec<_> = ["v:0", "v:2", "v:-2"].iter().map(|s| model.vector(s).map(|v| bra(&v))).collect::<Result<_>>()?;
        for (k, r) in creation_fusion(&fam, &[&m.y_hh], &ins, &phis, &z)?.into_iter().enumerate() {
            rep.tol("creation_fusion", format!("Y_hh, boundary {}", k), r.rel_error, 1e-3);
        }
        let b = braid(&m.y_hh, 1, &fam)?;
        let lm1 = fam.ln(&m.voa.module.space, -1)?;
        let (zi, zj) = (AngledComplex::new(0.6, 1.0), AngledComplex::new(0.6, 0.2));
        for (k, phi) in phis.iter().enumerate() {
            let r = creation_braid(&m.y_hh, &b, lm1, &ins[0], &ins[1], phi, &zi, &zj, 10)?;
            rep.tol("creation_braid", format!("Y_hh, boundary {}", k), r.diff / r.lhs.norm().max(1.0), 1e-3f64.max(tol));
        }
    }
    Ok(rep)
}

/// Smeared-field checks on a float lattice model; energy bounds on either model.
pub fn analytic_suite(model: &Model<C>, tol: f64) -> Result<Report> {
    let mut rep = Report::new();
    let quarter = TestFunction::bump(0.0, PI / 2.0)?;
    match model {
        Model::Boson(b) => {
            let y = &b.voa.module.action;
            let fit = fit_energy_bound(y, &b.voa.nu, 1.0)?;
            rep.push_detail("energy_bound_fit", "Y(ν)", Status::TolPass, 0.0, format!("M = {:.4}, t = {}", fit.m, fit.t));
            for p in [-1.0, 0.0, 1.0, 2.0] {
                rep.extend(check_sobolev_lift(y, &b.voa.nu, &fit, p)?);
            }
        }
        Model::Lattice(m) => {
            let fam = model.family()?;
            let (hp, hm) = (m.h_lowest(1), m.h_lowest(-1));
            for a in [&m.y_hh, &m.y_h0] {
                let (r, grid) = check_smeared_adjoint(a, &hp, &quarter, &fam, 1e-8)?;
                rep.extend(r);
                rep.tol("smeared_adjoint_grid", a.label.clone(), grid, 1e-9);
                rep.extend(check_rotation_covariance(a, &hp, &quarter, &[0.1, -0.1, 0.2, -0.2], 1e-8)?);
                let fit = fit_energy_bound(a, &hp, 1.0)?;
                for p in [-1.0, 0.0, 1.0, 2.0] {
                    rep.extend(check_sobolev_lift(a, &hp, &fit, p)?);
                }
            }
            let f1 = TestFunction::bump(-PI / 2.0, -PI / 6.0)?;
            let f2 = TestFunction::bump(PI / 6.0, PI / 2.0)?;
            let omega = m.voa.vacuum.clone();
            let (r, _) = check_smeared_product(&m.y_h0, &m.y_hh, &hm, &hp, &f1, &f2, &[(omega.clone(), omega)], 48, 1e-3)?;
            rep.extend(r);
            let bp = m.y_hh.scale(&C::new(0.0, 1.0)).relabel("i·Y_hh");
            let (r, _) = check_smeared_braid((&m.y_hh, &m.y_h0), (&bp, &m.y_h0), &hp, &hm, &f2, &f1, 1, 1e-3)?;
            rep.extend(r);
            let f = phase_symmetric(&TestFunction::bump(0.3, 1.5)?, 2.0);
            let g = TestFunction::bump(-2.0, -0.5)?;
            let ts: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
            let s = strong_intertwining(&m.wh, &m.voa.module, &m.y_hh, &m.voa.nu, &f, &hp, &g, &ts, 1)?;
            rep.tol("strong_intertwining_hermitian", "A = Y(ν, f)", s.hermitian_defect, tol);
            let worst = s.residuals.iter().map(|x| x.1).fold(0.0, f64::max);
            let corner = s.corner_residuals.iter().map(|x| x.1).fold(0.0, f64::max);
            let st = if worst <= 1e-10 { Status::TolPass } else { Status::Fail };
            rep.push_detail("strong_intertwining", "e^{itA} B - B e^{itA}", st, worst, format!("compressed to the low corner: {:.3e}", corner));
            let fit = fit_energy_bound(&m.voa.module.action, &m.voa.nu, 1.0)?;
            rep.push_detail("energy_bound_fit", "Y(ν)", Status::TolPass, 0.0, format!("M = {:.4}, t = {}", fit.m, fit.t));
        }
    }
    Ok(rep)
}

/// (M, t) for w = ν across a range of free-boson cutoffs, with the 10% stability verdict.
pub fn energy_fit_stability(cutoffs: &[i64]) -> Result<(Vec<(i64, f64, f64)>, bool)> {
    let mut fits = Vec::new();
    for &c in cutoffs {
        let b = build_free_boson::<C>(c)?;
        fits.push(fit_energy_bound(&b.voa.module.action, &b.voa.nu, 1.0)?);
    }
    let ok = fits_stable(&fits, 0.1);
    Ok((cutoffs.iter().zip(&fits).map(|(c, f)| (*c, f.m, f.t)).collect(), ok))
}

/// Category data of a VOA model: fusion matrices extracted from correlators, snapped to Q(ζ_8).
/// Returns the data and the half-sample spread of the float extraction.
pub fn category_from_model(kind: ModelKind, cutoff: i64) -> Result<(CategoryData<crate::scalar::Cyc8>, f64)> {
    let model = Model::<C>::build(kind, cutoff)?;
    let fam = model.family()?;
    let bases: BTreeMap<[usize; 3], &Intertwiner<C>> = model.intertwiners().into_iter().map(|(_, k, a)| (k, a)).collect();
    let modules = model.modules();
    let src = VoaCategorySource { dual: (0..modules.len()).collect(), modules, bases, family: &fam };
    let ex = extract_from_voa(&src, &default_fusion_points(), 1e-9)?;
    Ok((snap_exact(&ex.data, 1e-8)?, ex.spread))
}

/// Cutoff used for lattice category extraction: below 8 the fusion coefficients are not
/// yet recognizable in Q(ζ_8).
pub const EXTRACTION_CUTOFF: i64 = 8;

/// Axioms of a category plus its negative controls, each of which must fail its target.
pub fn category_suite<S: Scalar>(c: &CategoryData<S>, tol: f64) -> Result<Report> {
    let mut rep = full_check(c, tol)?;
    let ctl_tol = if S::EXACT { 1e-12 } else { tol.max(1e-12) };
    for ctl in negative_controls(&c.to_c64()) {
        let failed = control_fails(&ctl, ctl_tol)?;
        let st = if failed { Status::TolPass } else { Status::Fail };
        rep.push_detail("negative_control", ctl.name.clone(), st, if failed { 0.0 } else { 1.0 }, format!("must fail {}", ctl.target));
    }
    Ok(rep)
}
