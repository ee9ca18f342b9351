//! Command-line front end. Machine output (JSON) goes to stdout, human text to stderr.
//! Exit codes: 0 all checks pass, 1 a check fails, 2 usage error or invalid input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{
    check_rotation_covariance, check_smeared_adjoint, check_smeared_braid, check_smeared_product, check_sobolev_lift, phase_symmetric, fit_energy_bound, strong_intertwining,
    TestFunction,
};
use crate::category::{full_check, CategoryJson};
use crate::correlate::{bra, eval_product};
use crate::error::Error;
use crate::models::build_ising_category_seeded;
use crate::report::{Report, Status};
use crate::scalar::{default_tol, Cyc8};
use crate::suite::{
    analytic_suite, category_from_model, category_suite, correlators_suite, points, voa_suite, Backend, Model, ModelFile, ModelKind, EXTRACTION_CUTOFF, SCHEMA_VERSION,
};
use crate::transforms::{apply, TransformTag};

#[derive(Parser, Debug)]
#[command(name = "voacalc", version, about = "Intertwining-operator calculus for unitary rational VOAs at finite truncation")]
pub struct Cli {
    /// model file (JSON)
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// energy cutoff, overriding the model file
    #[arg(long, global = true)]
    pub cutoff: Option<i64>,
    /// float tolerance (default: VOACALC_TOL or 1e-10; relation checks have their own defaults)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// worker threads
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// seed for the category solver and randomized checks
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteName {
    Voa,
    Category,
    Correlators,
    Analytic,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Relation {
    Adjoint,
    Product,
    Braid,
    Rotation,
    Strong,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// write model files
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
    /// run one verifier
    Verify {
        #[command(subcommand)]
        what: VerifyCmd,
    },
    /// run a named checker suite
    Suite {
        name: SuiteName,
        /// category data (JSON) for the category suite
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// evaluate ⟨φ, 𝒴_n(w_n, z_n)⋯𝒴_1(w_1, z_1) x⟩ in the product region
    Corr {
        /// intertwiner names, innermost first (repeat)
        #[arg(long = "chain", required = true)]
        chain: Vec<String>,
        /// insertion vectors such as v:2, h:-1 or v:0:1,1 (repeat)
        #[arg(long = "insert", required = true, allow_hyphen_values = true)]
        insert: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        /// points as re,im (repeat)
        #[arg(long = "point", required = true, allow_hyphen_values = true)]
        point: Vec<String>,
    },
    /// apply a transform and check it against its inverse
    Transform {
        /// braid+, braid-, contra, contra-inv, adjoint, conjugate
        #[arg(long)]
        op: String,
        #[arg(long)]
        intertwiner: String,
    },
    /// energy bounds
    Bounds {
        #[command(subcommand)]
        cmd: BoundsCmd,
    },
    /// smeared-field relations
    Smear {
        #[command(subcommand)]
        cmd: SmearCmd,
    },
}

#[derive(Subcommand, Debug)]
pub enum ModelCmd {
    Build {
        #[arg(long, value_enum)]
        kind: ModelKind,
        #[arg(long, value_enum, default_value = "exact")]
        backend: Backend,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    Voa,
    Category {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum BoundsCmd {
    Fit {
        #[arg(long)]
        intertwiner: String,
        #[arg(long, allow_hyphen_values = true)]
        w: String,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum SmearCmd {
    Check {
        #[arg(long, value_enum)]
        relation: Relation,
        /// test function, e.g. {"kind":"bump","arc":[0,1.5708]}
        #[arg(long)]
        f: String,
        /// second test function for product, braid and strong
        #[arg(long)]
        g: Option<String>,
    },
}

/// Test function spec: bump on an arc, a single Fourier mode, or a bump made to satisfy the
/// reality condition for a field of weight `delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnSpec {
    pub kind: String,
    #[serde(default)]
    pub arc: Option<[f64; 2]>,
    #[serde(default)]
    pub mode: Option<i64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub grid_log2: Option<u32>,
}

impl FnSpec {
    pub fn build(&self) -> crate::Result<TestFunction> {
        let arc = || self.arc.ok_or_else(|| Error::Invalid(format!("{} needs \"arc\"", self.kind)));
        let f = match self.kind.as_str() {
            "bump" => {
                let [a, b] = arc()?;
                TestFunction::bump(a, b)?
            }
            "symmetric-bump" => {
                let [a, b] = arc()?;
                phase_symmetric(&TestFunction::bump(a, b)?, self.delta.unwrap_or(2.0))
            }
            "mode" => TestFunction::single_mode(self.mode.ok_or_else(|| Error::Invalid("mode needs \"mode\"".into()))?),
            k => return Err(Error::Invalid(format!("unknown test function kind {:?}", k))),
        };
        Ok(match self.grid_log2 {
            Some(g) => f.with_grid(g),
            None => f,
        })
    }
}

enum Failure {
    Usage(String),
    Run(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

struct Outcome {
    report: Report,
    value: Option<Value>,
    timings: BTreeMap<String, f64>,
}

impl Outcome {
    fn new(report: Report) -> Self {
        Outcome { report, value: None, timings: BTreeMap::new() }
    }
}

#[derive(Serialize)]
struct Output<'a> {
    schema_version: u32,
    command: String,
    passed: bool,
    summary: String,
    report: &'a Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: &'a Option<Value>,
    /// wall-clock seconds; not part of the reproducible output
    timings: &'a BTreeMap<String, f64>,
}

struct Ctx {
    cutoff: Option<i64>,
    model: Option<PathBuf>,
    tol: Option<f64>,
    seed: Option<u64>,
}

impl Ctx {
    fn tol(&self) -> f64 {
        self.tol.unwrap_or_else(default_tol)
    }

    fn model_file(&self) -> Result<ModelFile, Failure> {
        let path = self.model.as_ref().ok_or_else(|| usage("--model is required for this command"))?;
        let mut m = ModelFile::from_json(&read(path)?).map_err(usage)?;
        if let Some(c) = self.cutoff {
            m.cutoff = c;
            m.validate().map_err(usage)?;
        }
        Ok(m)
    }

    fn float_model(&self) -> Result<(ModelFile, Model<C>), Failure> {
        let f = self.model_file()?;
        let m = Model::<C>::build(f.kind, f.cutoff).map_err(usage)?;
        Ok((f, m))
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {}", path.display(), e)))
}

fn load_category(path: &Path) -> Result<crate::category::CategoryData<C>, Failure> {
    let j: CategoryJson = serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {}", path.display(), e)))?;
    j.into_data().map_err(usage)
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.insert(name.into(), t.elapsed().as_secs_f64());
    out
}

fn voa_report(ctx: &Ctx) -> Result<Report, Failure> {
    let f = ctx.model_file()?;
    match f.backend {
        Backend::Exact => {
            let m = Model::<Cyc8>::build(f.kind, f.cutoff).map_err(usage)?;
            voa_suite(&f, &m, 0.0).map_err(run_err)
        }
        Backend::Float => {
            let m = Model::<C>::build(f.kind, f.cutoff).map_err(usage)?;
            voa_suite(&f, &m, ctx.tol()).map_err(run_err)
        }
    }
}

fn category_report(ctx: &Ctx, input: Option<&Path>) -> Result<Report, Failure> {
    match input {
        Some(p) => category_suite(&load_category(p)?, ctx.tol().max(1e-12)).map_err(run_err),
        None => {
            let f = ctx.model_file()?;
            let (c, spread) = category_from_model(f.kind, f.cutoff.max(EXTRACTION_CUTOFF)).map_err(run_err)?;
            let mut rep = Report::new();
            rep.push_detail("extraction_spread", "half samples", Status::TolPass, spread, format!("cutoff {}", f.cutoff.max(EXTRACTION_CUTOFF)));
            rep.extend(category_suite(&c, 0.0).map_err(run_err)?);
            Ok(rep)
        }
    }
}

fn suite(ctx: &Ctx, name: SuiteName, input: Option<&Path>) -> Result<Outcome, Failure> {
    let names: Vec<SuiteName> = match name {
        SuiteName::All => vec![SuiteName::Voa, SuiteName::Correlators, SuiteName::Analytic, SuiteName::Category],
        n => vec![n],
    };
    if input.is_none() || names.len() > 1 {
        ctx.model_file()?;
    }
    let one = |n: SuiteName| -> (Result<Report, Failure>, f64) {
        let t = Instant::now();
        let r = match n {
            SuiteName::Voa => voa_report(ctx),
            SuiteName::Correlators => ctx.float_model().and_then(|(_, m)| correlators_suite(&m, ctx.tol()).map_err(run_err)),
            SuiteName::Analytic => ctx.float_model().and_then(|(_, m)| analytic_suite(&m, ctx.tol()).map_err(run_err)),
            SuiteName::Category => category_report(ctx, input),
            SuiteName::All => unreachable!(),
        };
        (r, t.elapsed().as_secs_f64())
    };
    let results: Vec<(Result<Report, Failure>, f64)> = names.par_iter().map(|n| one(*n)).collect();
    let mut out = Outcome::new(Report::new());
    for (n, (r, secs)) in names.iter().zip(results) {
        let label = format!("{:?}", n).to_lowercase();
        out.timings.insert(label.clone(), secs);
        match r {
            Ok(rep) => out.report.extend(rep),
            Err(Failure::Run(e)) => out.report.push_detail("suite_error", label, Status::Fail, f64::INFINITY, e),
            Err(u) => return Err(u),
        }
    }
    Ok(out)
}

fn parse_point(s: &str) -> Result<[f64; 2], Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || usage(format!("bad point {:?} (expected re,im)", s));
    if parts.len() != 2 {
        return Err(bad());
    }
    Ok([parts[0].trim().parse().map_err(|_| bad())?, parts[1].trim().parse().map_err(|_| bad())?])
}

fn parse_fn(s: &str) -> Result<TestFunction, Failure> {
    let spec: FnSpec = serde_json::from_str(s).map_err(|e| usage(format!("test function {:?}: {}", s, e)))?;
    spec.build().map_err(usage)
}

fn corr(ctx: &Ctx, chain: &[String], insert: &[String], x: &str, phi: &str, point: &[String]) -> Result<Outcome, Failure> {
    let (_, m) = ctx.float_model()?;
    let alphas = chain.iter().map(|n| m.intertwiner(n)).collect::<crate::Result<Vec<_>>>().map_err(usage)?;
    let ins = insert.iter().map(|s| m.vector(s)).collect::<crate::Result<Vec<_>>>().map_err(usage)?;
    let (xv, pv) = (m.vector(x).map_err(usage)?, m.vector(phi).map_err(usage)?);
    let pts: Vec<[f64; 2]> = point.iter().map(|p| parse_point(p)).collect::<Result<_, _>>()?;
    let v = eval_product(&alphas, &ins, &xv, &bra(&pv), &points(&pts)).map_err(usage)?;
    let mut rep = Report::new();
    rep.tol("series_ratio", chain.join("·"), v.ratio, 0.95);
    let mut out = Outcome::new(rep);
    out.value = Some(serde_json::to_value(v).map_err(run_err)?);
    Ok(out)
}

fn inverse(t: TransformTag) -> TransformTag {
    match t {
        TransformTag::BraidPlus => TransformTag::BraidMinus,
        TransformTag::BraidMinus => TransformTag::BraidPlus,
        TransformTag::Contra => TransformTag::ContraInv,
        TransformTag::ContraInv => TransformTag::Contra,
        t => t,
    }
}

fn transform(ctx: &Ctx, op: &str, name: &str) -> Result<Outcome, Failure> {
    let tag: TransformTag = op.parse().map_err(usage)?;
    let f = ctx.model_file()?;
    let run = |rep: &mut Report, exact: bool, tol: f64, res: (String, f64)| {
        rep.backend(exact, "involution", format!("{} {}", op, name), res.1, tol);
        res.0
    };
    let mut rep = Report::new();
    let label = match f.backend {
        Backend::Exact => {
            let m = Model::<Cyc8>::build(f.kind, f.cutoff).map_err(usage)?;
            let fam = m.family().map_err(run_err)?;
            let a = m.intertwiner(name).map_err(usage)?;
            let b = apply(tag, a, &fam).map_err(run_err)?;
            let back = apply(inverse(tag), &b, &fam).map_err(run_err)?;
            run(&mut rep, true, 0.0, (b.type_label(), a.dist(&back).map_err(run_err)?))
        }
        Backend::Float => {
            let m = Model::<C>::build(f.kind, f.cutoff).map_err(usage)?;
            let fam = m.family().map_err(run_err)?;
            let a = m.intertwiner(name).map_err(usage)?;
            let b = apply(tag, a, &fam).map_err(run_err)?;
            let back = apply(inverse(tag), &b, &fam).map_err(run_err)?;
            run(&mut rep, false, ctx.tol(), (b.type_label(), a.dist(&back).map_err(run_err)?))
        }
    };
    let mut out = Outcome::new(rep);
    out.value = Some(json!({ "type": label }));
    Ok(out)
}

fn bounds_fit(ctx: &Ctx, name: &str, w: &str, r: f64) -> Result<Outcome, Failure> {
    let (_, m) = ctx.float_model()?;
    let a = m.intertwiner(name).map_err(usage)?;
    let wv = m.vector(w).map_err(usage)?;
    let fit = fit_energy_bound(a, &wv, r).map_err(run_err)?;
    let mut rep = Report::new();
    for p in [-1.0, 0.0, 1.0, 2.0] {
        rep.extend(check_sobolev_lift(a, &wv, &fit, p).map_err(run_err)?);
    }
    let mut out = Outcome::new(rep);
    out.value = Some(json!({ "r": fit.r, "M": fit.m, "t": fit.t }));
    Ok(out)
}

fn smear_check(ctx: &Ctx, rel: Relation, f: &str, g: Option<&str>) -> Result<Outcome, Failure> {
    let (_, model) = ctx.float_model()?;
    let Model::Lattice(m) = &model else {
        return Err(usage("smeared relations are implemented for the lattice model"));
    };
    let fam = model.family().map_err(run_err)?;
    let f = parse_fn(f)?;
    let g = g.map(parse_fn).transpose()?;
    let need_g = || g.clone().ok_or_else(|| usage("this relation needs --g"));
    let (hp, hm) = (m.h_lowest(1), m.h_lowest(-1));
    let mut value = None;
    let rep = match rel {
        Relation::Adjoint => {
            let (mut rep, grid) = check_smeared_adjoint(&m.y_hh, &hp, &f, &fam, ctx.tol.unwrap_or(1e-8)).map_err(run_err)?;
            rep.tol("smeared_adjoint_grid", m.y_hh.label.clone(), grid, 1e-9);
            rep
        }
        Relation::Rotation => check_rotation_covariance(&m.y_hh, &hp, &f, &[0.1, -0.1, 0.2, -0.2], ctx.tol.unwrap_or(1e-8)).map_err(run_err)?,
        Relation::Product => {
            let omega = m.voa.vacuum.clone();
            let (rep, rel) = check_smeared_product(&m.y_h0, &m.y_hh, &hm, &hp, &f, &need_g()?, &[(omega.clone(), omega)], 48, ctx.tol.unwrap_or(1e-3)).map_err(usage)?;
            value = Some(json!({ "relative_error": rel }));
            rep
        }
        Relation::Braid => {
            let bp = m.y_hh.scale(&C::new(0.0, 1.0)).relabel("i·Y_hh");
            let (rep, res) = check_smeared_braid((&m.y_hh, &m.y_h0), (&bp, &m.y_h0), &hp, &hm, &f, &need_g()?, 1, ctx.tol.unwrap_or(1e-3)).map_err(usage)?;
            value = Some(json!({ "residual": res }));
            rep
        }
        Relation::Strong => {
            let ts: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
            let s = strong_intertwining(&m.wh, &m.voa.module, &m.y_hh, &m.voa.nu, &f, &hp, &need_g()?, &ts, 1).map_err(usage)?;
            let mut rep = Report::new();
            rep.tol("strong_intertwining_hermitian", "A = Y(ν, f)", s.hermitian_defect, 1e-12);
            let worst = s.residuals.iter().map(|x| x.1).fold(0.0, f64::max);
            rep.tol("strong_intertwining", "e^{itA} B - B e^{itA}", worst, ctx.tol.unwrap_or(1e-10));
            let corner = s.corner_residuals.iter().map(|x| x.1).fold(0.0, f64::max);
            value = Some(json!({ "residuals": s.residuals, "corner_residuals": s.corner_residuals, "corner_max": corner }));
            rep
        }
    };
    let mut out = Outcome::new(rep);
    out.value = value;
    Ok(out)
}

fn model_build(ctx: &Ctx, kind: ModelKind, backend: Backend, out: &Path) -> Result<Outcome, Failure> {
    let text = match kind {
        ModelKind::IsingCategory => {
            let c = build_ising_category_seeded(ctx.seed.unwrap_or(crate::models::ISING_SEED)).map_err(run_err)?;
            serde_json::to_string_pretty(&c.to_json()).map_err(run_err)?
        }
        _ => {
            let m = ModelFile::new(kind, ctx.cutoff.unwrap_or(6), backend);
            m.validate().map_err(usage)?;
            serde_json::to_string_pretty(&m).map_err(run_err)?
        }
    };
    std::fs::write(out, text + "\n").map_err(|e| usage(format!("{}: {}", out.display(), e)))?;
    let mut o = Outcome::new(Report::new());
    o.value = Some(json!({ "written": out.display().to_string() }));
    Ok(o)
}

fn dispatch(cli: &Cli) -> Result<Outcome, Failure> {
    let ctx = Ctx { cutoff: cli.cutoff, model: cli.model.clone(), tol: cli.tol, seed: cli.seed };
    let mut timings = BTreeMap::new();
    let mut out = timed(&mut timings, "total", || match &cli.cmd {
        Cmd::Model { cmd: ModelCmd::Build { kind, backend, out } } => model_build(&ctx, *kind, *backend, out),
        Cmd::Verify { what: VerifyCmd::Voa } => voa_report(&ctx).map(Outcome::new),
        Cmd::Verify { what: VerifyCmd::Category { input } } => {
            let c = load_category(input)?;
            full_check(&c, ctx.tol().max(1e-12)).map(Outcome::new).map_err(run_err)
        }
        Cmd::Suite { name, input } => suite(&ctx, *name, input.as_deref()),
        Cmd::Corr { chain, insert, x, phi, point } => corr(&ctx, chain, insert, x, phi, point),
        Cmd::Transform { op, intertwiner } => transform(&ctx, op, intertwiner),
        Cmd::Bounds { cmd: BoundsCmd::Fit { intertwiner, w, r } } => bounds_fit(&ctx, intertwiner, w, *r),
        Cmd::Smear { cmd: SmearCmd::Check { relation, f, g } } => smear_check(&ctx, *relation, f, g.as_deref()),
    })?;
    out.timings.extend(timings);
    Ok(out)
}

fn command_name(cmd: &Cmd) -> String {
    let s = match cmd {
        Cmd::Model { cmd: ModelCmd::Build { .. } } => "model build",
        Cmd::Verify { what: VerifyCmd::Voa } => "verify voa",
        Cmd::Verify { what: VerifyCmd::Category { .. } } => "verify category",
        Cmd::Suite { name, .. } => return format!("suite {}", name.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()),
        Cmd::Corr { .. } => "corr",
        Cmd::Transform { .. } => "transform",
        Cmd::Bounds { cmd: BoundsCmd::Fit { .. } } => "bounds fit",
        Cmd::Smear { cmd: SmearCmd::Check { .. } } => "smear check",
    };
    s.to_string()
}

fn print_text(rep: &Report) {
    for e in &rep.entries {
        let st = match e.status {
            Status::ExactPass => "exact",
            Status::TolPass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skip",
        };
        match &e.detail {
            Some(d) => eprintln!("{:5}  {:32} {:40} {:.3e}  {}", st, e.check, e.subject, e.residual, d),
            None => eprintln!("{:5}  {:32} {:40} {:.3e}", st, e.check, e.subject, e.residual),
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.tol {
        if !(t > 0.0) {
            eprintln!("error: --tol must be positive");
            return 2;
        }
    }
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return 2;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", e);
            return 2;
        }
    };
    let out = match pool.install(|| dispatch(&cli)) {
        Ok(o) => o,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {}", m);
            return 2;
        }
        Err(Failure::Run(m)) => {
            let mut o = Outcome::new(Report::new());
            o.report.push_detail("error", command_name(&cli.cmd), Status::Fail, f64::INFINITY, m);
            o
        }
    };
    let passed = out.report.passed();
    let summary = out.report.summary();
    match cli.format {
        Format::Json => {
            let o = Output {
                schema_version: SCHEMA_VERSION,
                command: command_name(&cli.cmd),
                passed,
                summary: summary.clone(),
                report: &out.report,
                value: &out.value,
                timings: &out.timings,
            };
            match serde_json::to_string_pretty(&o) {
                Ok(s) => println!("{}", s),
                Err(e) => {
                    eprintln!("error: {}", e);
                    return 1;
                }
            }
        }
        Format::Text => {
            print_text(&out.report);
            if let Some(v) = &out.value {
                eprintln!("{}", v);
            }
        }
    }
    for e in out.report.failures() {
        eprintln!("failed: {} [{}] residual {:.3e}{}", e.check, e.subject, e.residual, e.detail.as_ref().map(|d| format!(" ({})", d)).unwrap_or_default());
    }
    eprintln!("{}: {}", if passed { "passed" } else { "FAILED" }, summary);
    i32::from(!passed)
}
