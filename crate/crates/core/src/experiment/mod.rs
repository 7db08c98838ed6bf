//! Config-driven batch runner behind the `anderson-lab` binary.
//!
//! Every command reads an [`ExperimentConfig`], runs inside a rayon pool of
//! the requested size and writes CSV tables (see [`output`]) carrying the
//! schema version, a fingerprint of the config and the domain. Random
//! streams are derived per task index from the master seed, so outputs are
//! byte-identical for any worker count.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::ExperimentConfig;
use output::{fingerprint, fmt_f64, fmt_opt, CsvTable};

use crate::error::{LabError, Result};
use crate::feynman_kac::{estimate, estimate_mass_mean, EpsRule, FkConfig, MomentEstimate, MomentTarget};
use crate::geometry::{minkowski_fit, BoundaryNeighborhood, PlanarDomain};
use crate::local_times::{approx_silt_with, silt_mean_asymptotic, silt_mean_exact};
use crate::paths::{sample_bridge, sample_motion, PathKind};
use crate::recovery::{self, SeriesPoint};
use crate::rng::{mix_words, RandomStream};
use crate::spectral::{model_for_domain, SpectralModel};
use crate::stats::mean_and_se;

/// Overflow rate above which a trace/mass row invalidates the run.
pub const MAX_OVERFLOW_RATE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SiltValidate,
    Trace,
    Mass,
    Recover,
    Minkowski,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SiltValidate => "silt-validate",
            Command::Trace => "trace",
            Command::Mass => "mass",
            Command::Recover => "recover",
            Command::Minkowski => "minkowski",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silt-validate" => Ok(Command::SiltValidate),
            "trace" => Ok(Command::Trace),
            "mass" => Ok(Command::Mass),
            "recover" => Ok(Command::Recover),
            "minkowski" => Ok(Command::Minkowski),
            _ => Err(LabError::arg(format!("unknown command `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Pass,
    /// Statistical-quality failure (exit code 2), with the offending items.
    QualityFailure(Vec<String>),
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::QualityFailure(_) => 2,
        }
    }
}

/// Exit code for an error: all errors are usage, config or schema errors.
pub fn error_exit_code(_: &LabError) -> i32 {
    1
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    command: Command,
    seed: u64,
    out_dir: PathBuf,
}

impl Ctx<'_> {
    fn table(&self, columns: &[&str]) -> Result<CsvTable> {
        let canonical = self.cfg.canonical(self.command.name())?;
        let mut t = CsvTable::new(columns)
            .with_meta("command", self.command.name())
            .with_meta("fingerprint", fingerprint(&canonical));
        if self.cfg.domain.is_some() {
            let d = self.cfg.domain()?;
            t = t.with_meta("domain", d.describe()).with_meta("domain_fingerprint", fingerprint(&d.describe()));
        }
        Ok(t.with_meta("seed", self.seed.to_string()))
    }

    fn write(&self, table: &CsvTable, name: &str, files: &mut Vec<PathBuf>) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        table.write(&path)?;
        files.push(path);
        Ok(())
    }
}

/// Runs `command` with `cfg`. Errors map to exit code 1; statistical
/// failures are reported in the returned [`Outcome`].
pub fn run(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let out_dir = match (&opts.out_dir, &cfg.out_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => cfg.resolve(d),
        (None, None) => PathBuf::from("out"),
    };
    let workers = opts
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return Err(LabError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let ctx = Ctx { cfg: &cfg, command, seed: cfg.seed, out_dir };
    pool.install(|| match command {
        Command::SiltValidate => silt_validate(&ctx),
        Command::Trace => moments(&ctx, true),
        Command::Mass => moments(&ctx, false),
        Command::Recover => recover(&ctx),
        Command::Minkowski => minkowski(&ctx),
    })
}

pub const SILT_COLUMNS: [&str; 12] = [
    "t",
    "eps",
    "kind",
    "region",
    "n_paths",
    "n_steps",
    "mc_mean",
    "mc_se",
    "exact_mean",
    "discrete_mean",
    "asymptotic_mean",
    "pass",
];

fn silt_validate(ctx: &Ctx<'_>) -> Result<Outcome> {
    let section = ctx.cfg.silt_validate.as_ref().ok_or_else(|| LabError::Config("missing [silt_validate] section".into()))?;
    let cases = section.cases()?;
    let mut table = ctx.table(&SILT_COLUMNS)?;
    let mut failures = Vec::new();
    for (c, case) in cases.iter().enumerate() {
        let label = mix_words(&[0x5117, c as u64]);
        let n = section.n_steps;
        let values: Vec<f64> = (0..section.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = RandomStream::derive(ctx.seed, label, i as u64);
                let path = match case.kind {
                    PathKind::Motion => sample_motion(crate::Point2::ORIGIN, case.t, n, &mut rng)?,
                    PathKind::Bridge => sample_bridge(crate::Point2::ORIGIN, case.t, n, &mut rng)?,
                };
                approx_silt_with(&path, case.eps, case.region, section.kernel())
            })
            .collect::<Result<_>>()?;
        let mc = mean_and_se(&values);
        let exact = silt_mean_exact(case.kind, case.t, case.eps, case.region, None)?;
        let discrete = silt_mean_exact(case.kind, case.t, case.eps, case.region, Some(n))?;
        let asymptotic = silt_mean_asymptotic(case.t, case.eps, case.kind, case.region)?;
        let pass = (mc.mean - exact).abs() <= 3.0 * mc.std_error;
        if !pass {
            failures.push(format!(
                "{} t={} eps={} {}: mc={}±{} exact={}",
                case.kind.as_str(),
                case.t,
                case.eps,
                case.region.label(),
                mc.mean,
                mc.std_error,
                exact
            ));
        }
        table.push(vec![
            fmt_f64(case.t),
            fmt_f64(case.eps),
            case.kind.as_str().to_string(),
            case.region.label(),
            section.n_paths.to_string(),
            n.to_string(),
            fmt_f64(mc.mean),
            fmt_f64(mc.std_error),
            fmt_f64(exact),
            fmt_f64(discrete),
            fmt_f64(asymptotic),
            pass.to_string(),
        ]);
    }
    let mut files = Vec::new();
    ctx.write(&table, "silt_validate.csv", &mut files)?;
    Ok(Outcome { status: status_of(failures), files })
}

fn status_of(failures: Vec<String>) -> Status {
    if failures.is_empty() {
        Status::Pass
    } else {
        Status::QualityFailure(failures)
    }
}

pub const MOMENT_COLUMNS: [&str; 11] = [
    "t",
    "kappa",
    "estimate",
    "std_error",
    "prefactor",
    "n_outer",
    "n_steps",
    "eps",
    "overflow_count",
    "reference",
    "ref_gap",
];

fn moment_row(e: &MomentEstimate, reference: Option<f64>, ref_gap: Option<f64>) -> Vec<String> {
    vec![
        fmt_f64(e.t),
        fmt_f64(e.kappa),
        fmt_f64(e.value),
        fmt_f64(e.std_error),
        fmt_f64(e.prefactor),
        e.n_outer.to_string(),
        e.n_steps.to_string(),
        fmt_f64(e.eps),
        e.overflow_count.to_string(),
        fmt_opt(reference),
        fmt_opt(ref_gap),
    ]
}

fn reference_model(domain: &PlanarDomain, ts: &[f64]) -> Result<Option<SpectralModel>> {
    let t_min = ts.iter().copied().fold(f64::INFINITY, f64::min);
    model_for_domain(domain, t_min)
}

fn moments(ctx: &Ctx<'_>, trace: bool) -> Result<Outcome> {
    let (section, name) = if trace { (&ctx.cfg.trace, "trace") } else { (&ctx.cfg.mass, "mass") };
    let section = section.as_ref().ok_or_else(|| LabError::Config(format!("missing [{name}] section")))?;
    section.validate()?;
    let domain = ctx.cfg.domain()?;
    let model = reference_model(&domain, &section.t)?;
    let base = section.fk_config(ctx.seed);
    let (mean_target, var_target) = if trace {
        (MomentTarget::TraceMean, MomentTarget::TraceVar)
    } else {
        (MomentTarget::MassMean, MomentTarget::MassVar)
    };
    let mut means = ctx.table(&MOMENT_COLUMNS)?;
    let mut vars = ctx.table(&MOMENT_COLUMNS)?;
    let mut failures = Vec::new();
    for &t in &section.t {
        let reference = match &model {
            Some(m) if trace => Some(m.heat_trace(t)?),
            Some(m) => Some(m.heat_content(t)?),
            None => None,
        };
        for &kappa in &section.kappa {
            // κ = 0 rows are plain survival Monte Carlo, so the reference
            // column is an independent check.
            let cfg = FkConfig { control_variate: base.control_variate && kappa != 0.0, ..base.clone() };
            let e = estimate(mean_target, &domain, kappa, t, &cfg, model.as_ref())?;
            check_overflow(&e, &mut failures);
            let gap = match (kappa == 0.0, reference) {
                (true, Some(r)) => Some((e.value - r) / r),
                _ => None,
            };
            means.push(moment_row(&e, reference, gap));
            if section.variance {
                let v = estimate(var_target, &domain, kappa, t, &base, None)?;
                check_overflow(&v, &mut failures);
                vars.push(moment_row(&v, None, None));
            }
        }
    }
    let mut files = Vec::new();
    ctx.write(&means, &format!("{name}.csv"), &mut files)?;
    if section.variance {
        ctx.write(&vars, &format!("{name}_variance.csv"), &mut files)?;
    }
    Ok(Outcome { status: status_of(failures), files })
}

fn check_overflow(e: &MomentEstimate, failures: &mut Vec<String>) {
    if e.overflow_rate() > MAX_OVERFLOW_RATE {
        failures.push(format!(
            "{} t={} kappa={}: {} overflow events ({:.2e} of samples)",
            e.target.as_str(),
            e.t,
            e.kappa,
            e.overflow_count,
            e.overflow_rate()
        ));
    }
}

pub const RECOVER_COLUMNS: [&str; 6] = ["estimator", "kappa", "t", "estimate", "std_error", "rate_condition"];

/// Series read from a trace/mass CSV.
struct LoadedSeries {
    /// κ = 0 series, preferring the exact reference column when present.
    zero: Vec<SeriesPoint>,
    rows: Vec<(f64, SeriesPoint)>,
}

fn load_series(ctx: &Ctx<'_>, file: &str, command: &str, force: bool) -> Result<LoadedSeries> {
    let path = ctx.cfg.resolve(file);
    let table = CsvTable::read(&path)?;
    if table.meta_value("command") != Some(command) {
        return Err(LabError::Schema(format!("{} is not a `{command}` table", path.display())));
    }
    if table.columns != MOMENT_COLUMNS {
        return Err(LabError::Schema(format!("{}: unexpected columns", path.display())));
    }
    let domain = ctx.cfg.domain()?;
    let expected = fingerprint(&domain.describe());
    if table.meta_value("domain_fingerprint") != Some(expected.as_str()) && !force {
        return Err(LabError::Schema(format!(
            "{} was produced for another domain ({}); set force = true to use it anyway",
            path.display(),
            table.meta_value("domain").unwrap_or("unknown")
        )));
    }
    let mut rows = Vec::new();
    let mut references: Vec<(f64, f64)> = Vec::new();
    for i in 0..table.rows.len() {
        let get = |c: &str| table.number(i, c)?.ok_or_else(|| LabError::Schema(format!("row {}: empty `{c}`", i + 1)));
        let t = get("t")?;
        let p = SeriesPoint::new(t, get("estimate")?, get("std_error")?);
        rows.push((get("kappa")?, p));
        if let Some(r) = table.number(i, "reference")? {
            if !references.iter().any(|(s, _)| *s == t) {
                references.push((t, r));
            }
        }
    }
    let mut zero = Vec::new();
    for (k, p) in &rows {
        if *k == 0.0 && !zero.iter().any(|q: &SeriesPoint| q.t == p.t) {
            let exact = references.iter().find(|(s, _)| *s == p.t).map(|(_, r)| *r);
            zero.push(exact.map_or(*p, |r| SeriesPoint::exact(p.t, r)));
        }
    }
    for (t, r) in references {
        if !zero.iter().any(|q| q.t == t) {
            zero.push(SeriesPoint::exact(t, r));
        }
    }
    Ok(LoadedSeries { zero, rows })
}

fn recover(ctx: &Ctx<'_>) -> Result<Outcome> {
    let section = ctx.cfg.recover.as_ref().ok_or_else(|| LabError::Config("missing [recover] section".into()))?;
    section.validate()?;
    let domain = ctx.cfg.domain()?;
    let area = section.area.unwrap_or_else(|| domain.area());
    let wants = |e: &str| section.estimators.iter().any(|x| x == e);
    let mut trace_zero = Vec::new();
    let mut trace_rows = Vec::new();
    let mut mass_zero = Vec::new();
    if section.source == "spectral" {
        let ts = section.t.clone().unwrap_or_default();
        let model = reference_model(&domain, &ts)?
            .ok_or_else(|| LabError::Config(format!("no spectral model for {}", domain.describe())))?;
        for &t in &ts {
            trace_zero.push(SeriesPoint::exact(t, model.heat_trace(t)?));
            mass_zero.push(SeriesPoint::exact(t, model.heat_content(t)?));
        }
    } else {
        if let Some(f) = &section.trace_csv {
            let s = load_series(ctx, f, "trace", section.force)?;
            trace_zero = s.zero;
            trace_rows = s.rows;
        }
        if let Some(f) = &section.mass_csv {
            mass_zero = load_series(ctx, f, "mass", section.force)?.zero;
        }
    }
    let need = |s: &Vec<SeriesPoint>, what: &str| -> Result<()> {
        if s.is_empty() {
            Err(LabError::Config(format!("estimator `{what}` needs a κ = 0 series")))
        } else {
            Ok(())
        }
    };
    let mut table = ctx.table(&RECOVER_COLUMNS)?;
    let ts = |s: &[SeriesPoint]| s.iter().map(|p| p.t).collect::<Vec<_>>();
    let t_min = |s: &[SeriesPoint]| s.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
    let row = |name: &str, kappa: f64, t: f64, est: f64, se: Option<f64>, rate: &str| {
        vec![name.to_string(), fmt_f64(kappa), fmt_f64(t), fmt_f64(est), fmt_opt(se), rate.to_string()]
    };
    if wants("area") {
        need(&trace_zero, "area")?;
        let e = recovery::recover_area(&trace_zero)?;
        table.push(row("area", 0.0, t_min(&trace_zero), e.estimate, Some(e.std_error), &recovery::rate_condition(&ts(&trace_zero))));
    }
    if wants("perimeter") {
        need(&trace_zero, "perimeter")?;
        let e = recovery::recover_perimeter(&trace_zero, area)?;
        table.push(row("perimeter", 0.0, t_min(&trace_zero), e.estimate, Some(e.std_error), &recovery::rate_condition(&ts(&trace_zero))));
    }
    if wants("kappa2") {
        need(&trace_zero, "kappa2")?;
        let kappa = section
            .kappa
            .or_else(|| trace_rows.iter().map(|(k, _)| *k).find(|k| *k != 0.0))
            .ok_or_else(|| LabError::Config("kappa2 needs rows with κ ≠ 0".into()))?;
        let series_k: Vec<SeriesPoint> = trace_rows.iter().filter(|(k, _)| *k == kappa).map(|(_, p)| *p).collect();
        let zero: Vec<SeriesPoint> =
            trace_zero.iter().copied().filter(|z| series_k.iter().any(|p| p.t == z.t)).collect();
        let r = recovery::recover_kappa2(&series_k, &zero, area)?;
        let rate = recovery::rate_condition(&ts(&series_k));
        for p in &r.pointwise {
            table.push(row("kappa2_pointwise", kappa, p.t, p.estimate, Some(p.std_error), &rate));
        }
        table.push(row("kappa2", kappa, t_min(&series_k), r.headline.estimate, Some(r.headline.std_error), &rate));
    }
    if wants("minkowski") {
        need(&mass_zero, "minkowski")?;
        let r = recovery::recover_minkowski(&mass_zero, area)?;
        let rate = recovery::rate_condition(&ts(&mass_zero));
        for p in &r.pointwise {
            table.push(row("minkowski_pointwise", 0.0, p.t, p.estimate, Some(p.std_error), &rate));
        }
        table.push(row("minkowski", 0.0, t_min(&mass_zero), r.slope_fit, None, &rate));
    }
    let mut files = Vec::new();
    ctx.write(&table, "recover.csv", &mut files)?;
    Ok(Outcome { status: Status::Pass, files })
}

pub const MINKOWSKI_COLUMNS: [&str; 4] = ["r", "area_estimate", "std_error", "fit_dimension"];
pub const MINKOWSKI_MASS_COLUMNS: [&str; 5] = ["t", "mass", "std_error", "pointwise_dimension", "fit_dimension"];

fn minkowski(ctx: &Ctx<'_>) -> Result<Outcome> {
    let section = ctx.cfg.minkowski.as_ref().ok_or_else(|| LabError::Config("missing [minkowski] section".into()))?;
    section.validate()?;
    let domain = ctx.cfg.domain()?;
    let mut tubes: Vec<BoundaryNeighborhood> = Vec::with_capacity(section.r.len());
    for (k, &r) in section.r.iter().enumerate() {
        tubes.push(domain.boundary_neighborhood_area_seeded(r, section.n_samples, ctx.seed, mix_words(&[0x4d1, k as u64]))?);
    }
    let mut failures: Vec<String> =
        tubes.iter().filter(|b| b.hits == 0).map(|b| format!("r={}: no samples hit the boundary tube", b.r)).collect();
    let fit = if failures.is_empty() { Some(minkowski_fit(&tubes)?) } else { None };
    let mut table = ctx.table(&MINKOWSKI_COLUMNS)?;
    for b in &tubes {
        table.push(vec![fmt_f64(b.r), fmt_f64(b.area_estimate), fmt_f64(b.std_error), fmt_opt(fit)]);
    }
    let mut files = Vec::new();
    ctx.write(&table, "minkowski.csv", &mut files)?;

    if section.via_mass {
        let ts = section.mass_t.clone().unwrap_or_default();
        let cfg = FkConfig {
            eps: EpsRule::default(),
            n_steps: section.mass_n_steps,
            n_outer: section.mass_n_outer.unwrap_or(0),
            control_variate: false,
            seed: ctx.seed,
            ..FkConfig::default()
        };
        let series: Vec<SeriesPoint> = ts
            .iter()
            .map(|&t| estimate_mass_mean(&domain, 0.0, t, &cfg, None).map(|e| SeriesPoint::new(t, e.value, e.std_error)))
            .collect::<Result<_>>()?;
        let mut mass = ctx.table(&MINKOWSKI_MASS_COLUMNS)?;
        match recovery::recover_minkowski(&series, domain.area()) {
            Ok(r) => {
                for p in &r.pointwise {
                    let s = series.iter().find(|s| s.t == p.t).expect("same grid");
                    mass.push(vec![fmt_f64(p.t), fmt_f64(s.value), fmt_f64(s.std_error), fmt_f64(p.estimate), fmt_f64(r.slope_fit)]);
                }
            }
            Err(LabError::NonPositive { index, value }) => {
                failures.push(format!("mass series point {index}: A - M = {value} is not positive (undersampled)"));
                for s in &series {
                    mass.push(vec![fmt_f64(s.t), fmt_f64(s.value), fmt_f64(s.std_error), String::new(), String::new()]);
                }
            }
            Err(e) => return Err(e),
        }
        ctx.write(&mass, "minkowski_mass.csv", &mut files)?;
    }
    Ok(Outcome { status: status_of(failures), files })
}

/// Loads the config at `path` and runs `command`.
pub fn run_file(command: Command, path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let cfg = ExperimentConfig::load(path)?;
    run(command, &cfg, opts)
}
