//! Python bindings for `anderson_lab`.
//!
//! Long-running calls release the GIL and run on the rayon pool.

use std::path::PathBuf;

use anderson_lab::experiment::{self, Command, RunOptions, Status};
use anderson_lab::feynman_kac::{self, EpsRule, FkConfig, MomentTarget};
use anderson_lab::local_times::{self, KernelSum, TimeRegion};
use anderson_lab::paths::{self, DiscretePath, PathKind};
use anderson_lab::recovery::{self, SeriesPoint};
use anderson_lab::spectral;
use anderson_lab::{geometry, LabError, PlanarDomain, Point2, RandomStream};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(anderson_lab, AndersonLabError, PyValueError, "Error raised by the anderson_lab core.");

fn err(e: LabError) -> PyErr {
    AndersonLabError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = LabError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn region(s: &str) -> PyResult<TimeRegion> {
    TimeRegion::parse(s).map_err(err)
}

fn kernel(exact: bool) -> KernelSum {
    if exact {
        KernelSum::Exact
    } else {
        KernelSum::Truncated
    }
}

/// `(t, value, std_error)` triples as exchanged with Python.
type Triples = Vec<(f64, f64, f64)>;

fn series(points: Triples) -> Vec<SeriesPoint> {
    points.into_iter().map(|(t, v, se)| SeriesPoint::new(t, v, se)).collect()
}

/// Planar domain: rectangle, disk, polygon or Koch snowflake.
#[pyclass(name = "Domain", module = "anderson_lab", frozen)]
struct PyDomain {
    inner: PlanarDomain,
}

#[pymethods]
impl PyDomain {
    #[staticmethod]
    fn rectangle(width: f64, height: f64) -> PyResult<Self> {
        PlanarDomain::rectangle(width, height).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn unit_square() -> Self {
        Self { inner: PlanarDomain::unit_square() }
    }

    #[staticmethod]
    fn disk(radius: f64) -> PyResult<Self> {
        PlanarDomain::disk(radius).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn polygon(vertices: Vec<(f64, f64)>) -> PyResult<Self> {
        let v = vertices.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        PlanarDomain::polygon(v).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (level, side = 1.0))]
    fn koch(level: u32, side: f64) -> PyResult<Self> {
        PlanarDomain::koch(level, side).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    #[getter]
    fn perimeter(&self) -> f64 {
        self.inner.perimeter()
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.inner.contains(Point2::new(x, y))
    }

    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        self.inner.signed_distance(Point2::new(x, y))
    }

    /// Hit-or-miss estimate of the boundary tube area; returns
    /// `(area, std_error)`.
    #[pyo3(signature = (r, n_samples, seed = 0))]
    fn boundary_neighborhood_area(&self, py: Python<'_>, r: f64, n_samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let b = py.detach(|| self.inner.boundary_neighborhood_area_seeded(r, n_samples, seed, 0)).map_err(err)?;
        Ok((b.area_estimate, b.std_error))
    }

    /// Minkowski dimension from boundary tubes at the given half-widths.
    #[pyo3(signature = (rs, n_samples, seed = 0))]
    fn minkowski_dimension(&self, py: Python<'_>, rs: Vec<f64>, n_samples: usize, seed: u64) -> PyResult<f64> {
        py.detach(|| {
            let tubes = rs
                .iter()
                .enumerate()
                .map(|(k, &r)| self.inner.boundary_neighborhood_area_seeded(r, n_samples, seed, k as u64))
                .collect::<Result<Vec<_>, _>>()?;
            geometry::minkowski_fit(&tubes)
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.inner.describe())
    }
}

/// Sampled Brownian motion or bridge on a uniform grid.
#[pyclass(name = "Path", module = "anderson_lab", frozen)]
struct PyPath {
    inner: DiscretePath,
}

#[pymethods]
impl PyPath {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64)> {
        self.inner.positions().iter().map(|p| (p.x, p.y)).collect()
    }

    /// Whether the path survives in `domain`; with `correction` the
    /// Brownian-bridge crossing probability between grid points is used.
    #[pyo3(signature = (domain, correction = true, seed = 0))]
    fn survives(&self, domain: &PyDomain, correction: bool, seed: u64) -> bool {
        paths::survives(&self.inner, &domain.inner, correction, &mut RandomStream::new(seed)).survived
    }

    fn __len__(&self) -> usize {
        self.inner.positions().len()
    }
}

#[pyfunction]
#[pyo3(signature = (t, n_steps, seed, start = (0.0, 0.0)))]
fn sample_motion(t: f64, n_steps: usize, seed: u64, start: (f64, f64)) -> PyResult<PyPath> {
    let x = Point2::new(start.0, start.1);
    paths::sample_motion(x, t, n_steps, &mut RandomStream::new(seed)).map(|inner| PyPath { inner }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (t, n_steps, seed, start = (0.0, 0.0)))]
fn sample_bridge(t: f64, n_steps: usize, seed: u64, start: (f64, f64)) -> PyResult<PyPath> {
    let x = Point2::new(start.0, start.1);
    paths::sample_bridge(x, t, n_steps, &mut RandomStream::new(seed)).map(|inner| PyPath { inner }).map_err(err)
}

#[pyfunction]
fn gaussian_kernel(eps: f64, x: f64, y: f64) -> f64 {
    local_times::gaussian_kernel(eps, Point2::new(x, y))
}

#[pyfunction]
fn renorm_constant(kappa: f64, eps: f64) -> f64 {
    local_times::renorm_constant(kappa, eps)
}

/// Approximate self-intersection local time over `region`
/// (`"triangle"`, `"diag:a:b"` or `"rect:a:b:c:d"`).
#[pyfunction]
#[pyo3(signature = (path, eps, region = "triangle", exact_sum = false))]
fn approx_silt(path: &PyPath, eps: f64, region: &str, exact_sum: bool) -> PyResult<f64> {
    local_times::approx_silt_with(&path.inner, eps, self::region(region)?, kernel(exact_sum)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (path1, path2, eps, exact_sum = false))]
fn approx_milt(path1: &PyPath, path2: &PyPath, eps: f64, exact_sum: bool) -> PyResult<f64> {
    local_times::approx_milt_with(&path1.inner, &path2.inner, eps, kernel(exact_sum)).map_err(err)
}

/// `(raw, exact_mean, renormalized)` over the full triangle.
#[pyfunction]
fn renormalized_silt(path: &PyPath, eps: f64) -> PyResult<(f64, f64, f64)> {
    let v = local_times::renormalized_silt(&path.inner, eps).map_err(err)?;
    Ok((v.raw, v.exact_mean, v.renormalized))
}

/// Exact SILT mean; the continuum value, or the grid-matched mean when
/// `n_steps` is given.
#[pyfunction]
#[pyo3(signature = (kind, t, eps, region = "triangle", n_steps = None))]
fn silt_mean_exact(kind: &str, t: f64, eps: f64, region: &str, n_steps: Option<usize>) -> PyResult<f64> {
    local_times::silt_mean_exact(parse::<PathKind>(kind)?, t, eps, self::region(region)?, n_steps).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kind, t, eps, region = "triangle"))]
fn silt_mean_asymptotic(kind: &str, t: f64, eps: f64, region: &str) -> PyResult<f64> {
    local_times::silt_mean_asymptotic(t, eps, parse::<PathKind>(kind)?, self::region(region)?).map_err(err)
}

#[pyfunction]
fn milt_mean_bridge_exact(t: f64, eps: f64) -> PyResult<f64> {
    local_times::milt_mean_bridge_exact(t, eps).map_err(err)
}

/// Truncated eigen-expansion of the Dirichlet heat semigroup.
#[pyclass(name = "SpectralModel", module = "anderson_lab", frozen)]
struct PySpectralModel {
    inner: spectral::SpectralModel,
}

#[pymethods]
impl PySpectralModel {
    /// Model for an `a × b` rectangle, certified down to `t_min`.
    #[staticmethod]
    fn rectangle(a: f64, b: f64, t_min: f64) -> PyResult<Self> {
        spectral::rectangle_model_for_t(a, b, t_min).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn disk(radius: f64, t_min: f64) -> PyResult<Self> {
        spectral::disk_model_for_t(radius, t_min).map(|inner| Self { inner }).map_err(err)
    }

    /// Model for a rectangle or disk domain; `None` for other shapes.
    #[staticmethod]
    fn for_domain(domain: &PyDomain, t_min: f64) -> PyResult<Option<Self>> {
        Ok(spectral::model_for_domain(&domain.inner, t_min).map_err(err)?.map(|inner| Self { inner }))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        spectral::SpectralModel::load(path).map(|inner| Self { inner }).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn heat_trace(&self, t: f64) -> PyResult<f64> {
        self.inner.heat_trace(t).map_err(err)
    }

    fn heat_content(&self, t: f64) -> PyResult<f64> {
        self.inner.heat_content(t).map_err(err)
    }

    #[getter]
    fn t_min(&self) -> f64 {
        self.inner.t_min()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.modes().len()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.modes().iter().map(|m| m.lambda).collect()
    }
}

#[pyfunction]
fn smooth_trace_asymptotic(area: f64, perimeter: f64, t: f64) -> f64 {
    spectral::smooth_trace_asymptotic(area, perimeter, t)
}

#[pyfunction]
fn corner_constant(angles: Vec<f64>) -> f64 {
    spectral::corner_constant(&angles)
}

#[pyfunction]
fn moment_prefactor(kappa: f64, t: f64, m: u32, kind: &str) -> PyResult<f64> {
    Ok(feynman_kac::moment_prefactor(kappa, t, m, parse::<PathKind>(kind)?))
}

fn moment_target(s: &str) -> PyResult<MomentTarget> {
    match s {
        "trace_mean" => Ok(MomentTarget::TraceMean),
        "mass_mean" => Ok(MomentTarget::MassMean),
        "trace_var" => Ok(MomentTarget::TraceVar),
        "mass_var" => Ok(MomentTarget::MassVar),
        _ => Err(PyValueError::new_err(format!("unknown target `{s}`; use trace_mean, mass_mean, trace_var or mass_var"))),
    }
}

fn eps_rule(rule: &str, value: Option<f64>) -> PyResult<EpsRule> {
    match (rule, value) {
        ("fraction", v) => Ok(EpsRule::TimeFraction(v.unwrap_or(1e-3))),
        ("fixed", Some(v)) => Ok(EpsRule::Fixed(v)),
        ("resolution", _) => Ok(EpsRule::Resolution),
        _ => Err(PyValueError::new_err(format!("eps_rule `{rule}` is unknown or lacks eps_value"))),
    }
}

/// Feynman-Kac moment estimate of `E[T_κ]`, `E[M_κ]`, `Var[T_κ]` or
/// `Var[M_κ]`; returns a dict with the estimate and its diagnostics.
#[pyfunction]
#[pyo3(signature = (
    target, domain, kappa, t, *, n_outer = 10_000, n_steps = 512, eps_rule = "fraction", eps_value = None,
    n_paths_per_x = 1, exit_correction = true, control_variate = true, exact_sum = false, seed = 0, model = None
))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    target: &str,
    domain: &PyDomain,
    kappa: f64,
    t: f64,
    n_outer: usize,
    n_steps: usize,
    eps_rule: &str,
    eps_value: Option<f64>,
    n_paths_per_x: usize,
    exit_correction: bool,
    control_variate: bool,
    exact_sum: bool,
    seed: u64,
    model: Option<&PySpectralModel>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = FkConfig {
        eps: self::eps_rule(eps_rule, eps_value)?,
        n_steps,
        n_outer,
        n_paths_per_x,
        exit_correction,
        kernel_truncation: !exact_sum,
        control_variate,
        seed,
        ..FkConfig::default()
    };
    let target = moment_target(target)?;
    let model = model.map(|m| &m.inner);
    let e = py.detach(|| feynman_kac::estimate(target, &domain.inner, kappa, t, &cfg, model)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("target", e.target.as_str())?;
    d.set_item("t", e.t)?;
    d.set_item("kappa", e.kappa)?;
    d.set_item("value", e.value)?;
    d.set_item("std_error", e.std_error)?;
    d.set_item("eps", e.eps)?;
    d.set_item("n_outer", e.n_outer)?;
    d.set_item("n_steps", e.n_steps)?;
    d.set_item("prefactor", e.prefactor)?;
    d.set_item("survival_fraction", e.survival_fraction)?;
    d.set_item("reference", e.reference)?;
    d.set_item("overflow_count", e.overflow_count)?;
    Ok(d)
}

/// `(estimate, std_error)` from `[(t, value, std_error), ...]`.
#[pyfunction]
fn recover_area(series: Triples) -> PyResult<(f64, f64)> {
    let e = recovery::recover_area(&self::series(series)).map_err(err)?;
    Ok((e.estimate, e.std_error))
}

#[pyfunction]
fn recover_perimeter(series: Triples, area: f64) -> PyResult<(f64, f64)> {
    let e = recovery::recover_perimeter(&self::series(series), area).map_err(err)?;
    Ok((e.estimate, e.std_error))
}

/// Pointwise `[(t, estimate, std_error), ...]` ordered by decreasing `t`;
/// the last entry is the headline value.
#[pyfunction]
fn recover_kappa2(series_kappa: Triples, series_zero: Triples, area: f64) -> PyResult<Triples> {
    let r = recovery::recover_kappa2(&self::series(series_kappa), &self::series(series_zero), area).map_err(err)?;
    Ok(r.pointwise.iter().map(|p| (p.t, p.estimate, p.std_error)).collect())
}

/// `(slope_fit, [(t, pointwise, std_error), ...])`.
#[pyfunction]
fn recover_minkowski(series_mass: Triples, area: f64) -> PyResult<(f64, Triples)> {
    let r = recovery::recover_minkowski(&self::series(series_mass), area).map_err(err)?;
    Ok((r.slope_fit, r.pointwise.iter().map(|p| (p.t, p.estimate, p.std_error)).collect()))
}

/// Runs a CLI command on a TOML config; returns `(exit_code, files)`.
#[pyfunction]
#[pyo3(signature = (command, config, out = None, workers = None, seed = None))]
fn run_experiment(
    py: Python<'_>,
    command: &str,
    config: PathBuf,
    out: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> PyResult<(i32, Vec<PathBuf>)> {
    let command: Command = parse(command)?;
    let opts = RunOptions { out_dir: out, workers, seed };
    let outcome = py.detach(|| experiment::run_file(command, &config, &opts)).map_err(err)?;
    if let Status::QualityFailure(items) = &outcome.status {
        for item in items {
            log_warning(py, item)?;
        }
    }
    Ok((outcome.exit_code(), outcome.files))
}

fn log_warning(py: Python<'_>, msg: &str) -> PyResult<()> {
    py.import("warnings")?.call_method1("warn", (msg,))?;
    Ok(())
}

#[pymodule(name = "anderson_lab")]
fn anderson_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AndersonLabError", m.py().get_type::<AndersonLabError>())?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyPath>()?;
    m.add_class::<PySpectralModel>()?;
    m.add_function(wrap_pyfunction!(sample_motion, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bridge, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(renorm_constant, m)?)?;
    m.add_function(wrap_pyfunction!(approx_silt, m)?)?;
    m.add_function(wrap_pyfunction!(approx_milt, m)?)?;
    m.add_function(wrap_pyfunction!(renormalized_silt, m)?)?;
    m.add_function(wrap_pyfunction!(silt_mean_exact, m)?)?;
    m.add_function(wrap_pyfunction!(silt_mean_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(milt_mean_bridge_exact, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_trace_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(corner_constant, m)?)?;
    m.add_function(wrap_pyfunction!(moment_prefactor, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(recover_area, m)?)?;
    m.add_function(wrap_pyfunction!(recover_perimeter, m)?)?;
    m.add_function(wrap_pyfunction!(recover_kappa2, m)?)?;
    m.add_function(wrap_pyfunction!(recover_minkowski, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
