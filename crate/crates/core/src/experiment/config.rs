//! TOML experiment configuration: top-level `seed`/`workers`/`out_dir`, a
//! `[domain]` section, and one flat section per command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::feynman_kac::{EpsRule, FkConfig};
use crate::geometry::{PlanarDomain, Point2};
use crate::local_times::{KernelSum, TimeRegion};
use crate::paths::PathKind;

fn cfg_err(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    pub out_dir: Option<String>,
    pub domain: Option<DomainSection>,
    pub silt_validate: Option<SiltValidateSection>,
    pub trace: Option<MomentSection>,
    pub mass: Option<MomentSection>,
    pub recover: Option<RecoverSection>,
    pub minkowski: Option<MinkowskiSection>,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// `rectangle`, `disk`, `polygon` or `koch`.
    pub kind: String,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub radius: Option<f64>,
    pub level: Option<u32>,
    pub side: Option<f64>,
    pub vertex_file: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SiltValidateSection {
    pub t: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    /// `triangle`, `diag:a:b` or `rect:a:b:c:d`.
    #[serde(default = "default_regions")]
    pub regions: Vec<String>,
    pub n_paths: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_true")]
    pub kernel_truncation: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    pub t: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `fraction` (ε = eps_value·t), `fixed` (ε = eps_value) or `resolution` (ε = 10Δt).
    #[serde(default = "default_eps_rule")]
    pub eps_rule: String,
    pub eps_value: Option<f64>,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    pub n_outer: usize,
    #[serde(default = "default_one")]
    pub n_paths_per_x: usize,
    #[serde(default = "default_true")]
    pub exit_correction: bool,
    #[serde(default = "default_true")]
    pub kernel_truncation: bool,
    #[serde(default = "default_true")]
    pub control_variate: bool,
    #[serde(default = "default_cap")]
    pub overflow_cap: f64,
    /// Also estimate the variance at every (t, κ).
    #[serde(default)]
    pub variance: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverSection {
    /// `spectral` (exact κ = 0 series from the domain's model) or `csv`.
    pub source: String,
    pub estimators: Vec<String>,
    /// t grid for the spectral source.
    pub t: Option<Vec<f64>>,
    pub trace_csv: Option<String>,
    pub mass_csv: Option<String>,
    /// κ whose rows feed the κ² estimator.
    pub kappa: Option<f64>,
    /// Overrides the domain area.
    pub area: Option<f64>,
    #[serde(default)]
    pub force: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MinkowskiSection {
    pub r: Vec<f64>,
    pub n_samples: usize,
    #[serde(default)]
    pub via_mass: bool,
    pub mass_t: Option<Vec<f64>>,
    pub mass_n_outer: Option<usize>,
    #[serde(default = "default_n_steps")]
    pub mass_n_steps: usize,
}

fn default_kinds() -> Vec<String> {
    vec!["motion".into(), "bridge".into()]
}
fn default_regions() -> Vec<String> {
    vec!["triangle".into()]
}
fn default_n_steps() -> usize {
    512
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_eps_rule() -> String {
    "fraction".into()
}
fn default_cap() -> f64 {
    30.0
}

fn check_positive(what: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(cfg_err(format!("`{what}` must not be empty")));
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(cfg_err(format!("`{what}` entries must be positive, got {x}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn domain(&self) -> Result<PlanarDomain> {
        let d = self.domain.as_ref().ok_or_else(|| cfg_err("missing [domain] section"))?;
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| cfg_err(format!("[domain] {} needs `{k}`", d.kind)));
        match d.kind.as_str() {
            "rectangle" => PlanarDomain::rectangle(need(d.width, "width")?, need(d.height, "height")?),
            "disk" => PlanarDomain::disk(need(d.radius, "radius")?),
            "koch" => {
                let level = d.level.ok_or_else(|| cfg_err("[domain] koch needs `level`"))?;
                PlanarDomain::koch_at(level, need(d.side, "side")?, Point2::ORIGIN)
            }
            "polygon" => {
                let f = d.vertex_file.as_ref().ok_or_else(|| cfg_err("[domain] polygon needs `vertex_file`"))?;
                PlanarDomain::from_vertex_file(self.resolve(f))
            }
            other => Err(cfg_err(format!("unknown domain kind `{other}`"))),
        }
    }

    /// Canonical text of the parts of the config that determine a command's
    /// output (worker count and output directory excluded).
    pub fn canonical(&self, command: &str) -> Result<String> {
        let section = match command {
            "silt-validate" => toml::to_string(&self.silt_validate),
            "trace" => toml::to_string(&self.trace),
            "mass" => toml::to_string(&self.mass),
            "recover" => toml::to_string(&self.recover),
            "minkowski" => toml::to_string(&self.minkowski),
            _ => return Err(cfg_err(format!("unknown command `{command}`"))),
        }
        .map_err(|e| cfg_err(e.to_string()))?;
        let domain = self.domain.as_ref().map(|_| self.domain().map(|d| d.describe())).transpose()?.unwrap_or_default();
        Ok(format!("command={command}\nseed={}\ndomain={domain}\n{section}", self.seed))
    }
}

/// One row specification of `silt-validate`.
#[derive(Clone, Debug)]
pub struct SiltCase {
    pub kind: PathKind,
    pub t: f64,
    pub eps: f64,
    pub region: TimeRegion,
}

impl SiltValidateSection {
    pub fn kernel(&self) -> KernelSum {
        if self.kernel_truncation {
            KernelSum::Truncated
        } else {
            KernelSum::Exact
        }
    }

    /// Validated cartesian product of kinds × t × ε × regions.
    pub fn cases(&self) -> Result<Vec<SiltCase>> {
        check_positive("t", &self.t)?;
        check_positive("eps", &self.eps)?;
        if self.kinds.is_empty() {
            return Err(cfg_err("`kinds` must not be empty"));
        }
        if self.regions.is_empty() {
            return Err(cfg_err("`regions` must not be empty"));
        }
        if self.n_paths < 2 || self.n_steps == 0 {
            return Err(cfg_err("need n_paths ≥ 2 and n_steps ≥ 1"));
        }
        let mut out = Vec::new();
        for kind in &self.kinds {
            let kind: PathKind = kind.parse().map_err(|e: LabError| cfg_err(e.to_string()))?;
            for &t in &self.t {
                for &eps in &self.eps {
                    for r in &self.regions {
                        let region = TimeRegion::parse(r).map_err(|e| cfg_err(e.to_string()))?;
                        region.validate(t).map_err(|e| cfg_err(e.to_string()))?;
                        if region.area(t) <= 0.0 {
                            return Err(cfg_err(format!("region `{r}` is empty at t={t}")));
                        }
                        // Grid alignment is checked by the exact discrete mean.
                        crate::local_times::silt_mean_exact(kind, t, eps, region, Some(self.n_steps))
                            .map_err(|e| cfg_err(format!("region `{r}` at t={t}: {e}")))?;
                        out.push(SiltCase { kind, t, eps, region });
                    }
                }
            }
        }
        Ok(out)
    }
}

impl MomentSection {
    pub fn validate(&self) -> Result<()> {
        check_positive("t", &self.t)?;
        if self.kappa.is_empty() || self.kappa.iter().any(|k| !k.is_finite()) {
            return Err(cfg_err("`kappa` must be a non-empty list of finite values"));
        }
        self.eps_rule()?;
        self.fk_config(0).validate().map_err(|e| cfg_err(e.to_string()))
    }

    pub fn eps_rule(&self) -> Result<EpsRule> {
        let value = || self.eps_value.ok_or_else(|| cfg_err(format!("eps_rule `{}` needs `eps_value`", self.eps_rule)));
        match self.eps_rule.as_str() {
            "fraction" => Ok(EpsRule::TimeFraction(self.eps_value.unwrap_or(1e-3))),
            "fixed" => Ok(EpsRule::Fixed(value()?)),
            "resolution" => Ok(EpsRule::Resolution),
            other => Err(cfg_err(format!("unknown eps_rule `{other}`"))),
        }
    }

    pub fn fk_config(&self, seed: u64) -> FkConfig {
        FkConfig {
            eps: self.eps_rule().unwrap_or(EpsRule::Fixed(f64::NAN)),
            n_steps: self.n_steps,
            n_outer: self.n_outer,
            n_paths_per_x: self.n_paths_per_x,
            exit_correction: self.exit_correction,
            kernel_truncation: self.kernel_truncation,
            control_variate: self.control_variate,
            overflow_cap: self.overflow_cap,
            seed,
        }
    }
}

impl RecoverSection {
    pub fn validate(&self) -> Result<()> {
        if self.source != "spectral" && self.source != "csv" {
            return Err(cfg_err(format!("unknown recover source `{}`", self.source)));
        }
        if self.estimators.is_empty() {
            return Err(cfg_err("`estimators` must not be empty"));
        }
        for e in &self.estimators {
            if !["area", "perimeter", "kappa2", "minkowski"].contains(&e.as_str()) {
                return Err(cfg_err(format!("unknown estimator `{e}`")));
            }
        }
        if self.source == "spectral" {
            check_positive("t", self.t.as_deref().unwrap_or(&[]))?;
            if self.estimators.iter().any(|e| e == "kappa2") {
                return Err(cfg_err("kappa2 needs Monte Carlo series: use source = \"csv\""));
            }
        }
        Ok(())
    }
}

impl MinkowskiSection {
    pub fn validate(&self) -> Result<()> {
        check_positive("r", &self.r)?;
        if self.r.len() < 3 {
            return Err(cfg_err("`r` needs at least 3 values"));
        }
        if self.n_samples == 0 {
            return Err(cfg_err("n_samples must be positive"));
        }
        if self.via_mass {
            check_positive("mass_t", self.mass_t.as_deref().unwrap_or(&[]))?;
            if self.mass_n_outer.unwrap_or(0) < 2 {
                return Err(cfg_err("via_mass needs mass_n_outer ≥ 2"));
            }
        }
        Ok(())
    }
}
