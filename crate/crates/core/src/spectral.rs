//! Exact `κ = 0` reference: Dirichlet eigendata of `H₀ = −½Δ` on rectangles
//! and disks, the heat trace `T₀(t) = Σ e^{−tλ}` and heat content
//! `M₀(t) = Σ e^{−tλ} ⟨ψ, 1_D⟩²`, plus the small-`t` expansions they are
//! checked against.
//!
//! Truncation is certified with Pólya's inequality `N(λ) ≤ Aλ/2π` (valid for
//! rectangles and disks), which bounds the omitted trace by
//! `(A/2π) e^{−tΛ} (Λ + 1/t)` for a cutoff `Λ`. The omitted content is at
//! most `e^{−tΛ}` times the Parseval deficit `A − Σ_kept ⟨ψ, 1_D⟩²`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::geometry::PlanarDomain;

pub mod bessel;

/// Target for the certified truncation error of `T₀`.
pub const TAIL_TARGET: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    /// Eigenvalue of `−½Δ`.
    pub lambda: f64,
    /// `⟨ψ, 1_D⟩²` for the normalized eigenfunction.
    pub overlap_sq: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralModel {
    domain_tag: String,
    area: f64,
    modes: Vec<Mode>,
    cutoff_lambda: f64,
    t_min: f64,
    tail_bound: f64,
    overlap_total: f64,
}

/// Pólya bound on `Σ_{λ > Λ} e^{−tλ}`.
pub fn trace_tail_bound(area: f64, cutoff: f64, t: f64) -> f64 {
    area / (2.0 * PI) * (-t * cutoff).exp() * (cutoff + 1.0 / t)
}

/// Smallest `t` at which the trace tail bound is at most `target`.
fn certified_t_min(area: f64, cutoff: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 / cutoff);
    while trace_tail_bound(area, cutoff, hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if trace_tail_bound(area, cutoff, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest cutoff whose trace tail bound at `t` is at most `target`.
fn cutoff_for(area: f64, t: f64, target: f64) -> f64 {
    let mut hi = 1.0 / t;
    while trace_tail_bound(area, hi, t) > target {
        hi *= 2.0;
    }
    let mut lo = 0.5 * hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if trace_tail_bound(area, mid, t) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(LabError::arg(format!("{name} must be positive and finite, got {x}")))
    }
}

impl SpectralModel {
    fn assemble(domain_tag: String, area: f64, mut modes: Vec<Mode>, cutoff_lambda: f64) -> Self {
        modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.overlap_sq.total_cmp(&b.overlap_sq)));
        let t_min = certified_t_min(area, cutoff_lambda, TAIL_TARGET);
        let tail_bound = trace_tail_bound(area, cutoff_lambda, t_min);
        let overlap_total = crate::stats::compensated_sum(modes.iter().map(|m| m.overlap_sq));
        Self { domain_tag, area, modes, cutoff_lambda, t_min, tail_bound, overlap_total }
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn cutoff_lambda(&self) -> f64 {
        self.cutoff_lambda
    }

    /// Smallest `t` at which the truncation error is certified.
    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    /// Bound on the omitted trace at `t_min`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `A − Σ_kept ⟨ψ, 1_D⟩²`.
    pub fn parseval_deficit(&self) -> f64 {
        self.area - self.overlap_total
    }

    fn check_t(&self, t: f64) -> Result<()> {
        positive("t", t)?;
        if t < self.t_min {
            return Err(LabError::OutsideCertifiedRange { t, t_min: self.t_min });
        }
        Ok(())
    }

    /// `T₀(t) = Σ e^{−tλ}`.
    pub fn heat_trace(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        // Ascending λ: sum small terms first.
        Ok(crate::stats::compensated_sum(self.modes.iter().rev().map(|m| (-t * m.lambda).exp())))
    }

    /// `M₀(t) = Σ e^{−tλ} ⟨ψ, 1_D⟩²`.
    pub fn heat_content(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(crate::stats::compensated_sum(
            self.modes.iter().rev().filter(|m| m.overlap_sq > 0.0).map(|m| (-t * m.lambda).exp() * m.overlap_sq),
        ))
    }

    /// Certified bound on the truncation error of [`heat_trace`](Self::heat_trace) at `t`.
    pub fn heat_trace_error(&self, t: f64) -> f64 {
        trace_tail_bound(self.area, self.cutoff_lambda, t)
    }

    /// Bound on the truncation error of [`heat_content`](Self::heat_content) at `t`.
    pub fn heat_content_error(&self, t: f64) -> f64 {
        (-t * self.cutoff_lambda).exp() * self.parseval_deficit().max(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# domain={}, area={}, cutoff={}, tail_bound={}, t_min={}\nlambda,overlap_sq\n",
            self.domain_tag, self.area, self.cutoff_lambda, self.tail_bound, self.t_min
        );
        for m in &self.modes {
            let _ = writeln!(out, "{},{}", m.lambda, m.overlap_sq);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| LabError::Schema("empty model file".into()))?;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| LabError::Schema("model file must start with a `# domain=...` line".into()))?;
        let mut tag = None;
        let mut area = None;
        let mut cutoff = None;
        for field in header.split(", ") {
            let (k, v) = field.split_once('=').ok_or_else(|| LabError::Schema(format!("bad header field `{field}`")))?;
            let num = || v.parse::<f64>().map_err(|e| LabError::Schema(format!("{k}: {e}")));
            match k {
                "domain" => tag = Some(v.to_string()),
                "area" => area = Some(num()?),
                "cutoff" => cutoff = Some(num()?),
                "tail_bound" | "t_min" => {
                    num()?;
                }
                _ => return Err(LabError::Schema(format!("unknown header field `{k}`"))),
            }
        }
        let missing = |k: &str| LabError::Schema(format!("header lacks `{k}`"));
        let (tag, area, cutoff) = (tag.ok_or_else(|| missing("domain"))?, area.ok_or_else(|| missing("area"))?, cutoff.ok_or_else(|| missing("cutoff"))?);
        if lines.next().map(str::trim) != Some("lambda,overlap_sq") {
            return Err(LabError::Schema("expected column header `lambda,overlap_sq`".into()));
        }
        let mut modes = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (l, o) = line.split_once(',').ok_or_else(|| LabError::Schema(format!("row {i}: `{line}`")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| LabError::Schema(format!("row {i}: {e}")));
            modes.push(Mode { lambda: parse(l)?, overlap_sq: parse(o)? });
        }
        Ok(Self::assemble(tag, area, modes, cutoff))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Rectangle `[0,a] × [0,b]`: `λ_{mn} = (π²/2)(m²/a² + n²/b²)`, overlaps
/// `(8a/(m²π²))(8b/(n²π²))` for odd `m, n` and zero otherwise.
pub fn rectangle_model(a: f64, b: f64, cutoff_lambda: f64) -> Result<SpectralModel> {
    positive("width", a)?;
    positive("height", b)?;
    positive("cutoff", cutoff_lambda)?;
    let c = 0.5 * PI * PI;
    let mut modes = Vec::new();
    let mut m = 1u64;
    loop {
        let lx = c * (m * m) as f64 / (a * a);
        if lx + c / (b * b) > cutoff_lambda {
            break;
        }
        let mut n = 1u64;
        loop {
            let lambda = lx + c * (n * n) as f64 / (b * b);
            if lambda > cutoff_lambda {
                break;
            }
            let overlap_sq = if m % 2 == 1 && n % 2 == 1 {
                8.0 * a / ((m * m) as f64 * PI * PI) * (8.0 * b / ((n * n) as f64 * PI * PI))
            } else {
                0.0
            };
            modes.push(Mode { lambda, overlap_sq });
            n += 1;
        }
        m += 1;
    }
    let tag = PlanarDomain::rectangle(a, b)?.describe();
    Ok(SpectralModel::assemble(tag, a * b, modes, cutoff_lambda))
}

/// Rectangle model with the cutoff chosen so the trace is certified to
/// [`TAIL_TARGET`] down to `t_min`.
pub fn rectangle_model_for_t(a: f64, b: f64, t_min: f64) -> Result<SpectralModel> {
    positive("t_min", t_min)?;
    rectangle_model(a, b, cutoff_for(a * b, t_min, TAIL_TARGET))
}

/// Disk of radius `R`: `λ = j²_{νk}/(2R²)` (twice for `ν ≥ 1`), overlaps
/// `4πR²/j²_{0k}` on the radial modes and zero otherwise.
pub fn disk_model(radius: f64, cutoff_lambda: f64) -> Result<SpectralModel> {
    positive("radius", radius)?;
    positive("cutoff", cutoff_lambda)?;
    let x_max = radius * (2.0 * cutoff_lambda).sqrt();
    let table = bessel::zeros_up_to(x_max)?;
    let mut modes = Vec::new();
    for (nu, zeros) in table.iter().enumerate() {
        for &j in zeros {
            let lambda = j * j / (2.0 * radius * radius);
            if nu == 0 {
                modes.push(Mode { lambda, overlap_sq: 4.0 * PI * radius * radius / (j * j) });
            } else {
                modes.push(Mode { lambda, overlap_sq: 0.0 });
                modes.push(Mode { lambda, overlap_sq: 0.0 });
            }
        }
    }
    let tag = PlanarDomain::disk(radius)?.describe();
    Ok(SpectralModel::assemble(tag, PI * radius * radius, modes, cutoff_lambda))
}

pub fn disk_model_for_t(radius: f64, t_min: f64) -> Result<SpectralModel> {
    positive("t_min", t_min)?;
    disk_model(radius, cutoff_for(PI * radius * radius, t_min, TAIL_TARGET))
}

/// Certified model for a domain when one exists (rectangles and disks).
pub fn model_for_domain(domain: &PlanarDomain, t_min: f64) -> Result<Option<SpectralModel>> {
    match domain {
        PlanarDomain::Rectangle { width, height, .. } => rectangle_model_for_t(*width, *height, t_min).map(Some),
        PlanarDomain::Disk { radius, .. } => disk_model_for_t(*radius, t_min).map(Some),
        _ => Ok(None),
    }
}

/// Two-term expansion for a smooth boundary: `A/(2πt) − L t^{−1/2}/(4√(2π))`.
pub fn smooth_trace_asymptotic(area: f64, perimeter: f64, t: f64) -> f64 {
    area / (2.0 * PI * t) - perimeter / (4.0 * (2.0 * PI).sqrt()) / t.sqrt()
}

/// `A − (√2 L/√π)√t + (πχ/2)t`.
pub fn content_asymptotic(area: f64, perimeter: f64, chi: f64, t: f64) -> f64 {
    area - (2.0f64.sqrt() * perimeter / PI.sqrt()) * t.sqrt() + 0.5 * PI * chi * t
}

/// Constant term of the trace expansion for a polygon with interior angles
/// `θ_i`: `Σ (π² − θ²)/(24πθ)`. A smooth closed curve contributes `1/6`
/// instead; see [`smooth_constant`].
pub fn corner_constant(angles: &[f64]) -> f64 {
    angles.iter().map(|&th| (PI * PI - th * th) / (24.0 * PI * th)).sum()
}

/// Constant term of the trace expansion for a simply connected domain with
/// smooth boundary.
pub fn smooth_constant() -> f64 {
    1.0 / 6.0
}
