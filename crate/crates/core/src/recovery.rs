//! Recovery of area, perimeter, `κ²` and the boundary Minkowski dimension
//! from series of trace or mass values at decreasing `t`.
//!
//! All estimators are the finite-`t` versions of pointwise limits:
//!
//! * area: `2πt T(t) → A`
//! * perimeter: `4√(2πt) (A/(2πt) − T(t)) → L`
//! * `κ²`: `4π² (T_κ(t) − T₀(t)) / (A ln t) → κ²`
//! * dimension: `2 − 2 ln(A − M(t)) / ln t → d_M`
//!
//! Standard errors are propagated to first order, treating the inputs as
//! independent.

use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::stats::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub value: f64,
    pub std_error: f64,
}

impl SeriesPoint {
    pub fn new(t: f64, value: f64, std_error: f64) -> Self {
        Self { t, value, std_error }
    }

    pub fn exact(t: f64, value: f64) -> Self {
        Self { t, value, std_error: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kappa2Recovery {
    pub pointwise: Vec<PointEstimate>,
    /// Value at the smallest `t`.
    pub headline: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinkowskiRecovery {
    pub pointwise: Vec<PointEstimate>,
    /// `2 − 2·slope` of `ln(A − M)` against `ln t`.
    pub slope_fit: f64,
}

fn validate(series: &[SeriesPoint]) -> Result<()> {
    if series.is_empty() {
        return Err(LabError::arg("series is empty"));
    }
    for (i, p) in series.iter().enumerate() {
        if !(p.t > 0.0 && p.t.is_finite() && p.value.is_finite() && p.std_error >= 0.0) {
            return Err(LabError::arg(format!("series point {i} is invalid: {p:?}")));
        }
    }
    let mut ts: Vec<f64> = series.iter().map(|p| p.t).collect();
    ts.sort_by(f64::total_cmp);
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(LabError::arg("series t values must be distinct"));
    }
    Ok(())
}

fn smallest_t(series: &[SeriesPoint]) -> SeriesPoint {
    *series.iter().min_by(|a, b| a.t.total_cmp(&b.t)).expect("validated non-empty")
}

/// `2πt · T(t)` at the smallest `t`.
pub fn recover_area(series: &[SeriesPoint]) -> Result<Estimate> {
    validate(series)?;
    let p = smallest_t(series);
    let c = 2.0 * PI * p.t;
    Ok(Estimate { estimate: c * p.value, std_error: c * p.std_error })
}

/// `4√(2πt) (A/(2πt) − T(t))` at the smallest `t`.
///
/// An error `δ` in `A` shifts the estimate by `4√(2πt) δ/(2πt)`, which
/// grows like `t^{−1/2}`; `A` must be known accurately.
pub fn recover_perimeter(series: &[SeriesPoint], area: f64) -> Result<Estimate> {
    validate(series)?;
    if !(area > 0.0) {
        return Err(LabError::arg(format!("area must be positive, got {area}")));
    }
    let p = smallest_t(series);
    let c = 4.0 * (2.0 * PI * p.t).sqrt();
    Ok(Estimate { estimate: c * (area / (2.0 * PI * p.t) - p.value), std_error: c * p.std_error })
}

/// `4π² (T_κ − T₀) / (A ln t)` at every `t` of the common grid.
pub fn recover_kappa2(series_kappa: &[SeriesPoint], series_zero: &[SeriesPoint], area: f64) -> Result<Kappa2Recovery> {
    validate(series_kappa)?;
    validate(series_zero)?;
    if !(area > 0.0) {
        return Err(LabError::arg(format!("area must be positive, got {area}")));
    }
    if series_kappa.len() != series_zero.len() {
        return Err(LabError::GridMismatch(format!("{} vs {} points", series_kappa.len(), series_zero.len())));
    }
    let mut pointwise = Vec::with_capacity(series_kappa.len());
    for pk in series_kappa {
        let p0 = series_zero
            .iter()
            .find(|p| (p.t - pk.t).abs() <= 1e-12 * pk.t)
            .ok_or_else(|| LabError::GridMismatch(format!("t = {} missing from the κ = 0 series", pk.t)))?;
        if pk.t >= 1.0 {
            return Err(LabError::arg(format!("t = {} must be below 1 so that ln t < 0", pk.t)));
        }
        let c = 4.0 * PI * PI / (area * pk.t.ln());
        pointwise.push(PointEstimate {
            t: pk.t,
            estimate: c * (pk.value - p0.value),
            std_error: c.abs() * pk.std_error.hypot(p0.std_error),
        });
    }
    pointwise.sort_by(|a, b| b.t.total_cmp(&a.t));
    let last = *pointwise.last().expect("non-empty");
    Ok(Kappa2Recovery { pointwise, headline: Estimate { estimate: last.estimate, std_error: last.std_error } })
}

/// Pointwise `2 − 2 ln(A − M)/ln t` and the regression estimate
/// `2 − 2·slope(ln(A − M) ~ ln t)`.
///
/// The pointwise values carry a bias `−2 ln c / ln t` from the unknown
/// constant in `A − M ≍ c t^{1 − d/2}`; the regression does not.
pub fn recover_minkowski(series_mass: &[SeriesPoint], area: f64) -> Result<MinkowskiRecovery> {
    validate(series_mass)?;
    if series_mass.len() < 2 {
        return Err(LabError::arg("the regression needs at least two points"));
    }
    let mut sorted = series_mass.to_vec();
    sorted.sort_by(|a, b| b.t.total_cmp(&a.t));
    let mut xs = Vec::with_capacity(sorted.len());
    let mut ys = Vec::with_capacity(sorted.len());
    let mut pointwise = Vec::with_capacity(sorted.len());
    for (index, p) in sorted.iter().enumerate() {
        let gap = area - p.value;
        if !(gap > 0.0) {
            return Err(LabError::NonPositive { index, value: gap });
        }
        if p.t == 1.0 {
            return Err(LabError::arg("t = 1 has ln t = 0"));
        }
        let lt = p.t.ln();
        pointwise.push(PointEstimate {
            t: p.t,
            estimate: 2.0 - 2.0 * gap.ln() / lt,
            std_error: 2.0 * p.std_error / (gap * lt.abs()),
        });
        xs.push(lt);
        ys.push(gap.ln());
    }
    let (_, slope) = linear_fit(&xs, &ys).ok_or_else(|| LabError::arg("degenerate t grid"))?;
    Ok(MinkowskiRecovery { pointwise, slope_fit: 2.0 - 2.0 * slope })
}

/// Documents how fast the `t` grid shrinks: fits `t_n ≈ C n^p` over the
/// grid sorted in decreasing order. Almost-sure convergence of the `κ`
/// estimators along a sequence requires `t_n ≤ c n^{−1/2−δ}`, i.e. `p < −1/2`.
pub fn rate_condition(ts: &[f64]) -> String {
    let mut sorted: Vec<f64> = ts.iter().copied().filter(|t| *t > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    if sorted.len() < 2 {
        return "single t: rate not assessed".to_string();
    }
    let xs: Vec<f64> = (1..=sorted.len()).map(|n| (n as f64).ln()).collect();
    let ys: Vec<f64> = sorted.iter().map(|t| t.ln()).collect();
    match linear_fit(&xs, &ys) {
        Some((_, p)) => format!("t_n~n^{p:.3}; needs exponent < -0.5: {}", if p < -0.5 { "yes" } else { "no" }),
        None => "rate not assessed".to_string(),
    }
}
