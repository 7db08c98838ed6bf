//! Approximate self- and mutual-intersection local times (SILT / MILT) of
//! discrete paths, their exact means, and the small-`ε` asymptotics of those
//! means.
//!
//! For a path `Z` and a time region `A ⊂ [0,t]²`,
//!
//! ```text
//! β^ε_A(Z)      = ∫_A p_ε(Z(r₁) − Z(r₂)) dr,
//! α^ε(Z₁, Z₂)   = ∫_[0,t]² p_ε(Z₁(r₁) − Z₂(r₂)) dr,
//! p_ε(v)        = exp(−|v|²/2ε) / (2πε).
//! ```
//!
//! On the path grid the integrals become tensor-product trapezoid sums. The
//! same weights are used for the exact mean of the discrete sum, so
//! `raw − exact_mean` is centred exactly, whatever the discretization bias of
//! the sum itself.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{LabError, Result};
use crate::geometry::Point2;
use crate::paths::{DiscretePath, PathKind};
use crate::quadrature;

/// Pairs farther apart than `sqrt(40 ε)` contribute less than
/// `e^{-20} / (2πε)` each and are skipped by the truncated kernel sum.
pub const TRUNCATION_FACTOR: f64 = 40.0;
/// Resolution rule: `Δt ≤ ε / RESOLUTION_RATIO`.
pub const RESOLUTION_RATIO: f64 = 10.0;

static RESOLUTION_WARNED: AtomicBool = AtomicBool::new(false);

pub(crate) fn check_resolution(dt: f64, eps: f64) {
    if dt > eps / RESOLUTION_RATIO * (1.0 + 1e-9) && !RESOLUTION_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "time step {dt:.3e} exceeds eps/{RESOLUTION_RATIO} = {:.3e}; near-diagonal kernel mass is under-resolved",
            eps / RESOLUTION_RATIO
        );
    }
}

/// Integration region in the time square `[0, t]²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeRegion {
    /// The full ordered triangle `[0,t]²_≤`.
    Triangle,
    /// `[a,b]²_≤ = {(r₁, r₂) : a ≤ r₁ ≤ r₂ ≤ b}`.
    DiagBlock { a: f64, b: f64 },
    /// `[a,b] × [c,d]` with `b ≤ c`.
    Rect { a: f64, b: f64, c: f64, d: f64 },
}

/// A region with the triangle resolved against a horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Block {
    Diag { a: f64, b: f64 },
    Rect { a: f64, b: f64, c: f64, d: f64 },
}

impl TimeRegion {
    pub fn validate(&self, t: f64) -> Result<()> {
        let ok = |xs: &[f64]| xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[0] <= w[1]);
        let valid = match *self {
            TimeRegion::Triangle => true,
            TimeRegion::DiagBlock { a, b } => ok(&[0.0, a, b, t]),
            TimeRegion::Rect { a, b, c, d } => ok(&[0.0, a, b, c, d, t]),
        };
        if valid {
            Ok(())
        } else {
            Err(LabError::arg(format!("time region {self:?} does not fit in [0, {t}]")))
        }
    }

    /// Lebesgue measure of the region.
    pub fn area(&self, t: f64) -> f64 {
        match *self {
            TimeRegion::Triangle => 0.5 * t * t,
            TimeRegion::DiagBlock { a, b } => 0.5 * (b - a) * (b - a),
            TimeRegion::Rect { a, b, c, d } => (b - a) * (d - c),
        }
    }

    fn block(&self, t: f64) -> Block {
        match *self {
            TimeRegion::Triangle => Block::Diag { a: 0.0, b: t },
            TimeRegion::DiagBlock { a, b } => Block::Diag { a, b },
            TimeRegion::Rect { a, b, c, d } => Block::Rect { a, b, c, d },
        }
    }

    /// Parses `triangle`, `diag:a:b` or `rect:a:b:c:d`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let nums = |xs: &[&str]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|x| x.trim().parse::<f64>().map_err(|e| LabError::arg(format!("region `{s}`: {e}"))))
                .collect()
        };
        match parts[0].to_ascii_lowercase().as_str() {
            "triangle" if parts.len() == 1 => Ok(TimeRegion::Triangle),
            "diag" if parts.len() == 3 => {
                let v = nums(&parts[1..])?;
                Ok(TimeRegion::DiagBlock { a: v[0], b: v[1] })
            }
            "rect" if parts.len() == 5 => {
                let v = nums(&parts[1..])?;
                Ok(TimeRegion::Rect { a: v[0], b: v[1], c: v[2], d: v[3] })
            }
            _ => Err(LabError::arg(format!("cannot parse time region `{s}`"))),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TimeRegion::Triangle => "triangle".to_string(),
            TimeRegion::DiagBlock { a, b } => format!("diag:{a}:{b}"),
            TimeRegion::Rect { a, b, c, d } => format!("rect:{a}:{b}:{c}:{d}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTimeValue {
    pub epsilon: f64,
    pub region: TimeRegion,
    pub raw: f64,
    pub exact_mean: f64,
    pub renormalized: f64,
}

/// How the double kernel sum is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KernelSum {
    /// Every pair.
    Exact,
    /// Pairs with `|Z_i − Z_j|² > 40ε` are skipped, located with a cell list.
    #[default]
    Truncated,
}

/// Planar Gaussian kernel `p_ε(v) = exp(−|v|²/2ε)/(2πε)`.
#[inline]
pub fn gaussian_kernel(eps: f64, v: Point2) -> f64 {
    (-v.norm_sq() / (2.0 * eps)).exp() / (2.0 * PI * eps)
}

/// `κ²/(2π) · ln(1/ε)`.
pub fn renorm_constant(kappa: f64, eps: f64) -> f64 {
    kappa * kappa / (2.0 * PI) * (1.0 / eps).ln()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(LabError::arg(format!("eps must be positive, got {eps}")))
    }
}

/// Index of a grid-aligned time.
fn grid_index(time: f64, t: f64, n: usize) -> Result<usize> {
    let x = time / t * n as f64;
    let k = x.round();
    if (x - k).abs() > 1e-6 * (1.0 + x.abs()) || k < 0.0 || k > n as f64 {
        return Err(LabError::arg(format!("time {time} is not on the grid of step {}", t / n as f64)));
    }
    Ok(k as usize)
}

/// Trapezoid weights of `[i0, i1]`: `Δt` inside, `Δt/2` at both ends.
#[inline]
fn trap_weight(i: usize, i0: usize, i1: usize, dt: f64) -> f64 {
    if i0 == i1 {
        0.0
    } else if i == i0 || i == i1 {
        0.5 * dt
    } else {
        dt
    }
}

#[derive(Clone, Copy, Debug)]
enum IndexBlock {
    Diag { i0: usize, i1: usize },
    Rect { i0: usize, i1: usize, j0: usize, j1: usize },
}

fn index_block(region: &TimeRegion, t: f64, n: usize) -> Result<IndexBlock> {
    region.validate(t)?;
    Ok(match region.block(t) {
        Block::Diag { a, b } => IndexBlock::Diag { i0: grid_index(a, t, n)?, i1: grid_index(b, t, n)? },
        Block::Rect { a, b, c, d } => IndexBlock::Rect {
            i0: grid_index(a, t, n)?,
            i1: grid_index(b, t, n)?,
            j0: grid_index(c, t, n)?,
            j1: grid_index(d, t, n)?,
        },
    })
}

/// Points of `pts[lo..=hi]` bucketed into square cells of side `cell`,
/// sorted by cell key so a cell's members form a contiguous run.
struct CellList {
    inv_cell: f64,
    keys: Vec<(i64, i64)>,
    members: Vec<u32>,
}

impl CellList {
    fn new(pts: &[Point2], lo: usize, hi: usize, cell: f64) -> Self {
        let inv_cell = 1.0 / cell;
        let mut entries: Vec<((i64, i64), u32)> = (lo..=hi)
            .map(|i| (Self::key_of(pts[i], inv_cell), i as u32))
            .collect();
        entries.sort_unstable();
        let (keys, members) = entries.into_iter().unzip();
        Self { inv_cell, keys, members }
    }

    #[inline]
    fn key_of(p: Point2, inv_cell: f64) -> (i64, i64) {
        ((p.x * inv_cell).floor() as i64, (p.y * inv_cell).floor() as i64)
    }

    #[inline]
    fn run(&self, key: (i64, i64)) -> &[u32] {
        let start = self.keys.partition_point(|k| *k < key);
        let end = start + self.keys[start..].partition_point(|k| *k == key);
        &self.members[start..end]
    }

    /// Calls `f(j)` for every member in the 3×3 block of cells around `p`.
    #[inline]
    fn for_each_near(&self, p: Point2, mut f: impl FnMut(usize)) {
        let (cx, cy) = Self::key_of(p, self.inv_cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &j in self.run((cx + dx, cy + dy)) {
                    f(j as usize);
                }
            }
        }
    }
}

/// Unnormalized kernel sum `Σ w_i w_j exp(−|Z_i − Z_j|²/2ε)` over a block.
fn kernel_sum_block(pts: &[Point2], block: IndexBlock, dt: f64, eps: f64, mode: KernelSum) -> f64 {
    let inv_2eps = 1.0 / (2.0 * eps);
    let cutoff_sq = TRUNCATION_FACTOR * eps;
    let k = |d: Point2| (-d.norm_sq() * inv_2eps).exp();
    match block {
        IndexBlock::Diag { i0, i1 } => {
            if i0 == i1 {
                return 0.0;
            }
            let w = |i| trap_weight(i, i0, i1, dt);
            // Diagonal: half weight, kernel value 1 before normalization.
            let mut diag = 0.0;
            for i in i0..=i1 {
                diag += 0.5 * w(i) * w(i);
            }
            let mut off = 0.0;
            match mode {
                KernelSum::Exact => {
                    for i in i0..i1 {
                        let mut row = 0.0;
                        for j in (i + 1)..=i1 {
                            row += w(j) * k(pts[i] - pts[j]);
                        }
                        off += w(i) * row;
                    }
                }
                KernelSum::Truncated => {
                    let cells = CellList::new(pts, i0, i1, cutoff_sq.sqrt());
                    for i in i0..i1 {
                        let pi = pts[i];
                        let mut row = 0.0;
                        cells.for_each_near(pi, |j| {
                            if j > i {
                                let d2 = (pi - pts[j]).norm_sq();
                                if d2 <= cutoff_sq {
                                    row += w(j) * (-d2 * inv_2eps).exp();
                                }
                            }
                        });
                        off += w(i) * row;
                    }
                }
            }
            diag + off
        }
        IndexBlock::Rect { i0, i1, j0, j1 } => cross_sum(pts, i0, i1, pts, j0, j1, dt, eps, mode),
    }
}

/// `Σ_{i∈[i0,i1], j∈[j0,j1]} u_i v_j exp(−|A_i − B_j|²/2ε)`.
#[allow(clippy::too_many_arguments)]
fn cross_sum(a: &[Point2], i0: usize, i1: usize, b: &[Point2], j0: usize, j1: usize, dt: f64, eps: f64, mode: KernelSum) -> f64 {
    if i0 == i1 || j0 == j1 {
        return 0.0;
    }
    let inv_2eps = 1.0 / (2.0 * eps);
    let cutoff_sq = TRUNCATION_FACTOR * eps;
    let u = |i| trap_weight(i, i0, i1, dt);
    let v = |j| trap_weight(j, j0, j1, dt);
    let mut total = 0.0;
    match mode {
        KernelSum::Exact => {
            for (i, &ai) in a.iter().enumerate().take(i1 + 1).skip(i0) {
                let mut row = 0.0;
                for (j, &bj) in b.iter().enumerate().take(j1 + 1).skip(j0) {
                    row += v(j) * (-(ai - bj).norm_sq() * inv_2eps).exp();
                }
                total += u(i) * row;
            }
        }
        KernelSum::Truncated => {
            let cells = CellList::new(b, j0, j1, cutoff_sq.sqrt());
            for (i, &ai) in a.iter().enumerate().take(i1 + 1).skip(i0) {
                let mut row = 0.0;
                cells.for_each_near(ai, |j| {
                    let d2 = (ai - b[j]).norm_sq();
                    if d2 <= cutoff_sq {
                        row += v(j) * (-d2 * inv_2eps).exp();
                    }
                });
                total += u(i) * row;
            }
        }
    }
    total
}

/// Approximate SILT `β^ε_A(Z)` with the truncated kernel sum.
pub fn approx_silt(path: &DiscretePath, eps: f64, region: TimeRegion) -> Result<f64> {
    approx_silt_with(path, eps, region, KernelSum::Truncated)
}

pub fn approx_silt_with(path: &DiscretePath, eps: f64, region: TimeRegion, mode: KernelSum) -> Result<f64> {
    check_eps(eps)?;
    let dt = path.dt();
    check_resolution(dt, eps);
    let block = index_block(&region, path.horizon(), path.n_steps())?;
    Ok(kernel_sum_block(path.positions(), block, dt, eps, mode) / (2.0 * PI * eps))
}

/// Lexicographic order on raw coordinates; used to make the MILT sum
/// independent of argument order.
fn path_order(a: &[Point2], b: &[Point2]) -> std::cmp::Ordering {
    for (p, q) in a.iter().zip(b) {
        let o = p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Approximate MILT `α^ε(Z₁, Z₂)` over the full square, truncated sum.
pub fn approx_milt(path1: &DiscretePath, path2: &DiscretePath, eps: f64) -> Result<f64> {
    approx_milt_with(path1, path2, eps, KernelSum::Truncated)
}

pub fn approx_milt_with(path1: &DiscretePath, path2: &DiscretePath, eps: f64, mode: KernelSum) -> Result<f64> {
    check_eps(eps)?;
    if path1.n_steps() != path2.n_steps() || path1.horizon() != path2.horizon() {
        return Err(LabError::GridMismatch(format!(
            "({}, {}) vs ({}, {})",
            path1.horizon(),
            path1.n_steps(),
            path2.horizon(),
            path2.n_steps()
        )));
    }
    let (a, b) = if path_order(path1.positions(), path2.positions()).is_le() {
        (path1.positions(), path2.positions())
    } else {
        (path2.positions(), path1.positions())
    };
    let n = path1.n_steps();
    let dt = path1.dt();
    check_resolution(dt, eps);
    if mode == KernelSum::Truncated && boxes_apart(a, b, (TRUNCATION_FACTOR * eps).sqrt()) {
        return Ok(0.0);
    }
    Ok(cross_sum(a, 0, n, b, 0, n, dt, eps, mode) / (2.0 * PI * eps))
}

fn boxes_apart(a: &[Point2], b: &[Point2], gap: f64) -> bool {
    let bb = |pts: &[Point2]| {
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
            (acc.0.min(p.x), acc.1.max(p.x), acc.2.min(p.y), acc.3.max(p.y))
        })
    };
    let (ax0, ax1, ay0, ay1) = bb(a);
    let (bx0, bx1, by0, by1) = bb(b);
    bx0 - ax1 > gap || ax0 - bx1 > gap || by0 - ay1 > gap || ay0 - by1 > gap
}

/// Per-coordinate variance of `Z(r₂) − Z(r₁)` at lag `s`.
#[inline]
fn increment_variance(kind: PathKind, t: f64, s: f64) -> f64 {
    match kind {
        PathKind::Motion => s,
        PathKind::Bridge => s * (t - s) / t,
    }
}

/// Lag profile of a block: the measure of `{(r₁,r₂) ∈ block : r₂ − r₁ = s}`
/// as linear pieces `α + βs` on `[s0, s1]`.
fn lag_pieces(block: Block) -> Vec<(f64, f64, f64, f64)> {
    match block {
        Block::Diag { a, b } => {
            let l = b - a;
            if l > 0.0 {
                vec![(0.0, l, l, -1.0)]
            } else {
                vec![]
            }
        }
        Block::Rect { a, b, c, d } => {
            if b <= a || d <= c {
                return vec![];
            }
            let lo = c - b;
            let hi = d - a;
            let m0 = (c - a).min(d - b);
            let m1 = (c - a).max(d - b);
            let plateau = (b - a).min(d - c);
            let mut out = Vec::with_capacity(3);
            if m0 > lo {
                out.push((lo, m0, -lo, 1.0));
            }
            if m1 > m0 {
                out.push((m0, m1, plateau, 0.0));
            }
            if hi > m1 {
                out.push((m1, hi, hi, -1.0));
            }
            out
        }
    }
}

/// `∫_{s0}^{s1} (α + βs) / (2π(ε + s)) ds`, closed form.
fn motion_piece(eps: f64, (s0, s1, alpha, beta): (f64, f64, f64, f64)) -> f64 {
    let log = ((s1 - s0) / (eps + s0)).ln_1p();
    ((alpha - beta * eps) * log + beta * (s1 - s0)) / (2.0 * PI)
}

/// `∫_{s0}^{s1} (α + βs) / (2π(ε + s(t−s)/t)) ds`, closed form.
///
/// With `m > 0` the root of `m² + tm = εt`, the denominator factors as
/// `(s + m)(t + m − s)/t`, and partial fractions give two logarithms.
fn bridge_piece(t: f64, eps: f64, (s0, s1, alpha, beta): (f64, f64, f64, f64)) -> f64 {
    let m = 2.0 * eps * t / (t + (t * t + 4.0 * eps * t).sqrt());
    let left = (alpha - beta * m) * ((s1 - s0) / (s0 + m)).ln_1p();
    let right = (alpha + beta * (t + m)) * ((s1 - s0) / (t + m - s1)).ln_1p();
    t / (2.0 * PI * (t + 2.0 * m)) * (left + right)
}

fn continuous_mean(kind: PathKind, t: f64, eps: f64, region: TimeRegion) -> Result<f64> {
    check_eps(eps)?;
    region.validate(t)?;
    let pieces = lag_pieces(region.block(t));
    Ok(match kind {
        PathKind::Motion => pieces.into_iter().map(|p| motion_piece(eps, p)).sum(),
        PathKind::Bridge => pieces.into_iter().map(|p| bridge_piece(t, eps, p)).sum(),
    })
}

/// Trapezoid weight mass of the block at every lag `k = j − i`.
fn lag_weights(block: IndexBlock, dt: f64, n: usize) -> Vec<f64> {
    let mut lw = vec![0.0; n + 1];
    match block {
        IndexBlock::Diag { i0, i1 } => {
            for i in i0..=i1 {
                let wi = trap_weight(i, i0, i1, dt);
                lw[0] += 0.5 * wi * wi;
                for j in (i + 1)..=i1 {
                    lw[j - i] += wi * trap_weight(j, i0, i1, dt);
                }
            }
        }
        IndexBlock::Rect { i0, i1, j0, j1 } => {
            for i in i0..=i1 {
                let wi = trap_weight(i, i0, i1, dt);
                for j in j0..=j1 {
                    lw[j - i] += wi * trap_weight(j, j0, j1, dt);
                }
            }
        }
    }
    lw
}

fn discrete_mean(kind: PathKind, t: f64, eps: f64, region: TimeRegion, n: usize) -> Result<f64> {
    check_eps(eps)?;
    if n == 0 {
        return Err(LabError::arg("n_steps must be positive"));
    }
    let dt = t / n as f64;
    let block = index_block(&region, t, n)?;
    let lw = lag_weights(block, dt, n);
    Ok(crate::stats::compensated_sum(
        lw.iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| w / (2.0 * PI * (eps + increment_variance(kind, t, k as f64 * dt)))),
    ))
}

/// `E[β^ε_A(B^0)]` for Brownian motion, from
/// `E[p_ε(B(r₂) − B(r₁))] = 1/(2π(ε + r₂ − r₁))`.
///
/// With `n_steps = None` this is the continuum integral (closed form; for the
/// full triangle `((t+ε) ln(1 + t/ε) − t)/2π`). With `Some(n)` it is the
/// expectation of the discrete trapezoid sum on the `n`-step grid.
pub fn silt_mean_motion_exact(t: f64, eps: f64, region: TimeRegion, n_steps: Option<usize>) -> Result<f64> {
    match n_steps {
        None => continuous_mean(PathKind::Motion, t, eps, region),
        Some(n) => discrete_mean(PathKind::Motion, t, eps, region, n),
    }
}

/// `E[β^ε_A(B^{0,0}_t)]` for the Brownian bridge, from the increment
/// variance `s(t − s)/t` at lag `s`. `n_steps` as in
/// [`silt_mean_motion_exact`].
pub fn silt_mean_bridge_exact(t: f64, eps: f64, region: TimeRegion, n_steps: Option<usize>) -> Result<f64> {
    match n_steps {
        None => continuous_mean(PathKind::Bridge, t, eps, region),
        Some(n) => discrete_mean(PathKind::Bridge, t, eps, region, n),
    }
}

pub fn silt_mean_exact(kind: PathKind, t: f64, eps: f64, region: TimeRegion, n_steps: Option<usize>) -> Result<f64> {
    match kind {
        PathKind::Motion => silt_mean_motion_exact(t, eps, region, n_steps),
        PathKind::Bridge => silt_mean_bridge_exact(t, eps, region, n_steps),
    }
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Antiderivative of `ln r − ln(t − r)` on `[0, t]`.
fn log_ratio_antiderivative(t: f64, r: f64) -> f64 {
    xlogx(r) - r + xlogx(t - r) - (t - r)
}

/// Small-`ε` expansion of the SILT mean, without its `o(1)` remainder.
///
/// * bridge, `[a,b]²_≤`: `((b−a)/2π)(ln(1/ε) + ln t) + (1/2π)∫₀^{b−a} ln r − ln(t−r) dr`
/// * motion, `[a,b]²_≤`: `((b−a)/2π)(ln(1/ε) + ln(b−a) − 1)`
/// * bridge, `[a,b]×[c,d]`: `(1/2π)[∫_{c−a}^{d−a} − ∫_{c−b}^{d−b}] ln r − ln(t−r) dr`
/// * motion, `[a,b]×[c,d]`: the `ε → 0` limit `(1/2π)∫∫ dr/(r₂ − r₁)`.
pub fn silt_mean_asymptotic(t: f64, eps: f64, kind: PathKind, region: TimeRegion) -> Result<f64> {
    check_eps(eps)?;
    region.validate(t)?;
    let f = |r: f64| log_ratio_antiderivative(t, r);
    Ok(match (kind, region.block(t)) {
        (PathKind::Bridge, Block::Diag { a, b }) => {
            let l = b - a;
            l / (2.0 * PI) * ((1.0 / eps).ln() + t.ln()) + (f(l) - f(0.0)) / (2.0 * PI)
        }
        (PathKind::Motion, Block::Diag { a, b }) => {
            let l = b - a;
            if l == 0.0 {
                0.0
            } else {
                l / (2.0 * PI) * ((1.0 / eps).ln() + l.ln() - 1.0)
            }
        }
        (PathKind::Bridge, Block::Rect { a, b, c, d }) => {
            ((f(d - a) - f(c - a)) - (f(d - b) - f(c - b))) / (2.0 * PI)
        }
        (PathKind::Motion, Block::Rect { a, b, c, d }) => {
            let h = |s: f64| xlogx(s) - s;
            (h(d - a) - h(d - b) - h(c - a) + h(c - b)) / (2.0 * PI)
        }
    })
}

/// Precomputed grid-matched mean for renormalizing many paths of the same
/// kind, horizon and grid.
#[derive(Clone, Debug)]
pub struct SiltRenormalizer {
    kind: PathKind,
    horizon: f64,
    n_steps: usize,
    eps: f64,
    exact_mean: f64,
    mode: KernelSum,
}

impl SiltRenormalizer {
    pub fn new(kind: PathKind, horizon: f64, n_steps: usize, eps: f64, mode: KernelSum) -> Result<Self> {
        let exact_mean = silt_mean_exact(kind, horizon, eps, TimeRegion::Triangle, Some(n_steps))?;
        Ok(Self { kind, horizon, n_steps, eps, exact_mean, mode })
    }

    pub fn exact_mean(&self) -> f64 {
        self.exact_mean
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn apply(&self, path: &DiscretePath) -> Result<LocalTimeValue> {
        if path.kind() != self.kind || path.n_steps() != self.n_steps || path.horizon() != self.horizon {
            return Err(LabError::GridMismatch("path does not match the renormalizer grid".into()));
        }
        let raw = approx_silt_with(path, self.eps, TimeRegion::Triangle, self.mode)?;
        Ok(LocalTimeValue {
            epsilon: self.eps,
            region: TimeRegion::Triangle,
            raw,
            exact_mean: self.exact_mean,
            renormalized: raw - self.exact_mean,
        })
    }
}

/// `β^ε_t(Z) − E[β^ε_t(Z)]` over the full triangle, with the mean taken on
/// the path's own grid.
pub fn renormalized_silt(path: &DiscretePath, eps: f64) -> Result<LocalTimeValue> {
    SiltRenormalizer::new(path.kind(), path.horizon(), path.n_steps(), eps, KernelSum::Truncated)?.apply(path)
}

/// `E[α^ε(B₁, B₂)]` for independent bridges of horizon `t` from a common
/// point: `∫∫_[0,t]² 1/(2π(ε + v(r₁) + v(r₂))) dr`, `v(r) = r(t−r)/t`.
///
/// The inner integral is done in closed form and the outer one by adaptive
/// quadrature to absolute tolerance `1e-10`.
pub fn milt_mean_bridge_exact(t: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::arg(format!("horizon must be positive, got {t}")));
    }
    let inner = |r1: f64| {
        let c = eps + increment_variance(PathKind::Bridge, t, r1);
        bridge_piece(t, c, (0.0, t, 1.0, 0.0))
    };
    Ok(quadrature::integrate_with_breaks(inner, 0.0, t, &[0.5 * t], 1e-11))
}

/// Expectation of the discrete MILT sum on the `n_steps` grid.
pub fn milt_mean_bridge_discrete(t: f64, eps: f64, n_steps: usize) -> Result<f64> {
    check_eps(eps)?;
    let dt = t / n_steps as f64;
    let v: Vec<f64> = (0..=n_steps).map(|i| increment_variance(PathKind::Bridge, t, i as f64 * dt)).collect();
    let mut total = crate::stats::CompensatedSum::new();
    for i in 0..=n_steps {
        let wi = trap_weight(i, 0, n_steps, dt);
        let mut row = 0.0;
        for j in 0..=n_steps {
            row += trap_weight(j, 0, n_steps, dt) / (eps + v[i] + v[j]);
        }
        total.add(wi * row);
    }
    Ok(total.value() / (2.0 * PI))
}
