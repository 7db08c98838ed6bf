//! Discretized planar Brownian motions and bridges with generator `Δ/2`,
//! and Dirichlet survival checks.

use crate::error::{LabError, Result};
use crate::geometry::{PlanarDomain, Point2};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathKind {
    Motion,
    Bridge,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Motion => "motion",
            PathKind::Bridge => "bridge",
        }
    }
}

impl std::str::FromStr for PathKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "motion" => Ok(PathKind::Motion),
            "bridge" => Ok(PathKind::Bridge),
            other => Err(LabError::arg(format!("unknown path kind `{other}`"))),
        }
    }
}

/// Positions of a path on the uniform grid `i * t / n_steps`, `i = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    kind: PathKind,
    start: Point2,
    horizon: f64,
    positions: Vec<Point2>,
}

impl DiscretePath {
    /// Builds a path from explicit positions. Bridges must return to their
    /// starting point.
    pub fn from_positions(kind: PathKind, horizon: f64, positions: Vec<Point2>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LabError::arg(format!("horizon must be positive, got {horizon}")));
        }
        if positions.len() < 2 {
            return Err(LabError::arg("a path needs at least one step"));
        }
        let start = positions[0];
        if kind == PathKind::Bridge && positions[positions.len() - 1] != start {
            return Err(LabError::arg("bridge endpoints must coincide"));
        }
        Ok(Self { kind, start, horizon, positions })
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn start(&self) -> Point2 {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps() as f64
    }

    /// Rigid translation of every position.
    pub fn shifted(&self, v: Point2) -> DiscretePath {
        DiscretePath {
            kind: self.kind,
            start: self.start + v,
            horizon: self.horizon,
            positions: self.positions.iter().map(|&p| p + v).collect(),
        }
    }

    /// Debug dump as CSV `i,time,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,time,x,y\n");
        for (i, p) in self.positions.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", self.time(i), p.x, p.y));
        }
        out
    }
}

fn check_horizon(t: f64, n_steps: usize, min_steps: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::arg(format!("horizon must be positive, got {t}")));
    }
    if n_steps < min_steps {
        return Err(LabError::arg(format!("need at least {min_steps} steps, got {n_steps}")));
    }
    Ok(())
}

/// Standard-normal random walk on the unit-time grid, scaled to `t = 1`:
/// `u_i = sqrt(1/n) * sum_{k<=i} z_k` per coordinate.
fn unit_walk(n_steps: usize, rng: &mut RandomStream) -> Vec<Point2> {
    let scale = (1.0 / n_steps as f64).sqrt();
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut walk = Vec::with_capacity(n_steps + 1);
    walk.push(Point2::ORIGIN);
    for _ in 0..n_steps {
        sx += rng.normal();
        sy += rng.normal();
        walk.push(Point2::new(scale * sx, scale * sy));
    }
    walk
}

/// Brownian motion `B^x` on `[0, t]`: independent Gaussian increments with
/// per-coordinate variance `t / n_steps`.
pub fn sample_motion(x: Point2, t: f64, n_steps: usize, rng: &mut RandomStream) -> Result<DiscretePath> {
    check_horizon(t, n_steps, 1)?;
    let st = t.sqrt();
    let positions = unit_walk(n_steps, rng).into_iter().map(|u| x + u * st).collect();
    Ok(DiscretePath { kind: PathKind::Motion, start: x, horizon: t, positions })
}

/// Brownian bridge `B^{x,x}_t`, built as `x + W(s) - (s/t) W(t)` from a
/// fresh motion `W` started at the origin.
///
/// The unit-time bridge is formed first and then scaled by `sqrt(t)`, so a
/// bridge of horizon `t` and the bridge of horizon 1 drawn from the same
/// stream satisfy `positions_t[i] = x + sqrt(t) * positions_1[i]` exactly.
pub fn sample_bridge(x: Point2, t: f64, n_steps: usize, rng: &mut RandomStream) -> Result<DiscretePath> {
    check_horizon(t, n_steps, 2)?;
    let walk = unit_walk(n_steps, rng);
    let end = walk[n_steps];
    let st = t.sqrt();
    let inv_n = 1.0 / n_steps as f64;
    let mut positions: Vec<Point2> = walk
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let f = i as f64 * inv_n;
            let u = Point2::new(w.x - f * end.x, w.y - f * end.y);
            x + u * st
        })
        .collect();
    positions[0] = x;
    positions[n_steps] = x;
    Ok(DiscretePath { kind: PathKind::Bridge, start: x, horizon: t, positions })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurvivalVerdict {
    pub survived: bool,
    /// Grid index at (or before) which the path was first found outside.
    pub first_exit_step: Option<usize>,
    pub correction_applied: bool,
}

/// Probability that a Brownian bridge over a step of length `dt` between
/// points at distances `d0, d1 > 0` from a straight boundary crosses it.
#[inline]
pub fn half_plane_crossing_probability(d0: f64, d1: f64, dt: f64) -> f64 {
    (-2.0 * d0 * d1 / dt).exp()
}

/// Decides whether the path stays in `domain` up to its horizon.
///
/// Without correction only the grid positions are checked. With correction,
/// every step whose endpoints are both inside is additionally killed with
/// the probability that the Brownian bridge between them leaves the domain:
/// the half-plane formula applied to the signed distances, or for
/// rectangles the product over the four sides, which is exact up to
/// exponentially small two-sided terms.
pub fn survives(path: &DiscretePath, domain: &PlanarDomain, correction: bool, rng: &mut RandomStream) -> SurvivalVerdict {
    let dt = path.dt();
    let pts = path.positions();
    let fail = |i: usize| SurvivalVerdict { survived: false, first_exit_step: Some(i), correction_applied: correction };

    if let (true, PlanarDomain::Rectangle { origin, width, height }) = (correction, domain) {
        let sides = |p: Point2| {
            [p.x - origin.x, origin.x + width - p.x, p.y - origin.y, origin.y + height - p.y]
        };
        let mut prev = sides(pts[0]);
        if prev.iter().any(|&d| d <= 0.0) {
            return fail(0);
        }
        for (i, &p) in pts.iter().enumerate().skip(1) {
            let cur = sides(p);
            if cur.iter().any(|&d| d <= 0.0) {
                return fail(i);
            }
            let mut stay = 1.0;
            for k in 0..4 {
                stay *= 1.0 - half_plane_crossing_probability(prev[k], cur[k], dt);
            }
            if stay < 1.0 && rng.uniform() >= stay {
                return fail(i);
            }
            prev = cur;
        }
        return SurvivalVerdict { survived: true, first_exit_step: None, correction_applied: true };
    }

    let mut prev = domain.signed_distance(pts[0]);
    if prev <= 0.0 {
        return fail(0);
    }
    for (i, &p) in pts.iter().enumerate().skip(1) {
        let cur = domain.signed_distance(p);
        if cur <= 0.0 {
            return fail(i);
        }
        if correction {
            let cross = half_plane_crossing_probability(prev, cur, dt);
            if cross > 0.0 && rng.uniform() < cross {
                return fail(i);
            }
        }
        prev = cur;
    }
    SurvivalVerdict { survived: true, first_exit_step: None, correction_applied: correction }
}
