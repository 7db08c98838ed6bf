//! Bounded open planar domains.
//!
//! All domains are open: boundary points are outside, and
//! `contains(p) <=> signed_distance(p) > 0` holds by construction for every
//! variant.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::rng::RandomStream;
use crate::stats::linear_fit;

/// Polygons with more edges than this get a uniform-grid edge index.
pub const BRUTE_FORCE_EDGE_LIMIT: usize = 1000;
/// Highest Koch level that will be expanded (3 * 4^8 = 196608 edges).
pub const MAX_KOCH_LEVEL: u32 = 8;
pub const DEFAULT_REJECTION_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point2,
    pub max: Point2,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn inflate(&self, r: f64) -> BoundingBox {
        BoundingBox {
            min: Point2::new(self.min.x - r, self.min.y - r),
            max: Point2::new(self.max.x + r, self.max.y + r),
        }
    }

    fn of_points(pts: &[Point2]) -> BoundingBox {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BoundingBox { min, max }
    }

    #[inline]
    fn sample(&self, rng: &mut RandomStream) -> Point2 {
        Point2::new(
            self.min.x + self.width() * rng.uniform(),
            self.min.y + self.height() * rng.uniform(),
        )
    }
}

/// A simple counterclockwise polygon with cached measures and, above
/// [`BRUTE_FORCE_EDGE_LIMIT`] edges, a uniform-grid edge index.
#[derive(Clone)]
pub struct Polygon {
    vertices: Vec<Point2>,
    area: f64,
    perimeter: f64,
    bbox: BoundingBox,
    index: Option<EdgeGrid>,
}

impl fmt::Debug for Polygon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Polygon")
            .field("n_vertices", &self.vertices.len())
            .field("area", &self.area)
            .field("perimeter", &self.perimeter)
            .finish()
    }
}

impl PartialEq for Polygon {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
    }
}

fn shoelace(vs: &[Point2]) -> f64 {
    let n = vs.len();
    let mut s = crate::stats::CompensatedSum::new();
    for i in 0..n {
        s.add(vs[i].cross(vs[(i + 1) % n]));
    }
    0.5 * s.value()
}

impl Polygon {
    /// Validates and builds a polygon. Vertices must be finite, at least
    /// three, counterclockwise and non-self-intersecting.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(LabError::InvalidDomain(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(LabError::InvalidDomain("non-finite polygon vertex".into()));
        }
        let area = shoelace(&vertices);
        if area <= 0.0 {
            return Err(LabError::InvalidDomain(
                "polygon vertices must be listed counterclockwise".into(),
            ));
        }
        if let Some((i, j)) = find_self_intersection(&vertices) {
            return Err(LabError::InvalidDomain(format!("polygon edges {i} and {j} intersect")));
        }
        Ok(Self::new_unchecked(vertices))
    }

    fn new_unchecked(vertices: Vec<Point2>) -> Self {
        let area = shoelace(&vertices);
        let n = vertices.len();
        let perimeter = crate::stats::compensated_sum((0..n).map(|i| (vertices[(i + 1) % n] - vertices[i]).norm()));
        let bbox = BoundingBox::of_points(&vertices);
        let index = (n > BRUTE_FORCE_EDGE_LIMIT).then(|| EdgeGrid::build(&vertices, bbox));
        Self { vertices, area, perimeter, bbox, index }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn n_edges(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    fn edge(&self, i: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    /// Interior angles at every vertex, in radians.
    pub fn interior_angles(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let prev = self.vertices[(i + n - 1) % n];
                let v = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let e_in = v - prev;
                let e_out = next - v;
                std::f64::consts::PI - e_in.cross(e_out).atan2(e_in.dot(e_out))
            })
            .collect()
    }

    fn nearest(&self, p: Point2) -> Nearest {
        match &self.index {
            Some(grid) => grid.nearest(self, p),
            None => {
                let mut best = Nearest::none();
                for i in 0..self.vertices.len() {
                    best.consider(self, i, p);
                }
                best
            }
        }
    }

    fn signed_distance(&self, p: Point2) -> f64 {
        let nearest = self.nearest(p);
        let d = nearest.dist_sq.sqrt();
        if d == 0.0 {
            return 0.0;
        }
        if self.inside_from_feature(&nearest, p) {
            d
        } else {
            -d
        }
    }

    /// Side test from the nearest boundary feature: an edge interior decides
    /// by its supporting line; a vertex by the local wedge (convex: left of
    /// both edges, reflex: left of either).
    fn inside_from_feature(&self, nearest: &Nearest, p: Point2) -> bool {
        let n = self.vertices.len();
        let (a, b) = self.edge(nearest.edge);
        let vertex = if nearest.u <= 0.0 {
            Some(nearest.edge)
        } else if nearest.u >= 1.0 {
            Some((nearest.edge + 1) % n)
        } else {
            None
        };
        match vertex {
            None => (b - a).cross(p - a) > 0.0,
            Some(k) => {
                let prev = self.vertices[(k + n - 1) % n];
                let v = self.vertices[k];
                let next = self.vertices[(k + 1) % n];
                let e_in = v - prev;
                let e_out = next - v;
                let w = p - v;
                let left_in = e_in.cross(w) > 0.0;
                let left_out = e_out.cross(w) > 0.0;
                if e_in.cross(e_out) > 0.0 {
                    left_in && left_out
                } else {
                    left_in || left_out
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Nearest {
    dist_sq: f64,
    edge: usize,
    u: f64,
}

impl Nearest {
    fn none() -> Self {
        Self { dist_sq: f64::INFINITY, edge: 0, u: 0.0 }
    }

    #[inline]
    fn consider(&mut self, poly: &Polygon, i: usize, p: Point2) {
        let (a, b) = poly.edge(i);
        let d = b - a;
        let len_sq = d.norm_sq();
        let u = if len_sq > 0.0 { ((p - a).dot(d) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + d * u;
        let dist_sq = (p - q).norm_sq();
        if dist_sq < self.dist_sq {
            *self = Nearest { dist_sq, edge: i, u };
        }
    }
}

/// Uniform grid over the polygon's bounding box; each cell lists the edges
/// whose bounding boxes overlap it.
#[derive(Clone)]
struct EdgeGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    edges: Vec<u32>,
}

impl EdgeGrid {
    fn build(vs: &[Point2], bbox: BoundingBox) -> Self {
        let n = vs.len();
        let span = bbox.width().max(bbox.height());
        let cell = (2.0 * (bbox.area().max(span * span * 1e-6) / n as f64).sqrt()).max(span * 1e-4);
        let origin = bbox.min;
        let nx = ((bbox.width() / cell).floor() as usize + 1).max(1);
        let ny = ((bbox.height() / cell).floor() as usize + 1).max(1);
        let cell_of = |x: f64, y: f64| -> (usize, usize) {
            let cx = (((x - origin.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy = (((y - origin.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            (cx, cy)
        };
        let mut counts = vec![0u32; nx * ny + 1];
        let mut ranges = Vec::with_capacity(n);
        for i in 0..n {
            let a = vs[i];
            let b = vs[(i + 1) % n];
            let (x0, y0) = cell_of(a.x.min(b.x), a.y.min(b.y));
            let (x1, y1) = cell_of(a.x.max(b.x), a.y.max(b.y));
            ranges.push((x0, y0, x1, y1));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    counts[cy * nx + cx + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut edges = vec![0u32; *counts.last().unwrap() as usize];
        for (i, &(x0, y0, x1, y1)) in ranges.iter().enumerate() {
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    let slot = &mut fill[cy * nx + cx];
                    edges[*slot as usize] = i as u32;
                    *slot += 1;
                }
            }
        }
        Self { origin, cell, nx, ny, starts: counts, edges }
    }

    fn nearest(&self, poly: &Polygon, p: Point2) -> Nearest {
        let cx = (((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize).min(self.nx - 1) as isize;
        let cy = (((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize).min(self.ny - 1) as isize;
        let mut best = Nearest::none();
        let max_ring = self.nx.max(self.ny) as isize;
        let visit = |x: isize, y: isize, best: &mut Nearest| {
            if x < 0 || y < 0 || x >= self.nx as isize || y >= self.ny as isize {
                return;
            }
            let c = y as usize * self.nx + x as usize;
            for &e in &self.edges[self.starts[c] as usize..self.starts[c + 1] as usize] {
                best.consider(poly, e as usize, p);
            }
        };
        for ring in 0..=max_ring {
            if ring == 0 {
                visit(cx, cy, &mut best);
            } else {
                for dx in -ring..=ring {
                    visit(cx + dx, cy - ring, &mut best);
                    visit(cx + dx, cy + ring, &mut best);
                }
                for dy in (-ring + 1)..ring {
                    visit(cx - ring, cy + dy, &mut best);
                    visit(cx + ring, cy + dy, &mut best);
                }
            }
            // Unvisited cells lie at least `ring * cell` away from p.
            let bound = ring as f64 * self.cell;
            if best.dist_sq <= bound * bound {
                break;
            }
        }
        best
    }
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let orient = |a: Point2, b: Point2, c: Point2| (b - a).cross(c - a);
    let on_segment = |a: Point2, b: Point2, c: Point2| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Returns a pair of offending edges if the closed polyline is not simple.
/// Adjacent edges may only share their common vertex.
pub(crate) fn find_self_intersection(vs: &[Point2]) -> Option<(usize, usize)> {
    let n = vs.len();
    let boxes: Vec<BoundingBox> = (0..n).map(|i| BoundingBox::of_points(&[vs[i], vs[(i + 1) % n]])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| boxes[a].min.x.total_cmp(&boxes[b].min.x));
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if boxes[j].min.x > boxes[i].max.x {
                break;
            }
            if boxes[j].min.y > boxes[i].max.y || boxes[j].max.y < boxes[i].min.y {
                continue;
            }
            let (i, j) = (i.min(j), i.max(j));
            let (a1, a2) = (vs[i], vs[(i + 1) % n]);
            let (b1, b2) = (vs[j], vs[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is fine; collinear overlap is not.
                let (shared, other_a, other_b) = if j == i + 1 { (a2, a1, b2) } else { (a1, a2, b1) };
                let da = other_a - shared;
                let db = other_b - shared;
                if da.cross(db) == 0.0 && da.dot(db) > 0.0 {
                    return Some((i, j));
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Vertices of the level-`level` Koch snowflake prefractal built outward
/// from a counterclockwise equilateral triangle with lower-left corner at
/// `origin`.
pub fn koch_vertices(level: u32, side: f64, origin: Point2) -> Vec<Point2> {
    let h = side * 3f64.sqrt() / 2.0;
    let mut vs = vec![origin, origin + Point2::new(side, 0.0), origin + Point2::new(side / 2.0, h)];
    let (s60, c60) = (std::f64::consts::FRAC_PI_3).sin_cos();
    for _ in 0..level {
        let n = vs.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = vs[i];
            let b = vs[(i + 1) % n];
            let d = (b - a) * (1.0 / 3.0);
            let p1 = a + d;
            // Clockwise rotation by 60 degrees points away from the interior.
            let bump = Point2::new(d.x * c60 + d.y * s60, -d.x * s60 + d.y * c60);
            next.push(a);
            next.push(p1);
            next.push(p1 + bump);
            next.push(a + d * 2.0);
        }
        vs = next;
    }
    vs
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanarDomain {
    Rectangle { origin: Point2, width: f64, height: f64 },
    Disk { center: Point2, radius: f64 },
    Polygon(Polygon),
    Koch { level: u32, side: f64, origin: Point2, polygon: Polygon },
}

impl PlanarDomain {
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        Self::rectangle_at(Point2::ORIGIN, width, height)
    }

    pub fn rectangle_at(origin: Point2, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) || !origin.is_finite() {
            return Err(LabError::InvalidDomain(format!("rectangle needs positive finite sides, got {width} x {height}")));
        }
        Ok(PlanarDomain::Rectangle { origin, width, height })
    }

    pub fn unit_square() -> Self {
        PlanarDomain::Rectangle { origin: Point2::ORIGIN, width: 1.0, height: 1.0 }
    }

    pub fn disk(radius: f64) -> Result<Self> {
        Self::disk_at(Point2::ORIGIN, radius)
    }

    pub fn disk_at(center: Point2, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(LabError::InvalidDomain(format!("disk needs a positive finite radius, got {radius}")));
        }
        Ok(PlanarDomain::Disk { center, radius })
    }

    pub fn polygon(vertices: Vec<Point2>) -> Result<Self> {
        Ok(PlanarDomain::Polygon(Polygon::new(vertices)?))
    }

    pub fn koch(level: u32, side: f64) -> Result<Self> {
        Self::koch_at(level, side, Point2::ORIGIN)
    }

    pub fn koch_at(level: u32, side: f64, origin: Point2) -> Result<Self> {
        if level > MAX_KOCH_LEVEL {
            return Err(LabError::InvalidDomain(format!("Koch level {level} exceeds the cap {MAX_KOCH_LEVEL}")));
        }
        if !(side > 0.0 && side.is_finite()) || !origin.is_finite() {
            return Err(LabError::InvalidDomain(format!("Koch side must be positive, got {side}")));
        }
        let polygon = Polygon::new_unchecked(koch_vertices(level, side, origin));
        Ok(PlanarDomain::Koch { level, side, origin, polygon })
    }

    /// Reads a polygon from a text file with one `x y` pair per line,
    /// counterclockwise. Blank lines and `#` comments are ignored.
    pub fn from_vertex_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LabError::InvalidDomain(format!("line {}: {e}", lineno + 1)))?;
            if nums.len() != 2 {
                return Err(LabError::InvalidDomain(format!("line {}: expected `x y`", lineno + 1)));
            }
            vs.push(Point2::new(nums[0], nums[1]));
        }
        Self::polygon(vs)
    }

    pub fn as_polygon(&self) -> Option<&Polygon> {
        match self {
            PlanarDomain::Polygon(p) => Some(p),
            PlanarDomain::Koch { polygon, .. } => Some(polygon),
            _ => None,
        }
    }

    /// Short human-readable description, stable across runs.
    pub fn describe(&self) -> String {
        match self {
            PlanarDomain::Rectangle { origin, width, height } => {
                format!("rectangle(width={width},height={height},origin=({},{}))", origin.x, origin.y)
            }
            PlanarDomain::Disk { center, radius } => {
                format!("disk(radius={radius},center=({},{}))", center.x, center.y)
            }
            PlanarDomain::Polygon(p) => {
                let mut h = crate::rng::mix_words(&[p.vertices.len() as u64]);
                for v in &p.vertices {
                    h = crate::rng::mix_words(&[h, v.x.to_bits(), v.y.to_bits()]);
                }
                format!("polygon(n={},hash={h:016x})", p.vertices.len())
            }
            PlanarDomain::Koch { level, side, origin, .. } => {
                format!("koch(level={level},side={side},origin=({},{}))", origin.x, origin.y)
            }
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Positive inside, negative outside, magnitude equal to the Euclidean
    /// distance to the boundary.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match self {
            PlanarDomain::Rectangle { origin, width, height } => {
                let dl = p.x - origin.x;
                let dr = origin.x + width - p.x;
                let db = p.y - origin.y;
                let dt = origin.y + height - p.y;
                let inside = dl.min(dr).min(db.min(dt));
                if inside > 0.0 {
                    inside
                } else {
                    let ox = (-dl).max(-dr).max(0.0);
                    let oy = (-db).max(-dt).max(0.0);
                    let d = ox.hypot(oy);
                    if d == 0.0 {
                        0.0
                    } else {
                        -d
                    }
                }
            }
            PlanarDomain::Disk { center, radius } => radius - (p - *center).norm(),
            PlanarDomain::Polygon(poly) | PlanarDomain::Koch { polygon: poly, .. } => poly.signed_distance(p),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            PlanarDomain::Rectangle { width, height, .. } => width * height,
            PlanarDomain::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            PlanarDomain::Polygon(p) | PlanarDomain::Koch { polygon: p, .. } => p.area,
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            PlanarDomain::Rectangle { width, height, .. } => 2.0 * (width + height),
            PlanarDomain::Disk { radius, .. } => 2.0 * std::f64::consts::PI * radius,
            PlanarDomain::Polygon(p) => p.perimeter,
            PlanarDomain::Koch { level, side, .. } => 3.0 * side * (4.0f64 / 3.0).powi(*level as i32),
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match self {
            PlanarDomain::Rectangle { origin, width, height } => BoundingBox {
                min: *origin,
                max: Point2::new(origin.x + width, origin.y + height),
            },
            PlanarDomain::Disk { center, radius } => BoundingBox {
                min: Point2::new(center.x - radius, center.y - radius),
                max: Point2::new(center.x + radius, center.y + radius),
            },
            PlanarDomain::Polygon(p) | PlanarDomain::Koch { polygon: p, .. } => p.bbox,
        }
    }

    /// Uniform point in the domain by rejection from the bounding box.
    pub fn sample_uniform(&self, rng: &mut RandomStream) -> Result<Point2> {
        self.sample_uniform_capped(rng, DEFAULT_REJECTION_CAP)
    }

    pub fn sample_uniform_capped(&self, rng: &mut RandomStream, cap: usize) -> Result<Point2> {
        let bbox = self.bounding_box();
        for _ in 0..cap {
            let p = bbox.sample(rng);
            if self.contains(p) {
                return Ok(p);
            }
        }
        Err(LabError::RejectionCap(cap))
    }

    /// Hit-or-miss estimate of the area of the boundary tube
    /// `{x : dist(x, boundary) < r}`.
    pub fn boundary_neighborhood_area(&self, r: f64, n_samples: usize, rng: &mut RandomStream) -> Result<BoundaryNeighborhood> {
        check_tube_args(r, n_samples)?;
        let bbox = self.bounding_box().inflate(r);
        let hits = (0..n_samples).filter(|_| self.signed_distance(bbox.sample(rng)).abs() < r).count();
        Ok(BoundaryNeighborhood::from_hits(r, hits, n_samples, bbox.area()))
    }

    /// Parallel variant of [`Self::boundary_neighborhood_area`]: samples are
    /// split into fixed blocks, each with its own derived stream, so the
    /// result depends only on `(seed, label)`.
    pub fn boundary_neighborhood_area_seeded(&self, r: f64, n_samples: usize, seed: u64, label: u64) -> Result<BoundaryNeighborhood> {
        const BLOCK: usize = 1 << 14;
        check_tube_args(r, n_samples)?;
        let bbox = self.bounding_box().inflate(r);
        let n_blocks = n_samples.div_ceil(BLOCK);
        let hits: usize = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = RandomStream::derive(seed, label, b as u64);
                let len = BLOCK.min(n_samples - b * BLOCK);
                (0..len).filter(|_| self.signed_distance(bbox.sample(&mut rng)).abs() < r).count()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        Ok(BoundaryNeighborhood::from_hits(r, hits, n_samples, bbox.area()))
    }
}

fn check_tube_args(r: f64, n_samples: usize) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(LabError::arg(format!("tube half-width must be positive, got {r}")));
    }
    if n_samples < 1000 {
        return Err(LabError::arg(format!("need at least 1000 samples, got {n_samples}")));
    }
    Ok(())
}

/// Monte Carlo estimate of the area of the boundary tube of half-width `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNeighborhood {
    pub r: f64,
    pub area_estimate: f64,
    pub std_error: f64,
    pub hits: usize,
    pub n_samples: usize,
}

impl BoundaryNeighborhood {
    fn from_hits(r: f64, hits: usize, n: usize, box_area: f64) -> Self {
        let p = hits as f64 / n as f64;
        BoundaryNeighborhood {
            r,
            area_estimate: box_area * p,
            std_error: box_area * (p * (1.0 - p) / n as f64).sqrt(),
            hits,
            n_samples: n,
        }
    }
}

/// Least-squares slope `s` of `log A(r)` against `log r`; returns the
/// Minkowski dimension `2 - s`.
pub fn minkowski_fit(neighborhoods: &[BoundaryNeighborhood]) -> Result<f64> {
    for (i, nb) in neighborhoods.iter().enumerate() {
        if !(nb.area_estimate > 0.0) {
            return Err(LabError::NonPositive { index: i, value: nb.area_estimate });
        }
    }
    let mut rs: Vec<f64> = neighborhoods.iter().map(|n| n.r).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    if rs.len() < 3 {
        return Err(LabError::arg("minkowski_fit needs at least 3 distinct r values"));
    }
    let xs: Vec<f64> = neighborhoods.iter().map(|n| n.r.ln()).collect();
    let ys: Vec<f64> = neighborhoods.iter().map(|n| n.area_estimate.ln()).collect();
    let (_, slope) = linear_fit(&xs, &ys).ok_or_else(|| LabError::arg("degenerate fit"))?;
    Ok(2.0 - slope)
}
