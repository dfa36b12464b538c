//! Camera-footprint-aware boustrophedon sweeps over convex regions.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

pub type Vec2 = Vector2<f64>;

const CONVEX_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("region needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("region vertices must be counter-clockwise with non-zero area")]
    NotCounterClockwise,
    #[error("region is not convex at vertex {0}")]
    NotConvex(usize),
    #[error("sweep spacing is zero (overlap = 1)")]
    DegenerateSpacing,
    #[error("invalid sweep parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ConvexRegion {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<[f64; 2]>> for ConvexRegion {
    type Error = CoverageError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
    }
}

impl From<ConvexRegion> for Vec<[f64; 2]> {
    fn from(r: ConvexRegion) -> Self {
        r.vertices.iter().map(|v| [v.x, v.y]).collect()
    }
}

impl ConvexRegion {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, CoverageError> {
        let n = vertices.len();
        if n < 3 {
            return Err(CoverageError::TooFewVertices(n));
        }
        let region = Self { vertices };
        if !(region.area() > 0.0) {
            return Err(CoverageError::NotCounterClockwise);
        }
        for i in 0..n {
            let (a, b, c) = (region.vertices[i], region.vertices[(i + 1) % n], region.vertices[(i + 2) % n]);
            if cross(b - a, c - b) < -CONVEX_TOL {
                return Err(CoverageError::NotConvex((i + 1) % n));
            }
        }
        Ok(region)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, CoverageError> {
        Self::new(vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// Signed shoelace area (positive for counter-clockwise order).
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n).map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n])).sum::<f64>() / 2.0
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.edges().all(|(a, b)| cross(b - a, p - a) >= -CONVEX_TOL)
    }

    /// Euclidean distance from `p` to the region (zero inside).
    pub fn distance(&self, p: &Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges().map(|(a, b)| segment_distance(p, &a, &b)).fold(f64::INFINITY, f64::min)
    }

    /// Direction (radians) of the longest edge; the first one wins ties.
    pub fn longest_edge_heading(&self) -> f64 {
        let mut best = (0.0, 0.0);
        for (a, b) in self.edges() {
            let len = (b - a).norm();
            if len > best.0 + 1e-12 {
                best = (len, (b.y - a.y).atan2(b.x - a.x));
            }
        }
        best.1
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec2 {
        self.vertices.iter().sum::<Vec2>() / self.vertices.len() as f64
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// Flight altitude above ground, m.
    pub altitude: f64,
    /// Full camera field of view, rad.
    pub fov: f64,
    /// Fractional overlap between neighboring footprints, in `[0, 1]`.
    pub overlap: f64,
    /// Direction the sweep lines run along, rad. Defaults to the longest edge.
    #[serde(default)]
    pub heading: Option<f64>,
}

impl SweepParams {
    pub fn validate(&self) -> Result<(), CoverageError> {
        if !(self.altitude > 0.0) {
            return Err(CoverageError::InvalidParams("altitude must be positive"));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(CoverageError::InvalidParams("field of view must be in (0, pi)"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(CoverageError::InvalidParams("overlap must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        max_sweep_distance(self.altitude, self.fov, self.overlap)
    }
}

/// Largest distance between neighboring sweep lines that keeps the requested
/// footprint overlap: `(1 - overlap) * 2 * z * tan(fov / 2)`.
pub fn max_sweep_distance(altitude: f64, fov: f64, overlap: f64) -> f64 {
    (1.0 - overlap) * 2.0 * altitude * (fov / 2.0).tan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub region_id: usize,
    pub waypoints: Vec<Vec3>,
    /// Perpendicular offsets of the sweep lines, ascending.
    pub line_offsets: Vec<f64>,
    pub heading: f64,
    pub spacing: f64,
}

impl SweepPlan {
    /// `x,y,z` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z\n");
        for w in &self.waypoints {
            s.push_str(&format!("{:.6},{:.6},{:.6}\n", w.x, w.y, w.z));
        }
        s
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Zig-zag over `region` with lines parallel to the sweep heading.
///
/// Lines are inset from the two extremal support lines by a quarter spacing
/// (or a quarter of the region width when narrower), evenly spread, and never
/// further apart than [`max_sweep_distance`]. At least two lines are flown.
pub fn plan_sweep(region: &ConvexRegion, params: &SweepParams, region_id: usize) -> Result<SweepPlan, CoverageError> {
    params.validate()?;
    let spacing = params.spacing();
    if !(spacing > 0.0) {
        return Err(CoverageError::DegenerateSpacing);
    }
    let heading = params.heading.unwrap_or_else(|| region.longest_edge_heading());
    let along = Vec2::new(heading.cos(), heading.sin());
    let across = Vec2::new(-heading.sin(), heading.cos());

    let offsets_of: Vec<f64> = region.vertices().iter().map(|v| v.dot(&across)).collect();
    let lo = offsets_of.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = offsets_of.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    let inset = (spacing / 4.0).min(width / 4.0);
    let span = width - 2.0 * inset;
    let lines = ((span / spacing).ceil() as usize + 1).max(2);
    let step = span / (lines - 1) as f64;
    let line_offsets: Vec<f64> = (0..lines).map(|i| lo + inset + step * i as f64).collect();

    let mut waypoints: Vec<Vec3> = Vec::with_capacity(2 * lines);
    for (i, &c) in line_offsets.iter().enumerate() {
        let Some((u0, u1)) = clip_line(region, &along, &across, c) else {
            continue;
        };
        let (first, second) = if i % 2 == 0 { (u0, u1) } else { (u1, u0) };
        for u in [first, second] {
            let p = across * c + along * u;
            let w = Vec3::new(p.x, p.y, params.altitude);
            if waypoints.last().is_none_or(|last| (last - w).norm() > 1e-9) {
                waypoints.push(w);
            }
        }
    }
    Ok(SweepPlan { region_id, waypoints, line_offsets, heading, spacing })
}

/// Along-heading extent of the chord at perpendicular offset `c`.
fn clip_line(region: &ConvexRegion, along: &Vec2, across: &Vec2, c: f64) -> Option<(f64, f64)> {
    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in region.edges() {
        let (wa, wb) = (a.dot(across), b.dot(across));
        let (ua, ub) = (a.dot(along), b.dot(along));
        if (wa - c) * (wb - c) > 0.0 {
            continue;
        }
        if (wb - wa).abs() < 1e-15 {
            umin = umin.min(ua.min(ub));
            umax = umax.max(ua.max(ub));
        } else {
            let t = (c - wa) / (wb - wa);
            let u = ua + t * (ub - ua);
            umin = umin.min(u);
            umax = umax.max(u);
        }
    }
    (umin <= umax).then_some((umin, umax))
}

/// Axis-aligned square of ground seen from a nadir camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub center: Vec2,
    pub half_width: f64,
}

impl Footprint {
    pub fn contains(&self, p: &Vec2) -> bool {
        (p.x - self.center.x).abs() <= self.half_width && (p.y - self.center.y).abs() <= self.half_width
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_width * self.half_width
    }
}

pub fn camera_footprint(position: &Vec3, fov: f64) -> Footprint {
    Footprint {
        center: Vec2::new(position.x, position.y),
        half_width: position.z.max(0.0) * (fov / 2.0).tan(),
    }
}
