//! Planar geometry: wall-plane frames, polygon predicates and rectangular
//! hole cutting.
//!
//! Every wall of a building model is a planar [`PolygonWithHoles`]. The
//! [`WallFrame`] attached to it is the projection target for all raster
//! evidence and the coordinate system in which openings are expressed, so
//! rectangles ([`Rect2`]) live in frame coordinates `(u, v)` and are lifted
//! back to world space through the frame.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Polygons with less area than this are degenerate (m²).
pub const MIN_POLYGON_AREA: f64 = 1e-6;
/// Planarity tolerance for geometry produced by this crate (m).
pub const OUTPUT_PLANARITY_TOL: f64 = 1e-6;
/// Planarity tolerance accepted on input models (m).
pub const INPUT_PLANARITY_TOL: f64 = 1e-3;
/// Distance under which a 2D point is considered to lie on a ring edge (m).
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("hole {0:?} is not strictly inside the wall outline")]
    HoleOutsideWall(Rect2),
    #[error("hole {0:?} overlaps an existing interior ring")]
    HoleOverlap(Rect2),
    #[error("invalid rectangle [{u_min}, {u_max}] x [{v_min}, {v_max}]")]
    InvalidRect {
        u_min: f64,
        v_min: f64,
        u_max: f64,
        v_max: f64,
    },
}

/// A 3D vector or point in metric world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

// Points travel as `[x, y, z]` arrays in every file format.
impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 3]>::deserialize(d).map(Vec3::from)
    }
}

/// Planar polygon with optional holes. Rings are stored open (the closing
/// vertex is implicit).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolygonWithHoles {
    pub exterior: Vec<Point3>,
    pub interiors: Vec<Vec<Point3>>,
}

impl PolygonWithHoles {
    pub fn new(exterior: Vec<Point3>) -> Self {
        PolygonWithHoles {
            exterior,
            interiors: Vec::new(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point3>> {
        std::iter::once(&self.exterior).chain(self.interiors.iter())
    }

    /// Exterior area minus hole areas (m²).
    pub fn area(&self) -> f64 {
        let ext = newell_normal(&self.exterior).norm() * 0.5;
        let holes: f64 = self
            .interiors
            .iter()
            .map(|r| newell_normal(r).norm() * 0.5)
            .sum();
        ext - holes
    }

    /// Largest distance of any vertex to the plane fitted to the exterior ring.
    pub fn planarity_residual(&self) -> f64 {
        let n = newell_normal(&self.exterior);
        let len = n.norm();
        if len == 0.0 {
            return f64::INFINITY;
        }
        let n = n * (1.0 / len);
        let c = centroid(&self.exterior);
        self.rings()
            .flatten()
            .map(|p| (*p - c).dot(n).abs())
            .fold(0.0, f64::max)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Point3> {
        self.rings().flatten()
    }
}

/// Newell's method. The returned vector has length twice the ring area and
/// points along the normal for which the ring is counter-clockwise.
pub fn newell_normal(ring: &[Point3]) -> Vec3 {
    let mut n = Vec3::ZERO;
    for (i, a) in ring.iter().enumerate() {
        let b = ring[(i + 1) % ring.len()];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let sum = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p);
    sum * (1.0 / points.len() as f64)
}

/// Axis-aligned rectangle in wall-frame coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2 {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl Rect2 {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self, GeomError> {
        let ok = [u_min, v_min, u_max, v_max].iter().all(|x| x.is_finite())
            && u_min < u_max
            && v_min < v_max;
        if ok {
            Ok(Rect2 {
                u_min,
                v_min,
                u_max,
                v_max,
            })
        } else {
            Err(GeomError::InvalidRect {
                u_min,
                v_min,
                u_max,
                v_max,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed-set intersection test (touching rectangles intersect).
    pub fn intersects(&self, o: &Rect2) -> bool {
        self.u_min <= o.u_max && o.u_min <= self.u_max && self.v_min <= o.v_max && o.v_min <= self.v_max
    }

    pub fn union(&self, o: &Rect2) -> Rect2 {
        Rect2 {
            u_min: self.u_min.min(o.u_min),
            v_min: self.v_min.min(o.v_min),
            u_max: self.u_max.max(o.u_max),
            v_max: self.v_max.max(o.v_max),
        }
    }

    pub fn intersection_area(&self, o: &Rect2) -> f64 {
        let w = self.u_max.min(o.u_max) - self.u_min.max(o.u_min);
        let h = self.v_max.min(o.v_max) - self.v_min.max(o.v_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, o: &Rect2) -> f64 {
        let inter = self.intersection_area(o);
        inter / (self.area() + o.area() - inter)
    }

    /// Corners in clockwise order as seen with `u` right and `v` up, i.e. the
    /// orientation of an interior ring.
    pub fn corners_cw(&self) -> [[f64; 2]; 4] {
        [
            [self.u_min, self.v_min],
            [self.u_min, self.v_max],
            [self.u_max, self.v_max],
            [self.u_max, self.v_min],
        ]
    }
}

/// Orthonormal right-handed frame on a wall plane. `u` runs horizontally,
/// `v` upwards along the wall and `normal` points out of the building.
/// The origin is the lower-left corner of the polygon's bounding rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallFrame {
    pub origin: Point3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub normal: Vec3,
    pub u_extent: f64,
    pub v_extent: f64,
}

impl WallFrame {
    /// World point to `(u, v, w)` frame coordinates.
    pub fn to_frame(&self, p: Point3) -> [f64; 3] {
        let d = p - self.origin;
        [d.dot(self.u_axis), d.dot(self.v_axis), d.dot(self.normal)]
    }

    pub fn from_frame(&self, u: f64, v: f64, w: f64) -> Point3 {
        self.origin + self.u_axis * u + self.v_axis * v + self.normal * w
    }

    pub fn project_ring(&self, ring: &[Point3]) -> Vec<[f64; 2]> {
        ring.iter()
            .map(|p| {
                let [u, v, _] = self.to_frame(*p);
                [u, v]
            })
            .collect()
    }

    pub fn project_polygon(&self, poly: &PolygonWithHoles) -> Polygon2 {
        Polygon2 {
            exterior: self.project_ring(&poly.exterior),
            interiors: poly.interiors.iter().map(|r| self.project_ring(r)).collect(),
        }
    }

    /// Frame-space bounding rectangle `[0, u_extent] x [0, v_extent]`.
    pub fn bounds(&self) -> Rect2 {
        Rect2 {
            u_min: 0.0,
            v_min: 0.0,
            u_max: self.u_extent,
            v_max: self.v_extent,
        }
    }
}

pub fn wall_frame_from_polygon(poly: &PolygonWithHoles) -> Result<WallFrame, GeomError> {
    let ring = &poly.exterior;
    if ring.len() < 3 {
        return Err(GeomError::DegeneratePolygon(format!(
            "exterior ring has {} vertices",
            ring.len()
        )));
    }
    let n = newell_normal(ring);
    let area = n.norm() * 0.5;
    if !(area >= MIN_POLYGON_AREA) {
        return Err(GeomError::DegeneratePolygon(format!(
            "exterior area {area:e} m² below threshold"
        )));
    }
    let normal = n.normalized();

    let horizontal = Vec3::UP.cross(normal);
    let u_axis = if horizontal.norm() > 1e-6 {
        horizontal.normalized()
    } else {
        // Horizontal surface: first non-degenerate edge, projected into the plane.
        let edge = ring
            .iter()
            .zip(ring.iter().cycle().skip(1))
            .map(|(a, b)| *b - *a)
            .map(|e| e - normal * e.dot(normal))
            .find(|e| e.norm() > 1e-9)
            .ok_or_else(|| GeomError::DegeneratePolygon("all edges collinear with normal".into()))?;
        edge.normalized()
    };
    let v_axis = normal.cross(u_axis);

    let c = centroid(ring);
    let (mut u_lo, mut u_hi, mut v_lo, mut v_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in ring {
        let d = *p - c;
        let (u, v) = (d.dot(u_axis), d.dot(v_axis));
        u_lo = u_lo.min(u);
        u_hi = u_hi.max(u);
        v_lo = v_lo.min(v);
        v_hi = v_hi.max(v);
    }
    Ok(WallFrame {
        origin: c + u_axis * u_lo + v_axis * v_lo,
        u_axis,
        v_axis,
        normal,
        u_extent: u_hi - u_lo,
        v_extent: v_hi - v_lo,
    })
}

/// Polygon in 2D frame coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon2 {
    pub exterior: Vec<[f64; 2]>,
    pub interiors: Vec<Vec<[f64; 2]>>,
}

impl Polygon2 {
    pub fn rings(&self) -> impl Iterator<Item = &Vec<[f64; 2]>> {
        std::iter::once(&self.exterior).chain(self.interiors.iter())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        point_in_polygon(u, v, self)
    }
}

fn ring_edges(ring: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn on_ring_boundary(u: f64, v: f64, ring: &[[f64; 2]], eps: f64) -> bool {
    ring_edges(ring).any(|(a, b)| segment_distance([u, v], a, b) <= eps)
}

fn crossings(u: f64, v: f64, ring: &[[f64; 2]]) -> usize {
    ring_edges(ring)
        .filter(|(a, b)| {
            (a[1] > v) != (b[1] > v) && u < a[0] + (v - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        })
        .count()
}

fn ring_contains_strict(u: f64, v: f64, ring: &[[f64; 2]]) -> bool {
    crossings(u, v, ring) % 2 == 1 && !on_ring_boundary(u, v, ring, BOUNDARY_EPS)
}

/// Even-odd point containment over all rings. Points on any ring boundary
/// count as inside.
pub fn point_in_polygon(u: f64, v: f64, poly: &Polygon2) -> bool {
    if poly.rings().any(|r| on_ring_boundary(u, v, r, BOUNDARY_EPS)) {
        return true;
    }
    poly.rings().map(|r| crossings(u, v, r)).sum::<usize>() % 2 == 1
}

/// Liang–Barsky test of a segment against the closed rectangle.
fn segment_hits_rect(a: [f64; 2], b: [f64; 2], r: &Rect2) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [
        (-d[0], a[0] - r.u_min),
        (d[0], r.u_max - a[0]),
        (-d[1], a[1] - r.v_min),
        (d[1], r.v_max - a[1]),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn rect_inside_ring(rect: &Rect2, ring: &[[f64; 2]]) -> bool {
    rect.corners_cw()
        .iter()
        .all(|c| ring_contains_strict(c[0], c[1], ring))
        && !ring_edges(ring).any(|(a, b)| segment_hits_rect(a, b, rect))
}

fn rect_touches_ring(rect: &Rect2, ring: &[[f64; 2]]) -> bool {
    ring_edges(ring).any(|(a, b)| segment_hits_rect(a, b, rect))
        || rect.corners_cw().iter().any(|c| crossings(c[0], c[1], ring) % 2 == 1)
}

/// Adds `hole` as a new clockwise interior ring, lifted onto the wall plane
/// through `frame`.
pub fn cut_rectangle_hole(
    poly: &PolygonWithHoles,
    hole: Rect2,
    frame: &WallFrame,
) -> Result<PolygonWithHoles, GeomError> {
    Rect2::new(hole.u_min, hole.v_min, hole.u_max, hole.v_max)?;
    let flat = frame.project_polygon(poly);
    if !rect_inside_ring(&hole, &flat.exterior) {
        return Err(GeomError::HoleOutsideWall(hole));
    }
    if flat.interiors.iter().any(|r| rect_touches_ring(&hole, r)) {
        return Err(GeomError::HoleOverlap(hole));
    }
    let ring = hole
        .corners_cw()
        .iter()
        .map(|c| frame.from_frame(c[0], c[1], 0.0))
        .collect();
    let mut out = poly.clone();
    out.interiors.push(ring);
    Ok(out)
}
