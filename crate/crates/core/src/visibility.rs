//! Voxel visibility analysis: ray casting from sensor origins to labeled
//! points, per-voxel occupancy states and the confirmed/conflicted
//! classification of voxels that intersect model wall planes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cloud::{LabeledPointCloud, UncertaintyParams};
use crate::geom::{point_in_polygon, Point3, Polygon2, Vec3, WallFrame};
use crate::model::BuildingModel;

#[derive(Debug, Error, PartialEq)]
pub enum VisibilityError {
    #[error("no input geometry to build a voxel grid from")]
    EmptyInput,
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxelSize(f64),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

/// Uniform axis-aligned grid. Voxel `(ix, iy, iz)` spans
/// `aabb_min + [ix, ix+1) * voxel_size` on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoxelGrid {
    pub aabb_min: Point3,
    pub aabb_max: Point3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(aabb_min: Point3, aabb_max: Point3, voxel_size: f64) -> Result<Self, VisibilityError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(VisibilityError::InvalidVoxelSize(voxel_size));
        }
        if !(aabb_min.is_finite() && aabb_max.is_finite()) {
            return Err(VisibilityError::EmptyInput);
        }
        let ext = aabb_max - aabb_min;
        let dim = |e: f64| ((e / voxel_size - 1e-9).ceil().max(1.0)) as usize;
        Ok(VoxelGrid {
            aabb_min,
            aabb_max,
            voxel_size,
            dims: [dim(ext.x), dim(ext.y), dim(ext.z)],
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Upper corner of the voxelized region (may exceed `aabb_max`).
    pub fn grid_max(&self) -> Point3 {
        self.aabb_min
            + Vec3::new(
                self.dims[0] as f64 * self.voxel_size,
                self.dims[1] as f64 * self.voxel_size,
                self.dims[2] as f64 * self.voxel_size,
            )
    }

    /// Linear index with x varying fastest.
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Voxel containing `p`, clamped to the grid. Points on the upper
    /// boundary belong to the last voxel.
    pub fn voxel_of(&self, p: Point3) -> [usize; 3] {
        let mut out = [0; 3];
        for (a, o) in out.iter_mut().enumerate() {
            let t = ((p.component(a) - self.aabb_min.component(a)) / self.voxel_size).floor();
            *o = t.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        out
    }

    pub fn contains(&self, p: Point3) -> bool {
        let hi = self.grid_max();
        (0..3).all(|a| p.component(a) >= self.aabb_min.component(a) && p.component(a) <= hi.component(a))
    }

    pub fn center(&self, idx: [usize; 3]) -> Point3 {
        self.aabb_min
            + Vec3::new(
                (idx[0] as f64 + 0.5) * self.voxel_size,
                (idx[1] as f64 + 0.5) * self.voxel_size,
                (idx[2] as f64 + 0.5) * self.voxel_size,
            )
    }
}

/// AABB over cloud points, sensor origins and model vertices, grown by
/// `padding` on every side.
pub fn build_grid(
    cloud: &LabeledPointCloud,
    model: &BuildingModel,
    voxel_size: f64,
    padding: f64,
) -> Result<VoxelGrid, VisibilityError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(VisibilityError::InvalidVoxelSize(voxel_size));
    }
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    let pts = cloud
        .points
        .iter()
        .map(|p| p.position)
        .chain(cloud.origins.iter().copied())
        .chain(model.vertices());
    let mut any = false;
    for p in pts {
        lo = lo.min(p);
        hi = hi.max(p);
        any = true;
    }
    if !any {
        return Err(VisibilityError::EmptyInput);
    }
    let pad = Vec3::new(padding, padding, padding);
    VoxelGrid::new(lo - pad, hi + pad, voxel_size)
}

/// Result of walking one ray through the grid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Traversal {
    /// Voxels in order from origin towards endpoint.
    pub voxels: Vec<[usize; 3]>,
    /// True when the last voxel contains the endpoint, false when the ray
    /// was clipped at the grid boundary (or missed the grid entirely).
    pub terminal: bool,
}

/// Amanatides–Woo traversal of the segment `origin -> endpoint`, clipped to
/// the grid.
pub fn traverse_ray(grid: &VoxelGrid, origin: Point3, endpoint: Point3) -> Traversal {
    let d = endpoint - origin;
    let lo = grid.aabb_min;
    let hi = grid.grid_max();

    // Slab clipping to parameter range [t0, t1] within [0, 1].
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        let (o, da) = (origin.component(a), d.component(a));
        let (l, h) = (lo.component(a), hi.component(a));
        if da == 0.0 {
            if o < l || o > h {
                return Traversal::default();
            }
        } else {
            let (mut ta, mut tb) = ((l - o) / da, (h - o) / da);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    if t0 > t1 {
        return Traversal::default();
    }
    let terminal = t1 >= 1.0;
    let start = if t0 > 0.0 { origin + d * t0 } else { origin };
    let end = if terminal { endpoint } else { origin + d * t1 };

    let mut cur = grid.voxel_of(start);
    let last = grid.voxel_of(end);
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let da = d.component(a);
        if da > 0.0 {
            step[a] = 1;
            let boundary = lo.component(a) + (cur[a] + 1) as f64 * grid.voxel_size;
            t_max[a] = (boundary - origin.component(a)) / da;
            t_delta[a] = grid.voxel_size / da;
        } else if da < 0.0 {
            step[a] = -1;
            let boundary = lo.component(a) + cur[a] as f64 * grid.voxel_size;
            t_max[a] = (boundary - origin.component(a)) / da;
            t_delta[a] = -grid.voxel_size / da;
        }
    }

    let manhattan: usize = (0..3).map(|a| cur[a].abs_diff(last[a])).sum();
    let mut voxels = Vec::with_capacity(manhattan + 1);
    voxels.push(cur);
    while cur != last {
        // Only axes that still have voxels to cover may step; this keeps
        // the walk finite and ending exactly at the endpoint voxel.
        let mut axis = usize::MAX;
        for a in 0..3 {
            if cur[a] != last[a] && (axis == usize::MAX || t_max[a] < t_max[axis]) {
                axis = a;
            }
        }
        cur[axis] = (cur[axis] as i64 + step[axis]) as usize;
        t_max[axis] += t_delta[axis];
        voxels.push(cur);
    }
    Traversal { voxels, terminal }
}

/// Per-voxel ray statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub grid: VoxelGrid,
    /// Rays passing through the voxel without ending in it.
    pub traversals: Vec<u32>,
    /// Ray endpoints inside the voxel.
    pub hits: Vec<u32>,
    /// Distance from voxel center to its closest hit point (infinite if none).
    pub nearest_hit: Vec<f64>,
}

impl OccupancyGrid {
    fn empty(grid: VoxelGrid) -> Self {
        let n = grid.len();
        OccupancyGrid {
            grid,
            traversals: vec![0; n],
            hits: vec![0; n],
            nearest_hit: vec![f64::INFINITY; n],
        }
    }

    fn add_ray(&mut self, origin: Point3, endpoint: Point3) {
        let t = traverse_ray(&self.grid, origin, endpoint);
        let n = t.voxels.len();
        let passed = if t.terminal { n.saturating_sub(1) } else { n };
        for v in &t.voxels[..passed] {
            let i = self.grid.linear(*v);
            self.traversals[i] += 1;
        }
        if t.terminal {
            let v = t.voxels[n - 1];
            let i = self.grid.linear(v);
            self.hits[i] += 1;
            let d = self.grid.center(v).distance(endpoint);
            if d < self.nearest_hit[i] {
                self.nearest_hit[i] = d;
            }
        }
    }

    fn merge(mut self, o: OccupancyGrid) -> Self {
        for i in 0..self.traversals.len() {
            self.traversals[i] += o.traversals[i];
            self.hits[i] += o.hits[i];
            self.nearest_hit[i] = self.nearest_hit[i].min(o.nearest_hit[i]);
        }
        self
    }
}

/// Casts every point's ray. Counts are sums and the nearest-hit field is a
/// minimum, so the result does not depend on point order or `jobs`.
pub fn cast_all(grid: &VoxelGrid, cloud: &LabeledPointCloud, jobs: usize) -> Result<OccupancyGrid, VisibilityError> {
    let jobs = jobs.max(1);
    let rays = |pts: &[crate::cloud::LabeledPoint]| {
        let mut occ = OccupancyGrid::empty(*grid);
        for p in pts {
            occ.add_ray(cloud.origin_of(p), p.position);
        }
        occ
    };
    if jobs == 1 || cloud.points.len() < 2 * 4096 {
        return Ok(rays(&cloud.points));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| VisibilityError::ThreadPool(e.to_string()))?;
    let chunk = cloud.points.len().div_ceil(jobs);
    Ok(pool.install(|| {
        cloud
            .points
            .par_chunks(chunk)
            .map(rays)
            .reduce(|| OccupancyGrid::empty(*grid), OccupancyGrid::merge)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelState {
    Empty,
    Occupied,
    Unknown,
    Confirmed,
    Conflicted,
}

impl VoxelState {
    pub fn name(self) -> &'static str {
        match self {
            VoxelState::Empty => "empty",
            VoxelState::Occupied => "occupied",
            VoxelState::Unknown => "unknown",
            VoxelState::Confirmed => "confirmed",
            VoxelState::Conflicted => "conflicted",
        }
    }
}

/// Hit dominates traversal.
pub fn state_of(hits: u32, traversals: u32) -> VoxelState {
    if hits > 0 {
        VoxelState::Occupied
    } else if traversals > 0 {
        VoxelState::Empty
    } else {
        VoxelState::Unknown
    }
}

pub fn voxel_state(occ: &OccupancyGrid) -> Vec<VoxelState> {
    occ.hits
        .iter()
        .zip(&occ.traversals)
        .map(|(h, t)| state_of(*h, *t))
        .collect()
}

/// Peak-normalized Gaussian kernel `exp(-d² / 2σ²)`.
pub fn positional_probability(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (2.0 * sigma * sigma)).exp()
}

/// Kernel of the distance after removing a systematic bias `mu`.
pub fn biased_probability(distance: f64, sigma: f64, mu: f64) -> f64 {
    positional_probability((distance - mu).abs(), sigma)
}

/// Joint probability of two independent events and its complement:
/// `(P(A)·P(B), 1 − P(A)·P(B))`.
pub fn joint_probability(p_a: f64, p_b: f64) -> (f64, f64) {
    let confirmed = p_a * p_b;
    (confirmed, 1.0 - confirmed)
}

/// A model wall as seen by the visibility analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct WallPlane {
    pub id: String,
    pub frame: WallFrame,
    pub outline: Polygon2,
}

impl WallPlane {
    pub fn new(id: impl Into<String>, frame: WallFrame, outline: Polygon2) -> Self {
        WallPlane {
            id: id.into(),
            frame,
            outline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifiedVoxel {
    pub index: [usize; 3],
    pub state: VoxelState,
    /// Voxel center in wall-frame coordinates.
    pub uvw: [f64; 3],
    pub p_a: f64,
    pub p_b: f64,
    pub p_confirmed: f64,
    pub p_conflicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallEvidence {
    pub wall_id: String,
    pub frame: WallFrame,
    pub voxels: Vec<ClassifiedVoxel>,
}

/// Occupancy states extended with the per-wall classification.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub grid: VoxelGrid,
    pub states: Vec<VoxelState>,
    /// `p_confirmed` of classified voxels, `NaN` elsewhere.
    pub p_confirmed: Vec<f64>,
    pub walls: Vec<WallEvidence>,
}

impl StateGrid {
    pub fn wall(&self, id: &str) -> Option<&WallEvidence> {
        self.walls.iter().find(|w| w.wall_id == id)
    }

    /// `ix iy iz state p_confirmed` lines for every classified voxel.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        for (i, st) in self.states.iter().enumerate() {
            if matches!(st, VoxelState::Confirmed | VoxelState::Conflicted) {
                let [x, y, z] = self.grid.unlinear(i);
                let _ = writeln!(s, "{x} {y} {z} {} {}", st.name(), self.p_confirmed[i]);
            }
        }
        s
    }
}

/// Half-thickness of a cube of side `size` measured along `n`.
fn support_radius(size: f64, n: Vec3) -> f64 {
    0.5 * size * (n.x.abs() + n.y.abs() + n.z.abs())
}

fn classify_wall(
    states: &[VoxelState],
    occ: &OccupancyGrid,
    wall: &WallPlane,
    params: &UncertaintyParams,
) -> WallEvidence {
    let g = &occ.grid;
    let f = &wall.frame;
    let r = support_radius(g.voxel_size, f.normal) * (1.0 + 1e-9);

    // Index range covering the wall rectangle grown by r.
    let corners = [
        f.from_frame(0.0, 0.0, 0.0),
        f.from_frame(f.u_extent, 0.0, 0.0),
        f.from_frame(f.u_extent, f.v_extent, 0.0),
        f.from_frame(0.0, f.v_extent, 0.0),
    ];
    let (mut lo, mut hi) = (corners[0], corners[0]);
    for c in corners {
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let grow = Vec3::new(r, r, r);
    let (ilo, ihi) = (g.voxel_of(lo - grow), g.voxel_of(hi + grow));

    let search = 3.0 * params.sigma_point;
    let reach = (search / g.voxel_size).ceil() as i64;

    let mut voxels = Vec::new();
    for iz in ilo[2]..=ihi[2] {
        for iy in ilo[1]..=ihi[1] {
            for ix in ilo[0]..=ihi[0] {
                let idx = [ix, iy, iz];
                let li = g.linear(idx);
                let state = states[li];
                if !matches!(state, VoxelState::Occupied | VoxelState::Empty) {
                    continue;
                }
                let c = g.center(idx);
                let uvw = f.to_frame(c);
                if uvw[2].abs() > r || !point_in_polygon(uvw[0], uvw[1], &wall.outline) {
                    continue;
                }
                let p_a = biased_probability(uvw[2].abs(), params.sigma_model, params.mu_model);
                let (new_state, p_b) = if state == VoxelState::Occupied {
                    let p_b = biased_probability(occ.nearest_hit[li], params.sigma_point, params.mu_point);
                    (VoxelState::Confirmed, p_b)
                } else {
                    let mut best = f64::INFINITY;
                    for dz in -reach..=reach {
                        for dy in -reach..=reach {
                            for dx in -reach..=reach {
                                let n = [ix as i64 + dx, iy as i64 + dy, iz as i64 + dz];
                                if (0..3).any(|a| n[a] < 0 || n[a] >= g.dims[a] as i64) {
                                    continue;
                                }
                                let n = [n[0] as usize, n[1] as usize, n[2] as usize];
                                if states[g.linear(n)] == VoxelState::Occupied {
                                    best = best.min(g.center(n).distance(c));
                                }
                            }
                        }
                    }
                    let p_b = if best <= search {
                        biased_probability(best, params.sigma_point, params.mu_point)
                    } else {
                        0.0
                    };
                    (VoxelState::Conflicted, p_b)
                };
                let (p_confirmed, p_conflicted) = joint_probability(p_a, p_b);
                voxels.push(ClassifiedVoxel {
                    index: idx,
                    state: new_state,
                    uvw,
                    p_a,
                    p_b,
                    p_confirmed,
                    p_conflicted,
                });
            }
        }
    }
    WallEvidence {
        wall_id: wall.id.clone(),
        frame: wall.frame,
        voxels,
    }
}

/// Marks voxels cut by a wall plane as confirmed (were occupied) or
/// conflicted (were empty). A voxel near several walls takes the
/// classification of the closest plane in the dense grid; each wall's
/// evidence list keeps its own.
pub fn classify_conflicts(
    states: &[VoxelState],
    occ: &OccupancyGrid,
    walls: &[WallPlane],
    params: &UncertaintyParams,
) -> StateGrid {
    let evidence: Vec<WallEvidence> = walls
        .par_iter()
        .map(|w| classify_wall(states, occ, w, params))
        .collect();
    let mut out_states = states.to_vec();
    let mut p_confirmed = vec![f64::NAN; states.len()];
    let mut best_d = vec![f64::INFINITY; states.len()];
    for ev in &evidence {
        for v in &ev.voxels {
            let i = occ.grid.linear(v.index);
            if v.uvw[2].abs() < best_d[i] {
                best_d[i] = v.uvw[2].abs();
                out_states[i] = v.state;
                p_confirmed[i] = v.p_confirmed;
            }
        }
    }
    StateGrid {
        grid: occ.grid,
        states: out_states,
        p_confirmed,
        walls: evidence,
    }
}
