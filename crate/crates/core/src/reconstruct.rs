//! Geometry for detected instances: rectangular cut-outs in wall surfaces
//! and library objects scaled onto the cut rectangle.
//!
//! Library meshes live in the unit cube. `u` and `v` span the facade plane
//! and `w` the depth. Fitting maps `u` and `v` onto the instance rectangle
//! and `w` onto `depth` along the wall normal, so a negative depth recesses
//! the object into the building and a positive one makes it protrude.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::FacadeClass;
use crate::fusion::OpeningInstance;
use crate::geom::{cut_rectangle_hole, GeomError, Point3, PolygonWithHoles, Rect2, Vec3, WallFrame};
use crate::model::Surface;

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructError {
    #[error("library object for {library} cannot be fitted to a {instance} instance")]
    ClassMismatch {
        instance: FacadeClass,
        library: FacadeClass,
    },
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("no library object for {0}")]
    MissingObject(FacadeClass),
}

const UNIT_CORNERS: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryObject {
    pub class: FacadeClass,
    /// Planar faces with unit-cube vertices.
    pub faces: Vec<Vec<[f64; 3]>>,
    /// Indices into the concatenated vertex list of all faces. The first four
    /// are the unit-square corners (0,0,0), (1,0,0), (1,1,0), (0,1,0).
    pub junction_indices: Vec<usize>,
    pub default_depth: f64,
}

impl LibraryObject {
    pub fn vertex(&self, flat_index: usize) -> Option<[f64; 3]> {
        self.faces.iter().flatten().nth(flat_index).copied()
    }

    pub fn junction_points(&self) -> Vec<[f64; 3]> {
        self.junction_indices
            .iter()
            .filter_map(|&i| self.vertex(i))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ReconstructError> {
        let bad = |m: String| Err(ReconstructError::InvalidLibrary(format!("{}: {m}", self.class)));
        if self.faces.is_empty() {
            return bad("no faces".into());
        }
        for (k, f) in self.faces.iter().enumerate() {
            if f.len() < 3 {
                return bad(format!("face {k} has {} vertices", f.len()));
            }
            if f.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
                return bad(format!("face {k} leaves the unit cube"));
            }
            let poly = PolygonWithHoles::new(f.iter().map(|p| Vec3::from(*p)).collect());
            if crate::geom::wall_frame_from_polygon(&poly).is_err() {
                return bad(format!("face {k} is degenerate"));
            }
            if poly.planarity_residual() > 1e-9 {
                return bad(format!("face {k} is not planar"));
            }
        }
        if self.junction_indices.len() < 4 {
            return bad("fewer than 4 junction points".into());
        }
        let total: usize = self.faces.iter().map(Vec::len).sum();
        for (k, &i) in self.junction_indices.iter().enumerate() {
            let Some(p) = (i < total).then(|| self.vertex(i)).flatten() else {
                return bad(format!("junction index {i} out of range"));
            };
            if k < 4 && p != UNIT_CORNERS[k] {
                return bad(format!("junction point {k} is {p:?}, expected {:?}", UNIT_CORNERS[k]));
            }
            if p[2] != 0.0 {
                return bad(format!("junction point {k} is off the w = 0 face"));
            }
        }
        if !(self.default_depth > 0.0 && self.default_depth.is_finite()) {
            return bad("default_depth must be positive".into());
        }
        Ok(())
    }
}

/// One library object per facade class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Library {
    pub objects: BTreeMap<FacadeClass, LibraryObject>,
}

impl Library {
    pub fn get(&self, c: FacadeClass) -> Result<&LibraryObject, ReconstructError> {
        self.objects.get(&c).ok_or(ReconstructError::MissingObject(c))
    }
}

pub fn load_library(json: &str) -> Result<Library, ReconstructError> {
    let list: Vec<LibraryObject> =
        serde_json::from_str(json).map_err(|e| ReconstructError::InvalidLibrary(e.to_string()))?;
    let mut objects = BTreeMap::new();
    for o in list {
        o.validate()?;
        if objects.insert(o.class, o.clone()).is_some() {
            return Err(ReconstructError::InvalidLibrary(format!("duplicate entry for {}", o.class)));
        }
    }
    Ok(Library { objects })
}

const BUILTIN_LIBRARY: &str = include_str!("../data/library.json");

/// Openings are open boxes (four reveals and a back pane) whose rim matches
/// the wall hole; installations are closed boxes.
pub fn builtin_library() -> Library {
    load_library(BUILTIN_LIBRARY).expect("bundled library is valid")
}

/// Library object placed in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub class: FacadeClass,
    pub faces: Vec<PolygonWithHoles>,
    pub confidence: f64,
    pub source_instance: OpeningInstance,
    pub junction_points: Vec<Point3>,
}

/// Interpolation that returns the endpoints exactly at `t = 0` and `t = 1`.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        a + (b - a) * t
    }
}

fn place(p: [f64; 3], rect: &Rect2, frame: &WallFrame, depth: f64) -> Point3 {
    frame.from_frame(
        lerp(rect.u_min, rect.u_max, p[0]),
        lerp(rect.v_min, rect.v_max, p[1]),
        p[2] * depth,
    )
}

/// Scales the library mesh onto the instance rectangle (axis-aligned in the
/// wall frame, no rotation or shear) and lifts it to world coordinates.
pub fn fit_object(
    inst: &OpeningInstance,
    lib: &LibraryObject,
    frame: &WallFrame,
    depth: f64,
) -> Result<PlacedObject, ReconstructError> {
    if lib.class != inst.class {
        return Err(ReconstructError::ClassMismatch {
            instance: inst.class,
            library: lib.class,
        });
    }
    let faces = lib
        .faces
        .iter()
        .map(|f| PolygonWithHoles::new(f.iter().map(|p| place(*p, &inst.rect, frame, depth)).collect()))
        .collect();
    let junction_points = lib
        .junction_points()
        .into_iter()
        .map(|p| place(p, &inst.rect, frame, depth))
        .collect();
    Ok(PlacedObject {
        class: inst.class,
        faces,
        confidence: inst.confidence,
        source_instance: inst.clone(),
        junction_points,
    })
}

/// Installation mesh protruding `|depth|` out of the wall.
pub fn build_installation_geometry(
    inst: &OpeningInstance,
    lib: &LibraryObject,
    frame: &WallFrame,
    depth: f64,
) -> Result<PlacedObject, ReconstructError> {
    if !inst.class.is_installation() {
        return Err(ReconstructError::ClassMismatch {
            instance: inst.class,
            library: lib.class,
        });
    }
    fit_object(inst, lib, frame, depth.abs())
}

/// Opening cut into a wall, possibly covering several merged instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutRecord {
    pub class: FacadeClass,
    pub rect: Rect2,
    pub confidence: f64,
    /// Indices into the instance list passed to [`cut_openings`].
    pub members: Vec<usize>,
}

impl CutRecord {
    pub fn as_instance(&self, wall_id: &str, pixel_count: usize) -> OpeningInstance {
        OpeningInstance {
            class: self.class,
            rect: self.rect,
            confidence: self.confidence,
            pixel_count,
            wall_id: wall_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedInstance {
    pub index: usize,
    pub class: FacadeClass,
    pub rect: Rect2,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutOutcome {
    pub surface: Surface,
    pub cuts: Vec<CutRecord>,
    pub skipped: Vec<SkippedInstance>,
}

/// Cuts opening-class instances into the wall. Rectangles are first clamped
/// to the wall's frame rectangle inset by `margin` (so ground-level doors
/// keep a thin strip of wall below them), then overlapping or touching
/// rectangles are merged to their bounding box. Installation instances are
/// ignored. Rectangles that still leave the wall outline or collide with an
/// existing hole are skipped.
pub fn cut_openings(wall: &Surface, instances: &[OpeningInstance], frame: &WallFrame, margin: f64) -> CutOutcome {
    let mut skipped = Vec::new();
    let inner = Rect2 {
        u_min: margin,
        v_min: margin,
        u_max: frame.u_extent - margin,
        v_max: frame.v_extent - margin,
    };
    let mut groups: Vec<(Rect2, Vec<usize>)> = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        if !inst.class.is_opening() {
            continue;
        }
        let r = &inst.rect;
        match Rect2::new(
            r.u_min.max(inner.u_min),
            r.v_min.max(inner.v_min),
            r.u_max.min(inner.u_max),
            r.v_max.min(inner.v_max),
        ) {
            Ok(c) => groups.push((c, vec![k])),
            Err(_) => skipped.push(SkippedInstance {
                index: k,
                class: inst.class,
                rect: *r,
                reason: GeomError::HoleOutsideWall(*r).to_string(),
            }),
        }
    }

    // Merge until no two rectangles touch.
    loop {
        let mut merged = false;
        'outer: for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                if groups[a].0.intersects(&groups[b].0) {
                    let (rb, mb) = groups.remove(b);
                    groups[a].0 = groups[a].0.union(&rb);
                    groups[a].1.extend(mb);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    for g in &mut groups {
        g.1.sort_unstable();
    }
    groups.sort_by_key(|g| g.1[0]);

    let mut surface = wall.clone();
    let mut cuts = Vec::new();
    for (rect, members) in groups {
        let (mut wsum, mut csum) = (0.0, 0.0);
        let mut lead = members[0];
        for &m in &members {
            let a = instances[m].rect.area();
            wsum += a;
            csum += a * instances[m].confidence;
            if a > instances[lead].rect.area() {
                lead = m;
            }
        }
        let confidence = if wsum > 0.0 { (csum / wsum).clamp(0.0, 1.0) } else { instances[lead].confidence };
        match cut_rectangle_hole(&surface.geometry, rect, frame) {
            Ok(g) => {
                surface.geometry = g;
                cuts.push(CutRecord {
                    class: instances[lead].class,
                    rect,
                    confidence,
                    members,
                });
            }
            Err(e) => skipped.extend(members.iter().map(|&m| SkippedInstance {
                index: m,
                class: instances[m].class,
                rect: instances[m].rect,
                reason: e.to_string(),
            })),
        }
    }
    skipped.sort_by_key(|s| s.index);
    CutOutcome { surface, cuts, skipped }
}
