//! Semantic embedding of reconstructed objects into the building model:
//! facade class to CityGML mapping, function codes, refinability, and the
//! model updates that add openings and installations.

use std::fmt;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::cloud::FacadeClass;
use crate::geom::{cut_rectangle_hole, wall_frame_from_polygon, GeomError};
use crate::model::{Attributes, BuildingInstallation, BuildingModel, OpeningKind, OpeningObject, SurfaceKind};
use crate::reconstruct::PlacedObject;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("facade class {0} has no CityGML counterpart")]
    UnmappedClass(FacadeClass),
    #[error("wall {0} not found")]
    UnresolvedWall(String),
    #[error("{0} cannot be embedded this way")]
    WrongClass(FacadeClass),
    #[error("timestamp {0:?} is not RFC 3339")]
    InvalidTimestamp(String),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("cutting wall {wall_id}: {source}")]
    Cut {
        wall_id: String,
        #[source]
        source: GeomError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CityGmlClass {
    GroundSurface,
    RoofSurface,
    WallSurface,
    Window,
    Door,
    BuildingInstallation,
}

impl fmt::Display for CityGmlClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            G::GroundSurface => "GroundSurface",
            G::RoofSurface => "RoofSurface",
            G::WallSurface => "WallSurface",
            G::Window => "Window",
            G::Door => "Door",
            G::BuildingInstallation => "BuildingInstallation",
        })
    }
}

/// One row of the facade class to CityGML table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMapping {
    pub class: FacadeClass,
    pub citygml_class: CityGmlClass,
    pub lods: &'static [u8],
    /// Code and name, e.g. `"1000 balcony"`.
    pub function_code: Option<&'static str>,
    /// Geometry may be added or changed during refinement.
    pub refinable: bool,
    /// Objects of this class carry a `confidence` generic attribute.
    pub carries_confidence: bool,
    /// Function code is a proposed extension of the code list.
    pub proposed: bool,
}

const fn row(
    class: FacadeClass,
    citygml_class: CityGmlClass,
    lods: &'static [u8],
    function_code: Option<&'static str>,
    refinable: bool,
    carries_confidence: bool,
    proposed: bool,
) -> ClassMapping {
    ClassMapping {
        class,
        citygml_class,
        lods,
        function_code,
        refinable,
        carries_confidence,
        proposed,
    }
}

use CityGmlClass as G;
use FacadeClass as F;

const ALL_LODS: &[u8] = &[1, 2, 3, 4];
const DETAIL_LODS: &[u8] = &[3, 4];

pub const CLASS_TABLE: [ClassMapping; 14] = [
    row(F::GroundSurface, G::GroundSurface, ALL_LODS, None, false, false, false),
    row(F::RoofSurface, G::RoofSurface, ALL_LODS, None, false, false, false),
    row(F::Wall, G::WallSurface, ALL_LODS, None, false, true, false),
    row(F::Window, G::Window, DETAIL_LODS, None, true, true, false),
    row(F::Door, G::Door, DETAIL_LODS, None, true, true, false),
    row(F::Underpass, G::BuildingInstallation, DETAIL_LODS, Some("1002 underpass"), true, true, false),
    row(F::Balcony, G::BuildingInstallation, DETAIL_LODS, Some("1000 balcony"), true, true, false),
    row(F::Molding, G::BuildingInstallation, DETAIL_LODS, Some("1016 molding"), true, true, true),
    row(F::Deco, G::BuildingInstallation, DETAIL_LODS, Some("1017 deco"), true, true, true),
    row(F::Column, G::BuildingInstallation, DETAIL_LODS, Some("1011 column"), true, true, false),
    row(F::Arch, G::BuildingInstallation, DETAIL_LODS, Some("1008 arch"), true, true, false),
    row(F::Drainpipe, G::BuildingInstallation, DETAIL_LODS, Some("1018 drainpipe"), true, true, true),
    row(F::Stairs, G::BuildingInstallation, DETAIL_LODS, Some("1060 stairs"), true, true, false),
    row(F::Blinds, G::BuildingInstallation, DETAIL_LODS, Some("1019 blinds"), true, true, true),
];

pub fn class_to_citygml(c: FacadeClass) -> Result<&'static ClassMapping, EmbedError> {
    CLASS_TABLE
        .iter()
        .find(|r| r.class == c)
        .ok_or(EmbedError::UnmappedClass(c))
}

/// Existing ground, roof and wall positions are never refined.
pub fn is_refinable(c: FacadeClass) -> bool {
    class_to_citygml(c).is_ok_and(|r| r.refinable)
}

/// Accepts a full `"<code> <name>"` entry or a bare numeric code from the
/// table.
pub fn is_known_function_code(s: &str) -> bool {
    let s = s.trim();
    CLASS_TABLE.iter().filter_map(|r| r.function_code).any(|f| {
        f == s || f.split_whitespace().next() == Some(s)
    })
}

fn check_common(placed: &PlacedObject, timestamp: &str) -> Result<(), EmbedError> {
    if chrono::DateTime::parse_from_rfc3339(timestamp).is_err() {
        return Err(EmbedError::InvalidTimestamp(timestamp.to_string()));
    }
    if !(0.0..=1.0).contains(&placed.confidence) {
        return Err(EmbedError::InvalidConfidence(placed.confidence));
    }
    Ok(())
}

/// `(building index, surface index)` of a wall surface.
fn locate_wall(m: &BuildingModel, wall_id: &str) -> Result<(usize, usize), EmbedError> {
    m.locate_surface(wall_id)
        .filter(|(b, s)| m.buildings[*b].surfaces[*s].kind == SurfaceKind::WallSurface)
        .ok_or_else(|| EmbedError::UnresolvedWall(wall_id.to_string()))
}

/// `<wall_id>-<class>-<k>` with the smallest unused `k ≥ 1`.
fn fresh_id(m: &BuildingModel, wall_id: &str, class: FacadeClass) -> String {
    let prefix = format!("{wall_id}-{}-", class.name().to_lowercase());
    let taken: std::collections::HashSet<&str> = m.ids().collect();
    (1..)
        .map(|k| format!("{prefix}{k}"))
        .find(|id| !taken.contains(id.as_str()))
        .expect("unbounded counter")
}

fn promote_lod(m: &mut BuildingModel, b: usize) {
    let bld = &mut m.buildings[b];
    if bld.lod < 3 {
        bld.attributes
            .entry("prior_lod".to_string())
            .or_insert(Value::from(bld.lod));
        bld.lod = 3;
    }
}

/// Cuts the placed object's rectangle out of the wall and adds the object:
/// a window or door opening, or an underpass installation.
pub fn embed_opening(
    m: &BuildingModel,
    wall_id: &str,
    placed: &PlacedObject,
    timestamp: &str,
) -> Result<BuildingModel, EmbedError> {
    if !placed.class.is_opening() {
        return Err(EmbedError::WrongClass(placed.class));
    }
    check_common(placed, timestamp)?;
    let (b, s) = locate_wall(m, wall_id)?;
    let id = fresh_id(m, wall_id, placed.class);

    let mut out = m.clone();
    let wall = &mut out.buildings[b].surfaces[s];
    let cut_err = |source| EmbedError::Cut {
        wall_id: wall_id.to_string(),
        source,
    };
    let frame = wall_frame_from_polygon(&wall.geometry).map_err(cut_err)?;
    wall.geometry =
        cut_rectangle_hole(&wall.geometry, placed.source_instance.rect, &frame).map_err(cut_err)?;

    let bld = &mut out.buildings[b];
    match placed.class {
        FacadeClass::Window | FacadeClass::Door => bld.openings.push(OpeningObject {
            id,
            kind: if placed.class == FacadeClass::Window {
                OpeningKind::Window
            } else {
                OpeningKind::Door
            },
            parent_wall_id: wall_id.to_string(),
            geometry: placed.faces.clone(),
            confidence: placed.confidence,
            timestamp: timestamp.to_string(),
            attributes: Attributes::new(),
            extra: Attributes::new(),
        }),
        _ => bld.installations.push(BuildingInstallation {
            id,
            function_code: class_to_citygml(placed.class)?
                .function_code
                .unwrap_or_default()
                .to_string(),
            geometry: placed.faces.clone(),
            confidence: placed.confidence,
            timestamp: timestamp.to_string(),
            attributes: Attributes::new(),
            extra: Attributes::new(),
        }),
    }
    promote_lod(&mut out, b);
    Ok(out)
}

/// Adds an installation attached to a wall; the wall itself is unchanged.
pub fn embed_installation(
    m: &BuildingModel,
    wall_id: &str,
    placed: &PlacedObject,
    timestamp: &str,
) -> Result<BuildingModel, EmbedError> {
    if !placed.class.is_installation() {
        return Err(EmbedError::WrongClass(placed.class));
    }
    check_common(placed, timestamp)?;
    let (b, _) = locate_wall(m, wall_id)?;
    let function_code = class_to_citygml(placed.class)?
        .function_code
        .unwrap_or_default()
        .to_string();
    let id = fresh_id(m, wall_id, placed.class);
    let mut out = m.clone();
    out.buildings[b].installations.push(BuildingInstallation {
        id,
        function_code,
        geometry: placed.faces.clone(),
        confidence: placed.confidence,
        timestamp: timestamp.to_string(),
        attributes: Attributes::new(),
        extra: Attributes::new(),
    });
    promote_lod(&mut out, b);
    Ok(out)
}
