//! Semantic building models: a compact JSON city-model format (`.cm.json`),
//! CityGML 2.0 export and watertightness/planarity validation.
//!
//! Identifiers are carried verbatim from input to output. Keys this crate
//! does not know about are kept per object and written back unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::embed;
use crate::geom::{
    newell_normal, wall_frame_from_polygon, Point3, PolygonWithHoles, Vec3, INPUT_PLANARITY_TOL,
};

pub type Attributes = BTreeMap<String, Value>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("invalid geometry on {id}: {reason}")]
    GeometryError { id: String, reason: String },
    #[error("duplicate identifier {0}")]
    DuplicateId(String),
    #[error("opening {opening_id} references unknown wall {parent_wall_id}")]
    UnresolvedParent {
        opening_id: String,
        parent_wall_id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurfaceKind {
    WallSurface,
    RoofSurface,
    GroundSurface,
}

impl SurfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::WallSurface => "WallSurface",
            SurfaceKind::RoofSurface => "RoofSurface",
            SurfaceKind::GroundSurface => "GroundSurface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpeningKind {
    Window,
    Door,
}

impl OpeningKind {
    pub fn name(self) -> &'static str {
        match self {
            OpeningKind::Window => "Window",
            OpeningKind::Door => "Door",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub id: String,
    pub kind: SurfaceKind,
    pub geometry: PolygonWithHoles,
    pub attributes: Attributes,
    pub extra: Attributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeningObject {
    pub id: String,
    pub kind: OpeningKind,
    pub parent_wall_id: String,
    pub geometry: Vec<PolygonWithHoles>,
    pub confidence: f64,
    pub timestamp: String,
    pub attributes: Attributes,
    pub extra: Attributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingInstallation {
    pub id: String,
    /// Code and name, e.g. `"1002 underpass"`.
    pub function_code: String,
    pub geometry: Vec<PolygonWithHoles>,
    pub confidence: f64,
    pub timestamp: String,
    pub attributes: Attributes,
    pub extra: Attributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub id: String,
    pub lod: u8,
    pub surfaces: Vec<Surface>,
    pub installations: Vec<BuildingInstallation>,
    pub openings: Vec<OpeningObject>,
    pub attributes: Attributes,
    pub extra: Attributes,
}

impl Building {
    pub fn surface(&self, id: &str) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.id == id)
    }

    pub fn walls(&self) -> impl Iterator<Item = &Surface> {
        self.surfaces
            .iter()
            .filter(|s| s.kind == SurfaceKind::WallSurface)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.id.as_str())
            .chain(self.surfaces.iter().map(|s| s.id.as_str()))
            .chain(self.openings.iter().map(|o| o.id.as_str()))
            .chain(self.installations.iter().map(|o| o.id.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildingModel {
    pub crs_label: String,
    pub metadata: BTreeMap<String, String>,
    pub buildings: Vec<Building>,
    pub extra: Attributes,
}

impl BuildingModel {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.buildings.iter().flat_map(|b| b.ids())
    }

    /// `(building index, surface index)` of the surface with this id.
    pub fn locate_surface(&self, id: &str) -> Option<(usize, usize)> {
        self.buildings.iter().enumerate().find_map(|(bi, b)| {
            b.surfaces
                .iter()
                .position(|s| s.id == id)
                .map(|si| (bi, si))
        })
    }

    pub fn surface(&self, id: &str) -> Option<&Surface> {
        self.locate_surface(id)
            .map(|(b, s)| &self.buildings[b].surfaces[s])
    }

    pub fn vertices(&self) -> impl Iterator<Item = Point3> + '_ {
        self.buildings.iter().flat_map(|b| {
            b.surfaces
                .iter()
                .flat_map(|s| s.geometry.vertices())
                .chain(b.openings.iter().flat_map(|o| o.geometry.iter().flat_map(|g| g.vertices())))
                .chain(
                    b.installations
                        .iter()
                        .flat_map(|o| o.geometry.iter().flat_map(|g| g.vertices())),
                )
                .copied()
        })
    }
}

// ---------------------------------------------------------------------------
// JSON format

/// Value as written to files: the shortest decimal that reads back to the
/// same double, with negative zero folded into zero.
pub fn canonical_f64(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(canonical_f64(*x))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(transparent)]
struct PointDto([f64; 3]);

impl Serialize for PointDto {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.map(canonical_f64).serialize(s)
    }
}

type RingDto = Vec<PointDto>;

#[derive(Serialize, Deserialize)]
struct PolygonDto {
    exterior: RingDto,
    #[serde(default)]
    interiors: Vec<RingDto>,
}

#[derive(Serialize, Deserialize)]
struct SurfaceDto {
    id: String,
    kind: SurfaceKind,
    exterior: RingDto,
    #[serde(default)]
    interiors: Vec<RingDto>,
    #[serde(default)]
    attributes: Attributes,
    #[serde(flatten)]
    extra: Attributes,
}

#[derive(Serialize, Deserialize)]
struct OpeningDto {
    id: String,
    kind: OpeningKind,
    parent_wall_id: String,
    geometry: Vec<PolygonDto>,
    #[serde(serialize_with = "ser_f64")]
    confidence: f64,
    timestamp: String,
    #[serde(default)]
    attributes: Attributes,
    #[serde(flatten)]
    extra: Attributes,
}

#[derive(Serialize, Deserialize)]
struct InstallationDto {
    id: String,
    function_code: String,
    geometry: Vec<PolygonDto>,
    #[serde(serialize_with = "ser_f64")]
    confidence: f64,
    timestamp: String,
    #[serde(default)]
    attributes: Attributes,
    #[serde(flatten)]
    extra: Attributes,
}

#[derive(Serialize, Deserialize)]
struct BuildingDto {
    id: String,
    lod: i64,
    #[serde(default)]
    attributes: Attributes,
    surfaces: Vec<SurfaceDto>,
    #[serde(default)]
    openings: Vec<OpeningDto>,
    #[serde(default)]
    installations: Vec<InstallationDto>,
    #[serde(flatten)]
    extra: Attributes,
}

#[derive(Serialize, Deserialize)]
struct ModelDto {
    crs: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    buildings: Vec<BuildingDto>,
    #[serde(flatten)]
    extra: Attributes,
}

fn ring_from_dto(ring: RingDto, id: &str) -> Result<Vec<Point3>, ModelError> {
    let mut pts: Vec<Point3> = ring.into_iter().map(|p| Point3::from(p.0)).collect();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let geo = |reason: String| ModelError::GeometryError {
        id: id.to_string(),
        reason,
    };
    if pts.len() < 3 {
        return Err(geo(format!("ring with {} vertices", pts.len())));
    }
    if !pts.iter().all(|p| p.is_finite()) {
        return Err(geo("non-finite coordinate".into()));
    }
    Ok(pts)
}

fn polygon_from_dto(ext: RingDto, ints: Vec<RingDto>, id: &str) -> Result<PolygonWithHoles, ModelError> {
    let poly = PolygonWithHoles {
        exterior: ring_from_dto(ext, id)?,
        interiors: ints
            .into_iter()
            .map(|r| ring_from_dto(r, id))
            .collect::<Result<_, _>>()?,
    };
    wall_frame_from_polygon(&poly).map_err(|e| ModelError::GeometryError {
        id: id.to_string(),
        reason: e.to_string(),
    })?;
    let res = poly.planarity_residual();
    if res > INPUT_PLANARITY_TOL {
        return Err(ModelError::GeometryError {
            id: id.to_string(),
            reason: format!("planarity residual {res:.3e} m exceeds {INPUT_PLANARITY_TOL:e} m"),
        });
    }
    Ok(poly)
}

fn ring_to_dto(ring: &[Point3]) -> RingDto {
    ring.iter().map(|p| PointDto(p.to_array())).collect()
}

fn polygon_to_dto(p: &PolygonWithHoles) -> PolygonDto {
    PolygonDto {
        exterior: ring_to_dto(&p.exterior),
        interiors: p.interiors.iter().map(|r| ring_to_dto(r)).collect(),
    }
}

pub fn parse_model(data: &[u8]) -> Result<BuildingModel, ModelError> {
    let dto: ModelDto =
        serde_json::from_slice(data).map_err(|e| ModelError::SchemaError(e.to_string()))?;

    let mut seen = BTreeSet::new();
    let mut check_id = |id: &str| {
        if seen.insert(id.to_string()) {
            Ok(())
        } else {
            Err(ModelError::DuplicateId(id.to_string()))
        }
    };

    let mut buildings = Vec::with_capacity(dto.buildings.len());
    for b in dto.buildings {
        check_id(&b.id)?;
        if !(1..=3).contains(&b.lod) {
            return Err(ModelError::SchemaError(format!(
                "building {}: lod {} not in 1..=3",
                b.id, b.lod
            )));
        }
        let mut surfaces = Vec::with_capacity(b.surfaces.len());
        for s in b.surfaces {
            check_id(&s.id)?;
            let geometry = polygon_from_dto(s.exterior, s.interiors, &s.id)?;
            surfaces.push(Surface {
                id: s.id,
                kind: s.kind,
                geometry,
                attributes: s.attributes,
                extra: s.extra,
            });
        }
        let mut openings = Vec::with_capacity(b.openings.len());
        for o in b.openings {
            check_id(&o.id)?;
            let geometry = o
                .geometry
                .into_iter()
                .map(|g| polygon_from_dto(g.exterior, g.interiors, &o.id))
                .collect::<Result<_, _>>()?;
            openings.push(OpeningObject {
                id: o.id,
                kind: o.kind,
                parent_wall_id: o.parent_wall_id,
                geometry,
                confidence: o.confidence,
                timestamp: o.timestamp,
                attributes: o.attributes,
                extra: o.extra,
            });
        }
        let mut installations = Vec::with_capacity(b.installations.len());
        for o in b.installations {
            check_id(&o.id)?;
            let geometry = o
                .geometry
                .into_iter()
                .map(|g| polygon_from_dto(g.exterior, g.interiors, &o.id))
                .collect::<Result<_, _>>()?;
            installations.push(BuildingInstallation {
                id: o.id,
                function_code: o.function_code,
                geometry,
                confidence: o.confidence,
                timestamp: o.timestamp,
                attributes: o.attributes,
                extra: o.extra,
            });
        }
        buildings.push(Building {
            id: b.id,
            lod: b.lod as u8,
            surfaces,
            installations,
            openings,
            attributes: b.attributes,
            extra: b.extra,
        });
    }
    Ok(BuildingModel {
        crs_label: dto.crs,
        metadata: dto.metadata,
        buildings,
        extra: dto.extra,
    })
}

/// Deterministic pretty-printed JSON. Numbers are written as the shortest
/// decimal that parses back to the same value, so `parse ∘ serialize` is
/// exact.
pub fn serialize_model(m: &BuildingModel) -> Vec<u8> {
    let dto = ModelDto {
        crs: m.crs_label.clone(),
        metadata: m.metadata.clone(),
        buildings: m
            .buildings
            .iter()
            .map(|b| BuildingDto {
                id: b.id.clone(),
                lod: b.lod as i64,
                attributes: b.attributes.clone(),
                surfaces: b
                    .surfaces
                    .iter()
                    .map(|s| SurfaceDto {
                        id: s.id.clone(),
                        kind: s.kind,
                        exterior: ring_to_dto(&s.geometry.exterior),
                        interiors: s.geometry.interiors.iter().map(|r| ring_to_dto(r)).collect(),
                        attributes: s.attributes.clone(),
                        extra: s.extra.clone(),
                    })
                    .collect(),
                openings: b
                    .openings
                    .iter()
                    .map(|o| OpeningDto {
                        id: o.id.clone(),
                        kind: o.kind,
                        parent_wall_id: o.parent_wall_id.clone(),
                        geometry: o.geometry.iter().map(polygon_to_dto).collect(),
                        confidence: o.confidence,
                        timestamp: o.timestamp.clone(),
                        attributes: o.attributes.clone(),
                        extra: o.extra.clone(),
                    })
                    .collect(),
                installations: b
                    .installations
                    .iter()
                    .map(|o| InstallationDto {
                        id: o.id.clone(),
                        function_code: o.function_code.clone(),
                        geometry: o.geometry.iter().map(polygon_to_dto).collect(),
                        confidence: o.confidence,
                        timestamp: o.timestamp.clone(),
                        attributes: o.attributes.clone(),
                        extra: o.extra.clone(),
                    })
                    .collect(),
                extra: b.extra.clone(),
            })
            .collect(),
        extra: m.extra.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&dto).expect("model serialization is infallible");
    out.push(b'\n');
    out
}

// ---------------------------------------------------------------------------
// CityGML 2.0 export

const CITYGML_HEADER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<core:CityModel xmlns:core="http://www.opengis.net/citygml/2.0" xmlns:bldg="http://www.opengis.net/citygml/building/2.0" xmlns:gen="http://www.opengis.net/citygml/generics/2.0" xmlns:gml="http://www.opengis.net/gml" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://www.opengis.net/citygml/building/2.0 http://schemas.opengis.net/citygml/building/2.0/building.xsd http://www.opengis.net/citygml/generics/2.0 http://schemas.opengis.net/citygml/generics/2.0/generics.xsd">
"#;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn fmt_num(x: f64) -> String {
    let r = canonical_f64(x);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

struct XmlWriter {
    buf: String,
    depth: usize,
}

impl XmlWriter {
    fn open(&mut self, tag: &str) {
        self.line(&format!("<{tag}>"));
        self.depth += 1;
    }

    fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.line(&format!("</{name}>"));
    }

    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    fn text_element(&mut self, name: &str, text: &str) {
        self.line(&format!("<{name}>{}</{name}>", xml_escape(text)));
    }

    fn generic(&mut self, name: &str, value: &Value) {
        let (tag, text) = match value {
            Value::String(s) => ("gen:stringAttribute", s.clone()),
            Value::Number(n) if n.is_i64() || n.is_u64() => ("gen:intAttribute", n.to_string()),
            Value::Number(n) => ("gen:doubleAttribute", fmt_num(n.as_f64().unwrap_or(f64::NAN))),
            other => ("gen:stringAttribute", other.to_string()),
        };
        self.line(&format!(r#"<{tag} name="{}">"#, xml_escape(name)));
        self.depth += 1;
        self.text_element("gen:value", &text);
        self.close(tag);
    }

    fn ring(&mut self, ring: &[Point3]) {
        let mut pos = String::new();
        // Closed ring: repeat the first vertex.
        for p in ring.iter().chain(ring.first()) {
            if !pos.is_empty() {
                pos.push(' ');
            }
            let _ = write!(pos, "{} {} {}", fmt_num(p.x), fmt_num(p.y), fmt_num(p.z));
        }
        self.open("gml:LinearRing");
        self.line(&format!(r#"<gml:posList srsDimension="3">{pos}</gml:posList>"#));
        self.close("gml:LinearRing");
    }

    fn multi_surface(&mut self, property: &str, polys: &[&PolygonWithHoles]) {
        self.open(property);
        self.open("gml:MultiSurface");
        for p in polys {
            self.open("gml:surfaceMember");
            self.open("gml:Polygon");
            self.open("gml:exterior");
            self.ring(&p.exterior);
            self.close("gml:exterior");
            for hole in &p.interiors {
                self.open("gml:interior");
                self.ring(hole);
                self.close("gml:interior");
            }
            self.close("gml:Polygon");
            self.close("gml:surfaceMember");
        }
        self.close("gml:MultiSurface");
        self.close(property);
    }

    fn confidence_and_time(&mut self, confidence: f64, timestamp: &str) {
        self.generic("confidence", &serde_json::json!(confidence));
        self.generic("timestamp", &Value::String(timestamp.to_string()));
    }
}

/// CityGML 2.0 XML. Thematic surfaces become `bldg:boundedBy` members,
/// windows and doors are nested under their parent wall's `bldg:opening`,
/// installations carry the numeric function code.
pub fn export_citygml(m: &BuildingModel) -> Result<Vec<u8>, ModelError> {
    let mut w = XmlWriter {
        buf: String::from(CITYGML_HEADER),
        depth: 1,
    };
    if !m.crs_label.is_empty() {
        w.open("gml:boundedBy");
        w.line(&format!(
            r#"<gml:Envelope srsName="{}" srsDimension="3">"#,
            xml_escape(&m.crs_label)
        ));
        w.depth += 1;
        let (lo, hi) = m.vertices().fold(
            (Vec3::new(f64::MAX, f64::MAX, f64::MAX), Vec3::new(f64::MIN, f64::MIN, f64::MIN)),
            |(lo, hi), p| (lo.min(p), hi.max(p)),
        );
        let (lo, hi) = if lo.x <= hi.x { (lo, hi) } else { (Vec3::ZERO, Vec3::ZERO) };
        w.text_element(
            "gml:lowerCorner",
            &format!("{} {} {}", fmt_num(lo.x), fmt_num(lo.y), fmt_num(lo.z)),
        );
        w.text_element(
            "gml:upperCorner",
            &format!("{} {} {}", fmt_num(hi.x), fmt_num(hi.y), fmt_num(hi.z)),
        );
        w.close("gml:Envelope");
        w.close("gml:boundedBy");
    }
    for b in &m.buildings {
        for o in &b.openings {
            let ok = b
                .surface(&o.parent_wall_id)
                .is_some_and(|s| s.kind == SurfaceKind::WallSurface);
            if !ok {
                return Err(ModelError::UnresolvedParent {
                    opening_id: o.id.clone(),
                    parent_wall_id: o.parent_wall_id.clone(),
                });
            }
        }
        // Thematic surfaces only exist from LoD2 on.
        let lod = b.lod.max(2);
        w.open("core:cityObjectMember");
        w.open(&format!(r#"bldg:Building gml:id="{}""#, xml_escape(&b.id)));
        for (k, v) in &b.attributes {
            w.generic(k, v);
        }
        for s in &b.surfaces {
            w.open("bldg:boundedBy");
            let tag = format!("bldg:{}", s.kind.name());
            w.open(&format!(r#"{tag} gml:id="{}""#, xml_escape(&s.id)));
            for (k, v) in &s.attributes {
                w.generic(k, v);
            }
            w.multi_surface(&format!("bldg:lod{lod}MultiSurface"), &[&s.geometry]);
            for o in b.openings.iter().filter(|o| o.parent_wall_id == s.id) {
                w.open("bldg:opening");
                let otag = format!("bldg:{}", o.kind.name());
                w.open(&format!(r#"{otag} gml:id="{}""#, xml_escape(&o.id)));
                for (k, v) in &o.attributes {
                    w.generic(k, v);
                }
                w.confidence_and_time(o.confidence, &o.timestamp);
                let polys: Vec<_> = o.geometry.iter().collect();
                w.multi_surface(&format!("bldg:lod{}MultiSurface", lod.max(3)), &polys);
                w.close(&otag);
                w.close("bldg:opening");
            }
            w.close(&tag);
            w.close("bldg:boundedBy");
        }
        for inst in &b.installations {
            w.open("bldg:outerBuildingInstallation");
            w.open(&format!(
                r#"bldg:BuildingInstallation gml:id="{}""#,
                xml_escape(&inst.id)
            ));
            for (k, v) in &inst.attributes {
                w.generic(k, v);
            }
            w.confidence_and_time(inst.confidence, &inst.timestamp);
            let code = inst
                .function_code
                .split_whitespace()
                .next()
                .unwrap_or_default();
            w.text_element("bldg:function", code);
            let polys: Vec<_> = inst.geometry.iter().collect();
            w.multi_surface(&format!("bldg:lod{}Geometry", lod.max(3)), &polys);
            w.close("bldg:BuildingInstallation");
            w.close("bldg:outerBuildingInstallation");
        }
        w.close("bldg:Building");
        w.close("core:cityObjectMember");
    }
    w.buf.push_str("</core:CityModel>\n");
    Ok(w.buf.into_bytes())
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Planarity { object_id: String, residual: f64 },
    /// Edge of the shell not shared by exactly two faces.
    NonManifoldEdge { a: Point3, b: Point3, count: usize },
    /// Edge of a wall hole not closed off by an opening or installation face.
    UnmatchedHoleEdge { surface_id: String, a: Point3, b: Point3, count: usize },
    DuplicateId { id: String },
    ConfidenceOutOfRange { object_id: String, confidence: f64 },
    UnresolvedParent { opening_id: String, parent_wall_id: String },
    UnknownFunctionCode { installation_id: String, function_code: String },
    InvalidTimestamp { object_id: String, timestamp: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingFindings {
    pub building_id: String,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ValidationReport {
    pub buildings: Vec<BuildingFindings>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.buildings.iter().all(|b| b.findings.is_empty())
    }

    pub fn findings(&self) -> impl Iterator<Item = (&str, &Finding)> {
        self.buildings
            .iter()
            .flat_map(|b| b.findings.iter().map(move |f| (b.building_id.as_str(), f)))
    }

    pub fn count(&self) -> usize {
        self.buildings.iter().map(|b| b.findings.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub planarity_tolerance: f64,
    /// Vertices closer than this are treated as the same vertex.
    pub weld_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            planarity_tolerance: INPUT_PLANARITY_TOL,
            weld_tolerance: 1e-6,
        }
    }
}

pub fn validate_model(m: &BuildingModel) -> ValidationReport {
    validate_model_with(m, &ValidationOptions::default())
}

pub fn validate_model_with(m: &BuildingModel, opts: &ValidationOptions) -> ValidationReport {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for id in m.ids() {
        *seen.entry(id).or_default() += 1;
    }
    let mut reported = BTreeSet::new();
    let mut report = ValidationReport::default();
    for b in &m.buildings {
        let mut findings = Vec::new();
        for id in b.ids() {
            if seen[id] > 1 && reported.insert(id) {
                findings.push(Finding::DuplicateId { id: id.to_string() });
            }
        }
        let polys = b
            .surfaces
            .iter()
            .map(|s| (s.id.as_str(), &s.geometry))
            .chain(b.openings.iter().flat_map(|o| o.geometry.iter().map(|g| (o.id.as_str(), g))))
            .chain(
                b.installations
                    .iter()
                    .flat_map(|o| o.geometry.iter().map(|g| (o.id.as_str(), g))),
            );
        for (id, g) in polys {
            let r = g.planarity_residual();
            if !(r <= opts.planarity_tolerance) {
                findings.push(Finding::Planarity {
                    object_id: id.to_string(),
                    residual: r,
                });
            }
        }
        for o in &b.openings {
            if !(0.0..=1.0).contains(&o.confidence) {
                findings.push(Finding::ConfidenceOutOfRange {
                    object_id: o.id.clone(),
                    confidence: o.confidence,
                });
            }
            if !b
                .surface(&o.parent_wall_id)
                .is_some_and(|s| s.kind == SurfaceKind::WallSurface)
            {
                findings.push(Finding::UnresolvedParent {
                    opening_id: o.id.clone(),
                    parent_wall_id: o.parent_wall_id.clone(),
                });
            }
            if chrono::DateTime::parse_from_rfc3339(&o.timestamp).is_err() {
                findings.push(Finding::InvalidTimestamp {
                    object_id: o.id.clone(),
                    timestamp: o.timestamp.clone(),
                });
            }
        }
        for o in &b.installations {
            if !(0.0..=1.0).contains(&o.confidence) {
                findings.push(Finding::ConfidenceOutOfRange {
                    object_id: o.id.clone(),
                    confidence: o.confidence,
                });
            }
            if !embed::is_known_function_code(&o.function_code) {
                findings.push(Finding::UnknownFunctionCode {
                    installation_id: o.id.clone(),
                    function_code: o.function_code.clone(),
                });
            }
            if chrono::DateTime::parse_from_rfc3339(&o.timestamp).is_err() {
                findings.push(Finding::InvalidTimestamp {
                    object_id: o.id.clone(),
                    timestamp: o.timestamp.clone(),
                });
            }
        }
        findings.extend(edge_findings(b, opts.weld_tolerance));
        report.buildings.push(BuildingFindings {
            building_id: b.id.clone(),
            findings,
        });
    }
    report
}

/// Merges vertices within a tolerance using a hash grid.
struct Welder {
    tol: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    points: Vec<Point3>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Welder {
            tol,
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn cell(&self, p: Point3) -> [i64; 3] {
        [
            (p.x / self.tol).floor() as i64,
            (p.y / self.tol).floor() as i64,
            (p.z / self.tol).floor() as i64,
        ]
    }

    fn id(&mut self, p: Point3) -> usize {
        let c = self.cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if let Some(&i) = ids.iter().find(|&&i| self.points[i].distance(p) <= self.tol) {
                            return i;
                        }
                    }
                }
            }
        }
        let i = self.points.len();
        self.points.push(p);
        self.cells.entry(c).or_default().push(i);
        i
    }
}

struct EdgeUse {
    count: usize,
    hole_of: Option<String>,
}

/// Every edge of the building's faces (shell surfaces, their holes, and the
/// faces of openings and installations) must be used exactly twice.
fn edge_findings(b: &Building, tol: f64) -> Vec<Finding> {
    let mut welder = Welder::new(tol);
    let mut edges: BTreeMap<(usize, usize), EdgeUse> = BTreeMap::new();
    let mut add_ring = |ring: &[Point3], hole_of: Option<&str>, welder: &mut Welder| {
        let ids: Vec<usize> = ring.iter().map(|p| welder.id(*p)).collect();
        for i in 0..ids.len() {
            let (a, c) = (ids[i], ids[(i + 1) % ids.len()]);
            if a == c {
                continue;
            }
            let e = edges.entry((a.min(c), a.max(c))).or_insert(EdgeUse {
                count: 0,
                hole_of: None,
            });
            e.count += 1;
            if e.hole_of.is_none() {
                e.hole_of = hole_of.map(str::to_string);
            }
        }
    };
    for s in &b.surfaces {
        add_ring(&s.geometry.exterior, None, &mut welder);
        for hole in &s.geometry.interiors {
            add_ring(hole, Some(&s.id), &mut welder);
        }
    }
    for g in b
        .openings
        .iter()
        .flat_map(|o| o.geometry.iter())
        .chain(b.installations.iter().flat_map(|o| o.geometry.iter()))
    {
        for r in g.rings() {
            add_ring(r, None, &mut welder);
        }
    }
    edges
        .into_iter()
        .filter(|(_, e)| e.count != 2)
        .map(|((a, c), e)| {
            let (a, c) = (welder.points[a], welder.points[c]);
            match e.hole_of {
                Some(surface_id) => Finding::UnmatchedHoleEdge {
                    surface_id,
                    a,
                    b: c,
                    count: e.count,
                },
                None => Finding::NonManifoldEdge {
                    a,
                    b: c,
                    count: e.count,
                },
            }
        })
        .collect()
}

/// Outward normal of a surface (unit length).
pub fn surface_normal(s: &Surface) -> Vec3 {
    newell_normal(&s.geometry.exterior).normalized()
}
