//! Labeled MLS point clouds with per-point sensor origins.
//!
//! The on-disk format (`.lpc`) is line based ASCII:
//!
//! ```text
//! # comment
//! ORIGINS 2
//! 5.0 2.0 1.5
//! 5.0 8.0 1.5
//! POINTS 3
//! 0.0 2.1 1.0 3 0
//! 0.0 2.2 1.0 3 0
//! -0.2 7.5 2.4 4 1
//! ```
//!
//! Point lines are `x y z label_code origin_index`. Label codes are mapped to
//! [`FacadeClass`] through a [`LabelMapping`].

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point3;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("line {line}: {message}")]
    FormatError { line: usize, message: String },
    #[error("line {line}: origin index {index} out of range ({count} origins)")]
    UnknownOriginIndex { line: usize, index: usize, count: usize },
    #[error("label mapping: {0}")]
    Mapping(String),
}

/// Facade element classes recognized in labeled point clouds and rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FacadeClass {
    GroundSurface,
    RoofSurface,
    Wall,
    Window,
    Door,
    Underpass,
    Balcony,
    Molding,
    Deco,
    Column,
    Arch,
    Drainpipe,
    Stairs,
    Blinds,
    Other,
}

impl FacadeClass {
    pub const ALL: [FacadeClass; 15] = [
        FacadeClass::GroundSurface,
        FacadeClass::RoofSurface,
        FacadeClass::Wall,
        FacadeClass::Window,
        FacadeClass::Door,
        FacadeClass::Underpass,
        FacadeClass::Balcony,
        FacadeClass::Molding,
        FacadeClass::Deco,
        FacadeClass::Column,
        FacadeClass::Arch,
        FacadeClass::Drainpipe,
        FacadeClass::Stairs,
        FacadeClass::Blinds,
        FacadeClass::Other,
    ];

    pub const OPENINGS: [FacadeClass; 3] =
        [FacadeClass::Window, FacadeClass::Door, FacadeClass::Underpass];

    pub const INSTALLATIONS: [FacadeClass; 8] = [
        FacadeClass::Balcony,
        FacadeClass::Molding,
        FacadeClass::Deco,
        FacadeClass::Column,
        FacadeClass::Arch,
        FacadeClass::Drainpipe,
        FacadeClass::Stairs,
        FacadeClass::Blinds,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FacadeClass::GroundSurface => "GroundSurface",
            FacadeClass::RoofSurface => "RoofSurface",
            FacadeClass::Wall => "Wall",
            FacadeClass::Window => "Window",
            FacadeClass::Door => "Door",
            FacadeClass::Underpass => "Underpass",
            FacadeClass::Balcony => "Balcony",
            FacadeClass::Molding => "Molding",
            FacadeClass::Deco => "Deco",
            FacadeClass::Column => "Column",
            FacadeClass::Arch => "Arch",
            FacadeClass::Drainpipe => "Drainpipe",
            FacadeClass::Stairs => "Stairs",
            FacadeClass::Blinds => "Blinds",
            FacadeClass::Other => "Other",
        }
    }

    /// Window, door or underpass: elements that perforate the wall.
    pub fn is_opening(self) -> bool {
        Self::OPENINGS.contains(&self)
    }

    pub fn is_installation(self) -> bool {
        Self::INSTALLATIONS.contains(&self)
    }
}

impl fmt::Display for FacadeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FacadeClass {
    type Err = String;

    /// Case-insensitive; spaces, `_` and `-` are ignored so that
    /// `"ground surface"` and `"GroundSurface"` both parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        FacadeClass::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == key)
            .ok_or_else(|| format!("unknown facade class {s:?}"))
    }
}

/// Integer label code to class table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMapping {
    table: BTreeMap<u32, FacadeClass>,
}

impl Default for LabelMapping {
    /// Codes 1..=14 follow the facade class order, `GroundSurface` = 1 up to
    /// `Blinds` = 14. Everything else is `Other`.
    fn default() -> Self {
        let table = FacadeClass::ALL[..14]
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32 + 1, *c))
            .collect();
        LabelMapping { table }
    }
}

impl LabelMapping {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, FacadeClass)>) -> Self {
        LabelMapping {
            table: pairs.into_iter().collect(),
        }
    }

    /// Reads `code,class_name` rows. A header row is accepted if its first
    /// field is not numeric.
    pub fn from_csv(data: &[u8]) -> Result<Self, CloudError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(data);
        let mut table = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CloudError::Mapping(e.to_string()))?;
            if rec.len() != 2 {
                return Err(CloudError::Mapping(format!(
                    "row {}: expected 2 fields, got {}",
                    i + 1,
                    rec.len()
                )));
            }
            let code = match rec[0].parse::<u32>() {
                Ok(c) => c,
                Err(_) if i == 0 => continue,
                Err(e) => return Err(CloudError::Mapping(format!("row {}: {e}", i + 1))),
            };
            let class = rec[1]
                .parse::<FacadeClass>()
                .map_err(|e| CloudError::Mapping(format!("row {}: {e}", i + 1)))?;
            table.insert(code, class);
        }
        Ok(LabelMapping { table })
    }

    /// Reverse lookup: lowest code mapped to `class`.
    pub fn code_of(&self, class: FacadeClass) -> Option<u32> {
        self.table.iter().find(|(_, c)| **c == class).map(|(k, _)| *k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, FacadeClass)> + '_ {
        self.table.iter().map(|(k, v)| (*k, *v))
    }
}

/// Total: unmapped codes become [`FacadeClass::Other`].
pub fn map_label(code: u32, mapping: &LabelMapping) -> FacadeClass {
    mapping.table.get(&code).copied().unwrap_or(FacadeClass::Other)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Point3,
    pub class: FacadeClass,
    pub label_code: u32,
    pub origin_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledPointCloud {
    pub points: Vec<LabeledPoint>,
    pub origins: Vec<Point3>,
}

impl LabeledPointCloud {
    pub fn origin_of(&self, p: &LabeledPoint) -> Point3 {
        self.origins[p.origin_index]
    }
}

/// Positioning uncertainty of model surfaces and of scanned points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyParams {
    /// Standard deviation of model surface positions (m).
    pub sigma_model: f64,
    /// Standard deviation of point positions (m).
    pub sigma_point: f64,
    pub mu_model: f64,
    pub mu_point: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams {
            sigma_model: 0.3,
            sigma_point: 0.05,
            mu_model: 0.0,
            mu_point: 0.0,
        }
    }
}

pub fn parse_point_cloud(data: &[u8]) -> Result<LabeledPointCloud, CloudError> {
    parse_point_cloud_with(data, &LabelMapping::default())
}

pub fn parse_point_cloud_with(
    data: &[u8],
    mapping: &LabelMapping,
) -> Result<LabeledPointCloud, CloudError> {
    let text = std::str::from_utf8(data).map_err(|e| CloudError::FormatError {
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let fmt_err = |line: usize, message: String| CloudError::FormatError { line, message };

    let header = |name: &str, lines: &mut dyn Iterator<Item = (usize, &str)>| {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fmt_err(0, format!("missing {name} header")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(fmt_err(ln, format!("expected '{name} <count>'")));
        }
        let n = it
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| fmt_err(ln, format!("bad {name} count")))?;
        if it.next().is_some() {
            return Err(fmt_err(ln, "trailing tokens".into()));
        }
        Ok(n)
    };

    let n_origins = header("ORIGINS", &mut lines)?;
    let mut origins = Vec::with_capacity(n_origins);
    for _ in 0..n_origins {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fmt_err(0, "unexpected end of file in ORIGINS".into()))?;
        let f = parse_fields::<3>(l).map_err(|m| fmt_err(ln, m))?;
        origins.push(finite_point(f, ln)?);
    }

    let n_points = header("POINTS", &mut lines)?;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fmt_err(0, "unexpected end of file in POINTS".into()))?;
        let mut it = l.split_whitespace();
        let mut xyz = [0.0; 3];
        for v in xyz.iter_mut() {
            *v = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fmt_err(ln, "expected 'x y z label_code origin_index'".into()))?;
        }
        let code: u32 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt_err(ln, "bad label code".into()))?;
        let origin_index: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt_err(ln, "bad origin index".into()))?;
        if it.next().is_some() {
            return Err(fmt_err(ln, "trailing tokens".into()));
        }
        if origin_index >= origins.len() {
            return Err(CloudError::UnknownOriginIndex {
                line: ln,
                index: origin_index,
                count: origins.len(),
            });
        }
        points.push(LabeledPoint {
            position: finite_point(xyz, ln)?,
            class: map_label(code, mapping),
            label_code: code,
            origin_index,
        });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(fmt_err(ln, "content after last point".into()));
    }
    Ok(LabeledPointCloud { points, origins })
}

fn parse_fields<const N: usize>(line: &str) -> Result<[f64; N], String> {
    let mut out = [0.0; N];
    let mut it = line.split_whitespace();
    for v in out.iter_mut() {
        *v = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("expected {N} numbers"))?;
    }
    if it.next().is_some() {
        return Err("trailing tokens".into());
    }
    Ok(out)
}

fn finite_point(a: [f64; 3], line: usize) -> Result<Point3, CloudError> {
    let p = Point3::from(a);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(CloudError::FormatError {
            line,
            message: "non-finite coordinate".into(),
        })
    }
}

/// Writes the `.lpc` format with shortest round-trip float formatting.
pub fn write_point_cloud(cloud: &LabeledPointCloud) -> String {
    let mut s = String::with_capacity(32 * (cloud.points.len() + cloud.origins.len()) + 32);
    let _ = writeln!(s, "ORIGINS {}", cloud.origins.len());
    for o in &cloud.origins {
        let _ = writeln!(s, "{} {} {}", o.x, o.y, o.z);
    }
    let _ = writeln!(s, "POINTS {}", cloud.points.len());
    for p in &cloud.points {
        let q = p.position;
        let _ = writeln!(s, "{} {} {} {} {}", q.x, q.y, q.z, p.label_code, p.origin_index);
    }
    s
}
