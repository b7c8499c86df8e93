//! Wall-plane probability rasters: projected conflict evidence, point-label
//! vote shares and resampled texture classifications.
//!
//! Pixel `(i, j)` covers `u ∈ [i·res, (i+1)·res)`, `v ∈ [j·res, (j+1)·res)`
//! in the wall frame, so row 0 is the bottom of the wall. Image exports flip
//! rows so that the top of the wall comes first.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{map_label, FacadeClass, LabelMapping, LabeledPointCloud};
use crate::geom::{point_in_polygon, Polygon2, WallFrame};
use crate::visibility::StateGrid;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("wall {0} has no classified voxels")]
    EmptyWall(String),
    #[error("raster aspect {raster:.3} deviates from wall aspect {wall:.3} by more than 10%")]
    SizeMismatch { raster: f64, wall: f64 },
    #[error("map has no channel {0:?}")]
    MissingChannel(Channel),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("texture raster: {0}")]
    Texture(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Conflict,
    Class(FacadeClass),
    /// Sum of the Window, Door and Underpass channels.
    Openings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub frame: WallFrame,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Channel>,
    /// Pixel-interleaved, row-major, bottom row first.
    pub values: Vec<f64>,
}

/// Raster width and height covering a wall frame.
pub fn raster_dims(frame: &WallFrame, resolution: f64) -> (usize, usize) {
    let d = |e: f64| ((e / resolution - 1e-9).ceil().max(1.0)) as usize;
    (d(frame.u_extent), d(frame.v_extent))
}

impl ProbabilityMap {
    pub fn new(frame: WallFrame, resolution: f64, channels: Vec<Channel>, fill: f64) -> Result<Self, MapError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::InvalidResolution(resolution));
        }
        let (width, height) = raster_dims(&frame, resolution);
        Ok(ProbabilityMap {
            frame,
            resolution,
            width,
            height,
            values: vec![fill; width * height * channels.len()],
            channels,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn channel_index(&self, c: Channel) -> Option<usize> {
        self.channels.iter().position(|x| *x == c)
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        (j * self.width + i) * self.channels.len()
    }

    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.values[self.offset(i, j) + ch]
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.channels.len()]
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    /// Pixel containing frame point `(u, v)`, if inside the raster.
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let (i, j) = ((u / self.resolution).floor(), (v / self.resolution).floor());
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    /// One channel as a row-major plane (bottom row first). `Openings`
    /// is derived from the opening class channels when not stored.
    pub fn channel_plane(&self, c: Channel) -> Result<Vec<f64>, MapError> {
        if let Some(ch) = self.channel_index(c) {
            let n = self.channels.len();
            return Ok(self.values.iter().skip(ch).step_by(n).copied().collect());
        }
        if c == Channel::Openings {
            let idx: Vec<usize> = FacadeClass::OPENINGS
                .iter()
                .filter_map(|k| self.channel_index(Channel::Class(*k)))
                .collect();
            if !idx.is_empty() {
                let n = self.channels.len();
                return Ok(self
                    .values
                    .chunks(n)
                    .map(|px| idx.iter().map(|&k| px[k]).sum::<f64>().min(1.0))
                    .collect());
            }
        }
        Err(MapError::MissingChannel(c))
    }

    pub fn same_layout(&self, o: &ProbabilityMap) -> bool {
        self.frame == o.frame
            && self.resolution == o.resolution
            && self.width == o.width
            && self.height == o.height
    }

    /// In-polygon mask, row-major bottom row first.
    pub fn mask(&self, outline: &Polygon2) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.pixel_count());
        for j in 0..self.height {
            for i in 0..self.width {
                let (u, v) = self.pixel_center(i, j);
                m.push(point_in_polygon(u, v, outline));
            }
        }
        m
    }
}

/// Conflict channel where nothing was observed: 0.5 inside the wall, 0
/// outside.
pub fn uninformative_conflict_map(
    frame: &WallFrame,
    outline: &Polygon2,
    resolution: f64,
) -> Result<ProbabilityMap, MapError> {
    let mut map = ProbabilityMap::new(*frame, resolution, vec![Channel::Conflict], 0.0)?;
    for (k, inside) in map.mask(outline).into_iter().enumerate() {
        if inside {
            map.values[k] = 0.5;
        }
    }
    Ok(map)
}

/// Projects the wall's classified voxels onto the wall raster. Each voxel
/// covers the pixels whose centers fall in its square footprint (and always
/// the pixel under its center); overlapping voxels are max-pooled.
/// Unobserved in-polygon pixels get 0.5, pixels outside the polygon 0.
pub fn rasterize_conflicts(
    states: &StateGrid,
    wall_id: &str,
    outline: &Polygon2,
    resolution: f64,
) -> Result<ProbabilityMap, MapError> {
    let ev = states
        .wall(wall_id)
        .filter(|e| !e.voxels.is_empty())
        .ok_or_else(|| MapError::EmptyWall(wall_id.to_string()))?;
    let mut map = ProbabilityMap::new(ev.frame, resolution, vec![Channel::Conflict], f64::NAN)?;
    let half = 0.5 * states.grid.voxel_size;
    let (w, h) = (map.width as i64, map.height as i64);
    let clamp_i = |x: f64, n: i64| (x as i64).clamp(0, n - 1) as usize;
    for v in &ev.voxels {
        let [u, vv, _] = v.uvw;
        let i0 = ((u - half) / resolution - 0.5).ceil().max(0.0);
        let i1 = ((u + half) / resolution - 0.5).floor().min((w - 1) as f64);
        let j0 = ((vv - half) / resolution - 0.5).ceil().max(0.0);
        let j1 = ((vv + half) / resolution - 0.5).floor().min((h - 1) as f64);
        let mut put = |i: usize, j: usize| {
            let o = map.offset(i, j);
            let cur = map.values[o];
            if cur.is_nan() || v.p_conflicted > cur {
                map.values[o] = v.p_conflicted;
            }
        };
        put(clamp_i((u / resolution).floor(), w), clamp_i((vv / resolution).floor(), h));
        if i0 <= i1 && j0 <= j1 {
            for j in j0 as usize..=j1 as usize {
                for i in i0 as usize..=i1 as usize {
                    put(i, j);
                }
            }
        }
    }
    let mask = map.mask(outline);
    for (k, inside) in mask.into_iter().enumerate() {
        let x = &mut map.values[k];
        *x = if !inside {
            0.0
        } else if x.is_nan() {
            0.5
        } else {
            *x
        };
    }
    Ok(map)
}

/// Vote-share map over all facade classes. Points farther than
/// `max_offset` from the wall plane are ignored; pixels without votes are 0
/// in every channel.
pub fn rasterize_point_labels(
    cloud: &LabeledPointCloud,
    frame: &WallFrame,
    resolution: f64,
    max_offset: f64,
) -> Result<ProbabilityMap, MapError> {
    let channels: Vec<Channel> = FacadeClass::ALL.iter().map(|c| Channel::Class(*c)).collect();
    let mut map = ProbabilityMap::new(*frame, resolution, channels, 0.0)?;
    let nch = FacadeClass::ALL.len();
    let mut totals = vec![0u32; map.pixel_count()];
    let mut votes = vec![0u32; map.pixel_count() * nch];
    for p in &cloud.points {
        let [u, v, w] = frame.to_frame(p.position);
        if w.abs() > max_offset {
            continue;
        }
        if let Some((i, j)) = map.pixel_at(u, v) {
            let k = j * map.width + i;
            totals[k] += 1;
            votes[k * nch + p.class.index()] += 1;
        }
    }
    for (k, &t) in totals.iter().enumerate() {
        if t > 0 {
            for c in 0..nch {
                map.values[k * nch + c] = votes[k * nch + c] as f64 / t as f64;
            }
        }
    }
    Ok(map)
}

/// External per-wall classification raster, pre-rectified to the wall
/// rectangle. Rows are stored top row first, as in image files.
#[derive(Debug, Clone, PartialEq)]
pub enum TextureRaster {
    Labels {
        width: usize,
        height: usize,
        classes: Vec<FacadeClass>,
    },
    Probabilities {
        width: usize,
        height: usize,
        channels: Vec<FacadeClass>,
        /// Pixel-interleaved.
        values: Vec<f32>,
    },
}

impl TextureRaster {
    pub fn size(&self) -> (usize, usize) {
        match self {
            TextureRaster::Labels { width, height, .. }
            | TextureRaster::Probabilities { width, height, .. } => (*width, *height),
        }
    }
}

/// Nearest-neighbour resampling of a texture raster onto the wall raster.
pub fn ingest_texture_map(
    raster: &TextureRaster,
    frame: &WallFrame,
    resolution: f64,
) -> Result<ProbabilityMap, MapError> {
    let (sw, sh) = raster.size();
    if sw == 0 || sh == 0 {
        return Err(MapError::Texture("empty raster".into()));
    }
    let raster_aspect = sw as f64 / sh as f64;
    let wall_aspect = frame.u_extent / frame.v_extent;
    if (raster_aspect / wall_aspect - 1.0).abs() > 0.1 {
        return Err(MapError::SizeMismatch {
            raster: raster_aspect,
            wall: wall_aspect,
        });
    }
    let channels: Vec<Channel> = FacadeClass::ALL.iter().map(|c| Channel::Class(*c)).collect();
    let mut map = ProbabilityMap::new(*frame, resolution, channels, 0.0)?;
    let nch = FacadeClass::ALL.len();
    let (w, h) = (map.width, map.height);
    for j in 0..h {
        let sy = source_index(j, h, sh);
        let row = sh - 1 - sy;
        for i in 0..w {
            let sx = source_index(i, w, sw);
            let o = map.offset(i, j);
            match raster {
                TextureRaster::Labels { classes, .. } => {
                    map.values[o + classes[row * sw + sx].index()] = 1.0;
                }
                TextureRaster::Probabilities { channels, values, .. } => {
                    let base = (row * sw + sx) * channels.len();
                    for (k, c) in channels.iter().enumerate() {
                        let x = values[base + k] as f64;
                        map.values[o + c.index()] = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
                    }
                }
            }
        }
    }
    debug_assert_eq!(map.values.len(), w * h * nch);
    Ok(map)
}

/// Source pixel whose span contains the center of target pixel `t`.
pub fn source_index(t: usize, target_len: usize, source_len: usize) -> usize {
    let x = ((t as f64 + 0.5) * source_len as f64 / target_len as f64).floor() as usize;
    x.min(source_len - 1)
}

/// Sidecar describing a raw float32 texture raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRasterSidecar {
    pub width: usize,
    pub height: usize,
    /// Facade class names, one per channel.
    pub channels: Vec<String>,
    /// Raw file, relative to the sidecar.
    pub data: String,
}

/// Loads a texture raster: a `.pgm` of integer label codes (mapped through
/// `mapping`) or a `.json` sidecar pointing at row-major, pixel-interleaved
/// little-endian float32 data.
pub fn load_texture_raster(path: &Path, mapping: &LabelMapping) -> Result<TextureRaster, MapError> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|e| MapError::Io {
            path: p.display().to_string(),
            source: e,
        })
    };
    let bytes = read(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let side: RawRasterSidecar =
            serde_json::from_slice(&bytes).map_err(|e| MapError::Texture(e.to_string()))?;
        let channels = side
            .channels
            .iter()
            .map(|s| s.parse::<FacadeClass>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(MapError::Texture)?;
        let raw = read(&path.parent().unwrap_or(Path::new(".")).join(&side.data))?;
        let n = side.width * side.height * channels.len();
        if raw.len() != 4 * n {
            return Err(MapError::Texture(format!(
                "expected {} bytes of float32 data, got {}",
                4 * n,
                raw.len()
            )));
        }
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(TextureRaster::Probabilities {
            width: side.width,
            height: side.height,
            channels,
            values,
        })
    } else {
        let pgm = read_pgm(&bytes)?;
        Ok(TextureRaster::Labels {
            width: pgm.width,
            height: pgm.height,
            classes: pgm.data.iter().map(|&c| map_label(c as u32, mapping)).collect(),
        })
    }
}

/// Decoded grey-level image, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

/// Reads binary PGM (P5), 8 or 16 bit.
pub fn read_pgm(bytes: &[u8]) -> Result<Pgm, MapError> {
    let err = |m: &str| MapError::Pgm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(err("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(err("maxval out of range"));
    }
    pos += 1; // single whitespace after maxval
    let n = width * height;
    let body = bytes.get(pos..).unwrap_or_default();
    let data: Vec<u16> = if maxval < 256 {
        if body.len() < n {
            return Err(err("truncated pixel data"));
        }
        body[..n].iter().map(|&b| b as u16).collect()
    } else {
        if body.len() < 2 * n {
            return Err(err("truncated pixel data"));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

/// 16-bit grey value of a probability: `round(p·65535)`, halves rounding up.
pub fn quantize(p: f64) -> u16 {
    if p.is_nan() {
        return 0;
    }
    (p.clamp(0.0, 1.0) * 65535.0 + 0.5).floor() as u16
}

/// Binary 16-bit PGM of one channel, top row of the wall first.
pub fn export_map_pgm(map: &ProbabilityMap, channel: Channel) -> Result<Vec<u8>, MapError> {
    let plane = map.channel_plane(channel)?;
    let header = format!("P5\n{} {}\n65535\n", map.width, map.height);
    let mut out = Vec::with_capacity(header.len() + 2 * plane.len());
    out.extend_from_slice(header.as_bytes());
    for j in (0..map.height).rev() {
        for i in 0..map.width {
            out.extend_from_slice(&quantize(plane[j * map.width + i]).to_be_bytes());
        }
    }
    Ok(out)
}

/// Mean of a channel plane over the pixels selected by `mask`.
pub fn masked_mean(plane: &[f64], mask: &[bool]) -> Option<f64> {
    let (s, n) = plane
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Texture rasters per wall id, as listed in a manifest file.
pub type TextureManifest = BTreeMap<String, String>;
