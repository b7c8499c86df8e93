#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use serde_json::{json, Value};

use lod3_refine::model::{Attributes, Building, BuildingInstallation, BuildingModel, OpeningKind, OpeningObject};
use lod3_refine::synthetic::{box_building, prism_building};
use lod3_refine::visibility::VoxelGrid;
use lod3_refine::{Point3, PolygonWithHoles};

fn random_value<R: Rng>(rng: &mut R) -> Value {
    match rng.gen_range(0..5) {
        0 => json!(rng.gen_range(-1000i64..1000)),
        1 => json!(rng.gen_range(-1e4..1e4)),
        2 => json!(format!("s{}", rng.gen_range(0..1_000_000))),
        3 => json!(rng.gen_bool(0.5)),
        _ => json!({"href": format!("https://example.org/report/{}", rng.gen_range(0..100))}),
    }
}

fn random_attributes<R: Rng>(rng: &mut R) -> Attributes {
    (0..rng.gen_range(0..4))
        .map(|k| (format!("attr{k}"), random_value(rng)))
        .collect()
}

/// Convex footprint with `n` vertices, counter-clockwise.
fn footprint<R: Rng>(rng: &mut R, n: usize, c: [f64; 2]) -> Vec<[f64; 2]> {
    let r = rng.gen_range(4.0..15.0);
    let phase = rng.gen_range(0.0..1.0);
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * (k as f64 + phase) / n as f64;
            [c[0] + r * a.cos(), c[1] + r * a.sin()]
        })
        .collect()
}

fn little_box(at: Point3, s: f64) -> Vec<PolygonWithHoles> {
    box_building("tmp", at, at + Point3::new(s, s, s), 2)
        .surfaces
        .into_iter()
        .map(|s| s.geometry)
        .collect()
}

/// Valid model with several buildings, attributes, openings, installations
/// and unknown keys. Coordinates are large georeferenced-like values.
pub fn random_model<R: Rng>(rng: &mut R) -> BuildingModel {
    let mut buildings = Vec::new();
    for b in 0..rng.gen_range(0..4) {
        let id = format!("bldg-{b}");
        let c = [rng.gen_range(690_000.0..691_000.0), rng.gen_range(5_330_000.0..5_331_000.0)];
        let n = rng.gen_range(3..9);
        let z0 = rng.gen_range(480.0..520.0);
        let mut bld: Building = prism_building(&id, &footprint(rng, n, c), z0, z0 + rng.gen_range(3.0..30.0), rng.gen_range(1..=3));
        bld.attributes = random_attributes(rng);
        for s in &mut bld.surfaces {
            s.attributes = random_attributes(rng);
        }
        if rng.gen_bool(0.5) {
            bld.extra.insert("externalReference".into(), json!({"uri": "urn:x", "n": 3}));
        }
        let anchor = bld.surfaces[0].geometry.exterior[0];
        for k in 0..rng.gen_range(0..3) {
            bld.installations.push(BuildingInstallation {
                id: format!("{id}-inst-{k}"),
                function_code: ["1000 balcony", "1016 molding", "1060 stairs"][k % 3].into(),
                geometry: little_box(anchor + Point3::new(k as f64, 0.0, 0.0), 0.5),
                confidence: rng.gen_range(0.0..=1.0),
                timestamp: "2016-04-01T12:30:00Z".into(),
                attributes: random_attributes(rng),
                extra: Attributes::new(),
            });
        }
        if rng.gen_bool(0.5) {
            let wall = bld.walls().next().unwrap().id.clone();
            bld.openings.push(OpeningObject {
                id: format!("{id}-win"),
                kind: if rng.gen_bool(0.5) { OpeningKind::Window } else { OpeningKind::Door },
                parent_wall_id: wall,
                geometry: little_box(anchor, 0.3),
                confidence: rng.gen_range(0.0..=1.0),
                timestamp: "2016-04-01T12:30:00+02:00".into(),
                attributes: random_attributes(rng),
                extra: Attributes::new(),
            });
        }
        buildings.push(bld);
    }
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("title".into(), "generated".into());
    BuildingModel {
        crs_label: "EPSG:25832".into(),
        metadata,
        buildings,
        extra: Attributes::new(),
    }
}

/// Length of the part of segment `a → b` inside voxel `v`.
pub fn chord(grid: &VoxelGrid, v: [usize; 3], a: Point3, b: Point3) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let lo = grid.aabb_min.component(k) + v[k] as f64 * grid.voxel_size;
        let hi = lo + grid.voxel_size;
        let (p, d) = (a.component(k), b.component(k) - a.component(k));
        if d == 0.0 {
            if p < lo || p > hi {
                return 0.0;
            }
        } else {
            let (x, y) = ((lo - p) / d, (hi - p) / d);
            t0 = t0.max(x.min(y));
            t1 = t1.min(x.max(y));
        }
    }
    ((t1 - t0).max(0.0)) * a.distance(b)
}

/// Voxels containing samples taken every `step` along the segment. Samples
/// closer than `margin` to a voxel face are ambiguous and ignored.
pub fn sampled(grid: &VoxelGrid, a: Point3, b: Point3, step: f64, margin: f64) -> BTreeSet<[usize; 3]> {
    let len = a.distance(b);
    let n = (len / step).ceil() as usize;
    let mut out = BTreeSet::new();
    for k in 0..=n {
        let t = (k as f64 / n.max(1) as f64).min(1.0);
        let p = a + (b - a) * t;
        let mut idx = [0usize; 3];
        let mut ok = true;
        for ax in 0..3 {
            let r = (p.component(ax) - grid.aabb_min.component(ax)) / grid.voxel_size;
            let f = r.floor();
            if r < 0.0 || f >= grid.dims[ax] as f64 || (r - f) * grid.voxel_size < margin || (f + 1.0 - r) * grid.voxel_size < margin {
                ok = false;
                break;
            }
            idx[ax] = f as usize;
        }
        if ok {
            out.insert(idx);
        }
    }
    out
}
