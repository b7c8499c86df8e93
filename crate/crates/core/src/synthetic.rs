//! Seeded synthetic buildings and mobile-scan simulations.
//!
//! A scene is a prismatic (optionally gabled) building whose front wall lies
//! in the `x = 0` plane facing `+x`, so the front wall frame has `u = +y`,
//! `v = +z`. Scanner origins run along a line in front of the wall. Rays that
//! hit an opening continue into the building to a recess plane; rays that hit
//! the wall stop on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{FacadeClass, LabelMapping, LabeledPoint, LabeledPointCloud};
use crate::geom::{centroid, newell_normal, point_in_polygon, Point3, Polygon2, PolygonWithHoles, Rect2, Vec3};
use crate::model::{Attributes, Building, BuildingModel, Surface, SurfaceKind};

/// Reverses `ring` if its normal points towards `inside`.
fn orient_outward(mut ring: Vec<Point3>, inside: Point3) -> Vec<Point3> {
    let n = newell_normal(&ring);
    if n.dot(centroid(&ring) - inside) < 0.0 {
        ring.reverse();
    }
    ring
}

fn surface(id: String, kind: SurfaceKind, ring: Vec<Point3>) -> Surface {
    Surface {
        id,
        kind,
        geometry: PolygonWithHoles::new(ring),
        attributes: Attributes::new(),
        extra: Attributes::new(),
    }
}

/// Vertical prism over a counter-clockwise footprint. Walls are named
/// `<id>-wall-<k>` after the footprint edge `k → k+1`.
pub fn prism_building(id: &str, footprint: &[[f64; 2]], z0: f64, z1: f64, lod: u8) -> Building {
    let n = footprint.len();
    let mut surfaces = Vec::with_capacity(n + 2);
    surfaces.push(surface(
        format!("{id}-ground"),
        SurfaceKind::GroundSurface,
        footprint.iter().rev().map(|p| Vec3::new(p[0], p[1], z0)).collect(),
    ));
    surfaces.push(surface(
        format!("{id}-roof"),
        SurfaceKind::RoofSurface,
        footprint.iter().map(|p| Vec3::new(p[0], p[1], z1)).collect(),
    ));
    for k in 0..n {
        let (a, b) = (footprint[k], footprint[(k + 1) % n]);
        surfaces.push(surface(
            format!("{id}-wall-{k}"),
            SurfaceKind::WallSurface,
            vec![
                Vec3::new(a[0], a[1], z0),
                Vec3::new(b[0], b[1], z0),
                Vec3::new(b[0], b[1], z1),
                Vec3::new(a[0], a[1], z1),
            ],
        ));
    }
    Building {
        id: id.to_string(),
        lod,
        surfaces,
        installations: Vec::new(),
        openings: Vec::new(),
        attributes: Attributes::new(),
        extra: Attributes::new(),
    }
}

/// Axis-aligned box between `min` and `max`.
pub fn box_building(id: &str, min: Point3, max: Point3, lod: u8) -> Building {
    prism_building(
        id,
        &[[min.x, min.y], [max.x, min.y], [max.x, max.y], [min.x, max.y]],
        min.z,
        max.z,
        lod,
    )
}

/// Box `[-depth, 0] × [0, width]` with a ridge along `x` at `y = width/2`.
/// Wall ids: `<id>-wall-front` (x = 0), `-back`, `-left` (y = 0), `-right`.
pub fn gable_building(id: &str, width: f64, depth: f64, eaves: f64, ridge: f64, lod: u8) -> Building {
    let inside = Vec3::new(-depth / 2.0, width / 2.0, eaves / 2.0);
    let gable = |x: f64| {
        vec![
            Vec3::new(x, 0.0, 0.0),
            Vec3::new(x, width, 0.0),
            Vec3::new(x, width, eaves),
            Vec3::new(x, width / 2.0, ridge),
            Vec3::new(x, 0.0, eaves),
        ]
    };
    let side = |y: f64| {
        vec![
            Vec3::new(0.0, y, 0.0),
            Vec3::new(-depth, y, 0.0),
            Vec3::new(-depth, y, eaves),
            Vec3::new(0.0, y, eaves),
        ]
    };
    let slope = |y: f64| {
        vec![
            Vec3::new(0.0, y, eaves),
            Vec3::new(-depth, y, eaves),
            Vec3::new(-depth, width / 2.0, ridge),
            Vec3::new(0.0, width / 2.0, ridge),
        ]
    };
    let mk = |name: &str, kind, ring| surface(format!("{id}-{name}"), kind, orient_outward(ring, inside));
    Building {
        id: id.to_string(),
        lod,
        surfaces: vec![
            mk(
                "ground",
                SurfaceKind::GroundSurface,
                vec![
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(-depth, 0.0, 0.0),
                    Vec3::new(-depth, width, 0.0),
                    Vec3::new(0.0, width, 0.0),
                ],
            ),
            mk("roof-left", SurfaceKind::RoofSurface, slope(0.0)),
            mk("roof-right", SurfaceKind::RoofSurface, slope(width)),
            mk("wall-front", SurfaceKind::WallSurface, gable(0.0)),
            mk("wall-back", SurfaceKind::WallSurface, gable(-depth)),
            mk("wall-left", SurfaceKind::WallSurface, side(0.0)),
            mk("wall-right", SurfaceKind::WallSurface, side(width)),
        ],
        installations: Vec::new(),
        openings: Vec::new(),
        attributes: Attributes::new(),
        extra: Attributes::new(),
    }
}

/// Ground-truth element on the front wall, in front-wall frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneElement {
    pub class: FacadeClass,
    pub rect: Rect2,
}

impl SceneElement {
    pub fn new(class: FacadeClass, u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        SceneElement {
            class,
            rect: Rect2 {
                u_min,
                v_min,
                u_max,
                v_max,
            },
        }
    }

    /// Depth behind the wall plane where rays through an opening end
    /// (negative), or offset in front of the wall for installations.
    pub fn surface_offset(&self) -> f64 {
        match self.class {
            FacadeClass::Window => -0.22,
            FacadeClass::Door => -0.12,
            FacadeClass::Underpass => -0.25,
            _ => 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub building_id: String,
    pub width: f64,
    pub depth: f64,
    pub eaves_height: f64,
    /// Gable ridge height; `None` for a flat-roofed box.
    pub ridge_height: Option<f64>,
    pub lod: u8,
    pub elements: Vec<SceneElement>,
    pub scanner_distance: f64,
    pub scanner_height: f64,
    /// Spacing of sensor origins along the wall.
    pub origin_spacing: f64,
    /// Mean spacing of scan targets on the wall plane.
    pub point_spacing: f64,
    /// Standard deviation of range noise along each ray (m).
    pub noise: f64,
    /// Probability that a point keeps its true label.
    pub label_accuracy: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// 10 × 6 m front wall, scanner 5 m away, no elements.
    pub fn plain_wall(seed: u64) -> Self {
        SceneSpec {
            building_id: "B1".into(),
            width: 10.0,
            depth: 8.0,
            eaves_height: 6.0,
            ridge_height: None,
            lod: 2,
            elements: Vec::new(),
            scanner_distance: 5.0,
            scanner_height: 1.5,
            origin_spacing: 1.0,
            point_spacing: 0.03,
            noise: 0.003,
            label_accuracy: 0.9,
            seed,
        }
    }

    /// Two 1.0 × 1.5 m windows.
    pub fn two_windows(seed: u64) -> Self {
        SceneSpec {
            elements: vec![
                SceneElement::new(FacadeClass::Window, 2.0, 1.0, 3.0, 2.5),
                SceneElement::new(FacadeClass::Window, 6.5, 3.5, 7.5, 5.0),
            ],
            ..Self::plain_wall(seed)
        }
    }

    /// One 3 × 3 m passage at ground level.
    pub fn underpass(seed: u64) -> Self {
        SceneSpec {
            elements: vec![SceneElement::new(FacadeClass::Underpass, 3.5, 0.0, 6.5, 3.0)],
            ..Self::plain_wall(seed)
        }
    }

    /// Gabled front wall with one window close to the ridge whose bounding
    /// rectangle sticks out through the roof line, plus one ordinary window.
    pub fn gable_window(seed: u64) -> Self {
        SceneSpec {
            ridge_height: Some(8.0),
            elements: vec![
                SceneElement::new(FacadeClass::Window, 2.0, 1.0, 3.0, 2.5),
                SceneElement::new(FacadeClass::Window, 4.2, 6.2, 5.8, 7.9),
            ],
            ..Self::plain_wall(seed)
        }
    }

    /// Windows, a door, a molding band and a drainpipe.
    pub fn mixed_facade(seed: u64) -> Self {
        SceneSpec {
            elements: vec![
                SceneElement::new(FacadeClass::Window, 1.0, 3.5, 2.0, 5.0),
                SceneElement::new(FacadeClass::Window, 4.5, 3.5, 5.5, 5.0),
                SceneElement::new(FacadeClass::Door, 4.5, 0.0, 5.6, 2.2),
                SceneElement::new(FacadeClass::Molding, 0.5, 2.8, 9.5, 3.1),
                SceneElement::new(FacadeClass::Drainpipe, 9.3, 0.2, 9.5, 5.8),
            ],
            ..Self::plain_wall(seed)
        }
    }

    pub fn top_height(&self) -> f64 {
        self.ridge_height.unwrap_or(self.eaves_height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub model: BuildingModel,
    pub cloud: LabeledPointCloud,
    pub front_wall_id: String,
    pub elements: Vec<SceneElement>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn generate(spec: &SceneSpec) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (building, front_wall_id) = match spec.ridge_height {
        Some(r) => (
            gable_building(&spec.building_id, spec.width, spec.depth, spec.eaves_height, r, spec.lod),
            format!("{}-wall-front", spec.building_id),
        ),
        None => (
            prism_building(
                &spec.building_id,
                &[[-spec.depth, 0.0], [0.0, 0.0], [0.0, spec.width], [-spec.depth, spec.width]],
                0.0,
                spec.eaves_height,
                spec.lod,
            ),
            format!("{}-wall-1", spec.building_id),
        ),
    };
    let outline = {
        let wall = building.surface(&front_wall_id).expect("front wall exists");
        Polygon2 {
            exterior: wall.geometry.exterior.iter().map(|p| [p.y, p.z]).collect(),
            interiors: Vec::new(),
        }
    };

    let n_origins = ((spec.width / spec.origin_spacing).ceil() as usize).max(1);
    let origins: Vec<Point3> = (0..n_origins)
        .map(|k| Vec3::new(spec.scanner_distance, (k as f64 + 0.5) * spec.origin_spacing, spec.scanner_height))
        .collect();

    let mapping = LabelMapping::default();
    let code_of = |c: FacadeClass| mapping.code_of(c).unwrap_or(99);
    let s = spec.point_spacing;
    let (nu, nv) = ((spec.width / s).ceil() as usize, (spec.top_height() / s).ceil() as usize);
    let mut points = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let u = (i as f64 + rng.gen::<f64>()) * s;
            let v = (j as f64 + rng.gen::<f64>()) * s;
            let noise = gaussian(&mut rng) * spec.noise;
            let relabel: f64 = rng.gen();
            let wrong = rng.gen_range(0..FacadeClass::ALL.len() - 1);
            if u > spec.width || v > spec.top_height() || !point_in_polygon(u, v, &outline) {
                continue;
            }
            let element = spec.elements.iter().find(|e| {
                let r = &e.rect;
                u >= r.u_min && u <= r.u_max && v >= r.v_min && v <= r.v_max
            });
            let (class, offset) = element.map_or((FacadeClass::Wall, 0.0), |e| (e.class, e.surface_offset()));

            let oi = ((u / spec.origin_spacing).floor() as usize).min(n_origins - 1);
            let o = origins[oi];
            let target = Vec3::new(0.0, u, v);
            let dir = target - o;
            // Ray parameter where x reaches the surface offset.
            let mut t = (o.x - offset) / o.x;
            let mut p = o + dir * t;
            if p.z < 0.0 {
                t = o.z / (o.z - target.z).max(1e-12);
                p = o + dir * t;
            }
            let p = p + dir.normalized() * noise;

            let label = if relabel < spec.label_accuracy {
                class
            } else {
                let others: Vec<FacadeClass> = FacadeClass::ALL.into_iter().filter(|c| *c != class).collect();
                others[wrong]
            };
            points.push(LabeledPoint {
                position: p,
                class: label,
                label_code: code_of(label),
                origin_index: oi,
            });
        }
    }

    Scene {
        model: BuildingModel {
            crs_label: "EPSG:25832".into(),
            metadata: [("source".to_string(), "synthetic".to_string())].into(),
            buildings: vec![building],
            extra: Attributes::new(),
        },
        cloud: LabeledPointCloud { points, origins },
        front_wall_id,
        elements: spec.elements.clone(),
    }
}
