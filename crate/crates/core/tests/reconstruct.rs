use std::collections::HashMap;

use proptest::prelude::*;

use lod3_refine::fusion::OpeningInstance;
use lod3_refine::geom::wall_frame_from_polygon;
use lod3_refine::model::{Surface, SurfaceKind};
use lod3_refine::reconstruct::{
    build_installation_geometry, builtin_library, cut_openings, fit_object, load_library, ReconstructError,
};
use lod3_refine::{FacadeClass, Point3, PolygonWithHoles, Rect2, WallFrame};

fn wall(w: f64, h: f64, yaw: f64, t: [f64; 3]) -> Surface {
    let (s, c) = yaw.sin_cos();
    let p = |a: f64, z: f64| Point3::new(t[0] + a * c, t[1] + a * s, t[2] + z);
    Surface {
        id: "W".into(),
        kind: SurfaceKind::WallSurface,
        geometry: PolygonWithHoles::new(vec![p(0.0, 0.0), p(w, 0.0), p(w, h), p(0.0, h)]),
        attributes: Default::default(),
        extra: Default::default(),
    }
}

fn inst(class: FacadeClass, r: [f64; 4], confidence: f64) -> OpeningInstance {
    OpeningInstance {
        class,
        rect: Rect2::new(r[0], r[1], r[2], r[3]).unwrap(),
        confidence,
        pixel_count: 1,
        wall_id: "W".into(),
    }
}

type Key = (u64, u64, u64);

fn key(p: &Point3) -> Key {
    (p.x.to_bits(), p.y.to_bits(), p.z.to_bits())
}

fn edge(a: &Point3, b: &Point3) -> (Key, Key) {
    let (x, y) = (key(a), key(b));
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Rim edges of the placed object (both ends on the wall plane).
fn rim_edges(faces: &[PolygonWithHoles], frame: &WallFrame) -> HashMap<(Key, Key), usize> {
    let mut m = HashMap::new();
    for f in faces {
        let r = &f.exterior;
        for k in 0..r.len() {
            let (a, b) = (&r[k], &r[(k + 1) % r.len()]);
            if frame.to_frame(*a)[2].abs() < 1e-9 && frame.to_frame(*b)[2].abs() < 1e-9 {
                *m.entry(edge(a, b)).or_insert(0) += 1;
            }
        }
    }
    m
}

#[test]
fn balcony_does_not_cut_the_wall() {
    let w = wall(10.0, 6.0, 0.0, [0.0; 3]);
    let f = wall_frame_from_polygon(&w.geometry).unwrap();
    let out = cut_openings(&w, &[inst(FacadeClass::Balcony, [2.0, 3.0, 5.0, 3.2], 0.9)], &f, 0.02);
    assert_eq!(out.surface, w);
    assert!(out.cuts.is_empty() && out.skipped.is_empty());
}

#[test]
fn overlapping_windows_merge_into_one_hole() {
    let w = wall(10.0, 6.0, 0.7, [3.0, -4.0, 1.0]);
    let f = wall_frame_from_polygon(&w.geometry).unwrap();
    let a = inst(FacadeClass::Window, [2.0, 1.0, 3.0, 2.5], 0.9);
    let b = inst(FacadeClass::Window, [2.6, 2.0, 3.5, 3.0], 0.6);
    let out = cut_openings(&w, &[a.clone(), b.clone()], &f, 0.02);
    assert_eq!(out.cuts.len(), 1);
    assert_eq!(out.cuts[0].members, vec![0, 1]);
    let merged = Rect2::new(2.0, 1.0, 3.5, 3.0).unwrap();
    assert_eq!(out.cuts[0].rect, merged);
    assert_eq!(out.surface.geometry.interiors.len(), 1);
    assert!((out.surface.geometry.area() - (60.0 - merged.area())).abs() < 1e-9);
    // Area-weighted confidence.
    let want = (1.5 * 0.9 + 0.9 * 0.6) / (1.5 + 0.9);
    assert!((out.cuts[0].confidence - want).abs() < 1e-12);
    assert_eq!(out.surface.id, w.id);
    assert_eq!(out.surface.geometry.exterior, w.geometry.exterior);
}

#[test]
fn class_mismatch_is_an_error() {
    let w = wall(10.0, 6.0, 0.0, [0.0; 3]);
    let f = wall_frame_from_polygon(&w.geometry).unwrap();
    let lib = builtin_library();
    let i = inst(FacadeClass::Door, [1.0, 1.0, 2.0, 3.0], 0.5);
    assert!(matches!(
        fit_object(&i, lib.get(FacadeClass::Window).unwrap(), &f, -0.15),
        Err(ReconstructError::ClassMismatch { .. })
    ));
    assert!(build_installation_geometry(&i, lib.get(FacadeClass::Door).unwrap(), &f, 0.3).is_err());
}

#[test]
fn library_must_name_valid_junctions() {
    let bad = r#"[{"class": "Window", "faces": [[[0,0,0],[1,0,0],[1,1,0]]], "junction_indices": [0, 1, 2, 9], "default_depth": 0.1}]"#;
    assert!(load_library(bad).is_err());
    let lib = builtin_library();
    for c in FacadeClass::ALL.iter().filter(|c| c.is_opening() || c.is_installation()) {
        assert_eq!(lib.get(*c).unwrap().junction_points().len(), 4, "{c}");
    }
}

fn corners_in_rect(w: f64, h: f64, a: f64, b: f64, c: f64, d: f64) -> Rect2 {
    let (u0, u1) = (a.min(b), a.max(b));
    let (v0, v1) = (c.min(d), c.max(d));
    Rect2::new(u0 * w, v0 * h, u1 * w, v1 * h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn openings_meet_their_holes_exactly(
        w in 2.0f64..30.0, h in 2.0f64..15.0, yaw in -3.1f64..3.1,
        t in proptest::array::uniform3(-1e5f64..1e5),
        a in 0.01f64..0.99, b in 0.01f64..0.99, c in 0.01f64..0.99, d in 0.01f64..0.99,
        class in prop_oneof![Just(FacadeClass::Window), Just(FacadeClass::Door), Just(FacadeClass::Underpass)],
        depth in 0.05f64..0.5,
    ) {
        prop_assume!((a - b).abs() > 0.01 && (c - d).abs() > 0.01);
        let wl = wall(w, h, yaw, t);
        let f = wall_frame_from_polygon(&wl.geometry).unwrap();
        let r = corners_in_rect(w, h, a, b, c, d);
        let out = cut_openings(&wl, &[inst(class, [r.u_min, r.v_min, r.u_max, r.v_max], 0.8)], &f, 0.0);
        prop_assert_eq!(out.cuts.len(), 1);
        let hole = &out.surface.geometry.interiors[0];
        let placed = fit_object(&out.cuts[0].as_instance("W", 1), builtin_library().get(class).unwrap(), &f, -depth).unwrap();

        // Junction points coincide with the hole corners.
        prop_assert_eq!(placed.junction_points.len(), 4);
        for j in &placed.junction_points {
            let best = hole.iter().map(|p| p.distance(*j)).fold(f64::INFINITY, f64::min);
            prop_assert!(best < 1e-9, "junction {:?} is {} from the hole", j, best);
        }
        // Each hole edge is closed by exactly one rim edge of the object.
        let rim = rim_edges(&placed.faces, &f);
        prop_assert_eq!(rim.len(), 4);
        for k in 0..4 {
            let e = edge(&hole[k], &hole[(k + 1) % 4]);
            prop_assert_eq!(rim.get(&e).copied(), Some(1));
        }
        // Recessed behind the wall, axis aligned in the frame.
        for face in &placed.faces {
            for p in &face.exterior {
                let [u, v, wv] = f.to_frame(*p);
                prop_assert!(wv <= 1e-9 && wv >= -depth - 1e-9);
                prop_assert!(u >= r.u_min - 1e-9 && u <= r.u_max + 1e-9);
                prop_assert!(v >= r.v_min - 1e-9 && v <= r.v_max + 1e-9);
            }
            prop_assert!(face.planarity_residual() < 1e-6);
        }
        prop_assert!(out.surface.geometry.planarity_residual() < 1e-6);
    }

    #[test]
    fn installations_protrude_outwards(
        yaw in -3.1f64..3.1, a in 0.01f64..0.99, b in 0.01f64..0.99, c in 0.01f64..0.99, d in 0.01f64..0.99,
        depth in 0.01f64..2.0, k in 0usize..8,
    ) {
        prop_assume!((a - b).abs() > 0.01 && (c - d).abs() > 0.01);
        let class = FacadeClass::INSTALLATIONS[k];
        let wl = wall(10.0, 6.0, yaw, [0.0; 3]);
        let f = wall_frame_from_polygon(&wl.geometry).unwrap();
        let r = corners_in_rect(10.0, 6.0, a, b, c, d);
        let i = inst(class, [r.u_min, r.v_min, r.u_max, r.v_max], 0.7);
        let placed = build_installation_geometry(&i, builtin_library().get(class).unwrap(), &f, -depth).unwrap();
        let mut max_w: f64 = 0.0;
        for p in placed.faces.iter().flat_map(|f| &f.exterior) {
            let wv = f.to_frame(*p)[2];
            prop_assert!(wv >= -1e-9);
            max_w = max_w.max(wv);
        }
        prop_assert!((max_w - depth).abs() < 1e-9);
    }
}
