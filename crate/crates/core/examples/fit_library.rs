//! Cut openings into a wall and fit library objects to them.

use lod3_refine::fusion::OpeningInstance;
use lod3_refine::geom::{wall_frame_from_polygon, Rect2};
use lod3_refine::model::{Surface, SurfaceKind};
use lod3_refine::reconstruct::{builtin_library, cut_openings, fit_object};
use lod3_refine::{FacadeClass, Point3, PolygonWithHoles};

fn instance(class: FacadeClass, r: [f64; 4], confidence: f64) -> OpeningInstance {
    OpeningInstance {
        class,
        rect: Rect2::new(r[0], r[1], r[2], r[3]).unwrap(),
        confidence,
        pixel_count: 0,
        wall_id: "w".into(),
    }
}

fn main() {
    let wall = Surface {
        id: "w".into(),
        kind: SurfaceKind::WallSurface,
        geometry: PolygonWithHoles::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 10.0, 0.0),
            Point3::new(0.0, 10.0, 6.0),
            Point3::new(0.0, 0.0, 6.0),
        ]),
        attributes: Default::default(),
        extra: Default::default(),
    };
    let frame = wall_frame_from_polygon(&wall.geometry).unwrap();
    let instances = vec![
        instance(FacadeClass::Window, [2.0, 1.0, 3.0, 2.5], 0.9),
        // Touches the first window and is merged into it.
        instance(FacadeClass::Window, [3.0, 1.0, 3.8, 2.5], 0.7),
        instance(FacadeClass::Door, [5.0, 0.0, 6.1, 2.2], 0.8),
        // Overhangs the wall edge and is clamped to the cut margin.
        instance(FacadeClass::Window, [9.5, 4.0, 10.5, 5.0], 0.6),
        // Lies beyond the wall and is skipped.
        instance(FacadeClass::Door, [11.0, 0.0, 12.0, 2.0], 0.6),
    ];
    let outcome = cut_openings(&wall, &instances, &frame, 0.02);
    println!("{} cuts, {} skipped", outcome.cuts.len(), outcome.skipped.len());
    for s in &outcome.skipped {
        println!("  skipped {}: {}", s.index, s.reason);
    }

    let library = builtin_library();
    for cut in &outcome.cuts {
        let inst = cut.as_instance("w", 0);
        let placed = fit_object(&inst, library.get(inst.class).unwrap(), &frame, -0.15).unwrap();
        println!(
            "{} from instances {:?}: rect {:?}, {} faces, confidence {:.2}",
            cut.class,
            cut.members,
            cut.rect,
            placed.faces.len(),
            placed.confidence
        );
        for (k, p) in placed.junction_points.iter().enumerate() {
            println!("  junction {k}: {p:?}");
        }
    }
    println!(
        "wall now has {} holes, planarity residual {:.1e} m",
        outcome.surface.geometry.interiors.len(),
        outcome.surface.geometry.planarity_residual()
    );
}
