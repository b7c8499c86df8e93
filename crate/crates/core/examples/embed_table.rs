//! The facade class to CityGML mapping and embedding of one window and one
//! balcony into a LoD2 model.

use lod3_refine::embed::{class_to_citygml, embed_installation, embed_opening, is_refinable};
use lod3_refine::fusion::OpeningInstance;
use lod3_refine::geom::{wall_frame_from_polygon, Rect2};
use lod3_refine::model::BuildingModel;
use lod3_refine::reconstruct::{build_installation_geometry, builtin_library, fit_object};
use lod3_refine::synthetic::box_building;
use lod3_refine::{FacadeClass, Point3};

fn main() {
    println!("{:<14} {:<21} {:<6} {:<18} refinable", "class", "CityGML", "LoDs", "function");
    for c in FacadeClass::ALL {
        match class_to_citygml(c) {
            Ok(row) => println!(
                "{:<14} {:<21} {:<6} {:<18} {}",
                c.name(),
                row.citygml_class,
                format!("{:?}", row.lods),
                row.function_code.map(|f| if row.proposed { format!("{f} *") } else { f.to_string() }).unwrap_or_default(),
                is_refinable(c)
            ),
            Err(e) => println!("{:<14} {e}", c.name()),
        }
    }
    println!("(* proposed code-list extension)");

    let model = BuildingModel {
        buildings: vec![box_building("B", Point3::new(-8.0, 0.0, 0.0), Point3::new(0.0, 10.0, 6.0), 2)],
        ..Default::default()
    };
    let wall = model.buildings[0].walls().next().unwrap();
    let frame = wall_frame_from_polygon(&wall.geometry).unwrap();
    let lib = builtin_library();
    let inst = |class, r: [f64; 4]| OpeningInstance {
        class,
        rect: Rect2::new(r[0], r[1], r[2], r[3]).unwrap(),
        confidence: 0.87,
        pixel_count: 0,
        wall_id: wall.id.clone(),
    };
    let window = inst(FacadeClass::Window, [1.0, 1.0, 2.0, 2.5]);
    let placed = fit_object(&window, lib.get(FacadeClass::Window).unwrap(), &frame, -0.15).unwrap();
    let ts = "2026-03-01T10:00:00Z";
    let m = embed_opening(&model, &wall.id, &placed, ts).unwrap();
    let balcony = inst(FacadeClass::Balcony, [4.0, 3.0, 6.0, 3.2]);
    let placed = build_installation_geometry(&balcony, lib.get(FacadeClass::Balcony).unwrap(), &frame, 1.2).unwrap();
    let m = embed_installation(&m, &wall.id, &placed, ts).unwrap();

    let b = &m.buildings[0];
    println!("building lod {} (prior {})", b.lod, b.attributes["prior_lod"]);
    for o in &b.openings {
        println!("opening {} in {} confidence {}", o.id, o.parent_wall_id, o.confidence);
    }
    for i in &b.installations {
        println!("installation {} function {:?}", i.id, i.function_code);
    }
}
