//! Read a `.cm.json` model, validate it, write it back and export CityGML.
//!
//! ```text
//! cargo run --example model_roundtrip [-- path/to/model.cm.json]
//! ```

use lod3_refine::model::{export_citygml, parse_model, serialize_model, validate_model, BuildingModel};
use lod3_refine::synthetic::gable_building;

fn main() {
    let bytes = match std::env::args().nth(1) {
        Some(p) => std::fs::read(&p).unwrap_or_else(|e| panic!("{p}: {e}")),
        None => {
            let m = BuildingModel {
                crs_label: "EPSG:25832".into(),
                buildings: vec![gable_building("house", 10.0, 8.0, 6.0, 9.0, 2)],
                ..Default::default()
            };
            serialize_model(&m)
        }
    };
    let model = parse_model(&bytes).expect("model parses");
    for b in &model.buildings {
        println!("building {} lod {} with {} surfaces", b.id, b.lod, b.surfaces.len());
        for s in &b.surfaces {
            println!("  {:<20} {:<14} area {:7.3}", s.id, s.kind.name(), s.geometry.area());
        }
    }
    let report = validate_model(&model);
    println!("validation findings: {}", report.count());

    let again = serialize_model(&model);
    println!("re-serialized identical: {}", again == bytes);
    let reparsed = parse_model(&again).expect("own output parses");
    println!("parse∘serialize identity: {}", reparsed == model);

    let gml = export_citygml(&model).expect("citygml");
    let text = String::from_utf8(gml).expect("utf-8");
    println!("CityGML: {} bytes, first lines:", text.len());
    for line in text.lines().take(6) {
        println!("  {line}");
    }
}
