//! Conflict and point-label maps of a scanned wall, exported as PGM.
//!
//! ```text
//! cargo run --example probability_maps [-- out_dir]
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use lod3_refine::maps::{export_map_pgm, masked_mean, Channel};
use lod3_refine::pipeline::compute_maps;
use lod3_refine::synthetic::{generate, SceneSpec};
use lod3_refine::RunConfig;

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/maps".into()));
    std::fs::create_dir_all(&out).expect("output directory");
    let scene = generate(&SceneSpec::two_windows(3));
    let maps = compute_maps(&scene.model, &scene.cloud, &BTreeMap::new(), &RunConfig::default()).expect("maps");

    let front = maps.walls.iter().find(|w| w.wall_id == scene.front_wall_id).expect("front wall");
    let conflict = front.conflict.channel_plane(Channel::Conflict).expect("conflict");
    let in_window: Vec<bool> = (0..front.conflict.pixel_count())
        .map(|k| {
            let (u, v) = front.conflict.pixel_center(k % front.conflict.width, k / front.conflict.width);
            scene.elements.iter().any(|e| {
                u > e.rect.u_min && u < e.rect.u_max && v > e.rect.v_min && v < e.rect.v_max
            })
        })
        .collect();
    let outside: Vec<bool> = in_window.iter().map(|b| !b).collect();
    println!(
        "{}: {}×{} px, mean conflict in windows {:.3}, elsewhere {:.3}",
        front.wall_id,
        front.conflict.width,
        front.conflict.height,
        masked_mean(&conflict, &in_window).unwrap_or(f64::NAN),
        masked_mean(&conflict, &outside).unwrap_or(f64::NAN),
    );

    for w in &maps.walls {
        for (name, map, ch) in [
            ("conflict", &w.conflict, Channel::Conflict),
            ("pointcloud", &w.point_labels, Channel::Openings),
            ("posterior", &w.posterior, Channel::Openings),
        ] {
            let path = out.join(format!("{}_{name}.pgm", w.wall_id));
            std::fs::write(&path, export_map_pgm(map, ch).expect("pgm")).expect("write");
        }
    }
    println!("wrote {} PGM files to {}", 3 * maps.walls.len(), out.display());
}
