//! Per-pixel naive Bayes fusion of conflict, point-cloud and texture
//! evidence, then instance extraction from a small posterior raster.

use lod3_refine::fusion::{extract_instances, fuse, fuse_pixel, Priors, POSTERIOR_CLASSES, WALL};
use lod3_refine::geom::{wall_frame_from_polygon, Rect2};
use lod3_refine::maps::{Channel, ProbabilityMap};
use lod3_refine::{FacadeClass, Point3, PolygonWithHoles};

fn one_hot(c: FacadeClass, p: f64) -> [f64; 12] {
    let k = POSTERIOR_CLASSES.iter().position(|&x| x == c).expect("posterior class");
    let rest = (1.0 - p) / 11.0;
    let mut v = [rest; 12];
    v[k] = p;
    v
}

fn main() {
    let priors = Priors::uniform();
    let window_votes = one_hot(FacadeClass::Window, 0.8);
    for pc in [0.1, 0.5, 0.9] {
        let post = fuse_pixel(pc, &window_votes, None, &priors);
        println!(
            "conflict {pc:.1}, 80 % window votes -> P(window) {:.3}, P(wall) {:.3}",
            post[POSTERIOR_CLASSES.iter().position(|&c| c == FacadeClass::Window).unwrap()],
            post[WALL]
        );
    }
    let flat = [1.0 / 12.0; 12];
    println!("flat likelihood returns priors: {}", fuse_pixel(0.5, &flat, Some(&flat), &priors) == priors.0);

    // 4 × 3 m wall at 0.25 m resolution with a 1 × 1 m window block.
    let wall = PolygonWithHoles::new(vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.0, 4.0, 0.0),
        Point3::new(0.0, 4.0, 3.0),
        Point3::new(0.0, 0.0, 3.0),
    ]);
    let frame = wall_frame_from_polygon(&wall).unwrap();
    let truth = Rect2::new(1.5, 1.0, 2.5, 2.0).unwrap();
    let mut conflict = ProbabilityMap::new(frame, 0.25, vec![Channel::Conflict], 0.3).unwrap();
    let classes = POSTERIOR_CLASSES.iter().map(|&c| Channel::Class(c)).collect();
    let mut votes = ProbabilityMap::new(frame, 0.25, classes, 0.0).unwrap();
    for j in 0..conflict.height {
        for i in 0..conflict.width {
            let (u, v) = conflict.pixel_center(i, j);
            let inside = u > truth.u_min && u < truth.u_max && v > truth.v_min && v < truth.v_max;
            let o = conflict.offset(i, j);
            conflict.values[o] = if inside { 0.9 } else { 0.3 };
            let vo = votes.offset(i, j);
            let class = if inside { FacadeClass::Window } else { FacadeClass::Wall };
            votes.values[vo..vo + 12].copy_from_slice(&one_hot(class, 0.9));
        }
    }
    let post = fuse(&conflict, &votes, None, &priors).unwrap();
    for inst in extract_instances(&post, 0.5, 0.1, "demo-wall") {
        println!(
            "{} at {:?}, confidence {:.3}, IoU with truth {:.3}",
            inst.class,
            inst.rect,
            inst.confidence,
            inst.rect.iou(&truth)
        );
    }
}
