//! Wall frames, point-in-polygon and rectangle hole cutting on one wall.

use lod3_refine::geom::{cut_rectangle_hole, wall_frame_from_polygon};
use lod3_refine::{Point3, PolygonWithHoles, Rect2};

fn main() {
    // 10 × 6 m wall facing +x.
    let wall = PolygonWithHoles::new(vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.0, 10.0, 0.0),
        Point3::new(0.0, 10.0, 6.0),
        Point3::new(0.0, 0.0, 6.0),
    ]);
    let frame = wall_frame_from_polygon(&wall).expect("planar wall");
    println!("normal {:?}", frame.normal);
    println!("u axis {:?}  v axis {:?}", frame.u_axis, frame.v_axis);
    println!("extent {:.2} × {:.2} m", frame.u_extent, frame.v_extent);

    let corner = Point3::new(0.0, 10.0, 6.0);
    let [u, v, w] = frame.to_frame(corner);
    println!("{corner:?} -> (u, v, w) = ({u:.3}, {v:.3}, {w:.3})");
    println!("back: {:?}", frame.from_frame(u, v, w));

    let outline = frame.project_polygon(&wall);
    for (u, v) in [(5.0, 3.0), (10.0, 6.0), (11.0, 3.0)] {
        println!("({u}, {v}) inside outline: {}", outline.contains(u, v));
    }

    let window = Rect2::new(2.0, 1.0, 3.0, 2.5).expect("valid rect");
    let cut = cut_rectangle_hole(&wall, window, &frame).expect("hole fits");
    println!(
        "after cut: {} interior ring(s), area {:.3} m², planarity residual {:.1e} m",
        cut.interiors.len(),
        cut.area(),
        cut.planarity_residual()
    );
    let overlapping = Rect2::new(2.5, 2.0, 3.5, 3.0).expect("valid rect");
    println!("second overlapping cut: {:?}", cut_rectangle_hole(&cut, overlapping, &frame).err());
}
