//! Voxel traversal of single rays and occupancy counting for a scan.

use lod3_refine::synthetic::{generate, SceneSpec};
use lod3_refine::visibility::{build_grid, cast_all, traverse_ray, voxel_state, VoxelGrid, VoxelState};
use lod3_refine::Point3;

fn main() {
    let grid = VoxelGrid::new(Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 4.0, 4.0), 1.0).expect("grid");
    let ray = traverse_ray(&grid, Point3::new(0.5, 0.5, 0.5), Point3::new(3.5, 2.2, 0.9));
    println!("traversed {:?}", ray.voxels);
    println!("ends inside the grid: {}", ray.terminal);

    let scene = generate(&SceneSpec::two_windows(1));
    let grid = build_grid(&scene.cloud, &scene.model, 0.1, 0.5).expect("grid");
    println!("scene grid {:?} = {} voxels", grid.dims, grid.len());
    for jobs in [1, 4] {
        let t = std::time::Instant::now();
        let occ = cast_all(&grid, &scene.cloud, jobs).expect("cast");
        let states = voxel_state(&occ);
        let count = |s| states.iter().filter(|&&x| x == s).count();
        println!(
            "jobs {jobs}: {:.2?}, empty {} occupied {} unknown {}",
            t.elapsed(),
            count(VoxelState::Empty),
            count(VoxelState::Occupied),
            count(VoxelState::Unknown)
        );
    }
}
