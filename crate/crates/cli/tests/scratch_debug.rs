//! Temporary diagnostic: does warp_bev align static lidar occupancy across
//! consecutive synthetic frames?

use bevmos_model::encoders::voxelize_lidar;
use bevmos_model::geometry::{warp_bev, BevGrid};
use bevmos_synth::{generate, Condition, SceneSpec};

#[test]
#[ignore]
fn warp_alignment_on_static_scene() {
    let spec = SceneSpec {
        seed: 42,
        num_frames: 4,
        num_boxes: 10,
        moving_fraction: 0.0, // everything static
        ego_speed_mps: 4.0,
        condition: Condition::Day,
        num_cams: 2,
        image_size: (32, 64),
        lidar_points_per_box: 8,
        radar_points_per_box: 0,
        ground_points_per_sweep: 0, // boxes only, no ground clutter
    };
    let scene = generate(&spec).unwrap();
    let grid = BevGrid::new((-50.0, 50.0), (-1.5, 8.5), (-50.0, 50.0), 32, 2, 32).unwrap();

    for k in 1..scene.frames.len() {
        let prev = &scene.frames[k - 1];
        let curr = &scene.frames[k];
        let occ_prev = voxelize_lidar(&prev.lidar[..1], &grid).unwrap();
        let occ_curr = voxelize_lidar(&curr.lidar[..1], &grid).unwrap();
        let warped = warp_bev(&occ_prev, &prev.ego, &curr.ego, &grid).unwrap();

        let wv = warped.to_vec();
        let cv = occ_curr.to_vec();
        let pv = occ_prev.to_vec();
        let curr_occ: Vec<usize> = cv.iter().enumerate().filter(|(_, v)| **v > 0.5).map(|(i, _)| i).collect();
        let warp_hit = curr_occ.iter().filter(|&&i| wv[i] > 0.3).count();
        let raw_hit = curr_occ.iter().filter(|&&i| pv[i] > 0.5).count();
        println!(
            "frame {k}: {} occupied cells, warped-prev hits {} ({:.0}%), unwarped-prev hits {} ({:.0}%)",
            curr_occ.len(),
            warp_hit,
            100.0 * warp_hit as f64 / curr_occ.len() as f64,
            raw_hit,
            100.0 * raw_hit as f64 / curr_occ.len() as f64,
        );
    }
}
