//! Temporary diagnostic: dump rendered camera images and fused-map stats.

use bevmos_synth::{generate, Condition, SceneSpec};

fn save_image(t: &bevmos_tensor::Tensor, path: &str) {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let v = t.to_vec();
    let mut rgb = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                rgb[(y * w + x) * 3 + c] = (v[(c * h + y) * w + x].clamp(0.0, 1.0) * 255.0) as u8;
            }
        }
    }
    let f = std::fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(f), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(&rgb).unwrap();
}

#[test]
#[ignore]
fn dump_camera_images() {
    let spec = SceneSpec {
        seed: 7,
        num_frames: 3,
        num_boxes: 12,
        moving_fraction: 1.0,
        ego_speed_mps: 4.0,
        condition: Condition::Day,
        num_cams: 2,
        image_size: (96, 192),
        lidar_points_per_box: 6,
        radar_points_per_box: 2,
        ground_points_per_sweep: 60,
    };
    let scene = generate(&spec).unwrap();
    for (k, frame) in scene.frames.iter().enumerate() {
        for (c, img) in frame.cameras.images.iter().enumerate() {
            save_image(img, &format!("/tmp/bev/img_f{k}_c{c}.png"));
        }
        let n_near = frame
            .boxes
            .iter()
            .filter(|b| (b.center[0].powi(2) + b.center[2].powi(2)).sqrt() < 30.0)
            .count();
        println!("frame {k}: {} boxes, {} within 30m", frame.boxes.len(), n_near);
    }
}
