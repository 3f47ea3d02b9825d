//! On-disk dataset: a text manifest plus one binary tensor blob per frame.
//!
//! Manifest (`manifest.txt`): `key = value` header lines, then one `frame`
//! line per frame carrying its scene id, condition, timestamp, and blob
//! path. Blobs use the BMOS record container (see bevmos-tensor) with the
//! record names documented in the README.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bevmos_model::encoders::{CameraBundle, LidarSweep, RadarSweep, RADAR_ATTRIBUTES};
use bevmos_model::geometry::{CameraCalib, EgoPose, RigidTransform};
use bevmos_model::metrics::ObstacleBox;
use bevmos_tensor::{read_records, write_records, Record, Tensor};

use crate::{Condition, Result, Scene, SceneFrame, SynthError};

pub const DATASET_VERSION: u32 = 1;

/// Loaded dataset: frames plus the scene id of each frame (pairs must not
/// cross scene boundaries).
pub struct Dataset {
    pub frames: Vec<SceneFrame>,
    pub scene_of: Vec<usize>,
}

impl Dataset {
    /// Consecutive (prev, curr) frame index pairs within each scene.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..self.frames.len() {
            if self.scene_of[i] == self.scene_of[i - 1] {
                out.push((i - 1, i));
            }
        }
        out
    }
}

fn dataset_err(context: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::Dataset {
        context: context.into(),
        message: message.into(),
    }
}

pub fn write_dataset(dir: &Path, scenes: &[Scene]) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;

    let total: usize = scenes.iter().map(|s| s.frames.len()).sum();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "bevmos-dataset-version = {DATASET_VERSION}");
    let _ = writeln!(manifest, "frames = {total}");
    let _ = writeln!(manifest, "scenes = {}", scenes.len());

    let mut index = 0usize;
    for (scene_id, scene) in scenes.iter().enumerate() {
        for frame in &scene.frames {
            let file = format!("frames/frame_{index:06}.bmos");
            let _ = writeln!(
                manifest,
                "frame idx={index} scene={scene_id} condition={} time_us={} file={file}",
                frame.condition.label(),
                frame.ego.timestamp_us
            );
            write_frame_blob(&dir.join(&file), frame)?;
            index += 1;
        }
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn tensor_record(name: &str, t: &Tensor) -> (String, Vec<usize>, Vec<f64>) {
    (name.to_string(), t.shape().to_vec(), t.to_vec())
}

fn mat3_record(name: &str, m: &[[f64; 3]; 3]) -> (String, Vec<usize>, Vec<f64>) {
    (
        name.to_string(),
        vec![3, 3],
        m.iter().flatten().copied().collect(),
    )
}

fn write_frame_blob(path: &Path, frame: &SceneFrame) -> Result<()> {
    let mut records: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    records.push((
        "meta".into(),
        vec![4],
        vec![
            frame.cameras.images.len() as f64,
            frame.lidar.len() as f64,
            frame.radar.len() as f64,
            frame.boxes.len() as f64,
        ],
    ));
    records.push((
        "noise_seed".into(),
        vec![2],
        vec![
            (frame.noise_seed >> 32) as f64,
            (frame.noise_seed & 0xffff_ffff) as f64,
        ],
    ));
    records.push(mat3_record("ego.rotation", &frame.ego.world_to_ref.rotation));
    records.push((
        "ego.translation".into(),
        vec![3],
        frame.ego.world_to_ref.translation.to_vec(),
    ));
    records.push((
        "ego.time_us".into(),
        vec![1],
        vec![frame.ego.timestamp_us as f64],
    ));

    for (i, (img, calib)) in frame
        .cameras
        .images
        .iter()
        .zip(frame.cameras.calibs.iter())
        .enumerate()
    {
        records.push(tensor_record(&format!("cam{i}.image"), img));
        records.push((
            format!("cam{i}.intrinsics"),
            vec![4],
            vec![calib.fx, calib.fy, calib.cx, calib.cy],
        ));
        records.push(mat3_record(&format!("cam{i}.rotation"), &calib.extrinsic.rotation));
        records.push((
            format!("cam{i}.translation"),
            vec![3],
            calib.extrinsic.translation.to_vec(),
        ));
        records.push((
            format!("cam{i}.size"),
            vec![2],
            vec![calib.height as f64, calib.width as f64],
        ));
    }
    for (s, sweep) in frame.lidar.iter().enumerate() {
        records.push(tensor_record(&format!("lidar{s}.points"), &sweep.points));
    }
    for (s, sweep) in frame.radar.iter().enumerate() {
        records.push(tensor_record(&format!("radar{s}.points"), &sweep.points));
    }

    let mut boxes = Vec::with_capacity(frame.boxes.len() * 10);
    for b in &frame.boxes {
        boxes.extend_from_slice(&[
            b.center[0],
            b.center[1],
            b.center[2],
            b.yaw,
            b.length,
            b.width,
            b.height,
            if b.moving { 1.0 } else { 0.0 },
            b.velocity[0],
            b.velocity[1],
        ]);
    }
    records.push(("boxes".into(), vec![frame.boxes.len(), 10], boxes));

    write_records(path, &records)?;
    Ok(())
}

struct FrameRecords {
    context: String,
    records: Vec<Record>,
}

impl FrameRecords {
    fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| dataset_err(&self.context, format!("missing record `{name}`")))
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        let r = self.get(name)?;
        if r.data.len() != 1 {
            return Err(dataset_err(
                &self.context,
                format!("record `{name}` is not a scalar"),
            ));
        }
        Ok(r.data[0])
    }

    fn fixed(&self, name: &str, len: usize) -> Result<&[f64]> {
        let r = self.get(name)?;
        if r.data.len() != len {
            return Err(dataset_err(
                &self.context,
                format!("record `{name}` has {} values, expected {len}", r.data.len()),
            ));
        }
        Ok(&r.data)
    }

    fn mat3(&self, name: &str) -> Result<[[f64; 3]; 3]> {
        let d = self.fixed(name, 9)?;
        Ok([
            [d[0], d[1], d[2]],
            [d[3], d[4], d[5]],
            [d[6], d[7], d[8]],
        ])
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let r = self.get(name)?;
        Tensor::from_vec(&r.shape, r.data.clone())
            .map_err(|e| dataset_err(&self.context, format!("record `{name}`: {e}")))
    }
}

fn read_frame_blob(path: &Path, context: &str, condition: Condition) -> Result<SceneFrame> {
    let records = read_records(path).map_err(|e| dataset_err(context, e.to_string()))?;
    let fr = FrameRecords {
        context: context.to_string(),
        records,
    };
    let meta = fr.fixed("meta", 4)?;
    let (n_cams, n_lidar, n_radar, n_boxes) =
        (meta[0] as usize, meta[1] as usize, meta[2] as usize, meta[3] as usize);

    let seed_parts = fr.fixed("noise_seed", 2)?;
    let noise_seed = ((seed_parts[0] as u64) << 32) | (seed_parts[1] as u64);

    let ego = EgoPose::new(
        RigidTransform {
            rotation: fr.mat3("ego.rotation")?,
            translation: {
                let t = fr.fixed("ego.translation", 3)?;
                [t[0], t[1], t[2]]
            },
        },
        fr.scalar("ego.time_us")? as i64,
    )
    .map_err(|e| dataset_err(context, format!("ego pose: {e}")))?;

    let mut images = Vec::with_capacity(n_cams);
    let mut calibs = Vec::with_capacity(n_cams);
    for i in 0..n_cams {
        let img = fr.tensor(&format!("cam{i}.image"))?;
        let intr = fr.fixed(&format!("cam{i}.intrinsics"), 4)?.to_vec();
        let rotation = fr.mat3(&format!("cam{i}.rotation"))?;
        let trans = fr.fixed(&format!("cam{i}.translation"), 3)?.to_vec();
        let size = fr.fixed(&format!("cam{i}.size"), 2)?.to_vec();
        let calib = CameraCalib::new(
            intr[0],
            intr[1],
            intr[2],
            intr[3],
            RigidTransform {
                rotation,
                translation: [trans[0], trans[1], trans[2]],
            },
            size[1] as usize,
            size[0] as usize,
        )
        .map_err(|e| dataset_err(context, format!("cam{i} calib: {e}")))?;
        images.push(img);
        calibs.push(calib);
    }

    let mut lidar = Vec::with_capacity(n_lidar);
    for s in 0..n_lidar {
        let points = fr.tensor(&format!("lidar{s}.points"))?;
        if points.shape().len() != 2 || points.shape()[1] != 3 {
            return Err(dataset_err(
                context,
                format!("lidar{s}.points has shape {:?}", points.shape()),
            ));
        }
        lidar.push(LidarSweep {
            points,
            sweep_index: s,
        });
    }
    let mut radar = Vec::with_capacity(n_radar);
    for s in 0..n_radar {
        let points = fr.tensor(&format!("radar{s}.points"))?;
        if points.shape().len() != 2 || points.shape()[1] != RADAR_ATTRIBUTES {
            return Err(dataset_err(
                context,
                format!("radar{s}.points has shape {:?}", points.shape()),
            ));
        }
        radar.push(RadarSweep {
            points,
            sweep_index: s,
        });
    }

    let boxes_rec = fr.get("boxes")?;
    if boxes_rec.shape != vec![n_boxes, 10] {
        return Err(dataset_err(
            context,
            format!("boxes record has shape {:?}, expected [{n_boxes}, 10]", boxes_rec.shape),
        ));
    }
    let boxes: Vec<ObstacleBox> = boxes_rec
        .data
        .chunks_exact(10)
        .map(|d| ObstacleBox {
            center: [d[0], d[1], d[2]],
            yaw: d[3],
            length: d[4],
            width: d[5],
            height: d[6],
            moving: d[7] != 0.0,
            velocity: [d[8], d[9]],
        })
        .collect();

    Ok(SceneFrame {
        cameras: CameraBundle::new(images, calibs)
            .map_err(|e| dataset_err(context, format!("cameras: {e}")))?,
        lidar,
        radar,
        ego,
        boxes,
        condition,
        noise_seed,
    })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.txt");
    let manifest = std::fs::read_to_string(&manifest_path)
        .map_err(|e| dataset_err("manifest.txt", e.to_string()))?;

    let mut declared_frames: Option<usize> = None;
    let mut entries: Vec<(usize, usize, Condition, PathBuf)> = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("frame ") {
            let mut idx = None;
            let mut scene = None;
            let mut condition = None;
            let mut file = None;
            for part in rest.split_whitespace() {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    dataset_err("manifest.txt", format!("line {}: bad token `{part}`", lineno + 1))
                })?;
                match k {
                    "idx" => idx = v.parse::<usize>().ok(),
                    "scene" => scene = v.parse::<usize>().ok(),
                    "condition" => condition = Condition::parse(v).ok(),
                    "file" => file = Some(PathBuf::from(v)),
                    "time_us" => {}
                    other => {
                        return Err(dataset_err(
                            "manifest.txt",
                            format!("line {}: unknown key `{other}`", lineno + 1),
                        ))
                    }
                }
            }
            match (idx, scene, condition, file) {
                (Some(i), Some(s), Some(c), Some(f)) => entries.push((i, s, c, f)),
                _ => {
                    return Err(dataset_err(
                        "manifest.txt",
                        format!("line {}: incomplete frame entry", lineno + 1),
                    ))
                }
            }
        } else if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "bevmos-dataset-version" => {
                    let ver: u32 = v.trim().parse().map_err(|_| {
                        dataset_err("manifest.txt", format!("bad version `{}`", v.trim()))
                    })?;
                    if ver != DATASET_VERSION {
                        return Err(dataset_err(
                            "manifest.txt",
                            format!("unsupported dataset version {ver}"),
                        ));
                    }
                }
                "frames" => declared_frames = v.trim().parse().ok(),
                "scenes" => {}
                other => {
                    return Err(dataset_err(
                        "manifest.txt",
                        format!("unknown header key `{other}`"),
                    ))
                }
            }
        } else {
            return Err(dataset_err(
                "manifest.txt",
                format!("line {}: unparseable", lineno + 1),
            ));
        }
    }

    entries.sort_by_key(|e| e.0);
    if let Some(n) = declared_frames {
        if n != entries.len() {
            return Err(dataset_err(
                "manifest.txt",
                format!("declares {n} frames but lists {}", entries.len()),
            ));
        }
    }

    let mut frames = Vec::with_capacity(entries.len());
    let mut scene_of = Vec::with_capacity(entries.len());
    for (idx, scene, condition, file) in entries {
        let context = format!("frame {idx} ({})", file.display());
        frames.push(read_frame_blob(&dir.join(&file), &context, condition)?);
        scene_of.push(scene);
    }
    Ok(Dataset { frames, scene_of })
}
