//! Lossless PNG rendering of a BEV prediction against ground truth: GT cells
//! in green, prediction probability as red intensity, ego marker at the grid
//! center.

use std::path::Path;

use bevmos_model::metrics::GtMask;
use bevmos_tensor::Tensor;

use crate::error::{io_err, HarnessError, Result};

pub fn render_bev(probs: &Tensor, gt: &GtMask, out_path: &Path, upscale: usize) -> Result<()> {
    let (nx, nz) = (gt.nx, gt.nz);
    if probs.numel() != nx * nz {
        return Err(HarnessError::Other(format!(
            "prediction has {} cells, mask {}",
            probs.numel(),
            nx * nz
        )));
    }
    let upscale = upscale.max(1);
    let (w, h) = (nz * upscale, nx * upscale);
    let mut rgb = vec![0u8; w * h * 3];
    let pv = probs.data();
    for ix in 0..nx {
        for iz in 0..nz {
            let p = pv[ix * nz + iz].clamp(0.0, 1.0);
            let gt_on = gt.mask[ix * nz + iz] != 0.0;
            let r = (p * 235.0) as u8;
            let g = if gt_on { 190u8 } else { 24u8 };
            let b = 28u8;
            for dy in 0..upscale {
                for dx in 0..upscale {
                    let px = ((ix * upscale + dy) * w + iz * upscale + dx) * 3;
                    rgb[px] = r;
                    rgb[px + 1] = g;
                    rgb[px + 2] = b;
                }
            }
        }
    }
    // ego marker: white cross at the grid center
    let (cx, cy) = (w / 2, h / 2);
    let arm = (2 * upscale).min(w / 2).min(h / 2);
    for d in 0..arm {
        for (px, py) in [
            (cx + d, cy),
            (cx.saturating_sub(d), cy),
            (cx, cy + d),
            (cx, cy.saturating_sub(d)),
        ] {
            if px < w && py < h {
                let i = (py * w + px) * 3;
                rgb[i] = 255;
                rgb[i + 1] = 255;
                rgb[i + 2] = 255;
            }
        }
    }

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    let file = std::fs::File::create(out_path).map_err(io_err(out_path))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| HarnessError::Other(format!("png header: {e}")))?;
    writer
        .write_image_data(&rgb)
        .map_err(|e| HarnessError::Other(format!("png body: {e}")))?;
    Ok(())
}
