use crate::error::{shape_str, Result, TensorError};
use crate::tensor::Tensor;

/// 2D convolution: input [C_in, H, W], weight [C_out, C_in, kH, kW],
/// optional bias [C_out]. Odd kernels, zero padding.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (c_in, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: "[C_in, H, W] input".into(),
                got: shape_str(other),
            })
        }
    };
    let (c_out, wc_in, kh, kw) = match weight.shape() {
        [o, i, kh, kw] => (*o, *i, *kh, *kw),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: "[C_out, C_in, kH, kW] weight".into(),
                got: shape_str(other),
            })
        }
    };
    if wc_in != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            expected: format!("weight C_in {c_in}"),
            got: format!("weight C_in {wc_in}"),
        });
    }
    if kh % 2 == 0 || kw % 2 == 0 || stride == 0 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!("kernel must be odd and stride >= 1 (kh={kh}, kw={kw}, stride={stride})"),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: format!("[{c_out}] bias"),
                got: shape_str(b.shape()),
            });
        }
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!("kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"),
        });
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;

    let mut out = vec![0.0; c_out * ho * wo];
    {
        let x = input.data();
        let wv = weight.data();
        if let Some(b) = bias {
            let bv = b.data();
            for co in 0..c_out {
                out[co * ho * wo..(co + 1) * ho * wo].fill(bv[co]);
            }
        }
        for co in 0..c_out {
            for ci in 0..c_in {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = wv[((co * c_in + ci) * kh + ky) * kw + kx];
                        if k == 0.0 {
                            continue;
                        }
                        accumulate_shifted(
                            &mut out[co * ho * wo..(co + 1) * ho * wo],
                            &x[ci * h * w..(ci + 1) * h * w],
                            k, h, w, ho, wo, ky, kx, stride, padding,
                        );
                    }
                }
            }
        }
    }

    let parents: Vec<Tensor> = match bias {
        Some(b) => vec![input.clone(), weight.clone(), b.clone()],
        None => vec![input.clone(), weight.clone()],
    };
    let (pi, pw) = (input.clone(), weight.clone());
    let pb = bias.cloned();
    Ok(Tensor::from_op(
        vec![c_out, ho, wo],
        out,
        parents,
        Box::new(move |out_grad, store| {
            if let Some(b) = &pb {
                if b.requires_grad() {
                    let g = store.entry(b);
                    for co in 0..c_out {
                        g[co] += out_grad[co * ho * wo..(co + 1) * ho * wo].iter().sum::<f64>();
                    }
                }
            }
            if pw.requires_grad() {
                let x = pi.data();
                let g = store.entry(&pw);
                for co in 0..c_out {
                    let og = &out_grad[co * ho * wo..(co + 1) * ho * wo];
                    for ci in 0..c_in {
                        let xc = &x[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                g[((co * c_in + ci) * kh + ky) * kw + kx] +=
                                    dot_shifted(og, xc, h, w, ho, wo, ky, kx, stride, padding);
                            }
                        }
                    }
                }
            }
            if pi.requires_grad() {
                let wv = pw.data();
                let g = store.entry(&pi);
                for co in 0..c_out {
                    let og = &out_grad[co * ho * wo..(co + 1) * ho * wo];
                    for ci in 0..c_in {
                        let gc = &mut g[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let k = wv[((co * c_in + ci) * kh + ky) * kw + kx];
                                if k == 0.0 {
                                    continue;
                                }
                                scatter_shifted(gc, og, k, h, w, ho, wo, ky, kx, stride, padding);
                            }
                        }
                    }
                }
            }
        }),
    ))
}

/// out[oy, ox] += k * in[oy*s + ky - p, ox*s + kx - p] over the valid range.
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_shifted(
    out: &mut [f64],
    input: &[f64],
    k: f64,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) {
    let (ox_lo, ox_hi) = out_range(w, wo, kx, stride, padding);
    for oy in out_range_iter(h, ho, ky, stride, padding) {
        let iy = (oy * stride + ky) as isize - padding as isize;
        let in_row = &input[iy as usize * w..(iy as usize + 1) * w];
        let out_row = &mut out[oy * wo..(oy + 1) * wo];
        if stride == 1 {
            let shift = kx as isize - padding as isize;
            for ox in ox_lo..ox_hi {
                out_row[ox] += k * in_row[(ox as isize + shift) as usize];
            }
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride + kx) as isize - padding as isize;
                out_row[ox] += k * in_row[ix as usize];
            }
        }
    }
}

/// sum over valid (oy, ox) of og[oy, ox] * in[oy*s + ky - p, ox*s + kx - p].
#[allow(clippy::too_many_arguments)]
#[inline]
fn dot_shifted(
    og: &[f64],
    input: &[f64],
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) -> f64 {
    let (ox_lo, ox_hi) = out_range(w, wo, kx, stride, padding);
    let mut acc = 0.0;
    for oy in out_range_iter(h, ho, ky, stride, padding) {
        let iy = (oy * stride + ky) as isize - padding as isize;
        let in_row = &input[iy as usize * w..(iy as usize + 1) * w];
        let og_row = &og[oy * wo..(oy + 1) * wo];
        if stride == 1 {
            let shift = kx as isize - padding as isize;
            for ox in ox_lo..ox_hi {
                acc += og_row[ox] * in_row[(ox as isize + shift) as usize];
            }
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride + kx) as isize - padding as isize;
                acc += og_row[ox] * in_row[ix as usize];
            }
        }
    }
    acc
}

/// gin[oy*s + ky - p, ox*s + kx - p] += k * og[oy, ox] over the valid range.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter_shifted(
    gin: &mut [f64],
    og: &[f64],
    k: f64,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) {
    let (ox_lo, ox_hi) = out_range(w, wo, kx, stride, padding);
    for oy in out_range_iter(h, ho, ky, stride, padding) {
        let iy = (oy * stride + ky) as isize - padding as isize;
        let gin_row = &mut gin[iy as usize * w..(iy as usize + 1) * w];
        let og_row = &og[oy * wo..(oy + 1) * wo];
        if stride == 1 {
            let shift = kx as isize - padding as isize;
            for ox in ox_lo..ox_hi {
                gin_row[(ox as isize + shift) as usize] += k * og_row[ox];
            }
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride + kx) as isize - padding as isize;
                gin_row[ix as usize] += k * og_row[ox];
            }
        }
    }
}

/// Output positions o for which o*stride + k - padding lands inside [0, extent).
#[inline]
fn out_range(extent: usize, out_extent: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    let max_i = extent as isize - 1 - k as isize + padding as isize;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = (max_i as usize / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

#[inline]
fn out_range_iter(
    extent: usize,
    out_extent: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> std::ops::Range<usize> {
    let (lo, hi) = out_range(extent, out_extent, k, stride, padding);
    lo..hi
}

/// Per-channel normalization to zero mean / unit variance (population
/// variance over H*W). No affine parameters.
pub fn instance_norm(input: &Tensor, eps: f64) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "instance_norm",
                expected: "[C, H, W] input".into(),
                got: shape_str(other),
            })
        }
    };
    let n = h * w;
    let nf = n as f64;
    let mut out = vec![0.0; c * n];
    let mut inv_std = vec![0.0; c];
    {
        let x = input.data();
        for ci in 0..c {
            let xc = &x[ci * n..(ci + 1) * n];
            let mean = xc.iter().sum::<f64>() / nf;
            let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let denom = (var + eps).sqrt();
            let inv = if denom > 0.0 { 1.0 / denom } else { 0.0 };
            inv_std[ci] = inv;
            let oc = &mut out[ci * n..(ci + 1) * n];
            for i in 0..n {
                oc[i] = (xc[i] - mean) * inv;
            }
        }
    }
    let normalized = out.clone();
    let pi = input.clone();
    Ok(Tensor::from_op(
        vec![c, h, w],
        out,
        vec![input.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pi);
            for ci in 0..c {
                let y = &normalized[ci * n..(ci + 1) * n];
                let dy = &out_grad[ci * n..(ci + 1) * n];
                let gy = &mut g[ci * n..(ci + 1) * n];
                let mean_dy = dy.iter().sum::<f64>() / nf;
                let mean_dyy = dy.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / nf;
                let inv = inv_std[ci];
                for i in 0..n {
                    gy[i] += inv * (dy[i] - mean_dy - y[i] * mean_dyy);
                }
            }
        }),
    ))
}

/// Nearest-neighbor 2x upsampling: [C, H, W] -> [C, 2H, 2W].
pub fn upsample_nearest2x(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "upsample_nearest2x",
                expected: "[C, H, W] input".into(),
                got: shape_str(other),
            })
        }
    };
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h2 * w2];
    {
        let x = input.data();
        for ci in 0..c {
            for y in 0..h2 {
                let src_row = &x[(ci * h + y / 2) * w..(ci * h + y / 2 + 1) * w];
                let dst_row = &mut out[(ci * h2 + y) * w2..(ci * h2 + y + 1) * w2];
                for xo in 0..w2 {
                    dst_row[xo] = src_row[xo / 2];
                }
            }
        }
    }
    let pi = input.clone();
    Ok(Tensor::from_op(
        vec![c, h2, w2],
        out,
        vec![input.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pi);
            for ci in 0..c {
                for y in 0..h2 {
                    let og_row = &out_grad[(ci * h2 + y) * w2..(ci * h2 + y + 1) * w2];
                    let g_row = &mut g[(ci * h + y / 2) * w..(ci * h + y / 2 + 1) * w];
                    for xo in 0..w2 {
                        g_row[xo / 2] += og_row[xo];
                    }
                }
            }
        }),
    ))
}
