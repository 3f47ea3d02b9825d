use crate::error::{shape_str, Result, TensorError};
use crate::tensor::Tensor;

/// Bilinear sampling of a [C, H, W] feature map at N continuous pixel
/// positions (x right, y down), differentiable w.r.t. both the map and the
/// points. Corners outside [0, W-1] x [0, H-1] contribute zero.
pub fn bilinear_sample(feature: &Tensor, points: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match feature.shape() {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "bilinear_sample",
                expected: "[C, H, W] feature".into(),
                got: shape_str(other),
            })
        }
    };
    let n = match points.shape() {
        [n, 2] => *n,
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "bilinear_sample",
                expected: "[N, 2] points".into(),
                got: shape_str(other),
            })
        }
    };

    let plane = h * w;
    let mut out = vec![0.0; n * c];
    {
        let f = feature.data();
        let p = points.data();
        for pt in 0..n {
            let x = p[pt * 2];
            let y = p[pt * 2 + 1];
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let corners = corner_weights(x0, y0, fx, fy, h as i64, w as i64);
            let row = &mut out[pt * c..(pt + 1) * c];
            for (idx, wgt) in corners.iter().flatten() {
                for (ch, r) in row.iter_mut().enumerate() {
                    *r += wgt * f[ch * plane + idx];
                }
            }
        }
    }

    let (pf, pp) = (feature.clone(), points.clone());
    Ok(Tensor::from_op(
        vec![n, c],
        out,
        vec![feature.clone(), points.clone()],
        Box::new(move |out_grad, store| {
            let p = pp.data();
            if pf.requires_grad() {
                let g = store.entry(&pf);
                for pt in 0..n {
                    let x = p[pt * 2];
                    let y = p[pt * 2 + 1];
                    let (x0, y0) = (x.floor(), y.floor());
                    let (fx, fy) = (x - x0, y - y0);
                    let corners =
                        corner_weights(x0 as i64, y0 as i64, fx, fy, h as i64, w as i64);
                    let og = &out_grad[pt * c..(pt + 1) * c];
                    for (idx, wgt) in corners.iter().flatten() {
                        for ch in 0..c {
                            g[ch * plane + idx] += wgt * og[ch];
                        }
                    }
                }
            }
            if pp.requires_grad() {
                let f = pf.data();
                let g = store.entry(&pp);
                for pt in 0..n {
                    let x = p[pt * 2];
                    let y = p[pt * 2 + 1];
                    let (x0f, y0f) = (x.floor(), y.floor());
                    let (fx, fy) = (x - x0f, y - y0f);
                    let (x0, y0) = (x0f as i64, y0f as i64);
                    let og = &out_grad[pt * c..(pt + 1) * c];
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for ch in 0..c {
                        let base = ch * plane;
                        let v = |yy: i64, xx: i64| -> f64 {
                            if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                                f[base + (yy as usize) * w + xx as usize]
                            } else {
                                0.0
                            }
                        };
                        let v00 = v(y0, x0);
                        let v01 = v(y0, x0 + 1);
                        let v10 = v(y0 + 1, x0);
                        let v11 = v(y0 + 1, x0 + 1);
                        // d(out)/dx and d(out)/dy of the bilinear form
                        gx += og[ch] * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
                        gy += og[ch] * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                    g[pt * 2] += gx;
                    g[pt * 2 + 1] += gy;
                }
            }
        }),
    ))
}

/// In-bounds corners of the bilinear stencil with their weights.
#[inline]
fn corner_weights(
    x0: i64,
    y0: i64,
    fx: f64,
    fy: f64,
    h: i64,
    w: i64,
) -> [Option<(usize, f64)>; 4] {
    let mut result = [None; 4];
    let candidates = [
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x0 + 1, fx * (1.0 - fy)),
        (y0 + 1, x0, (1.0 - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ];
    for (slot, (yy, xx, wgt)) in result.iter_mut().zip(candidates.iter()) {
        if *yy >= 0 && *yy < h && *xx >= 0 && *xx < w && *wgt != 0.0 {
            *slot = Some(((*yy as usize) * w as usize + *xx as usize, *wgt));
        }
    }
    result
}
