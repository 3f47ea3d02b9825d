use crate::error::{shape_str, Result, TensorError};
use crate::tensor::Tensor;

/// Affine map of rows: x [N, I] * w [I, O] (+ bias [O]) -> [N, O].
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, i_dim) = match x.shape() {
        [n, i] => (*n, *i),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                expected: "[N, I] input".into(),
                got: shape_str(other),
            })
        }
    };
    let (wi, o_dim) = match w.shape() {
        [i, o] => (*i, *o),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                expected: "[I, O] weight".into(),
                got: shape_str(other),
            })
        }
    };
    if wi != i_dim {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            expected: format!("weight rows {i_dim}"),
            got: format!("weight rows {wi}"),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [o_dim] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                expected: format!("[{o_dim}] bias"),
                got: shape_str(b.shape()),
            });
        }
    }

    let mut out = vec![0.0; n * o_dim];
    {
        let xv = x.data();
        let wv = w.data();
        if let Some(b) = bias {
            let bv = b.data();
            for row in out.chunks_mut(o_dim) {
                row.copy_from_slice(&bv);
            }
        }
        for r in 0..n {
            let x_row = &xv[r * i_dim..(r + 1) * i_dim];
            let out_row = &mut out[r * o_dim..(r + 1) * o_dim];
            for (i, xi) in x_row.iter().enumerate() {
                if *xi == 0.0 {
                    continue;
                }
                let w_row = &wv[i * o_dim..(i + 1) * o_dim];
                for o in 0..o_dim {
                    out_row[o] += xi * w_row[o];
                }
            }
        }
    }

    let parents = match bias {
        Some(b) => vec![x.clone(), w.clone(), b.clone()],
        None => vec![x.clone(), w.clone()],
    };
    let (px, pw) = (x.clone(), w.clone());
    let pb = bias.cloned();
    Ok(Tensor::from_op(
        vec![n, o_dim],
        out,
        parents,
        Box::new(move |out_grad, store| {
            if let Some(b) = &pb {
                if b.requires_grad() {
                    let g = store.entry(b);
                    for r in 0..n {
                        let og = &out_grad[r * o_dim..(r + 1) * o_dim];
                        for o in 0..o_dim {
                            g[o] += og[o];
                        }
                    }
                }
            }
            if px.requires_grad() {
                let wv = pw.data();
                let g = store.entry(&px);
                for r in 0..n {
                    let og = &out_grad[r * o_dim..(r + 1) * o_dim];
                    let gx = &mut g[r * i_dim..(r + 1) * i_dim];
                    for i in 0..i_dim {
                        let w_row = &wv[i * o_dim..(i + 1) * o_dim];
                        let mut acc = 0.0;
                        for o in 0..o_dim {
                            acc += og[o] * w_row[o];
                        }
                        gx[i] += acc;
                    }
                }
            }
            if pw.requires_grad() {
                let xv = px.data();
                let g = store.entry(&pw);
                for r in 0..n {
                    let og = &out_grad[r * o_dim..(r + 1) * o_dim];
                    let x_row = &xv[r * i_dim..(r + 1) * i_dim];
                    for (i, xi) in x_row.iter().enumerate() {
                        if *xi == 0.0 {
                            continue;
                        }
                        let gw = &mut g[i * o_dim..(i + 1) * o_dim];
                        for o in 0..o_dim {
                            gw[o] += xi * og[o];
                        }
                    }
                }
            }
        }),
    ))
}

/// Row-wise softmax on [R, K].
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, k) = match x.shape() {
        [r, k] => (*r, *k),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_rows",
                expected: "[R, K] input".into(),
                got: shape_str(other),
            })
        }
    };
    let mut out = vec![0.0; r * k];
    {
        let xv = x.data();
        for row in 0..r {
            let xr = &xv[row * k..(row + 1) * k];
            let or = &mut out[row * k..(row + 1) * k];
            let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..k {
                let e = (xr[i] - max).exp();
                or[i] = e;
                sum += e;
            }
            for v in or.iter_mut() {
                *v /= sum;
            }
        }
    }
    let y = out.clone();
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![r, k],
        out,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for row in 0..r {
                let yr = &y[row * k..(row + 1) * k];
                let dyr = &out_grad[row * k..(row + 1) * k];
                let dot: f64 = yr.iter().zip(dyr.iter()).map(|(a, b)| a * b).sum();
                let gr = &mut g[row * k..(row + 1) * k];
                for i in 0..k {
                    gr[i] += yr[i] * (dyr[i] - dot);
                }
            }
        }),
    ))
}

/// [R, C] -> [C, R].
pub fn transpose2d(x: &Tensor) -> Result<Tensor> {
    let (r, c) = match x.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "transpose2d",
                expected: "[R, C] input".into(),
                got: shape_str(other),
            })
        }
    };
    let mut out = vec![0.0; r * c];
    {
        let xv = x.data();
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
    }
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![c, r],
        out,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for i in 0..r {
                for j in 0..c {
                    g[i * c + j] += out_grad[j * r + i];
                }
            }
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_product() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Tensor::from_vec(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![10.0, 20.0]).unwrap();
        let out = linear(&x, &w, Some(&b)).unwrap();
        assert_eq!(out.to_vec(), vec![14.0, 25.0, 20.0, 31.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]).unwrap();
        let y = softmax_rows(&x).unwrap();
        let v = y.to_vec();
        for row in v.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let back = transpose2d(&transpose2d(&x).unwrap()).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }
}
