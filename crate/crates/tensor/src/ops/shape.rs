use crate::error::{shape_str, Result, TensorError};
use crate::tensor::Tensor;

/// Reinterpret the data under a new shape with the same element count.
pub fn reshape(x: &Tensor, new_shape: &[usize]) -> Result<Tensor> {
    let numel: usize = new_shape.iter().product();
    if numel != x.numel() {
        return Err(TensorError::ShapeMismatch {
            op: "reshape",
            expected: format!("{} elements", x.numel()),
            got: format!("{} for {}", numel, shape_str(new_shape)),
        });
    }
    let px = x.clone();
    Ok(Tensor::from_op(
        new_shape.to_vec(),
        x.to_vec(),
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for (gi, oi) in g.iter_mut().zip(out_grad.iter()) {
                *gi += oi;
            }
        }),
    ))
}

/// Concatenate along axis 0. Trailing dimensions must agree.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "concat_channels",
            message: "no inputs".into(),
        });
    }
    let rest = &parts[0].shape()[1..];
    for p in parts {
        if p.shape().is_empty() || &p.shape()[1..] != rest {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                expected: format!("[*, {}]", shape_str(rest)),
                got: shape_str(p.shape()),
            });
        }
    }
    let total0: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let mut shape = vec![total0];
    shape.extend_from_slice(rest);
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(&p.data());
    }
    let owned: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
    let chunk_sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
    let owned_bw = owned.clone();
    Ok(Tensor::from_op(
        shape,
        data,
        owned,
        Box::new(move |out_grad, store| {
            let mut offset = 0;
            for (p, len) in owned_bw.iter().zip(chunk_sizes.iter()) {
                if p.requires_grad() {
                    let g = store.entry(p);
                    for (gi, oi) in g.iter_mut().zip(out_grad[offset..offset + len].iter()) {
                        *gi += oi;
                    }
                }
                offset += len;
            }
        }),
    ))
}

/// Permute axes: output axis j takes input axis perm[j].
pub fn permute(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = x.shape().len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(TensorError::InvalidArgument {
            op: "permute",
            message: format!("invalid permutation {perm:?} for rank {rank}"),
        });
    }
    let in_shape = x.shape().to_vec();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = row_major_strides(&in_shape);
    let out_strides = row_major_strides(&out_shape);
    // For each output linear index, the matching input index.
    let numel = x.numel();
    let mut src_index = vec![0usize; numel];
    for (i, s) in src_index.iter_mut().enumerate() {
        let mut rem = i;
        let mut src = 0;
        for (j, os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            src += coord * in_strides[perm[j]];
        }
        *s = src;
    }
    let mut data = vec![0.0; numel];
    {
        let xv = x.data();
        for (o, s) in src_index.iter().enumerate() {
            data[o] = xv[*s];
        }
    }
    let px = x.clone();
    Ok(Tensor::from_op(
        out_shape,
        data,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for (o, s) in src_index.iter().enumerate() {
                g[*s] += out_grad[o];
            }
        }),
    ))
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Columns [start, start+len) of a [R, C] matrix.
pub fn slice_cols(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (r, c) = match x.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                expected: "[R, C] input".into(),
                got: shape_str(other),
            })
        }
    };
    if start + len > c {
        return Err(TensorError::InvalidArgument {
            op: "slice_cols",
            message: format!("columns {start}..{} out of {c}", start + len),
        });
    }
    let mut data = vec![0.0; r * len];
    {
        let xv = x.data();
        for row in 0..r {
            data[row * len..(row + 1) * len]
                .copy_from_slice(&xv[row * c + start..row * c + start + len]);
        }
    }
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![r, len],
        data,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for row in 0..r {
                for j in 0..len {
                    g[row * c + start + j] += out_grad[row * len + j];
                }
            }
        }),
    ))
}

/// Scatter rows of x [N, C] into a [rows, C] output at the given indices.
/// Colliding indices accumulate.
pub fn rows_scatter(x: &Tensor, indices: &[usize], rows: usize) -> Result<Tensor> {
    let (n, c) = match x.shape() {
        [n, c] => (*n, *c),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "rows_scatter",
                expected: "[N, C] input".into(),
                got: shape_str(other),
            })
        }
    };
    if indices.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "rows_scatter",
            expected: format!("{n} indices"),
            got: format!("{}", indices.len()),
        });
    }
    if let Some(bad) = indices.iter().find(|&&i| i >= rows) {
        return Err(TensorError::InvalidArgument {
            op: "rows_scatter",
            message: format!("index {bad} out of {rows} rows"),
        });
    }
    let mut data = vec![0.0; rows * c];
    {
        let xv = x.data();
        for (row, &dst) in indices.iter().enumerate() {
            let src = &xv[row * c..(row + 1) * c];
            let d = &mut data[dst * c..(dst + 1) * c];
            for i in 0..c {
                d[i] += src[i];
            }
        }
    }
    let px = x.clone();
    let idx: Vec<usize> = indices.to_vec();
    Ok(Tensor::from_op(
        vec![rows, c],
        data,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for (row, &dst) in idx.iter().enumerate() {
                let og = &out_grad[dst * c..(dst + 1) * c];
                let gr = &mut g[row * c..(row + 1) * c];
                for i in 0..c {
                    gr[i] += og[i];
                }
            }
        }),
    ))
}

/// Top-left crop of a [C, H, W] map to [C, h, w].
pub fn crop2d(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, ih, iw) = match x.shape() {
        [c, ih, iw] => (*c, *ih, *iw),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "crop2d",
                expected: "[C, H, W] input".into(),
                got: shape_str(other),
            })
        }
    };
    if h > ih || w > iw {
        return Err(TensorError::InvalidArgument {
            op: "crop2d",
            message: format!("crop {h}x{w} exceeds {ih}x{iw}"),
        });
    }
    let mut data = vec![0.0; c * h * w];
    {
        let xv = x.data();
        for ci in 0..c {
            for y in 0..h {
                data[(ci * h + y) * w..(ci * h + y + 1) * w]
                    .copy_from_slice(&xv[(ci * ih + y) * iw..(ci * ih + y) * iw + w]);
            }
        }
    }
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![c, h, w],
        data,
        vec![x.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&px);
            for ci in 0..c {
                for y in 0..h {
                    let og = &out_grad[(ci * h + y) * w..(ci * h + y + 1) * w];
                    let gr = &mut g[(ci * ih + y) * iw..(ci * ih + y) * iw + w];
                    for i in 0..w {
                        gr[i] += og[i];
                    }
                }
            }
        }),
    ))
}
