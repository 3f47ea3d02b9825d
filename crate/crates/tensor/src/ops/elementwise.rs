use crate::error::{shape_str, Result, TensorError};
use crate::tensor::Tensor;

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: shape_str(a.shape()),
            got: shape_str(b.shape()),
        });
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("add", a, b)?;
    let data: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x + y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out_grad, store| {
            for p in [&pa, &pb] {
                if p.requires_grad() {
                    let g = store.entry(p);
                    for (gi, oi) in g.iter_mut().zip(out_grad.iter()) {
                        *gi += oi;
                    }
                }
            }
        }),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("sub", a, b)?;
    let data: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x - y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out_grad, store| {
            if pa.requires_grad() {
                let g = store.entry(&pa);
                for (gi, oi) in g.iter_mut().zip(out_grad.iter()) {
                    *gi += oi;
                }
            }
            if pb.requires_grad() {
                let g = store.entry(&pb);
                for (gi, oi) in g.iter_mut().zip(out_grad.iter()) {
                    *gi -= oi;
                }
            }
        }),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("mul", a, b)?;
    let data: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x * y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out_grad, store| {
            if pa.requires_grad() {
                let bv = pb.data();
                let g = store.entry(&pa);
                for i in 0..out_grad.len() {
                    g[i] += out_grad[i] * bv[i];
                }
            }
            if pb.requires_grad() {
                let av = pa.data();
                let g = store.entry(&pb);
                for i in 0..out_grad.len() {
                    g[i] += out_grad[i] * av[i];
                }
            }
        }),
    ))
}

pub fn scale(a: &Tensor, k: f64) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|x| x * k).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pa);
            for (gi, oi) in g.iter_mut().zip(out_grad.iter()) {
                *gi += oi * k;
            }
        }),
    )
}

pub fn relu(a: &Tensor) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|x| x.max(0.0)).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Box::new(move |out_grad, store| {
            let av = pa.data();
            let g = store.entry(&pa);
            for i in 0..out_grad.len() {
                if av[i] > 0.0 {
                    g[i] += out_grad[i];
                }
            }
        }),
    )
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
    let out_vals = data.clone();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pa);
            for i in 0..out_grad.len() {
                let y = out_vals[i];
                g[i] += out_grad[i] * y * (1.0 - y);
            }
        }),
    )
}

pub fn sum_all(a: &Tensor) -> Tensor {
    let s: f64 = a.data().iter().sum();
    let pa = a.clone();
    Tensor::from_op(
        vec![1],
        vec![s],
        vec![a.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pa);
            for gi in g.iter_mut() {
                *gi += out_grad[0];
            }
        }),
    )
}

pub fn mean_all(a: &Tensor) -> Tensor {
    let n = a.numel().max(1) as f64;
    let s: f64 = a.data().iter().sum::<f64>() / n;
    let pa = a.clone();
    Tensor::from_op(
        vec![1],
        vec![s],
        vec![a.clone()],
        Box::new(move |out_grad, store| {
            let g = store.entry(&pa);
            let k = out_grad[0] / n;
            for gi in g.iter_mut() {
                *gi += k;
            }
        }),
    )
}

/// Multiply each row of `a` ([R, C]) by the matching entry of `s` ([R] or [R, 1]).
pub fn scale_rows(a: &Tensor, s: &Tensor) -> Result<Tensor> {
    let (rows, cols) = match a.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                expected: "[R, C]".into(),
                got: shape_str(other),
            })
        }
    };
    if s.numel() != rows {
        return Err(TensorError::ShapeMismatch {
            op: "scale_rows",
            expected: format!("[{rows}] scales"),
            got: shape_str(s.shape()),
        });
    }
    let mut data = a.to_vec();
    {
        let sv = s.data();
        for r in 0..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            let k = sv[r];
            for v in row.iter_mut() {
                *v *= k;
            }
        }
    }
    let (pa, ps) = (a.clone(), s.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), s.clone()],
        Box::new(move |out_grad, store| {
            if pa.requires_grad() {
                let sv = ps.data();
                let g = store.entry(&pa);
                for r in 0..rows {
                    let k = sv[r];
                    for c in 0..cols {
                        g[r * cols + c] += out_grad[r * cols + c] * k;
                    }
                }
            }
            if ps.requires_grad() {
                let av = pa.data();
                let g = store.entry(&ps);
                for r in 0..rows {
                    let mut acc = 0.0;
                    for c in 0..cols {
                        acc += out_grad[r * cols + c] * av[r * cols + c];
                    }
                    g[r] += acc;
                }
            }
        }),
    ))
}

/// Mean binary cross-entropy over all cells. Probabilities are clamped to
/// [eps, 1-eps] before the logs; the clamped region carries zero gradient.
pub fn bce_mean(probs: &Tensor, targets: &[f64], eps: f64) -> Result<Tensor> {
    if probs.numel() != targets.len() {
        return Err(TensorError::ShapeMismatch {
            op: "bce_mean",
            expected: format!("{} targets", probs.numel()),
            got: format!("{} targets", targets.len()),
        });
    }
    let n = probs.numel().max(1) as f64;
    let mut loss = 0.0;
    {
        let pv = probs.data();
        for (p, y) in pv.iter().zip(targets.iter()) {
            let pc = p.clamp(eps, 1.0 - eps);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
    }
    loss /= n;
    let pp = probs.clone();
    let targets: Vec<f64> = targets.to_vec();
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![probs.clone()],
        Box::new(move |out_grad, store| {
            let pv = pp.data();
            let g = store.entry(&pp);
            let k = out_grad[0] / n;
            for i in 0..pv.len() {
                let p = pv[i];
                if p < eps || p > 1.0 - eps {
                    continue;
                }
                let y = targets[i];
                g[i] += k * (-y / p + (1.0 - y) / (1.0 - p));
            }
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(sigmoid(&x).item(), 0.5);
    }

    #[test]
    fn add_shape_mismatch_is_error() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(add(&a, &b).is_err());
    }

    #[test]
    fn bce_half_prediction_is_ln2() {
        let p = Tensor::full(&[1, 2, 2], 0.5);
        let loss = bce_mean(&p, &[0.0, 1.0, 0.0, 1.0], 1e-7).unwrap();
        assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_single_cell_hand_values() {
        let p = Tensor::from_vec(&[1], vec![0.9]).unwrap();
        let hit = bce_mean(&p, &[1.0], 1e-7).unwrap().item();
        let miss = bce_mean(&p, &[0.0], 1e-7).unwrap().item();
        assert!((hit - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!((miss - 2.302_585_092_994_045_7).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_tiny() {
        let p = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let loss = bce_mean(&p, &[1.0, 0.0], 1e-7).unwrap().item();
        assert!(loss <= 1.1e-7, "loss {loss}");
    }

    #[test]
    fn bce_grad_matches_p_minus_y_over_n_through_sigmoid() {
        // d(bce(sigmoid(z)))/dz == (p - y) / N
        let z = Tensor::leaf(&[4], vec![0.3, -1.2, 0.7, 0.0]).unwrap();
        let p = sigmoid(&z);
        let y = [1.0, 0.0, 1.0, 0.0];
        bce_mean(&p, &y, 1e-7).unwrap().backward();
        let g = z.grad().unwrap();
        let pv = p.to_vec();
        for i in 0..4 {
            let expect = (pv[i] - y[i]) / 4.0;
            assert!((g[i] - expect).abs() < 1e-12, "cell {i}: {} vs {expect}", g[i]);
        }
    }
}
