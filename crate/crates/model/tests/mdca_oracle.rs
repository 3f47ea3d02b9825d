//! Deformable cross-attention against a literal term-by-term oracle.
//!
//! The oracle re-derives every quantity from the layer's raw weight tensors
//! with scalar loops: queries, per-(head, modality, key) offsets, softmax
//! attention over each head's M*K keys, naive bilinear sampling of the *raw*
//! value maps, then the per-modality and per-head projections, summed in the
//! written order. The implementation under test pre-projects value maps
//! before sampling; the two orders must agree to float round-off.

use bevmos_model::fusion::MdcaLayer;
use bevmos_tensor::{CounterRng, Tensor};

struct RawWeights {
    w_q: Vec<f64>, // [q_in, c]
    b_q: Vec<f64>,
    w_off: Vec<f64>, // [c, h*m*k*2]
    b_off: Vec<f64>,
    w_attn: Vec<f64>, // [c, h*m*k]
    b_attn: Vec<f64>,
    w_value: Vec<Vec<f64>>, // per modality [c_v, c_m] (1x1 conv layout)
    w_head: Vec<Vec<f64>>,  // per head [c_v, c]
}

fn extract_weights(layer: &MdcaLayer, params: &bevmos_tensor::ParamSet, m: usize) -> RawWeights {
    let get = |name: &str| -> Vec<f64> {
        params
            .get(name)
            .unwrap_or_else(|| panic!("missing {name}"))
            .tensor
            .to_vec()
    };
    RawWeights {
        w_q: get("m.query.weight"),
        b_q: get("m.query.bias"),
        w_off: get("m.offsets.weight"),
        b_off: get("m.offsets.bias"),
        w_attn: get("m.attn.weight"),
        b_attn: get("m.attn.bias"),
        w_value: (0..m).map(|i| get(&format!("m.value{i}.weight"))).collect(),
        w_head: (0..layer.heads).map(|h| get(&format!("m.head{h}.weight"))).collect(),
    }
}

/// zero-padded naive bilinear lookup of map [C, H, W] at (x, y)
fn bilerp(map: &[f64], c: usize, h: usize, w: usize, ch: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v = |yy: i64, xx: i64| -> f64 {
        if yy < 0 || yy >= h as i64 || xx < 0 || xx >= w as i64 {
            0.0
        } else {
            map[(ch * h + yy as usize) * w + xx as usize]
        }
    };
    v(y0, x0) * (1.0 - fx) * (1.0 - fy)
        + v(y0, x0 + 1) * fx * (1.0 - fy)
        + v(y0 + 1, x0) * (1.0 - fx) * fy
        + v(y0 + 1, x0 + 1) * fx * fy
}

#[allow(clippy::too_many_arguments)]
fn oracle_mdca(
    raw: &RawWeights,
    qa: &Tensor,
    qb: &Tensor,
    values: &[&Tensor],
    nx: usize,
    nz: usize,
    heads: usize,
    points: usize,
    model_dim: usize,
    residual: bool,
) -> Vec<f64> {
    let m = values.len();
    let ca = qa.shape()[0];
    let cb = qb.shape()[0];
    let c_v = model_dim / heads;
    let q_in = ca + cb;
    let n = nx * nz;
    let qa_v = qa.to_vec();
    let qb_v = qb.to_vec();
    let value_data: Vec<Vec<f64>> = values.iter().map(|v| v.to_vec()).collect();
    let value_channels: Vec<usize> = values.iter().map(|v| v.shape()[0]).collect();

    let mut out = vec![0.0; model_dim * n];
    for cell in 0..n {
        let (ix, iz) = (cell / nz, cell % nz);

        // flattened concatenation of the two query sources at this cell
        let mut x_cat = Vec::with_capacity(q_in);
        for ch in 0..ca {
            x_cat.push(qa_v[ch * n + cell]);
        }
        for ch in 0..cb {
            x_cat.push(qb_v[ch * n + cell]);
        }

        // z_q = x_cat . W_q + b_q
        let mut zq = vec![0.0; model_dim];
        for (o, z) in zq.iter_mut().enumerate() {
            let mut acc = raw.b_q[o];
            for i in 0..q_in {
                acc += x_cat[i] * raw.w_q[i * model_dim + o];
            }
            *z = acc;
        }

        // offsets and attention logits from z_q
        let hmk = heads * m * points;
        let mut offsets = vec![0.0; hmk * 2];
        for (o, slot) in offsets.iter_mut().enumerate() {
            let mut acc = raw.b_off[o];
            for i in 0..model_dim {
                acc += zq[i] * raw.w_off[i * (hmk * 2) + o];
            }
            *slot = acc;
        }
        let mut logits = vec![0.0; hmk];
        for (o, slot) in logits.iter_mut().enumerate() {
            let mut acc = raw.b_attn[o];
            for i in 0..model_dim {
                acc += zq[i] * raw.w_attn[i * hmk + o];
            }
            *slot = acc;
        }

        let mut cell_out = vec![0.0; model_dim];
        for h in 0..heads {
            // softmax over this head's M*K keys
            let head_logits: Vec<f64> = (0..m * points)
                .map(|j| logits[h * m * points + j])
                .collect();
            let max = head_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = head_logits.iter().map(|l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();

            let mut head_acc = vec![0.0; c_v];
            for mi in 0..m {
                for ki in 0..points {
                    let flat = (h * m + mi) * points + ki;
                    let a = exps[mi * points + ki] / denom;
                    let px = iz as f64 + offsets[flat * 2];
                    let py = ix as f64 + offsets[flat * 2 + 1];
                    // sample the raw modality map, then project with W_m
                    let cm = value_channels[mi];
                    let mut sampled = vec![0.0; cm];
                    for (ch, s) in sampled.iter_mut().enumerate() {
                        *s = bilerp(&value_data[mi], cm, nx, nz, ch, px, py);
                    }
                    for cv in 0..c_v {
                        let mut acc = 0.0;
                        for ch in 0..cm {
                            // 1x1 conv weight layout [c_v, c_m, 1, 1]
                            acc += raw.w_value[mi][cv * cm + ch] * sampled[ch];
                        }
                        head_acc[cv] += a * acc;
                    }
                }
            }
            for o in 0..model_dim {
                let mut acc = 0.0;
                for cv in 0..c_v {
                    acc += head_acc[cv] * raw.w_head[h][cv * model_dim + o];
                }
                cell_out[o] += acc;
            }
        }
        if residual {
            for (o, co) in cell_out.iter_mut().enumerate().take(ca.min(model_dim)) {
                *co += qa_v[o * n + cell];
            }
        }
        for o in 0..model_dim {
            out[o * n + cell] = cell_out[o];
        }
    }
    out
}

fn random_map(shape: &[usize], rng: &mut CounterRng) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.uniform_in(-1.5, 1.5))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Make the zero-initialized offset/attention heads non-trivial so the
/// oracle exercises real offsets and non-uniform attention.
fn randomize_heads(params: &bevmos_tensor::ParamSet, rng: &mut CounterRng) {
    for name in ["m.offsets.weight", "m.offsets.bias", "m.attn.weight", "m.attn.bias"] {
        let t = &params.get(name).unwrap().tensor;
        let scale = if name.starts_with("m.offsets") { 0.8 } else { 1.2 };
        let data: Vec<f64> = (0..t.numel()).map(|_| rng.uniform_in(-scale, scale)).collect();
        t.set_data(&data).unwrap();
    }
}

#[test]
fn mdca_matches_term_by_term_oracle() {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = CounterRng::new(1000 + seed);
        let heads = 1 + (seed % 2) as usize;
        let points = 1 + ((seed / 2) % 2) as usize;
        let model_dim = heads * (2 + (seed % 3) as usize); // <= 8, divisible by heads
        let nx = 3 + (seed % 4) as usize; // <= 6
        let nz = 3 + ((seed / 3) % 4) as usize;
        let ca = 2 + (seed % 3) as usize;
        let cb = 1 + (seed % 2) as usize;

        let mut build_rng = rng.derive(7);
        let layer = MdcaLayer::new(
            "m",
            (ca, cb),
            &[ca, cb],
            model_dim,
            heads,
            points,
            &mut build_rng,
        )
        .unwrap();
        let mut params = bevmos_tensor::ParamSet::new();
        layer.collect(&mut params).unwrap();
        randomize_heads(&params, &mut rng);

        let qa = random_map(&[ca, nx, nz], &mut rng);
        let qb = random_map(&[cb, nx, nz], &mut rng);
        let got = layer.forward(&qa, &qb, &[&qa, &qb]).unwrap();

        let raw = extract_weights(&layer, &params, 2);
        let residual = ca == model_dim;
        let expect = oracle_mdca(
            &raw, &qa, &qb, &[&qa, &qb], nx, nz, heads, points, model_dim, residual,
        );

        let max_abs = got
            .to_vec()
            .iter()
            .zip(expect.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(max_abs);
        assert!(
            max_abs < 1e-10,
            "seed {seed}: max abs diff {max_abs} (H={heads} K={points} C={model_dim} {nx}x{nz})"
        );
    }
    println!("mdca oracle worst max-abs diff over 50 instances: {worst:.3e}");
}

#[test]
fn mdca_reduces_to_value_map_with_identity_projections() {
    // one head, one key, one modality, zero offsets, identity projections:
    // output == bilinear sample at reference points == the value map itself
    let c = 3;
    let mut rng = CounterRng::new(5);
    let layer = MdcaLayer::new("m", (2, 2), &[c], c, 1, 1, &mut rng).unwrap();
    let mut params = bevmos_tensor::ParamSet::new();
    layer.collect(&mut params).unwrap();

    let mut eye_value = vec![0.0; c * c];
    for i in 0..c {
        eye_value[i * c + i] = 1.0;
    }
    params.get("m.value0.weight").unwrap().tensor.set_data(&eye_value).unwrap();
    params.get("m.head0.weight").unwrap().tensor.set_data(&eye_value).unwrap();

    let value = random_map(&[c, 4, 5], &mut rng);
    let qa = random_map(&[2, 4, 5], &mut rng); // channels != model_dim: no residual
    let qb = random_map(&[2, 4, 5], &mut rng);
    let out = layer.forward(&qa, &qb, &[&value]).unwrap();
    for (a, b) in out.to_vec().iter().zip(value.to_vec().iter()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
