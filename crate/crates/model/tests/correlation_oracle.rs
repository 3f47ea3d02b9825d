//! Patch correlation against a naive direct-summation oracle, plus the
//! motion-detection property: shifting the second map moves the argmax
//! displacement channel by exactly that shift.

use bevmos_model::correlation::{correlate, CorrelationCfg};
use bevmos_tensor::{CounterRng, Tensor};

/// Literal evaluation: for each displacement channel and cell, sum the patch
/// inner products with zero padding, normalized by C*K^2.
fn naive_correlation(
    f1: &[f64],
    f2: &[f64],
    c: usize,
    nx: usize,
    nz: usize,
    cfg: &CorrelationCfg,
) -> Vec<f64> {
    let steps = 2 * (cfg.d / cfg.stride_disp) + 1;
    let k = cfg.k as isize;
    let norm = 1.0 / (c as f64 * ((2 * cfg.k + 1) * (2 * cfg.k + 1)) as f64);
    let mut out = vec![0.0; steps * steps * nx * nz];
    let get = |f: &[f64], ch: usize, x: isize, z: isize| -> f64 {
        if x < 0 || x >= nx as isize || z < 0 || z >= nz as isize {
            0.0
        } else {
            f[(ch * nx + x as usize) * nz + z as usize]
        }
    };
    for dxi in 0..steps {
        for dzi in 0..steps {
            let dx = (dxi as isize - (cfg.d / cfg.stride_disp) as isize) * cfg.stride_disp as isize;
            let dz = (dzi as isize - (cfg.d / cfg.stride_disp) as isize) * cfg.stride_disp as isize;
            let ch_out = dxi * steps + dzi;
            for x1 in 0..nx as isize {
                for z1 in 0..nz as isize {
                    let mut acc = 0.0;
                    for ox in -k..=k {
                        for oz in -k..=k {
                            for ch in 0..c {
                                acc += get(f1, ch, x1 + ox, z1 + oz)
                                    * get(f2, ch, x1 + dx + ox, z1 + dz + oz);
                            }
                        }
                    }
                    out[(ch_out * nx + x1 as usize) * nz + z1 as usize] = acc * norm;
                }
            }
        }
    }
    out
}

fn random_map(c: usize, nx: usize, nz: usize, rng: &mut CounterRng) -> Tensor {
    let data: Vec<f64> = (0..c * nx * nz).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    Tensor::from_vec(&[c, nx, nz], data).unwrap()
}

#[test]
fn correlate_matches_naive_loop() {
    let mut rng = CounterRng::new(31);
    for (k, d, stride) in [(3usize, 3usize, 1usize), (1, 2, 1), (2, 2, 2), (0, 1, 1), (3, 0, 1)] {
        let cfg = CorrelationCfg { k, d, stride_disp: stride };
        let (c, nx, nz) = (4, 12, 12);
        let f1 = random_map(c, nx, nz, &mut rng);
        let f2 = random_map(c, nx, nz, &mut rng);
        let got = correlate(&f1, &f2, &cfg).unwrap();
        let expect = naive_correlation(&f1.to_vec(), &f2.to_vec(), c, nx, nz, &cfg);
        assert_eq!(got.numel(), expect.len());
        let max_abs = got
            .to_vec()
            .iter()
            .zip(expect.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_abs < 1e-12, "k={k} d={d} stride={stride}: {max_abs}");
    }
}

#[test]
fn argmax_channel_recovers_known_shift() {
    let mut rng = CounterRng::new(77);
    let cfg = CorrelationCfg { k: 1, d: 2, stride_disp: 1 };
    let (c, n) = (2, 16);
    for (sx, sz) in [(1isize, 0isize), (0, 2), (-2, 1), (2, 2), (-1, -1)] {
        // iid noise has a sharp autocorrelation peak in every patch
        let f1 = random_map(c, n, n, &mut rng);
        let f1v = f1.to_vec();
        // f2(x) = f1(x - s): the previous-frame map with content shifted by s
        let mut f2v = vec![0.0; f1v.len()];
        for ch in 0..c {
            for x in 0..n as isize {
                for z in 0..n as isize {
                    let (px, pz) = (x - sx, z - sz);
                    if px >= 0 && px < n as isize && pz >= 0 && pz < n as isize {
                        f2v[(ch * n + x as usize) * n + z as usize] =
                            f1v[(ch * n + px as usize) * n + pz as usize];
                    }
                }
            }
        }
        let f2 = Tensor::from_vec(&[c, n, n], f2v).unwrap();
        let corr = correlate(&f1, &f2, &cfg).unwrap();
        let v = corr.to_vec();
        let steps = cfg.steps();
        let plane = n * n;

        let mut hits = 0usize;
        let mut total = 0usize;
        let margin = (cfg.d + cfg.k) as usize + 2;
        for x in margin..n - margin {
            for z in margin..n - margin {
                let mut best = f64::NEG_INFINITY;
                let mut best_ch = 0;
                for ch in 0..steps * steps {
                    let val = v[ch * plane + x * n + z];
                    if val > best {
                        best = val;
                        best_ch = ch;
                    }
                }
                let got = cfg.displacement(best_ch);
                if got == (sx, sz) {
                    hits += 1;
                }
                total += 1;
            }
        }
        let rate = hits as f64 / total as f64;
        assert!(rate >= 0.95, "shift ({sx},{sz}): recovery {rate}");
    }
}

#[test]
fn swapped_inputs_transpose_the_volume() {
    let mut rng = CounterRng::new(99);
    let cfg = CorrelationCfg { k: 1, d: 1, stride_disp: 1 };
    let (c, n) = (2, 7);
    let f1 = random_map(c, n, n, &mut rng);
    let f2 = random_map(c, n, n, &mut rng);
    let ab = correlate(&f1, &f2, &cfg).unwrap().to_vec();
    let ba = correlate(&f2, &f1, &cfg).unwrap().to_vec();
    let steps = cfg.steps();
    let plane = n * n;
    for ch in 0..steps * steps {
        let (dx, dz) = cfg.displacement(ch);
        // channel of the negated displacement in the swapped volume
        let ndxi = (-dx + cfg.d as isize) as usize;
        let ndzi = (-dz + cfg.d as isize) as usize;
        let nch = ndxi * steps + ndzi;
        for x in 0..n as isize {
            for z in 0..n as isize {
                let (x2, z2) = (x + dx, z + dz);
                if x2 < 0 || x2 >= n as isize || z2 < 0 || z2 >= n as isize {
                    continue;
                }
                let a = ab[ch * plane + (x as usize) * n + z as usize];
                let b = ba[nch * plane + (x2 as usize) * n + z2 as usize];
                assert!((a - b).abs() < 1e-12, "ch {ch} cell ({x},{z})");
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    use bevmos_tensor::gradcheck;
    let cfg = CorrelationCfg { k: 1, d: 1, stride_disp: 1 };
    let (c, n) = (2, 6);
    let mut worst = gradcheck::GradCheckReport::empty();
    for seed in 0..20u64 {
        let mut rng = CounterRng::new(400 + seed);
        let f1_data: Vec<f64> = (0..c * n * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let f2_data: Vec<f64> = (0..c * n * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let probe: Vec<f64> = (0..cfg.channels() * n * n)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();

        for side in 0..2 {
            let leaf = Tensor::leaf(&[c, n, n], if side == 0 { f1_data.clone() } else { f2_data.clone() }).unwrap();
            let fixed = Tensor::from_vec(&[c, n, n], if side == 0 { f2_data.clone() } else { f1_data.clone() }).unwrap();
            let out = if side == 0 {
                correlate(&leaf, &fixed, &cfg).unwrap()
            } else {
                correlate(&fixed, &leaf, &cfg).unwrap()
            };
            out.backward_seeded(&probe);
            let analytic = leaf.grad().unwrap();
            let init = leaf.to_vec();
            let mut f = |x: &[f64]| -> f64 {
                let t = Tensor::from_vec(&[c, n, n], x.to_vec()).unwrap();
                let y = if side == 0 {
                    correlate(&t, &fixed, &cfg).unwrap()
                } else {
                    correlate(&fixed, &t, &cfg).unwrap()
                };
                y.to_vec().iter().zip(probe.iter()).map(|(a, b)| a * b).sum()
            };
            worst = worst.merge(gradcheck::check(&mut f, &init, &analytic, 1e-6));
        }
    }
    assert!(worst.max_rel_err < 1e-4, "{worst:?}");
}
