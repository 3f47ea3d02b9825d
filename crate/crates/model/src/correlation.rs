//! Patch correlation between the fused BEV maps of consecutive frames.
//!
//! For each cell x1 and displacement d, the output channel holds the inner
//! product of the K x K patches of f1 at x1 and f2 at x1 + d, summed over
//! channels and normalized by C*K^2. No learnable weights; differentiable in
//! both inputs. Zero padding outside the maps.

use bevmos_tensor::{ops, Tensor};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelationCfg {
    /// patch half-size; kernel K = 2k+1
    pub k: usize,
    /// max displacement in cells
    pub d: usize,
    /// displacement stride
    pub stride_disp: usize,
}

impl Default for CorrelationCfg {
    fn default() -> Self {
        CorrelationCfg {
            k: 3,
            d: 4,
            stride_disp: 1,
        }
    }
}

impl CorrelationCfg {
    pub fn validate(&self) -> Result<()> {
        if self.stride_disp == 0 {
            return Err(ModelError::Config {
                op: "correlation",
                message: "stride_disp must be >= 1".into(),
            });
        }
        if self.d % self.stride_disp != 0 {
            return Err(ModelError::Config {
                op: "correlation",
                message: format!("d {} not a multiple of stride {}", self.d, self.stride_disp),
            });
        }
        Ok(())
    }

    /// Displacements per axis.
    pub fn steps(&self) -> usize {
        2 * (self.d / self.stride_disp) + 1
    }

    /// Output channel count.
    pub fn channels(&self) -> usize {
        self.steps() * self.steps()
    }

    /// Displacement for a channel index, channel-major over (dx, dz).
    pub fn displacement(&self, channel: usize) -> (isize, isize) {
        let steps = self.steps();
        let dxi = channel / steps;
        let dzi = channel % steps;
        let offset = (self.d / self.stride_disp) as isize;
        (
            (dxi as isize - offset) * self.stride_disp as isize,
            (dzi as isize - offset) * self.stride_disp as isize,
        )
    }
}

/// correlate(f1, f2): [C, nx, nz] x [C, nx, nz] -> [D^2, nx, nz].
pub fn correlate(f1: &Tensor, f2: &Tensor, cfg: &CorrelationCfg) -> Result<Tensor> {
    cfg.validate()?;
    let (c, nx, nz) = match f1.shape() {
        [c, nx, nz] => (*c, *nx, *nz),
        other => {
            return Err(ModelError::Shape {
                op: "correlate",
                message: format!("f1 must be [C, nx, nz], got {other:?}"),
            })
        }
    };
    if f2.shape() != f1.shape() {
        return Err(ModelError::Shape {
            op: "correlate",
            message: format!("f1 {:?} vs f2 {:?}", f1.shape(), f2.shape()),
        });
    }
    let d_ch = cfg.channels();
    let norm = 1.0 / (c as f64 * ((2 * cfg.k + 1) * (2 * cfg.k + 1)) as f64);

    // cell-major [nx, nz, C] copies make the channel dot products contiguous
    let a = to_cell_major(&f1.data(), c, nx, nz);
    let b = to_cell_major(&f2.data(), c, nx, nz);

    let k = cfg.k as isize;
    let displacements: Vec<(isize, isize)> = (0..d_ch).map(|ch| cfg.displacement(ch)).collect();
    let mut out = vec![0.0; d_ch * nx * nz];
    for (ch, &(dx, dz)) in displacements.iter().enumerate() {
        let plane = &mut out[ch * nx * nz..(ch + 1) * nx * nz];
        for x1 in 0..nx as isize {
            for z1 in 0..nz as isize {
                let mut acc = 0.0;
                for ox in -k..=k {
                    let ax = x1 + ox;
                    let bx = x1 + dx + ox;
                    if ax < 0 || ax >= nx as isize || bx < 0 || bx >= nx as isize {
                        continue;
                    }
                    for oz in -k..=k {
                        let az = z1 + oz;
                        let bz = z1 + dz + oz;
                        if az < 0 || az >= nz as isize || bz < 0 || bz >= nz as isize {
                            continue;
                        }
                        let pa = &a[((ax as usize) * nz + az as usize) * c..][..c];
                        let pb = &b[((bx as usize) * nz + bz as usize) * c..][..c];
                        let mut dot = 0.0;
                        for i in 0..c {
                            dot += pa[i] * pb[i];
                        }
                        acc += dot;
                    }
                }
                plane[(x1 as usize) * nz + z1 as usize] = acc * norm;
            }
        }
    }

    let (p1, p2) = (f1.clone(), f2.clone());
    let cfg_bw = *cfg;
    Ok(Tensor::from_op(
        vec![d_ch, nx, nz],
        out,
        vec![f1.clone(), f2.clone()],
        Box::new(move |out_grad, store| {
            let a = to_cell_major(&p1.data(), c, nx, nz);
            let b = to_cell_major(&p2.data(), c, nx, nz);
            let k = cfg_bw.k as isize;
            let mut ga = vec![0.0; c * nx * nz];
            let mut gb = vec![0.0; c * nx * nz];
            for ch in 0..d_ch {
                let (dx, dz) = cfg_bw.displacement(ch);
                let og = &out_grad[ch * nx * nz..(ch + 1) * nx * nz];
                for x1 in 0..nx as isize {
                    for z1 in 0..nz as isize {
                        let g = og[(x1 as usize) * nz + z1 as usize] * norm;
                        if g == 0.0 {
                            continue;
                        }
                        for ox in -k..=k {
                            let ax = x1 + ox;
                            let bx = x1 + dx + ox;
                            if ax < 0 || ax >= nx as isize || bx < 0 || bx >= nx as isize {
                                continue;
                            }
                            for oz in -k..=k {
                                let az = z1 + oz;
                                let bz = z1 + dz + oz;
                                if az < 0 || az >= nz as isize || bz < 0 || bz >= nz as isize {
                                    continue;
                                }
                                let ia = ((ax as usize) * nz + az as usize) * c;
                                let ib = ((bx as usize) * nz + bz as usize) * c;
                                for i in 0..c {
                                    ga[ia + i] += g * b[ib + i];
                                    gb[ib + i] += g * a[ia + i];
                                }
                            }
                        }
                    }
                }
            }
            if p1.requires_grad() {
                add_from_cell_major(store.entry(&p1), &ga, c, nx, nz);
            }
            if p2.requires_grad() {
                add_from_cell_major(store.entry(&p2), &gb, c, nx, nz);
            }
        }),
    ))
}

fn to_cell_major(data: &[f64], c: usize, nx: usize, nz: usize) -> Vec<f64> {
    let plane = nx * nz;
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        for cell in 0..plane {
            out[cell * c + ch] = data[ch * plane + cell];
        }
    }
    out
}

fn add_from_cell_major(dst: &mut [f64], src: &[f64], c: usize, nx: usize, nz: usize) {
    let plane = nx * nz;
    for ch in 0..c {
        for cell in 0..plane {
            dst[ch * plane + cell] += src[cell * c + ch];
        }
    }
}

/// Concatenate the correlation volume with the current fused map,
/// correlation channels first.
pub fn motion_features(corr: &Tensor, curr_fused: &Tensor) -> Result<Tensor> {
    if corr.shape().len() != 3
        || curr_fused.shape().len() != 3
        || corr.shape()[1..] != curr_fused.shape()[1..]
    {
        return Err(ModelError::Shape {
            op: "motion_features",
            message: format!("{:?} vs {:?}", corr.shape(), curr_fused.shape()),
        });
    }
    Ok(ops::concat_channels(&[corr, curr_fused])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps_interior_is_one() {
        let cfg = CorrelationCfg {
            k: 1,
            d: 0,
            stride_disp: 1,
        };
        let f = Tensor::full(&[1, 5, 5], 1.0);
        let out = correlate(&f, &f, &cfg).unwrap();
        assert_eq!(out.shape(), &[1, 5, 5]);
        let v = out.to_vec();
        // interior cells: nine unit products / (1 * 9) = 1
        for x in 1..4 {
            for z in 1..4 {
                assert!((v[x * 5 + z] - 1.0).abs() < 1e-12);
            }
        }
        // corner patch overlaps only 4 cells
        assert!((v[0] - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_f2_zero_output() {
        let cfg = CorrelationCfg {
            k: 2,
            d: 1,
            stride_disp: 1,
        };
        let f1 = Tensor::full(&[3, 6, 6], 2.0);
        let f2 = Tensor::zeros(&[3, 6, 6]);
        let out = correlate(&f1, &f2, &cfg).unwrap();
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let cfg = CorrelationCfg::default();
        let f1 = Tensor::zeros(&[2, 6, 6]);
        let f2 = Tensor::zeros(&[2, 6, 5]);
        assert!(correlate(&f1, &f2, &cfg).is_err());
    }

    #[test]
    fn displacement_channel_indexing() {
        let cfg = CorrelationCfg {
            k: 1,
            d: 2,
            stride_disp: 1,
        };
        assert_eq!(cfg.channels(), 25);
        assert_eq!(cfg.displacement(0), (-2, -2));
        assert_eq!(cfg.displacement(12), (0, 0));
        assert_eq!(cfg.displacement(24), (2, 2));
        let strided = CorrelationCfg {
            k: 1,
            d: 2,
            stride_disp: 2,
        };
        assert_eq!(strided.channels(), 9);
        assert_eq!(strided.displacement(0), (-2, -2));
        assert_eq!(strided.displacement(4), (0, 0));
    }

    #[test]
    fn motion_features_concatenates() {
        let corr = Tensor::full(&[25, 4, 4], 0.0);
        let fused = Tensor::full(&[128, 4, 4], 1.5);
        let out = motion_features(&corr, &fused).unwrap();
        assert_eq!(out.shape(), &[153, 4, 4]);
        let v = out.to_vec();
        assert!(v[..25 * 16].iter().all(|x| *x == 0.0));
        assert!(v[25 * 16..].iter().all(|x| *x == 1.5));
    }

    #[test]
    fn motion_features_round_trip_split() {
        let corr = Tensor::from_vec(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let fused = Tensor::from_vec(&[1, 2, 2], vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
        let out = motion_features(&corr, &fused).unwrap();
        let v = out.to_vec();
        assert_eq!(&v[..8], corr.to_vec().as_slice());
        assert_eq!(&v[8..], fused.to_vec().as_slice());
    }

    #[test]
    fn self_correlation_peaks_at_zero_displacement() {
        // a peaked pattern correlates with itself most strongly at delta = 0
        let cfg = CorrelationCfg {
            k: 1,
            d: 2,
            stride_disp: 1,
        };
        let n = 9;
        let mut data = vec![0.0; n * n];
        data[4 * n + 4] = 5.0;
        data[4 * n + 5] = 2.0;
        data[5 * n + 4] = 1.0;
        let f = Tensor::from_vec(&[1, n, n], data).unwrap();
        let out = correlate(&f, &f, &cfg).unwrap();
        let v = out.to_vec();
        let center_channel = cfg.channels() / 2;
        for x in 3..6 {
            for z in 3..6 {
                let at_zero = v[center_channel * n * n + x * n + z];
                for ch in 0..cfg.channels() {
                    if ch == center_channel {
                        continue;
                    }
                    assert!(
                        v[ch * n * n + x * n + z] <= at_zero + 1e-12,
                        "cell ({x},{z}) channel {ch}"
                    );
                }
            }
        }
    }
}
