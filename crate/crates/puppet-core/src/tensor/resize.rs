//! Spatial resampling on `[B,C,H,W]` tensors.

use super::{dims, Tensor};
use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;

impl<T: Scalar> Tensor<T> {
    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, k: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(CoreError::shape("upsample_nearest", dims(s)));
        }
        if k == 0 {
            return Err(CoreError::contract("upsample_nearest", "factor must be >= 1"));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h * k, w * k);
        let mut out = vec![T::ZERO; b * c * oh * ow];
        {
            let x = self.data();
            for p in 0..b * c {
                let src = &x[p * h * w..(p + 1) * h * w];
                let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy / k;
                    for ox in 0..ow {
                        dst[oy * ow + ox] = src[iy * w + ox / k];
                    }
                }
            }
        }
        let p = self.clone();
        Ok(Tensor::from_op(
            vec![b, c, oh, ow],
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_with(|dx| {
                        for pl in 0..b * c {
                            let go = &g[pl * oh * ow..(pl + 1) * oh * ow];
                            let d = &mut dx[pl * h * w..(pl + 1) * h * w];
                            for oy in 0..oh {
                                let iy = oy / k;
                                for ox in 0..ow {
                                    d[iy * w + ox / k] += go[oy * ow + ox];
                                }
                            }
                        }
                    });
                }
            },
        ))
    }

    /// Bilinear 2x upsampling with half-pixel centres and edge replication.
    pub fn upsample_bilinear2x(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(CoreError::shape("upsample_bilinear2x", dims(s)));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h * 2, w * 2);

        // For output index o, source coordinate is o/2 - 0.25; taps and
        // weights depend only on parity.
        #[inline]
        fn taps(o: usize, extent: usize) -> (usize, usize, f64) {
            let src = 0.5 * o as f64 - 0.25;
            let i0 = src.floor();
            let frac = src - i0;
            let lo = (i0.max(0.0)) as usize;
            let hi = ((i0 + 1.0).min(extent as f64 - 1.0).max(0.0)) as usize;
            (lo, hi, frac)
        }

        let mut out = vec![T::ZERO; b * c * oh * ow];
        {
            let x = self.data();
            for p in 0..b * c {
                let src = &x[p * h * w..(p + 1) * h * w];
                let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
                for oy in 0..oh {
                    let (y0, y1, fy) = taps(oy, h);
                    let (wy0, wy1) = (T::from_f64(1.0 - fy), T::from_f64(fy));
                    for ox in 0..ow {
                        let (x0, x1, fx) = taps(ox, w);
                        let (wx0, wx1) = (T::from_f64(1.0 - fx), T::from_f64(fx));
                        dst[oy * ow + ox] = wy0 * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1])
                            + wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
                    }
                }
            }
        }
        let p = self.clone();
        Ok(Tensor::from_op(
            vec![b, c, oh, ow],
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_with(|dx| {
                        for pl in 0..b * c {
                            let go = &g[pl * oh * ow..(pl + 1) * oh * ow];
                            let d = &mut dx[pl * h * w..(pl + 1) * h * w];
                            for oy in 0..oh {
                                let (y0, y1, fy) = taps(oy, h);
                                let (wy0, wy1) = (T::from_f64(1.0 - fy), T::from_f64(fy));
                                for ox in 0..ow {
                                    let (x0, x1, fx) = taps(ox, w);
                                    let (wx0, wx1) = (T::from_f64(1.0 - fx), T::from_f64(fx));
                                    let gv = go[oy * ow + ox];
                                    d[y0 * w + x0] += wy0 * wx0 * gv;
                                    d[y0 * w + x1] += wy0 * wx1 * gv;
                                    d[y1 * w + x0] += wy1 * wx0 * gv;
                                    d[y1 * w + x1] += wy1 * wx1 * gv;
                                }
                            }
                        }
                    });
                }
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn nearest_repeats_pixels() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = x.upsample_nearest(2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        let v = y.to_vec();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 2.0);
        assert_eq!(v[15], 4.0);
    }

    #[test]
    fn nearest_backward_sums_blocks() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[1, 1, 1, 2]).unwrap();
        x.set_requires_grad(true);
        let y = x.upsample_nearest(2).unwrap();
        let loss = y.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, 4.0]);
    }

    #[test]
    fn bilinear_preserves_constants_and_mean() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 5], 0.7);
        let y = x.upsample_bilinear2x().unwrap();
        assert!(y.to_vec().iter().all(|&v| (v - 0.7).abs() < 1e-12));

        let mut rng = SeededRng::new(8);
        let x = Tensor::<f64>::randn(&[2, 3, 4, 6], &mut rng);
        let y = x.upsample_bilinear2x().unwrap();
        let mx: f64 = x.to_vec().iter().sum::<f64>() / x.len() as f64;
        let my: f64 = y.to_vec().iter().sum::<f64>() / y.len() as f64;
        // half-pixel 2x keeps the interior average; edge replication only
        // perturbs the boundary ring
        assert!((mx - my).abs() < 0.05, "{mx} vs {my}");
    }

    #[test]
    fn bilinear_doubles_extents() {
        let x = Tensor::<f32>::zeros(&[2, 3, 24, 16]);
        let y = x.upsample_bilinear2x().unwrap();
        assert_eq!(y.shape(), &[2, 3, 48, 32]);
    }
}
