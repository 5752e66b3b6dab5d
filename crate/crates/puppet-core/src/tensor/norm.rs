//! Group normalization and softmax.

use super::Tensor;
use crate::error::CoreError;
use crate::par;
use crate::scalar::Scalar;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

fn group_stats<T: Scalar>(chunk: &[T], eps: T) -> (T, T) {
    let m = T::from_f64(chunk.len() as f64);
    let mean = chunk.iter().copied().sum::<T>() / m;
    let var = chunk
        .iter()
        .map(|&v| {
            let d = v - mean;
            d * d
        })
        .sum::<T>()
        / m;
    (mean, T::ONE / (var + eps).sqrt())
}

impl<T: Scalar> Tensor<T> {
    /// GroupNorm over `[B,C,H,W]`: statistics per (sample, channel group),
    /// then per-channel affine `gamma, beta`.
    pub fn group_norm(
        &self,
        groups: usize,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        eps: f64,
    ) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(CoreError::shape(
                "group_norm",
                format!("want [B,C,H,W], got {s:?}"),
            ));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        if groups == 0 || c % groups != 0 {
            return Err(CoreError::shape(
                "group_norm",
                format!("{groups} groups do not divide {c} channels"),
            ));
        }
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(CoreError::shape(
                "group_norm",
                format!("affine shapes {:?}/{:?} vs C={c}", gamma.shape(), beta.shape()),
            ));
        }
        let cg = c / groups;
        let glen = cg * h * w;
        let epst = T::from_f64(eps);

        let mut out = vec![T::ZERO; self.len()];
        {
            let x = self.data();
            let ga = gamma.data();
            let be = beta.data();
            let (x, ga, be): (&[T], &[T], &[T]) = (&x, &ga, &be);
            par::for_each_chunk_mut(&mut out, glen, self.len(), |gi, chunk| {
                let base = gi * glen;
                let xin = &x[base..base + glen];
                let (mean, inv_s) = group_stats(xin, epst);
                let g_idx = gi % groups;
                for ch in 0..cg {
                    let cidx = g_idx * cg + ch;
                    let (gam, bet) = (ga[cidx], be[cidx]);
                    for (o, &v) in chunk[ch * h * w..(ch + 1) * h * w]
                        .iter_mut()
                        .zip(&xin[ch * h * w..(ch + 1) * h * w])
                    {
                        *o = gam * (v - mean) * inv_s + bet;
                    }
                }
            });
        }

        let px = self.clone();
        let pg = gamma.clone();
        let pb = beta.clone();
        Ok(Tensor::from_op(
            s.to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g, _| {
                let x = px.data();
                let ga = pg.data();
                let (x, ga): (&[T], &[T]) = (&x, &ga);
                let n_groups_total = b * groups;
                if px.requires_grad() {
                    px.acc_grad_with(|dx| {
                        par::for_each_chunk_mut(dx, glen, n_groups_total * glen, |gi, dchunk| {
                            let base = gi * glen;
                            let xin = &x[base..base + glen];
                            let gout = &g[base..base + glen];
                            let (mean, inv_s) = group_stats(xin, epst);
                            let g_idx = gi % groups;
                            let m = T::from_f64(glen as f64);
                            // mean(dxhat) and mean(dxhat * xhat) over the group
                            let mut s1 = T::ZERO;
                            let mut s2 = T::ZERO;
                            for ch in 0..cg {
                                let gam = ga[g_idx * cg + ch];
                                for (ii, &go) in gout[ch * h * w..(ch + 1) * h * w].iter().enumerate()
                                {
                                    let xhat = (xin[ch * h * w + ii] - mean) * inv_s;
                                    let dxhat = go * gam;
                                    s1 += dxhat;
                                    s2 += dxhat * xhat;
                                }
                            }
                            s1 = s1 / m;
                            s2 = s2 / m;
                            for ch in 0..cg {
                                let gam = ga[g_idx * cg + ch];
                                for ii in 0..h * w {
                                    let idx = ch * h * w + ii;
                                    let xhat = (xin[idx] - mean) * inv_s;
                                    let dxhat = gout[idx] * gam;
                                    dchunk[idx] += inv_s * (dxhat - s1 - xhat * s2);
                                }
                            }
                        });
                    });
                }
                if pg.requires_grad() || pb.requires_grad() {
                    let mut dgamma = vec![T::ZERO; c];
                    let mut dbeta = vec![T::ZERO; c];
                    for gi in 0..n_groups_total {
                        let base = gi * glen;
                        let xin = &x[base..base + glen];
                        let gout = &g[base..base + glen];
                        let (mean, inv_s) = group_stats(xin, epst);
                        let g_idx = gi % groups;
                        for ch in 0..cg {
                            let cidx = g_idx * cg + ch;
                            for ii in 0..h * w {
                                let idx = ch * h * w + ii;
                                let xhat = (xin[idx] - mean) * inv_s;
                                dgamma[cidx] += gout[idx] * xhat;
                                dbeta[cidx] += gout[idx];
                            }
                        }
                    }
                    if pg.requires_grad() {
                        pg.acc_grad_slice(&dgamma);
                    }
                    if pb.requires_grad() {
                        pb.acc_grad_slice(&dbeta);
                    }
                }
            },
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax_lastdim(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        let n = *s.last().ok_or_else(|| {
            CoreError::shape("softmax_lastdim", "rank-0 tensor")
        })?;
        if n == 0 {
            return Err(CoreError::shape("softmax_lastdim", "empty last axis"));
        }
        let mut out = vec![T::ZERO; self.len()];
        {
            let x = self.data();
            let x: &[T] = &x;
            par::for_each_chunk_mut(&mut out, n, self.len() * 2, |r, row| {
                let xin = &x[r * n..(r + 1) * n];
                let mut mx = xin[0];
                for &v in xin.iter() {
                    mx = mx.maxs(v);
                }
                let mut sum = T::ZERO;
                for (o, &v) in row.iter_mut().zip(xin) {
                    let e = (v - mx).exp();
                    *o = e;
                    sum += e;
                }
                let inv = T::ONE / sum;
                for o in row.iter_mut() {
                    *o *= inv;
                }
            });
        }
        let p = self.clone();
        Ok(Tensor::from_op(
            s.to_vec(),
            out,
            vec![self.clone()],
            move |g, y| {
                if p.requires_grad() {
                    p.acc_grad_with(|dx| {
                        par::for_each_chunk_mut(dx, n, y.len() * 2, |r, drow| {
                            let yr = &y[r * n..(r + 1) * n];
                            let gr = &g[r * n..(r + 1) * n];
                            let mut dot = T::ZERO;
                            for (&gi, &yi) in gr.iter().zip(yr) {
                                dot += gi * yi;
                            }
                            for ((d, &gi), &yi) in drow.iter_mut().zip(gr).zip(yr) {
                                *d += yi * (gi - dot);
                            }
                        });
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
    fn softmax_rows_sum_to_one_and_nonnegative() {
        let mut rng = SeededRng::new(3);
        let x = Tensor::<f64>::randn(&[7, 11], &mut rng);
        let y = x.softmax_lastdim().unwrap();
        let v = y.to_vec();
        for r in 0..7 {
            let row = &v[r * 11..(r + 1) * 11];
            assert!(row.iter().all(|&p| p >= 0.0));
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-6, "row sum {s}");
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let x = Tensor::<f32>::from_vec(vec![1000.0, 1000.0, -1000.0], &[1, 3]).unwrap();
        let y = x.softmax_lastdim().unwrap();
        y.validate_finite("softmax").unwrap();
        let v = y.to_vec();
        assert!((v[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn group_norm_normalizes_groups() {
        let mut rng = SeededRng::new(5);
        let x = Tensor::<f64>::randn(&[2, 4, 3, 3], &mut rng);
        let gamma = Tensor::full(&[4], 1.0);
        let beta = Tensor::zeros(&[4]);
        let y = x.group_norm(2, &gamma, &beta, 1e-5).unwrap();
        let v = y.to_vec();
        // each (sample, group) block of 2*9 entries should be ~zero-mean unit-var
        for blk in 0..4 {
            let seg = &v[blk * 18..(blk + 1) * 18];
            let mean: f64 = seg.iter().sum::<f64>() / 18.0;
            let var: f64 = seg.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / 18.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn group_norm_bad_groups_is_error() {
        let x = Tensor::<f32>::zeros(&[1, 5, 2, 2]);
        let gamma = Tensor::full(&[5], 1.0);
        let beta = Tensor::zeros(&[5]);
        assert!(x.group_norm(2, &gamma, &beta, 1e-5).is_err());
    }
}
