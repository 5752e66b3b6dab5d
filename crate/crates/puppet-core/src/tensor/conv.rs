//! 2-D convolution (cross-correlation convention) via im2col + matmul.
//!
//! The backward pass recomputes the im2col buffer instead of keeping it
//! alive in the graph; at training shapes the recompute is far cheaper than
//! holding one scratch matrix per conv site per step.

use super::matmul::{mm_nn, mm_nt, mm_tn};
use super::Tensor;
use crate::error::CoreError;
use crate::par;
use crate::scalar::Scalar;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvDims {
    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

fn out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if k > padded {
        return Err(CoreError::shape(
            "conv2d",
            format!("kernel {k} exceeds padded extent {padded}"),
        ));
    }
    if (padded - k) % stride != 0 {
        return Err(CoreError::shape(
            "conv2d",
            format!("non-integral output extent: ({input} + 2*{pad} - {k}) % {stride} != 0"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// col[(c*kh*kw + ki*kw + kj), oy*ow + ox] = x[c, oy*s + ki - p, ox*s + kj - p]
fn im2col<T: Scalar>(x: &[T], d: &ConvDims, col: &mut [T]) {
    let ConvDims {
        c_in,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        oh,
        ow,
        ..
    } = *d;
    for c in 0..c_in {
        let x_plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut col[(c * kh * kw + ki * kw + kj) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        for v in dst.iter_mut() {
                            *v = T::ZERO;
                        }
                        continue;
                    }
                    let src_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Transpose of im2col: scatter-add `col` back into an image-shaped buffer.
fn col2im_add<T: Scalar>(col: &[T], d: &ConvDims, x_grad: &mut [T]) {
    let ConvDims {
        c_in,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        oh,
        ow,
        ..
    } = *d;
    for c in 0..c_in {
        let g_plane = &mut x_grad[c * h * w..(c + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &col[(c * kh * kw + ki * kw + kj) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut g_plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x: [B,C,H,W]` with `w: [O,C,kh,kw]`.
///
/// `H' = (H + 2*pad - kh)/stride + 1`; a non-integral extent is a dimension
/// error.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(CoreError::shape(
            "conv2d",
            format!("want x[B,C,H,W], w[O,C,kh,kw]; got {xs:?}, {ws:?}"),
        ));
    }
    if xs[1] != ws[1] {
        return Err(CoreError::shape(
            "conv2d",
            format!("channel mismatch: x has {}, w wants {}", xs[1], ws[1]),
        ));
    }
    if stride == 0 {
        return Err(CoreError::contract("conv2d", "stride must be >= 1"));
    }
    if let Some(b) = bias {
        if b.shape() != [ws[0]] {
            return Err(CoreError::shape(
                "conv2d",
                format!("bias shape {:?} vs O={}", b.shape(), ws[0]),
            ));
        }
    }
    let d = ConvDims {
        batch: xs[0],
        c_in: xs[1],
        h: xs[2],
        w: xs[3],
        c_out: ws[0],
        kh: ws[2],
        kw: ws[3],
        stride,
        pad,
        oh: out_extent(xs[2], ws[2], stride, pad)?,
        ow: out_extent(xs[3], ws[3], stride, pad)?,
    };

    let out_shape = vec![d.batch, d.c_out, d.oh, d.ow];
    let mut out = vec![T::ZERO; d.batch * d.c_out * d.out_plane()];
    {
        let xd = x.data();
        let wd = w.data();
        let bd = bias.map(|b| b.to_vec());
        let (xs_, ws_): (&[T], &[T]) = (&xd, &wd);
        let img = d.c_in * d.h * d.w;
        let work = d.batch * d.c_out * d.out_plane() * d.col_rows();
        par::for_each_chunk_mut(&mut out, d.c_out * d.out_plane(), work, |b, chunk| {
            let mut col = vec![T::ZERO; d.col_rows() * d.out_plane()];
            im2col(&xs_[b * img..(b + 1) * img], &d, &mut col);
            mm_nn(ws_, &col, d.c_out, d.col_rows(), d.out_plane(), chunk);
            if let Some(bv) = &bd {
                for (o, &bo) in bv.iter().enumerate() {
                    for v in chunk[o * d.out_plane()..(o + 1) * d.out_plane()].iter_mut() {
                        *v += bo;
                    }
                }
            }
        });
    }

    let px = x.clone();
    let pw = w.clone();
    let pb = bias.cloned();
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(out_shape, out, parents, move |g, _| {
        let img = d.c_in * d.h * d.w;
        let gplane = d.c_out * d.out_plane();
        if px.requires_grad() {
            let wd = pw.data();
            let wd: &[T] = &wd;
            px.acc_grad_with(|dx| {
                let work = d.batch * d.col_rows() * d.out_plane() * d.c_out;
                par::for_each_chunk_mut(dx, img, work, |b, dx_img| {
                    let mut dcol = vec![T::ZERO; d.col_rows() * d.out_plane()];
                    mm_tn(
                        wd,
                        &g[b * gplane..(b + 1) * gplane],
                        d.c_out,
                        d.col_rows(),
                        d.out_plane(),
                        &mut dcol,
                    );
                    col2im_add(&dcol, &d, dx_img);
                });
            });
        }
        if pw.requires_grad() {
            let xd = px.data();
            pw.acc_grad_with(|dw| {
                let mut col = vec![T::ZERO; d.col_rows() * d.out_plane()];
                for b in 0..d.batch {
                    im2col(&xd[b * img..(b + 1) * img], &d, &mut col);
                    mm_nt(
                        &g[b * gplane..(b + 1) * gplane],
                        &col,
                        d.c_out,
                        d.out_plane(),
                        d.col_rows(),
                        dw,
                    );
                }
            });
        }
        if let Some(b) = &pb {
            if b.requires_grad() {
                b.acc_grad_with(|db| {
                    for bi in 0..d.batch {
                        for o in 0..d.c_out {
                            let s: T = g[bi * gplane + o * d.out_plane()..][..d.out_plane()]
                                .iter()
                                .copied()
                                .sum();
                            db[o] += s;
                        }
                    }
                });
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Direct-summation oracle, no im2col.
    fn oracle_conv(
        x: &[f64],
        w: &[f64],
        bias: &[f64],
        (b, c, h, wi): (usize, usize, usize, usize),
        (o, kh, kw): (usize, usize, usize),
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wi + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; b * o * oh * ow];
        for bi in 0..b {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..c {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wi as isize {
                                        continue;
                                    }
                                    acc += x[((bi * c + ic) * h + iy as usize) * wi + ix as usize]
                                        * w[((oc * c + ic) * kh + ki) * kw + kj];
                                }
                            }
                        }
                        out[((bi * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let x = Tensor::<f64>::from_vec((0..2 * 3 * 4).map(|i| i as f64).collect(), &[1, 2, 3, 4])
            .unwrap();
        // 1x1 kernels selecting each input channel
        let w = Tensor::<f64>::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2, 1, 1]).unwrap();
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = SeededRng::new(1);
        let x = Tensor::<f32>::randn(&[2, 3, 5, 5], &mut rng);
        let w = Tensor::<f32>::zeros(&[4, 3, 3, 3]);
        let b = Tensor::<f32>::zeros(&[4]);
        let y = conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), &[2, 4, 5, 5]);
    }

    #[test]
    fn random_case_matches_direct_summation() {
        let mut rng = SeededRng::new(7);
        let dims = (2usize, 3usize, 6usize, 5usize);
        let k = (4usize, 3usize, 3usize);
        let x_v: Vec<f64> = rng.normal_vec(dims.0 * dims.1 * dims.2 * dims.3);
        let w_v: Vec<f64> = rng.normal_vec(k.0 * dims.1 * k.1 * k.2);
        let b_v: Vec<f64> = rng.normal_vec(k.0);
        let x = Tensor::from_vec(x_v.clone(), &[dims.0, dims.1, dims.2, dims.3]).unwrap();
        let w = Tensor::from_vec(w_v.clone(), &[k.0, dims.1, k.1, k.2]).unwrap();
        let b = Tensor::from_vec(b_v.clone(), &[k.0]).unwrap();
        for (stride, pad) in [(1usize, 1usize), (2, 1), (1, 0)] {
            let y = conv2d(&x, &w, Some(&b), stride, pad).unwrap();
            let want = oracle_conv(&x_v, &w_v, &b_v, dims, k, stride, pad);
            assert_eq!(y.len(), want.len());
            for (g, e) in y.to_vec().iter().zip(&want) {
                assert!((g - e).abs() <= 1e-5, "stride {stride} pad {pad}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn non_integral_extent_is_dimension_error() {
        let x = Tensor::<f32>::zeros(&[1, 1, 5, 5]);
        let w = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(conv2d(&x, &w, None, 2, 0).is_err());
    }

    #[test]
    fn oversized_kernel_is_dimension_error() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        let w = Tensor::<f32>::zeros(&[1, 1, 5, 5]);
        assert!(conv2d(&x, &w, None, 1, 0).is_err());
    }
}
