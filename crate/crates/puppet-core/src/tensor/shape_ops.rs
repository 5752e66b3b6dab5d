//! Shape manipulation: reshape, transpose, concat/chunk, batch indexing.

use super::{dims, numel, Tensor};
use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

impl<T: Scalar> Tensor<T> {
    /// Same data, new extents (row-major layout is unchanged).
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        if numel(new_shape) != self.len() {
            return Err(CoreError::shape(
                "reshape",
                format!("{} -> {}", dims(self.shape()), dims(new_shape)),
            ));
        }
        let p = self.clone();
        Ok(Tensor::from_op(
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_slice(g);
                }
            },
        ))
    }

    /// Swap the last two axes: `[..., M, N] -> [..., N, M]`.
    pub fn transpose_last2(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(CoreError::shape("transpose_last2", dims(s)));
        }
        let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
        let outer = self.len() / (m * n);
        let mut new_shape = s.to_vec();
        let l = new_shape.len();
        new_shape.swap(l - 2, l - 1);

        fn tr<T: Scalar>(src: &[T], dst: &mut [T], outer: usize, m: usize, n: usize) {
            for o in 0..outer {
                let s = &src[o * m * n..(o + 1) * m * n];
                let d = &mut dst[o * m * n..(o + 1) * m * n];
                for i in 0..m {
                    for j in 0..n {
                        d[j * m + i] = s[i * n + j];
                    }
                }
            }
        }

        let mut out = vec![T::ZERO; self.len()];
        tr(&self.data(), &mut out, outer, m, n);
        let p = self.clone();
        Ok(Tensor::from_op(
            new_shape,
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    let mut back = vec![T::ZERO; g.len()];
                    tr(g, &mut back, outer, n, m);
                    p.acc_grad_slice(&back);
                }
            },
        ))
    }

    /// Concatenate along `axis`. All other extents must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(CoreError::contract("concat", "no tensors given"));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(CoreError::shape(
                "concat",
                format!("axis {axis} out of rank {rank}"),
            ));
        }
        let mut axis_total = 0;
        for p in parts {
            if p.shape().len() != rank {
                return Err(CoreError::shape("concat", "rank mismatch"));
            }
            for (d, (a, b)) in p.shape().iter().zip(parts[0].shape()).enumerate() {
                if d != axis && a != b {
                    return Err(CoreError::shape(
                        "concat",
                        format!("{} vs {}", dims(p.shape()), dims(parts[0].shape())),
                    ));
                }
            }
            axis_total += p.shape()[axis];
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = axis_total;

        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let out_block = axis_total * inner;

        let mut out = vec![T::ZERO; numel(&out_shape)];
        {
            let mut offset = 0;
            for p in parts {
                let blk = p.shape()[axis] * inner;
                let d = p.data();
                for o in 0..outer {
                    out[o * out_block + offset..o * out_block + offset + blk]
                        .copy_from_slice(&d[o * blk..(o + 1) * blk]);
                }
                offset += blk;
            }
        }

        let owned: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        let blocks: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let parents = owned.clone();
        Ok(Tensor::from_op(out_shape, out, parents, move |g, _| {
            let mut offset = 0;
            for (p, &blk) in owned.iter().zip(&blocks) {
                if p.requires_grad() {
                    p.acc_grad_with(|dst| {
                        for o in 0..outer {
                            let src = &g[o * out_block + offset..o * out_block + offset + blk];
                            for (d, s) in dst[o * blk..(o + 1) * blk].iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                    });
                }
                offset += blk;
            }
        }))
    }

    /// Split into `n` equal parts along `axis`; exact inverse of
    /// [`Tensor::concat`] on equal parts.
    pub fn chunk(&self, n: usize, axis: usize) -> Result<Vec<Tensor<T>>> {
        let s = self.shape();
        if axis >= s.len() {
            return Err(CoreError::shape(
                "chunk",
                format!("axis {axis} out of rank {}", s.len()),
            ));
        }
        if n == 0 || s[axis] % n != 0 {
            return Err(CoreError::shape(
                "chunk",
                format!("{n} parts do not divide extent {}", s[axis]),
            ));
        }
        let part_axis = s[axis] / n;
        let inner: usize = s[axis + 1..].iter().product();
        let outer: usize = s[..axis].iter().product();
        let in_block = s[axis] * inner;
        let blk = part_axis * inner;
        let mut part_shape = s.to_vec();
        part_shape[axis] = part_axis;

        let data = self.data();
        let mut outs = Vec::with_capacity(n);
        for i in 0..n {
            let offset = i * blk;
            let mut part = vec![T::ZERO; outer * blk];
            for o in 0..outer {
                part[o * blk..(o + 1) * blk]
                    .copy_from_slice(&data[o * in_block + offset..o * in_block + offset + blk]);
            }
            let p = self.clone();
            outs.push(Tensor::from_op(
                part_shape.clone(),
                part,
                vec![self.clone()],
                move |g, _| {
                    if p.requires_grad() {
                        p.acc_grad_with(|dst| {
                            for o in 0..outer {
                                let d = &mut dst[o * in_block + offset..o * in_block + offset + blk];
                                for (di, gi) in d.iter_mut().zip(&g[o * blk..(o + 1) * blk]) {
                                    *di += *gi;
                                }
                            }
                        });
                    }
                },
            ));
        }
        Ok(outs)
    }

    /// Gather rows of the leading axis: `out[r] = self[index[r]]`.
    pub fn index_select_batch(&self, index: &[usize]) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.is_empty() {
            return Err(CoreError::shape("index_select_batch", "rank-0 tensor"));
        }
        let rows = s[0];
        let row_len = self.len() / rows.max(1);
        for &i in index {
            if i >= rows {
                return Err(CoreError::contract(
                    "index_select_batch",
                    format!("index {i} out of {rows} rows"),
                ));
            }
        }
        let mut out_shape = s.to_vec();
        out_shape[0] = index.len();
        let mut out = vec![T::ZERO; index.len() * row_len];
        {
            let d = self.data();
            for (r, &i) in index.iter().enumerate() {
                out[r * row_len..(r + 1) * row_len]
                    .copy_from_slice(&d[i * row_len..(i + 1) * row_len]);
            }
        }
        let p = self.clone();
        let idx = index.to_vec();
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_with(|dst| {
                        for (r, &i) in idx.iter().enumerate() {
                            let d = &mut dst[i * row_len..(i + 1) * row_len];
                            for (di, gi) in d.iter_mut().zip(&g[r * row_len..(r + 1) * row_len]) {
                                *di += *gi;
                            }
                        }
                    });
                }
            },
        ))
    }

    /// Each leading-axis row repeated `k` consecutive times.
    pub fn repeat_interleave_batch(&self, k: usize) -> Result<Tensor<T>> {
        let rows = self.shape().first().copied().unwrap_or(0);
        let index: Vec<usize> = (0..rows).flat_map(|i| core::iter::repeat(i).take(k)).collect();
        self.index_select_batch(&index)
    }

    /// The whole tensor tiled `k` times along the leading axis.
    pub fn tile_batch(&self, k: usize) -> Result<Tensor<T>> {
        let rows = self.shape().first().copied().unwrap_or(0);
        let index: Vec<usize> = (0..k).flat_map(|_| 0..rows).collect();
        self.index_select_batch(&index)
    }

    /// `[B,C,H,W] -> [B, H*W, C]` sequence layout for attention.
    pub fn nchw_to_nlc(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(CoreError::shape("nchw_to_nlc", dims(s)));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        self.reshape(&[b, c, h * w])?.transpose_last2()
    }

    /// Inverse of [`Tensor::nchw_to_nlc`].
    pub fn nlc_to_nchw(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 3 || s[1] != h * w {
            return Err(CoreError::shape(
                "nlc_to_nchw",
                format!("{} with h*w={}", dims(s), h * w),
            ));
        }
        let (b, c) = (s[0], s[2]);
        self.transpose_last2()?.reshape(&[b, c, h, w])
    }
}
