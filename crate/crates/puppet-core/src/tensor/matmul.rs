//! Matrix products. The inner kernels accumulate into their output slice so
//! the same code serves forward passes and gradient accumulation; callers
//! zero the destination when overwrite semantics are wanted.

use super::{numel, Tensor};
use crate::error::CoreError;
use crate::par;
use crate::scalar::Scalar;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// out[M,N] += a[M,K] * b[K,N]
pub(crate) fn mm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    par::for_each_chunk_mut(out, n, m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row.iter()) {
                *o += aik * bv;
            }
        }
    });
}

/// out[M,N] += a[M,K] * b[N,K]^T   (dot products of rows)
pub(crate) fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    par::for_each_chunk_mut(out, n, m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::ZERO;
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            *o += acc;
        }
    });
}

/// out[M,N] += a[R,M]^T * b[R,N]
pub(crate) fn mm_tn<T: Scalar>(a: &[T], b: &[T], r: usize, m: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), r * m);
    debug_assert_eq!(b.len(), r * n);
    debug_assert_eq!(out.len(), m * n);
    par::for_each_chunk_mut(out, n, r * m * n, |mi, row| {
        for rr in 0..r {
            let c = a[rr * m + mi];
            let b_row = &b[rr * n..(rr + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row.iter()) {
                *o += c * bv;
            }
        }
    });
}

impl<T: Scalar> Tensor<T> {
    /// 2-D matrix product: `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, r) = (self.shape(), rhs.shape());
        if s.len() != 2 || r.len() != 2 || s[1] != r[0] {
            return Err(CoreError::shape(
                "matmul",
                format!("incompatible shapes {s:?} x {r:?}"),
            ));
        }
        let (m, k, n) = (s[0], s[1], r[1]);
        let mut out = vec![T::ZERO; m * n];
        {
            let a = self.data();
            let b = rhs.data();
            mm_nn(&a, &b, m, k, n, &mut out);
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), rhs.clone()],
            move |g, _| {
                if pa.requires_grad() {
                    let b = pb.data();
                    pa.acc_grad_with(|da| mm_nt(g, &b, m, n, k, da));
                }
                if pb.requires_grad() {
                    let a = pa.data();
                    pb.acc_grad_with(|db| mm_tn(&a, g, m, k, n, db));
                }
            },
        ))
    }

    /// Batched matrix product: `[B,M,K] x [B,K,N] -> [B,M,N]`.
    pub fn bmm(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, r) = (self.shape(), rhs.shape());
        if s.len() != 3 || r.len() != 3 || s[0] != r[0] || s[2] != r[1] {
            return Err(CoreError::shape(
                "bmm",
                format!("incompatible shapes {s:?} x {r:?}"),
            ));
        }
        let (bsz, m, k, n) = (s[0], s[1], s[2], r[2]);
        let mut out = vec![T::ZERO; bsz * m * n];
        {
            let a = self.data();
            let b = rhs.data();
            let (a, b): (&[T], &[T]) = (&a, &b);
            par::for_each_chunk_mut(&mut out, m * n, numel(s) * n, |i, chunk| {
                mm_nn(&a[i * m * k..(i + 1) * m * k], &b[i * k * n..(i + 1) * k * n], m, k, n, chunk);
            });
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![bsz, m, n],
            out,
            vec![self.clone(), rhs.clone()],
            move |g, _| {
                if pa.requires_grad() {
                    let b = pb.data();
                    let b: &[T] = &b;
                    pa.acc_grad_with(|da| {
                        par::for_each_chunk_mut(da, m * k, bsz * m * k * n, |i, chunk| {
                            mm_nt(&g[i * m * n..(i + 1) * m * n], &b[i * k * n..(i + 1) * k * n], m, n, k, chunk);
                        });
                    });
                }
                if pb.requires_grad() {
                    let a = pa.data();
                    let a: &[T] = &a;
                    pb.acc_grad_with(|db| {
                        par::for_each_chunk_mut(db, k * n, bsz * m * k * n, |i, chunk| {
                            mm_tn(&a[i * m * k..(i + 1) * m * k], &g[i * m * n..(i + 1) * m * n], m, k, n, chunk);
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

    /// Naive triple-loop oracle, written independently of the kernels.
    fn oracle_mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a[i * k + kk] * b[kk * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn identity_times_a_is_a() {
        let eye = Tensor::<f64>::from_vec(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[3, 3],
        )
        .unwrap();
        let a = Tensor::<f64>::from_vec((0..9).map(|i| i as f64 - 4.0).collect(), &[3, 3]).unwrap();
        let y = eye.matmul(&a).unwrap();
        assert_eq!(y.to_vec(), a.to_vec());
    }

    #[test]
    fn zero_annihilates() {
        let a = Tensor::<f32>::from_vec((0..6).map(|i| i as f32).collect(), &[2, 3]).unwrap();
        let z = Tensor::<f32>::zeros(&[3, 4]);
        let y = a.matmul(&z).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_matches_triple_loop_oracle() {
        let mut rng = crate::rng::SeededRng::new(42);
        let a_v: Vec<f64> = rng.normal_vec(4 * 5);
        let b_v: Vec<f64> = rng.normal_vec(5 * 3);
        let a = Tensor::from_vec(a_v.clone(), &[4, 5]).unwrap();
        let b = Tensor::from_vec(b_v.clone(), &[5, 3]).unwrap();
        let y = a.matmul(&b).unwrap();
        let expect = oracle_mm(&a_v, &b_v, 4, 5, 3);
        for (got, want) in y.to_vec().iter().zip(&expect) {
            assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn matmul_gradients_match_manual() {
        // loss = sum(A x B); dA = ones x B^T, dB = A^T x ones
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::<f64>::from_vec(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        let loss = a.matmul(&b).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![11.0, 15.0, 11.0, 15.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn bmm_matches_per_batch_matmul() {
        let mut rng = crate::rng::SeededRng::new(9);
        let a = Tensor::<f64>::randn(&[3, 2, 4], &mut rng);
        let b = Tensor::<f64>::randn(&[3, 4, 5], &mut rng);
        let y = a.bmm(&b).unwrap();
        for i in 0..3 {
            let av: Vec<f64> = a.to_vec()[i * 8..(i + 1) * 8].to_vec();
            let bv: Vec<f64> = b.to_vec()[i * 20..(i + 1) * 20].to_vec();
            let expect = oracle_mm(&av, &bv, 2, 4, 5);
            let got = &y.to_vec()[i * 10..(i + 1) * 10];
            for (g, w) in got.iter().zip(&expect) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }
}
