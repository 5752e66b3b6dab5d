//! Elementwise and reduction ops.

use super::Tensor;
use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape("add", other)?;
        let out: Vec<T> = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| *x + *y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g, _| {
                if pa.requires_grad() {
                    pa.acc_grad_slice(g);
                }
                if pb.requires_grad() {
                    pb.acc_grad_slice(g);
                }
            },
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape("sub", other)?;
        let out: Vec<T> = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| *x - *y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g, _| {
                if pa.requires_grad() {
                    pa.acc_grad_slice(g);
                }
                if pb.requires_grad() {
                    pb.acc_grad_with(|dst| {
                        for (d, gi) in dst.iter_mut().zip(g) {
                            *d -= *gi;
                        }
                    });
                }
            },
        ))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape("mul", other)?;
        let out: Vec<T> = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| *x * *y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g, _| {
                if pa.requires_grad() {
                    let b = pb.data();
                    pa.acc_grad_with(|dst| {
                        for ((d, gi), bi) in dst.iter_mut().zip(g).zip(b.iter()) {
                            *d += *gi * *bi;
                        }
                    });
                }
                if pb.requires_grad() {
                    let a = pa.data();
                    pb.acc_grad_with(|dst| {
                        for ((d, gi), ai) in dst.iter_mut().zip(g).zip(a.iter()) {
                            *d += *gi * *ai;
                        }
                    });
                }
            },
        ))
    }

    pub fn scale(&self, c: f64) -> Result<Tensor<T>> {
        let c = T::from_f64(c);
        let out: Vec<T> = self.data().iter().map(|x| *x * c).collect();
        let p = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_with(|dst| {
                        for (d, gi) in dst.iter_mut().zip(g) {
                            *d += *gi * c;
                        }
                    });
                }
            },
        ))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<T>> {
        let c = T::from_f64(c);
        let out: Vec<T> = self.data().iter().map(|x| *x + c).collect();
        let p = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    p.acc_grad_slice(g);
                }
            },
        ))
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.scale(-1.0)
    }

    /// x * sigmoid(x).
    pub fn silu(&self) -> Result<Tensor<T>> {
        fn sigmoid<T: Scalar>(x: T) -> T {
            T::ONE / (T::ONE + (-x).exp())
        }
        let out: Vec<T> = self.data().iter().map(|&x| x * sigmoid(x)).collect();
        let p = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    let x = p.data();
                    p.acc_grad_with(|dst| {
                        for ((d, gi), &xi) in dst.iter_mut().zip(g).zip(x.iter()) {
                            let s = sigmoid(xi);
                            // d/dx [x*s(x)] = s(x) * (1 + x * (1 - s(x)))
                            *d += *gi * s * (T::ONE + xi * (T::ONE - s));
                        }
                    });
                }
            },
        ))
    }

    /// Clamp to [lo, hi]. Detached: used on final samples only, never inside
    /// a differentiated path.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<T> {
        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
        let out: Vec<T> = self.data().iter().map(|x| x.clamps(lo, hi)).collect();
        Tensor::from_vec(out, self.shape()).expect("same shape")
    }

    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let s: T = self.data().iter().copied().sum();
        let p = self.clone();
        Ok(Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            move |g, _| {
                if p.requires_grad() {
                    let go = g[0];
                    p.acc_grad_with(|dst| {
                        for d in dst.iter_mut() {
                            *d += go;
                        }
                    });
                }
            },
        ))
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        if self.is_empty() {
            return Err(CoreError::contract("mean_all", "empty tensor"));
        }
        let inv = 1.0 / self.len() as f64;
        self.sum_all()?.scale(inv)
    }

    /// Mean squared error between two same-shape tensors, as a scalar.
    pub fn mse(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape("mse", other)?;
        if self.is_empty() {
            return Err(CoreError::contract("mse", "empty tensor"));
        }
        let n = self.len();
        let inv_n = T::from_f64(1.0 / n as f64);
        let s: T = {
            let a = self.data();
            let b = other.data();
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| {
                    let d = *x - *y;
                    d * d
                })
                .sum()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![1],
            vec![s * inv_n],
            vec![self.clone(), other.clone()],
            move |g, _| {
                let two = T::from_f64(2.0);
                let c = g[0] * two * inv_n;
                let a = pa.data();
                let b = pb.data();
                if pa.requires_grad() {
                    pa.acc_grad_with(|dst| {
                        for ((d, x), y) in dst.iter_mut().zip(a.iter()).zip(b.iter()) {
                            *d += c * (*x - *y);
                        }
                    });
                }
                if pb.requires_grad() {
                    pb.acc_grad_with(|dst| {
                        for ((d, x), y) in dst.iter_mut().zip(a.iter()).zip(b.iter()) {
                            *d -= c * (*x - *y);
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

    fn t64(v: Vec<f64>, s: &[usize]) -> Tensor<f64> {
        let t = Tensor::from_vec(v, s).unwrap();
        t.set_requires_grad(true);
        t
    }

    #[test]
    fn add_sub_mul_values_and_grads() {
        let a = t64(vec![1.0, 2.0], &[2]);
        let b = t64(vec![3.0, -4.0], &[2]);
        let y = a.add(&b).unwrap().mul(&a.sub(&b).unwrap()).unwrap();
        // y = (a+b)(a-b) = a^2 - b^2
        assert_eq!(y.to_vec(), vec![1.0 - 9.0, 4.0 - 16.0]);
        let loss = y.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0, 4.0]);
        assert_eq!(b.grad().unwrap(), vec![-6.0, 8.0]);
    }

    #[test]
    fn mse_matches_manual() {
        let a = t64(vec![1.0, 2.0, 3.0], &[3]);
        let b = t64(vec![0.0, 0.0, 0.0], &[3]);
        let l = a.mse(&b).unwrap();
        assert!((l.item() - (1.0 + 4.0 + 9.0) / 3.0).abs() < 1e-12);
        l.backward().unwrap();
        let ga = a.grad().unwrap();
        for (i, x) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((ga[i] - 2.0 * x / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let a = Tensor::<f32>::zeros(&[2]);
        let b = Tensor::<f32>::zeros(&[3]);
        assert!(matches!(
            a.add(&b).unwrap_err(),
            CoreError::Shape { op: "add", .. }
        ));
    }

    #[test]
    fn silu_values() {
        let a = Tensor::<f64>::from_vec(vec![0.0, 1.0, -1.0], &[3]).unwrap();
        let y = a.silu().unwrap();
        let v = y.to_vec();
        assert!((v[0]).abs() < 1e-12);
        assert!((v[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_detached() {
        let a = t64(vec![-2.0, 0.5, 2.0], &[3]);
        let y = a.clamp(-1.0, 1.0);
        assert_eq!(y.to_vec(), vec![-1.0, 0.5, 1.0]);
        assert!(!y.requires_grad());
    }
}
