//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! The graph is micrograd-style: every op allocates an output tensor that
//! holds `Rc` handles to its parents plus a boxed backward closure. Calling
//! [`Tensor::backward`] on a scalar loss topologically sorts the reachable
//! graph and accumulates `dLoss/dParent` into each node's `grad` buffer.
//!
//! Tensors are immutable once created, except for explicit in-place
//! optimizer updates on leaf parameters. Graph recording is skipped when no
//! input requires a gradient or inside [`no_grad`], which is what samplers
//! use to avoid retaining activations.

mod attention;
mod conv;
mod elementwise;
mod matmul;
mod norm;
mod resize;
mod shape_ops;

pub use conv::conv2d;

use crate::error::CoreError;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::Result;
use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Cell, Ref, RefCell};
use core::sync::atomic::{AtomicBool, Ordering};

static GRAD_ENABLED: AtomicBool = AtomicBool::new(true);

fn grad_enabled() -> bool {
    GRAD_ENABLED.load(Ordering::Relaxed)
}

/// Run `f` without recording any computation graph.
///
/// Training code never nests this; the flag is process-global and assumes
/// graph construction happens on one thread at a time.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.swap(false, Ordering::Relaxed);
    let out = f();
    GRAD_ENABLED.store(prev, Ordering::Relaxed);
    out
}

type BackwardFn<T> = Box<dyn Fn(&[T], &[T])>;

pub(crate) struct Inner<T: Scalar> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    requires_grad: Cell<bool>,
    grad: RefCell<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Dense n-dimensional array of [`Scalar`]s with optional gradient support.
pub struct Tensor<T: Scalar>(Rc<Inner<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> core::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "Tensor{:?}[req_grad={}]",
            self.shape(),
            self.requires_grad()
        )
    }
}

impl<T: Scalar> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>) -> Tensor<T> {
        Tensor(Rc::new(Inner {
            shape,
            data: RefCell::new(data),
            requires_grad: Cell::new(false),
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Record an op output. The backward closure receives
    /// `(grad_wrt_output, output_data)` and must accumulate into the
    /// parents' grads. Recording is skipped when no parent needs it.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T], &[T]) + 'static,
    ) -> Tensor<T> {
        debug_assert_eq!(numel(&shape), data.len());
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        Tensor(Rc::new(Inner {
            shape,
            data: RefCell::new(data),
            requires_grad: Cell::new(record),
            grad: RefCell::new(None),
            parents: if record { parents } else { Vec::new() },
            backward: if record { Some(Box::new(backward)) } else { None },
        }))
    }

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != data.len() {
            return Err(CoreError::shape(
                "from_vec",
                format!("shape {shape:?} wants {} elements, got {}", numel(shape), data.len()),
            ));
        }
        Ok(Tensor::leaf(shape.to_vec(), data))
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        Tensor::leaf(shape.to_vec(), vec![T::ZERO; numel(shape)])
    }

    pub fn full(shape: &[usize], v: T) -> Tensor<T> {
        Tensor::leaf(shape.to_vec(), vec![v; numel(shape)])
    }

    pub fn scalar(v: T) -> Tensor<T> {
        Tensor::leaf(vec![1], vec![v])
    }

    /// Standard-normal entries drawn from `rng`.
    pub fn randn(shape: &[usize], rng: &mut SeededRng) -> Tensor<T> {
        Tensor::leaf(shape.to_vec(), rng.normal_vec(numel(shape)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    /// Value of a 1-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.len(), 1);
        self.0.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad.get()
    }

    /// Mark a leaf as a differentiation root (parameters do this).
    pub fn set_requires_grad(&self, yes: bool) {
        self.0.requires_grad.set(yes);
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrite the data of a leaf tensor in place (optimizer updates).
    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(self.0.data.borrow_mut().as_mut_slice());
    }

    /// Copy of this tensor detached from the graph.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::leaf(self.0.shape.clone(), self.to_vec())
    }

    pub(crate) fn acc_grad_with(&self, f: impl FnOnce(&mut [T])) {
        let mut slot = self.0.grad.borrow_mut();
        let g = slot.get_or_insert_with(|| vec![T::ZERO; self.len()]);
        f(g.as_mut_slice());
    }

    pub(crate) fn acc_grad_slice(&self, delta: &[T]) {
        self.acc_grad_with(|g| {
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += *di;
            }
        });
    }

    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.0) as *const () as usize
    }

    /// Reverse-mode differentiation from a scalar loss: accumulates
    /// `dLoss/dNode` into every reachable node that requires a gradient.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(CoreError::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape()),
            ));
        }
        let order = self.topo_order();
        self.acc_grad_with(|g| g[0] = T::ONE);
        for node in order.iter().rev() {
            if let Some(bw) = &node.0.backward {
                let grad = node.0.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    let data = node.0.data.borrow();
                    bw(g, &data);
                }
            }
        }
        Ok(())
    }

    /// Parents-first topological order of the reachable graph.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut visited = alloc::collections::BTreeSet::new();
        let mut order = Vec::new();
        // Iterative post-order DFS; graphs are deep during training steps.
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, child)) = stack.pop() {
            if child < node.0.parents.len() {
                let parent = node.0.parents[child].clone();
                stack.push((node, child + 1));
                if visited.insert(parent.ptr_id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }

    /// Error if any element is NaN or Inf. `context` names the producing
    /// computation so training aborts carry actionable provenance.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        let data = self.data();
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::numeric(format!(
                    "{context}: non-finite value {v} at flat index {i} (shape {:?})",
                    self.shape()
                )));
            }
        }
        Ok(())
    }

    /// Max |a - b| over all elements; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        self.check_same_shape("max_abs_diff", other)?;
        let a = self.data();
        let b = other.data();
        let mut m = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = (x.to_f64() - y.to_f64()).abs();
            if d > m {
                m = d;
            }
        }
        Ok(m)
    }

    pub(crate) fn check_same_shape(&self, op: &'static str, other: &Tensor<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(CoreError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Pretty name for error messages.
pub(crate) fn dims(shape: &[usize]) -> String {
    format!("{shape:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_count() {
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[3]).is_err());
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        assert_eq!(t.shape(), &[3]);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn backward_requires_scalar() {
        let t = Tensor::<f32>::zeros(&[2, 2]);
        let err = t.backward().unwrap_err();
        assert!(matches!(err, CoreError::Contract { .. }));
    }

    #[test]
    fn sum_backward_is_ones() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        x.set_requires_grad(true);
        let loss = x.sum_all().unwrap();
        assert_eq!(loss.item(), 10.0);
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn grad_is_none_for_unrelated_leaf() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        x.set_requires_grad(true);
        let y = Tensor::<f64>::from_vec(vec![5.0, 6.0], &[2]).unwrap();
        y.set_requires_grad(true);
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert!(y.grad().is_none(), "independent loss leaves grad at zero");
    }

    #[test]
    fn no_grad_skips_recording() {
        let x = Tensor::<f32>::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        x.set_requires_grad(true);
        let y = no_grad(|| x.scale(2.0).unwrap());
        assert!(!y.requires_grad());
        assert!(y.0.backward.is_none());
    }

    #[test]
    fn validate_finite_flags_nan() {
        let t = Tensor::<f32>::from_vec(vec![1.0, f32::NAN], &[2]).unwrap();
        let err = t.validate_finite("unit").unwrap_err();
        assert!(err.is_numeric());
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // loss = sum(x*2 + x*3) => dloss/dx = 5 per element
        let x = Tensor::<f64>::from_vec(vec![1.0, -1.0], &[2]).unwrap();
        x.set_requires_grad(true);
        let a = x.scale(2.0).unwrap();
        let b = x.scale(3.0).unwrap();
        let s = a.add(&b).unwrap();
        let loss = s.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![5.0, 5.0]);
    }
}
