//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Every operation on a [`Tensor`] that depends on a gradient-tracking input
//! records a backward closure and its parents. [`Tensor::backward`] walks the
//! recorded graph in reverse topological order and accumulates gradients into
//! the leaves that were created with `requires_grad`. Operations whose inputs
//! are all constant record nothing, so inference pays no graph overhead.
//!
//! Graphs are built from `Rc` nodes and are confined to the thread that built
//! them. Parallel workers each bind their own leaves from a shared parameter
//! store (see [`crate::nn::ParamStore`]).

mod conv;
mod gradcheck;
mod ops;
mod real;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

pub use conv::{conv2d, conv_transpose2d};
pub use gradcheck::{finite_difference_grad, max_relative_error, relative_error};
pub use real::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("function value is not finite at index {index} (f = {value})")]
    NonFinite { index: usize, value: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

pub(crate) type BackwardFn<R> = Box<dyn Fn(&[R], &[R], &[Tensor<R>]) -> Vec<Option<Vec<R>>>>;

struct Node<R: Real> {
    data: Vec<R>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<R>>>,
    parents: Vec<Tensor<R>>,
    // (grad_out, out_data, parents) -> grad per parent
    backward: Option<BackwardFn<R>>,
}

/// A dense row-major n-dimensional array with optional gradient tracking.
pub struct Tensor<R: Real>(Rc<Node<R>>);

impl<R: Real> Clone for Tensor<R> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<R: Real> fmt::Debug for Tensor<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<R: Real> Tensor<R> {
    /// Constant tensor (no gradient tracking).
    pub fn new(data: Vec<R>, shape: &[usize]) -> Self {
        Self::leaf(data, shape, false)
    }

    /// Leaf tensor whose gradient is accumulated by [`Tensor::backward`].
    pub fn param(data: Vec<R>, shape: &[usize]) -> Self {
        Self::leaf(data, shape, true)
    }

    fn leaf(data: Vec<R>, shape: &[usize], requires_grad: bool) -> Self {
        assert_eq!(
            data.len(),
            numel(shape),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor(Rc::new(Node {
            data,
            shape: shape.to_vec(),
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(vec![R::zero(); numel(shape)], shape)
    }

    pub fn full(shape: &[usize], value: R) -> Self {
        Self::new(vec![value; numel(shape)], shape)
    }

    pub fn scalar(value: R) -> Self {
        Self::new(vec![value], &[1])
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Self {
        Self::new(data.iter().map(|&v| R::from_f64_lossy(v)).collect(), shape)
    }

    /// Result of an operation. Parents and the backward closure are kept only
    /// if some parent tracks gradients.
    pub(crate) fn from_op(
        data: Vec<R>,
        shape: Vec<usize>,
        parents: Vec<Tensor<R>>,
        backward: BackwardFn<R>,
    ) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, backward) = if requires_grad {
            (parents, Some(backward))
        } else {
            (Vec::new(), None)
        };
        Tensor(Rc::new(Node {
            data,
            shape,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            backward,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[R] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> R {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<R>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy: same values, no history, no gradient tracking.
    pub fn detach(&self) -> Self {
        Self::new(self.0.data.clone(), &self.0.shape)
    }

    fn ptr(&self) -> *const Node<R> {
        Rc::as_ptr(&self.0)
    }

    /// Back-propagates from a scalar, adding `∂self/∂leaf` into the gradient
    /// buffer of every reachable leaf with `requires_grad`. Gradients of
    /// repeated calls accumulate until [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let index: HashMap<*const Node<R>, usize> =
            order.iter().enumerate().map(|(i, t)| (t.ptr(), i)).collect();
        let mut grads: Vec<Option<Vec<R>>> = vec![None; order.len()];
        *grads.last_mut().expect("loss is in its own order") = Some(vec![R::one()]);

        for i in (0..order.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &order[i].0;
            match &node.backward {
                None => {
                    let mut slot = node.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                        None => *slot = Some(g),
                    }
                }
                Some(f) => {
                    let parent_grads = f(&g, &node.data, &node.parents);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel());
                        let j = index[&p.ptr()];
                        match grads[j].as_mut() {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                            None => grads[j] = Some(pg),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient-tracking nodes reachable from `self`, parents before children.
    fn topo_order(&self) -> Vec<Tensor<R>> {
        let mut order = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<R>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.ptr()) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in &t.0.parents {
                if p.requires_grad() && !seen.contains(&p.ptr()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]);
        let loss = x.mul(&x).sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let x = Tensor::<f64>::param(vec![1.0, -3.0], &[2]);
        let c = Tensor::scalar(5.0);
        let loss = x.scale(0.0).sum().add(&c);
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]);
        assert_eq!(x.backward(), Err(TensorError::NonScalarLoss(vec![2])));
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let x = Tensor::<f64>::param(vec![3.0], &[1]);
        let loss = x.mul(&x).sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![12.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn shared_subexpression_counts_both_paths() {
        let x = Tensor::<f64>::param(vec![2.0], &[1]);
        let y = x.mul(&x);
        let loss = y.add(&y).sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![8.0]);
    }

    #[test]
    fn constants_record_no_graph() {
        let a = Tensor::<f32>::new(vec![1.0, 2.0], &[2]);
        let b = a.mul(&a).sum();
        assert!(!b.requires_grad());
        assert!(b.0.parents.is_empty());
    }
}
