//! Dense f64 tensor with a reverse-mode autodiff graph.
//!
//! Every differentiable operation produces a new `Tensor` holding the result
//! plus a recorded backward closure and handles to its parents. `backward()`
//! walks the graph in reverse topological order, propagating gradients
//! through per-call scratch buffers; only leaf tensors (inputs and
//! parameters created with `requires_grad`) keep a persistent `grad` buffer,
//! which accumulates additively across backward calls.
//!
//! Data is mutably shared behind `Rc<RefCell<..>>` so that the optimizer can
//! update parameters in place while model layers keep cheap handles. The
//! graph is single-threaded by design; independent model instances can live
//! on independent threads.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{shape_str, Result, TensorError};
use crate::rng::CounterRng;

/// Scratch gradient buffers for one backward pass, keyed by node identity.
pub struct GradStore {
    grads: HashMap<usize, Vec<f64>>,
}

impl GradStore {
    fn new() -> Self {
        GradStore {
            grads: HashMap::new(),
        }
    }

    /// Mutable gradient buffer of `t`, created zero-filled on first access.
    pub fn entry(&mut self, t: &Tensor) -> &mut Vec<f64> {
        self.grads
            .entry(t.node_id())
            .or_insert_with(|| vec![0.0; t.numel()])
    }

    fn take(&mut self, t: &Tensor) -> Option<Vec<f64>> {
        self.grads.remove(&t.node_id())
    }
}

/// Backward closure: receives the output gradient and accumulates into the
/// parents' entries in the store.
pub type BackwardFn = Box<dyn Fn(&[f64], &mut GradStore)>;

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

pub(crate) struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

/// Shared handle to a tensor. Cloning is O(1) and aliases the same storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={}, requires_grad={})",
            shape_str(&self.inner.shape),
            self.inner.requires_grad
        )
    }
}

impl Tensor {
    fn make(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                node,
            }),
        }
    }

    /// Constant (non-differentiable) tensor. Rejects NaN/Inf.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                expected: format!("{} elements for {}", numel, shape_str(shape)),
                got: format!("{} elements", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                context: format!("from_vec (value {bad})"),
            });
        }
        Ok(Tensor::make(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that participates in autodiff (parameter or probed input).
    pub fn leaf(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(Tensor::make(t.inner.shape.clone(), t.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::make(shape.to_vec(), vec![0.0; shape.iter().product()], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::make(shape.to_vec(), vec![value; shape.iter().product()], false, None)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::make(vec![1], vec![value], false, None)
    }

    /// Kaiming-uniform initialized leaf: U(-b, b) with b = sqrt(6 / fan_in).
    pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut CounterRng) -> Tensor {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let data: Vec<f64> = (0..shape.iter().product())
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        Tensor::make(shape.to_vec(), data, true, None)
    }

    pub fn zeros_leaf(shape: &[usize]) -> Tensor {
        Tensor::make(shape.to_vec(), vec![0.0; shape.iter().product()], true, None)
    }

    /// Extension point for custom differentiable operations: `backward`
    /// receives the output gradient and must accumulate into each parent's
    /// `GradStore` entry. The node is recorded only if some parent needs it.
    pub fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let node = if requires_grad {
            Some(Node { parents, backward })
        } else {
            None
        };
        Tensor::make(shape, data, requires_grad, node)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    /// Borrow the raw data. Hold only briefly; optimizer steps borrow mutably.
    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on non-scalar");
        self.inner.data.borrow()[0]
    }

    /// Overwrite data in place (optimizer / checkpoint load). Shape must match.
    pub fn set_data(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "set_data",
                expected: shape_str(self.shape()),
                got: format!("{} elements", values.len()),
            });
        }
        self.inner.data.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.data.borrow_mut());
    }

    /// Persistent accumulated gradient of a leaf, if any backward reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    fn node_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    /// Backprop seeding the output gradient with ones.
    pub fn backward(&self) {
        self.backward_seeded(&vec![1.0; self.numel()]);
    }

    /// Backprop with an explicit output gradient. Gradients of leaf tensors
    /// accumulate additively into their persistent `grad` buffers.
    pub fn backward_seeded(&self, seed: &[f64]) {
        assert_eq!(seed.len(), self.numel(), "backward seed shape mismatch");
        if !self.requires_grad() {
            return;
        }
        let order = self.topo_order();
        let mut store = GradStore::new();
        store.entry(self).copy_from_slice(seed);
        for t in order.iter().rev() {
            let Some(node) = t.inner.node.as_ref() else {
                continue;
            };
            let Some(out_grad) = store.take(t) else {
                continue;
            };
            (node.backward)(&out_grad, &mut store);
        }
        // Fold scratch gradients of leaves into their persistent buffers.
        for t in order.iter() {
            if t.inner.node.is_some() || !t.requires_grad() {
                continue;
            }
            if let Some(g) = store.take(t) {
                let mut slot = t.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g.iter()) {
                            *a += b;
                        }
                    }
                    None => *slot = Some(g),
                }
            }
        }
    }

    /// Post-order DFS over the requires-grad subgraph (iterative; graphs can
    /// be thousands of nodes deep across a training step).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashMap<usize, ()> = HashMap::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        while let Some((t, child_idx)) = stack.pop() {
            if child_idx == 0 {
                if visited.contains_key(&t.node_id()) {
                    continue;
                }
                visited.insert(t.node_id(), ());
            }
            let parents: &[Tensor] = t.inner.node.as_ref().map_or(&[], |n| &n.parents);
            let mut next = child_idx;
            while next < parents.len() && visited.contains_key(&parents[next].node_id()) {
                next += 1;
            }
            if next < parents.len() {
                let child = parents[next].clone();
                stack.push((t, next + 1));
                if child.requires_grad() {
                    stack.push((child, 0));
                }
            } else {
                order.push(t);
            }
        }
        order
    }
}
