//! Dense n-dimensional tensors with reverse-mode automatic differentiation.
//!
//! The graph is define-by-run: every operation allocates its output tensor
//! with a fresh, strictly increasing id and (when gradients are enabled and
//! an input tracks gradient) a [`TapeNode`] holding the input handles and the
//! backward rule. Because an output id is always larger than its input ids,
//! walking the reachable nodes in descending id order replays the tape in
//! reverse recorded order, visiting every node after all of its consumers.
//!
//! Gradients accumulate additively into each tensor until cleared, so calling
//! [`Tensor::backward`] twice on the same graph doubles every gradient.

mod conv;
mod matmul;
mod ops;
mod reduce;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::scalar::Scalar;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(1) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Run `f` with gradient recording disabled (forward passes for evaluation).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    let out = f();
    GRAD_ENABLED.with(|c| c.set(prev));
    out
}

type BackwardFn<S> = Box<dyn Fn(&[S], &mut GradSink<S>)>;

/// One recorded operation: the inputs it consumed and the rule mapping the
/// output gradient to input gradient contributions.
pub(crate) struct TapeNode<S: Scalar> {
    inputs: Vec<Tensor<S>>,
    backward: BackwardFn<S>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<S>>,
    grad: RefCell<Option<Vec<S>>>,
    requires_grad: Cell<bool>,
    node: Option<TapeNode<S>>,
}

/// Shared handle to an n-dimensional array of scalars, row-major.
///
/// Cloning is cheap (reference count); data is shared. A scalar is a rank-0
/// tensor with one element.
pub struct Tensor<S: Scalar = f64> {
    inner: Rc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> Tensor<S> {
    // ---- construction ----

    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Self::build(shape.to_vec(), data, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(vec![S::zero(); shape.iter().product()], shape)
    }

    pub fn full(value: S, shape: &[usize]) -> Self {
        Self::from_vec(vec![value; shape.iter().product()], shape)
    }

    pub fn scalar(value: S) -> Self {
        Self::from_vec(vec![value], &[])
    }

    pub(crate) fn build(shape: Vec<usize>, data: Vec<S>, node: Option<TapeNode<S>>) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
                node,
            }),
        }
    }

    /// Construct the output of an op, recording the backward rule when at
    /// least one input tracks gradient and recording is enabled.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<S>,
        inputs: &[&Tensor<S>],
        backward: impl Fn(&[S], &mut GradSink<S>) + 'static,
    ) -> Self {
        let record = grad_enabled() && inputs.iter().any(|t| t.tracks_grad());
        let node = record.then(|| TapeNode {
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward) as BackwardFn<S>,
        });
        Self::build(shape, data, node)
    }

    /// Mark this tensor as a trainable leaf: it will receive gradient.
    pub fn requires_grad(self) -> Self {
        self.inner.requires_grad.set(true);
        self
    }

    /// Copy with no tape history: never receives gradient.
    pub fn detach(&self) -> Tensor<S> {
        Self::build(self.shape().to_vec(), self.to_vec(), None)
    }

    // ---- accessors ----

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.data.borrow().clone()
    }

    pub fn with_data<R>(&self, f: impl FnOnce(&[S]) -> R) -> R {
        f(&self.inner.data.borrow())
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    pub fn tracks_grad(&self) -> bool {
        self.inner.requires_grad.get() || self.inner.node.is_some()
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    /// Current accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Mutate parameter data and gradient together (optimizer steps).
    /// Returns false without calling `f` when no gradient is present.
    pub fn update_with_grad(&self, f: impl FnOnce(&mut [S], &[S])) -> bool {
        let grad = self.inner.grad.borrow();
        match grad.as_ref() {
            Some(g) => {
                f(&mut self.inner.data.borrow_mut(), g);
                true
            }
            None => false,
        }
    }

    /// Mutate parameter data in place (optimizer steps without gradient).
    pub fn update_data(&self, f: impl FnOnce(&mut [S])) {
        f(&mut self.inner.data.borrow_mut());
    }

    /// Overwrite the stored values (used by checkpoint restore).
    pub fn set_data(&self, values: &[S]) {
        let mut data = self.inner.data.borrow_mut();
        assert_eq!(values.len(), data.len(), "set_data length mismatch");
        data.copy_from_slice(values);
    }

    fn accumulate_grad(&self, contribution: &[S]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += *ci;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    // ---- backward ----

    /// Reverse-mode sweep from a scalar loss. Every reachable tensor that
    /// tracks gradient has `d loss / d tensor` added into its accumulator.
    pub fn backward(&self) {
        assert_eq!(
            self.len(),
            1,
            "backward() needs a scalar loss, got shape {:?}",
            self.shape()
        );

        // Reachable grad-tracking tensors, keyed by id.
        let mut reachable: HashMap<u64, Tensor<S>> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if reachable.contains_key(&t.id()) || !t.tracks_grad() {
                continue;
            }
            if let Some(node) = &t.inner.node {
                for input in &node.inputs {
                    stack.push(input.clone());
                }
            }
            reachable.insert(t.id(), t);
        }

        // Descending id = reverse recorded order = reverse topological order.
        let mut order: Vec<u64> = reachable.keys().copied().collect();
        order.sort_unstable_by(|a, b| b.cmp(a));

        let mut sink = GradSink::new();
        sink.bufs.insert(self.id(), vec![S::one()]);

        for id in &order {
            let t = &reachable[id];
            let Some(buf) = sink.bufs.remove(id) else {
                continue;
            };
            if let Some(node) = &t.inner.node {
                (node.backward)(&buf, &mut sink);
            }
            t.accumulate_grad(&buf);
        }
        // Leaves whose buffers were never visited above (none: every id in
        // `order` is drained), plus anything left in the sink, are flushed.
        for (id, buf) in sink.bufs.drain() {
            if let Some(t) = reachable.get(&id) {
                t.accumulate_grad(&buf);
            }
        }
    }
}

/// Per-backward-pass gradient buffers, keyed by tensor id.
pub(crate) struct GradSink<S: Scalar> {
    bufs: HashMap<u64, Vec<S>>,
}

impl<S: Scalar> GradSink<S> {
    fn new() -> Self {
        GradSink {
            bufs: HashMap::new(),
        }
    }

    /// Add `contribution` into the buffer for `t` (no-op when `t` does not
    /// track gradient).
    pub(crate) fn accumulate(&mut self, t: &Tensor<S>, contribution: &[S]) {
        if !t.tracks_grad() {
            return;
        }
        let buf = self
            .bufs
            .entry(t.id())
            .or_insert_with(|| vec![S::zero(); t.len()]);
        debug_assert_eq!(buf.len(), contribution.len());
        for (b, c) in buf.iter_mut().zip(contribution) {
            *b += *c;
        }
    }

    /// Zero-initialized mutable buffer for `t`, or None when `t` does not
    /// track gradient. Lets kernels scatter directly without a temporary.
    pub(crate) fn buf_mut(&mut self, t: &Tensor<S>) -> Option<&mut [S]> {
        if !t.tracks_grad() {
            return None;
        }
        Some(
            self.bufs
                .entry(t.id())
                .or_insert_with(|| vec![S::zero(); t.len()])
                .as_mut_slice(),
        )
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let data = self.inner.data.borrow();
        if data.len() <= 8 {
            write!(f, "Tensor{:?} {:?}", self.shape(), &data[..])
        } else {
            write!(f, "Tensor{:?} [{:?}, ...]", self.shape(), &data[..4])
        }
    }
}
