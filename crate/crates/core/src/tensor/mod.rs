//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] owns every node of one computation; a [`Tensor`] is a cheap
//! handle (tape + node index). Ops record themselves on the tape during the
//! forward pass; [`Tensor::backward`] replays adjoints in reverse node order
//! and fills gradient buffers for every tracked node.
//!
//! Shape violations are programming errors and panic with the op name and
//! both shapes. The tape is single-writer: one tape per training thread.

mod adjoint;
pub mod kernels;
mod ops;

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::scalar::Scalar;

/// Index of a node on its tape.
pub type NodeId = usize;

/// Recorded primitive. Input node ids are always smaller than the output's,
/// so a single reverse sweep visits consumers before producers.
#[derive(Debug, Clone)]
pub(crate) enum Op<S: Scalar> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, S),
    AddConst(NodeId),
    Matmul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    SumAxis {
        a: NodeId,
        axis: usize,
    },
    MeanAxis {
        a: NodeId,
        axis: usize,
    },
    Gap(NodeId),
    BilinearResize(NodeId),
    Concat {
        parts: Vec<NodeId>,
    },
    Slice {
        a: NodeId,
        start: usize,
    },
    BroadcastSpatial(NodeId),
    ReflectPad {
        a: NodeId,
        pad: usize,
    },
    ClampMax {
        a: NodeId,
        cap: S,
    },
    Reshape(NodeId),
}

pub(crate) struct Node<S: Scalar> {
    pub data: Vec<S>,
    pub shape: Vec<usize>,
    pub op: Op<S>,
    /// True when gradients must flow through this node (a requires-grad
    /// leaf, or any op with a tracked input).
    pub tracked: bool,
    pub grad: Option<Vec<S>>,
}

pub(crate) struct TapeInner<S: Scalar> {
    pub nodes: Vec<Node<S>>,
    pub backward_ran: bool,
}

/// Single-threaded computation tape. Cloning shares the same recording.
pub struct Tape<S: Scalar> {
    inner: Rc<RefCell<TapeInner<S>>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                backward_ran: false,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register a leaf tensor. `requires_grad` marks it as a parameter whose
    /// gradient buffer is populated by `backward`.
    pub fn leaf(&self, data: Vec<S>, shape: &[usize], requires_grad: bool) -> Tensor<S> {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "leaf: product(shape)={} does not match data length {} (shape {:?})",
            numel,
            data.len(),
            shape
        );
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "leaf: non-finite input value"
        );
        self.push(data, shape.to_vec(), Op::Leaf, requires_grad)
    }

    /// Leaf that never tracks gradients (inputs, targets, fixed maps).
    pub fn constant(&self, data: Vec<S>, shape: &[usize]) -> Tensor<S> {
        self.leaf(data, shape, false)
    }

    /// Trainable leaf.
    pub fn param(&self, data: Vec<S>, shape: &[usize]) -> Tensor<S> {
        self.leaf(data, shape, true)
    }

    pub fn scalar(&self, value: S) -> Tensor<S> {
        self.constant(vec![value], &[])
    }

    pub fn zeros(&self, shape: &[usize]) -> Tensor<S> {
        let numel = shape.iter().product();
        self.constant(vec![S::ZERO; numel], shape)
    }

    /// Drop all gradients and allow another backward pass.
    pub fn reset_gradients(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.backward_ran = false;
        for node in &mut inner.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(
        &self,
        data: Vec<S>,
        shape: Vec<usize>,
        op: Op<S>,
        tracked: bool,
    ) -> Tensor<S> {
        // Debug builds reject non-finite values the moment an op emits
        // them; release builds rely on the loss-level checks.
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by {op:?}"
        );
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            data,
            shape,
            op,
            tracked,
            grad: None,
        });
        Tensor {
            tape: self.clone(),
            id,
        }
    }

    pub(crate) fn borrow(&self) -> Ref<'_, TapeInner<S>> {
        self.inner.borrow()
    }

    fn same_tape(&self, other: &Tape<S>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

/// Handle to one tape node. Cloning is O(1).
pub struct Tensor<S: Scalar> {
    tape: Tape<S>,
    id: NodeId,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.tape.borrow();
        let node = &inner.nodes[self.id];
        write!(
            f,
            "Tensor(id={}, shape={:?}, tracked={})",
            self.id, node.shape, node.tracked
        )
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &Tape<S> {
        &self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.borrow().nodes[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.borrow().nodes[self.id].data.len()
    }

    pub fn tracked(&self) -> bool {
        self.tape.borrow().nodes[self.id].tracked
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Vec<S> {
        self.tape.borrow().nodes[self.id].data.clone()
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> S {
        let inner = self.tape.borrow();
        let node = &inner.nodes[self.id];
        assert_eq!(
            node.data.len(),
            1,
            "item: tensor with shape {:?} is not a scalar",
            node.shape
        );
        node.data[0]
    }

    /// Copy of the gradient buffer, if backward has populated one.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.tape.borrow().nodes[self.id].grad.clone()
    }

    /// Reverse sweep from this scalar loss. Populates gradients for every
    /// tracked node on the tape. Panics if the tensor is not scalar or if
    /// backward already ran since the last `reset_gradients`.
    pub fn backward(&self) {
        let mut inner = self.tape.inner.borrow_mut();
        assert_eq!(
            inner.nodes[self.id].data.len(),
            1,
            "backward: loss with shape {:?} is not a scalar",
            inner.nodes[self.id].shape
        );
        assert!(
            !inner.backward_ran,
            "backward: called twice on one tape without reset_gradients"
        );
        inner.backward_ran = true;

        for node in &mut inner.nodes {
            if node.tracked {
                node.grad = Some(vec![S::ZERO; node.data.len()]);
            }
        }
        if let Some(g) = inner.nodes[self.id].grad.as_mut() {
            g[0] = S::ONE;
        } else {
            // Loss does not depend on any parameter; nothing to do.
            return;
        }

        for id in (0..=self.id).rev() {
            if !inner.nodes[id].tracked {
                continue;
            }
            // Detach this node's grad so inputs can be mutated; restored below.
            let grad = match inner.nodes[id].grad.take() {
                Some(g) => g,
                None => continue,
            };
            let op = inner.nodes[id].op.clone();
            adjoint::apply(&mut inner, id, &op, &grad);
            inner.nodes[id].grad = Some(grad);
        }
    }

    pub(crate) fn assert_same_tape(&self, other: &Tensor<S>, op: &str) {
        assert!(
            self.tape.same_tape(&other.tape),
            "{op}: tensors live on different tapes"
        );
    }
}
