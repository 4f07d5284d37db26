use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

use super::ops::{self, BinaryKind, Broadcast, ConvGeometry, UnaryKind};
use super::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Coarse operation kind of a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Binary(BinaryKind),
    Unary,
    MatMul,
    Transpose,
    Softmax,
    SumAll,
    SumAxis,
    Reshape,
    Concat,
    Slice,
    Conv2d,
    BatchNorm,
    MaxPool,
    GlobalAvgPool,
    AvgPool3,
    ChannelConv1d,
}

pub(crate) enum Op<T> {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        bcast: Broadcast,
    },
    Unary {
        kind: UnaryKind,
        x: Var,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Transpose {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    SumAll {
        x: Var,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    Reshape {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Conv2d {
        x: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        cols: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
    },
    AvgPool3 {
        x: Var,
    },
    ChannelConv1d {
        x: Var,
        weight: Var,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Binary { kind, .. } => OpKind::Binary(*kind),
            Op::Unary { .. } => OpKind::Unary,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::SumAll { .. } => OpKind::SumAll,
            Op::SumAxis { .. } => OpKind::SumAxis,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::GlobalAvgPool { .. } => OpKind::GlobalAvgPool,
            Op::AvgPool3 { .. } => OpKind::AvgPool3,
            Op::ChannelConv1d { .. } => OpKind::ChannelConv1d,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary { a, b, .. } | Op::MatMul { a, b } => vec![*a, *b],
            Op::Unary { x, .. }
            | Op::Transpose { x }
            | Op::Softmax { x, .. }
            | Op::SumAll { x }
            | Op::SumAxis { x, .. }
            | Op::Reshape { x }
            | Op::Slice { x, .. }
            | Op::MaxPool { x, .. }
            | Op::GlobalAvgPool { x }
            | Op::AvgPool3 { x } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Conv2d { x, weight, bias, .. } => {
                let mut v = vec![*x, *weight];
                v.extend(bias);
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::ChannelConv1d { x, weight } => vec![*x, *weight],
        }
    }
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub requires_grad: bool,
    pub op: Op<T>,
    pub grad: Option<Tensor<T>>,
}

/// Dynamic reverse-mode tape. Every forward pass records onto a fresh tape;
/// records are appended in evaluation order, so the list is topologically sorted.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
    branches: Option<DefaultHasher>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulates partial gradients for the inputs of one record.
pub(crate) struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Real> GradSink<'a, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &'a Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, v: Var, contrib: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        debug_assert_eq!(contrib.len(), self.nodes[v.0].value.len());
        match &mut self.grads[v.0] {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Mutable accumulator for `v`, zero-initialised on first use.
    pub fn slot(&mut self, v: Var) -> &mut Vec<T> {
        let len = self.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            branches: None,
        }
    }

    /// Starts hashing every piecewise branch taken from here on: ReLU and clamp
    /// masks and max-pool winners. Off by default since it costs a pass per record.
    pub fn track_branches(&mut self) {
        self.branches = Some(DefaultHasher::new());
    }

    /// Signature of the branches recorded since [`Tape::track_branches`]. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> Option<u64> {
        self.branches.as_ref().map(|h| h.finish())
    }

    fn hash_branches(&mut self, op: &Op<T>) {
        let Some(h) = self.branches.as_mut() else { return };
        match op {
            Op::Unary { kind, x } => {
                let floor = match kind {
                    UnaryKind::Relu => 0.0,
                    UnaryKind::ClampMin(f) => *f,
                    _ => return,
                };
                for &v in self.nodes[x.0].value.data() {
                    (v.as_f64() > floor).hash(h);
                }
            }
            Op::MaxPool { argmax, .. } => argmax.hash(h),
            _ => {}
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are kept for it after [`Tape::backward`] when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn op_inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    /// Records an op output; saved state is dropped when no input needs gradients.
    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.hash_branches(&op);
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Back-propagates from a one-element root. Every record at or below the root
    /// is visited once, in reverse order; gradients of variables consumed several
    /// times are summed. Afterwards [`Tape::grad`] returns the gradient of each
    /// `requires_grad` node reached, and `None` for nodes the root does not depend on.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        let mut finished: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at(id);
            let node = &rest[0];
            {
                let mut sink = GradSink {
                    nodes: before,
                    grads: &mut grads[..id],
                };
                ops::backward(&node.op, &node.value, &g, &mut sink);
            }
            finished[id] = Some(g);
        }
        for (id, g) in finished.into_iter().enumerate() {
            if let Some(g) = g {
                let shape = self.nodes[id].value.shape().to_vec();
                self.nodes[id].grad = Some(Tensor { shape, data: g });
            }
        }
        Ok(())
    }
}
