mod elementwise;
mod linalg;
mod spatial;

pub use spatial::{ConvGeometry, NormMode};

use super::tape::{GradSink, Op};
use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    Relu,
    Sigmoid,
    Scale(f64),
    Offset(f64),
    Square,
    Sqrt,
    Ln,
    /// `max(x, floor)`; the gradient is zero where the floor is active.
    ClampMin(f64),
}

/// How the right operand of a binary op is expanded to the left operand's shape.
///
/// Only the per-channel patterns the architectures need are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Broadcast {
    /// Shapes are equal.
    Same,
    /// `b` is `[C]` against `a` of shape `[N, C, ...]`.
    Channel,
    /// `b` equals the first `rank(b)` extents of `a` (e.g. `[N, C]` against `[N, C, H, W]`).
    Leading,
    /// `b` equals `a`'s shape with axis 1 collapsed to 1 (`[N, 1, ...]` against `[N, C, ...]`).
    AcrossChannels,
}

impl Broadcast {
    pub(crate) fn check(self, a: &[usize], b: &[usize]) -> bool {
        match self {
            Broadcast::Same => a == b,
            Broadcast::Channel => a.len() >= 2 && b.len() == 1 && b[0] == a[1],
            Broadcast::Leading => b.len() < a.len() && a[..b.len()] == *b,
            Broadcast::AcrossChannels => {
                a.len() >= 2
                    && b.len() == a.len()
                    && b[0] == a[0]
                    && b[1] == 1
                    && a[2..] == b[2..]
            }
        }
    }

    /// Maps a flat index of `a` to the flat index of `b` it pairs with.
    pub(crate) fn mapper(self, a: &[usize], b: &[usize]) -> impl Fn(usize) -> usize {
        let (div, modulo, inner) = match self {
            Broadcast::Same => (1, usize::MAX, 0),
            Broadcast::Channel => (a[2..].iter().product::<usize>(), a[1], 0),
            Broadcast::Leading => (a[b.len()..].iter().product::<usize>(), usize::MAX, 0),
            Broadcast::AcrossChannels => {
                let inner: usize = a[2..].iter().product();
                (a[1] * inner, usize::MAX, inner)
            }
        };
        move |i| {
            if inner > 0 {
                (i / div) * inner + i % inner
            } else {
                (i / div) % modulo
            }
        }
    }
}

pub(super) fn backward<T: Real>(op: &Op<T>, out: &Tensor<T>, g: &[T], sink: &mut GradSink<T>) {
    match op {
        Op::Leaf => {}
        Op::Binary { kind, a, b, bcast } => elementwise::binary_backward(*kind, *a, *b, *bcast, g, sink),
        Op::Unary { kind, x } => elementwise::unary_backward(*kind, *x, out, g, sink),
        Op::MatMul { a, b } => linalg::matmul_backward(*a, *b, g, sink),
        Op::Transpose { x } => linalg::transpose_backward(*x, g, sink),
        Op::Softmax { x, axis } => linalg::softmax_backward(*x, *axis, out, g, sink),
        Op::SumAll { x } => {
            let n = sink.value(*x).len();
            sink.add(*x, vec![g[0]; n]);
        }
        Op::SumAxis { x, axis } => linalg::sum_axis_backward(*x, *axis, g, sink),
        Op::Reshape { x } => sink.add(*x, g.to_vec()),
        Op::Concat { parts, axis } => linalg::concat_backward(parts, *axis, out, g, sink),
        Op::Slice { x, axis, start } => linalg::slice_backward(*x, *axis, *start, out, g, sink),
        Op::Conv2d {
            x,
            weight,
            bias,
            geom,
            cols,
        } => spatial::conv2d_backward(*x, *weight, *bias, *geom, cols, g, sink),
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => spatial::batchnorm_backward(*x, *gamma, *beta, xhat, inv_std, *batch_stats, g, sink),
        Op::MaxPool { x, argmax } => {
            let mut dx = vec![T::zero(); sink.value(*x).len()];
            for (&src, &gi) in argmax.iter().zip(g) {
                dx[src] += gi;
            }
            sink.add(*x, dx);
        }
        Op::GlobalAvgPool { x } => spatial::global_avg_pool_backward(*x, g, sink),
        Op::AvgPool3 { x } => spatial::avg_pool3_backward(*x, g, sink),
        Op::ChannelConv1d { x, weight } => spatial::channel_conv1d_backward(*x, *weight, g, sink),
    }
}
