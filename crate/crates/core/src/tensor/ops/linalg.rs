use crate::error::{Error, Result};
use crate::tensor::tape::{GradSink, Op};
use crate::tensor::{Real, Tape, Tensor, Var};

/// `(outer, extent, inner)` of `shape` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn matmul_raw<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_transposed: bool,
    b: &[T],
    b_transposed: bool,
) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, (a, rsa, csa), (b, rsb, csb), (&mut c, n as isize, 1), false);
    c
}

impl<T: Real> Tape<T> {
    /// `(m×k)·(k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::dim(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let data = matmul_raw(m, k, n, av.data(), false, bv.data(), false);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatMul { a, b }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::dim(format!("transpose of rank-{} tensor", xv.rank())));
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let data = transpose_raw(xv.data(), r, c);
        Ok(self.push(Tensor { shape: vec![c, r], data }, Op::Transpose { x }))
    }

    /// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(Error::dim(format!("softmax axis {} of {:?}", axis, xv.shape())));
        }
        if xv.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("softmax of non-finite input".into()));
        }
        let (outer, dim, inner) = split_axis(xv.shape(), axis);
        let src = xv.data();
        let mut data = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * dim + j) * inner + i;
                let max = (0..dim).map(|j| src[at(j)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..dim {
                    let e = (src[at(j)] - max).exp();
                    data[at(j)] = e;
                    total += e;
                }
                for j in 0..dim {
                    data[at(j)] = data[at(j)] / total;
                }
            }
        }
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::Softmax { x, axis }))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::SumAll { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums out `axis`. A rank-1 input reduces to shape `[1]`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(Error::dim(format!("sum axis {} of {:?}", axis, xv.shape())));
        }
        let (outer, dim, inner) = split_axis(xv.shape(), axis);
        let src = xv.data();
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..dim {
                let row = &src[(o * dim + j) * inner..(o * dim + j + 1) * inner];
                for (d, &s) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(self.push(Tensor { shape, data }, Op::SumAxis { x, axis }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .map(|&p| self.value(p))
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::dim(format!("concat axis {} of rank {}", axis, rank)));
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == rank
                && (0..rank).all(|d| d == axis || s[d] == first.shape()[d]);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat along {}: {:?} vs {:?}",
                    axis,
                    s,
                    first.shape()
                )));
            }
            shape[axis] += s[axis];
        }
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Indices `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() || len == 0 || start + len > xv.shape()[axis] {
            return Err(Error::dim(format!(
                "slice {}..{} along {} of {:?}",
                start,
                start + len,
                axis,
                xv.shape()
            )));
        }
        let (outer, dim, inner) = split_axis(xv.shape(), axis);
        let src = xv.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = len;
        Ok(self.push(Tensor { shape, data }, Op::Slice { x, axis, start }))
    }
}

pub(crate) fn transpose_raw<T: Real>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

pub(super) fn matmul_backward<T: Real>(a: Var, b: Var, g: &[T], sink: &mut GradSink<T>) {
    let (av, bv) = (sink.value(a), sink.value(b));
    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
    if sink.wants(a) {
        // dA = dC · Bᵀ
        let da = matmul_raw(m, n, k, g, false, bv.data(), true);
        sink.add(a, da);
    }
    if sink.wants(b) {
        // dB = Aᵀ · dC
        let db = matmul_raw(k, m, n, av.data(), true, g, false);
        sink.add(b, db);
    }
}

pub(super) fn transpose_backward<T: Real>(x: Var, g: &[T], sink: &mut GradSink<T>) {
    let s = sink.value(x).shape();
    let (r, c) = (s[0], s[1]);
    sink.add(x, transpose_raw(g, c, r));
}

pub(super) fn softmax_backward<T: Real>(
    x: Var,
    axis: usize,
    out: &Tensor<T>,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let (outer, dim, inner) = split_axis(out.shape(), axis);
    let y = out.data();
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * dim + j) * inner + i;
            let dot: T = (0..dim).map(|j| g[at(j)] * y[at(j)]).sum();
            for j in 0..dim {
                dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
    sink.add(x, dx);
}

pub(super) fn sum_axis_backward<T: Real>(x: Var, axis: usize, g: &[T], sink: &mut GradSink<T>) {
    let (outer, dim, inner) = split_axis(sink.value(x).shape(), axis);
    let mut dx = Vec::with_capacity(outer * dim * inner);
    for o in 0..outer {
        for _ in 0..dim {
            dx.extend_from_slice(&g[o * inner..(o + 1) * inner]);
        }
    }
    sink.add(x, dx);
}

pub(super) fn concat_backward<T: Real>(
    parts: &[Var],
    axis: usize,
    out: &Tensor<T>,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let (outer, total, inner) = split_axis(out.shape(), axis);
    let mut offset = 0;
    for &p in parts {
        let extent = sink.value(p).shape()[axis];
        if sink.wants(p) {
            let mut dp = Vec::with_capacity(outer * extent * inner);
            for o in 0..outer {
                let base = (o * total + offset) * inner;
                dp.extend_from_slice(&g[base..base + extent * inner]);
            }
            sink.add(p, dp);
        }
        offset += extent;
    }
}

pub(super) fn slice_backward<T: Real>(
    x: Var,
    axis: usize,
    start: usize,
    out: &Tensor<T>,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let (outer, dim, inner) = split_axis(sink.value(x).shape(), axis);
    let len = out.shape()[axis];
    let dx = sink.slot(x);
    for o in 0..outer {
        let base = (o * dim + start) * inner;
        for (d, &s) in dx[base..base + len * inner]
            .iter_mut()
            .zip(&g[o * len * inner..(o + 1) * len * inner])
        {
            *d += s;
        }
    }
}
