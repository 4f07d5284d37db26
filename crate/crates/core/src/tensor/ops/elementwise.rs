use crate::error::{Error, Result};
use crate::tensor::tape::{GradSink, Op};
use crate::tensor::{Real, Tape, Tensor, Var};

use super::{BinaryKind, Broadcast, UnaryKind};

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn apply_unary<T: Real>(kind: UnaryKind, x: T) -> T {
    match kind {
        UnaryKind::Relu => x.max(T::zero()),
        UnaryKind::Sigmoid => sigmoid(x),
        UnaryKind::Scale(c) => x * T::of(c),
        UnaryKind::Offset(c) => x + T::of(c),
        UnaryKind::Square => x * x,
        UnaryKind::Sqrt => x.sqrt(),
        UnaryKind::Ln => x.ln(),
        UnaryKind::ClampMin(floor) => x.max(T::of(floor)),
    }
}

impl<T: Real> Tape<T> {
    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| apply_unary(kind, v)).collect();
        let value = Tensor {
            shape: src.shape().to_vec(),
            data,
        };
        self.push(value, Op::Unary { kind, x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Scale(c), x)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Offset(c), x)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Square, x)
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sqrt, x)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Ln, x)
    }

    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        self.unary(UnaryKind::ClampMin(floor), x)
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var, bcast: Broadcast) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        if !bcast.check(av.shape(), bv.shape()) {
            return Err(Error::dim(format!(
                "{:?} with {:?} broadcast: {:?} vs {:?}",
                kind,
                bcast,
                av.shape(),
                bv.shape()
            )));
        }
        let map = bcast.mapper(av.shape(), bv.shape());
        let bd = bv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bd[map(i)];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let value = Tensor {
            shape: av.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::Binary { kind, a, b, bcast }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b, Broadcast::Same)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b, Broadcast::Same)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b, Broadcast::Same)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b, Broadcast::Same)
    }
}

pub(super) fn unary_backward<T: Real>(
    kind: UnaryKind,
    x: Var,
    out: &Tensor<T>,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let xs = sink.value(x).data();
    let ys = out.data();
    let half = T::of(0.5);
    let dx: Vec<T> = (0..g.len())
        .map(|i| {
            let d = match kind {
                UnaryKind::Relu => {
                    if xs[i] > T::zero() {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
                UnaryKind::Sigmoid => ys[i] * (T::one() - ys[i]),
                UnaryKind::Scale(c) => T::of(c),
                UnaryKind::Offset(_) => T::one(),
                UnaryKind::Square => xs[i] + xs[i],
                UnaryKind::Sqrt => {
                    if ys[i] > T::zero() {
                        half / ys[i]
                    } else {
                        T::zero()
                    }
                }
                UnaryKind::Ln => T::one() / xs[i],
                UnaryKind::ClampMin(floor) => {
                    if xs[i] > T::of(floor) {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
            };
            d * g[i]
        })
        .collect();
    sink.add(x, dx);
}

pub(super) fn binary_backward<T: Real>(
    kind: BinaryKind,
    a: Var,
    b: Var,
    bcast: Broadcast,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let av = sink.value(a);
    let bv = sink.value(b);
    let map = bcast.mapper(av.shape(), bv.shape());
    let (ad, bd) = (av.data(), bv.data());
    if sink.wants(a) {
        let da = match kind {
            BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
            BinaryKind::Mul => (0..g.len()).map(|i| g[i] * bd[map(i)]).collect(),
            BinaryKind::Div => (0..g.len()).map(|i| g[i] / bd[map(i)]).collect(),
        };
        sink.add(a, da);
    }
    if sink.wants(b) {
        let mut db = vec![T::zero(); bd.len()];
        for i in 0..g.len() {
            let j = map(i);
            db[j] += match kind {
                BinaryKind::Add => g[i],
                BinaryKind::Sub => -g[i],
                BinaryKind::Mul => g[i] * ad[i],
                BinaryKind::Div => -g[i] * ad[i] / (bd[j] * bd[j]),
            };
        }
        sink.add(b, db);
    }
}
