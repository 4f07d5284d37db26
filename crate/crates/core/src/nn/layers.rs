use crate::error::{Error, Result};
use crate::tensor::{Broadcast, BinaryKind, ConvGeometry, NormMode, Real, Var};

use super::params::{Init, ParamId, ParamRole, ParamStore};
use super::session::{Mode, Session};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub bias: bool,
}

impl Conv2dSpec {
    /// Square kernel. Padding is always "same": `ceil(extent / stride)` outputs.
    pub fn square(c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Conv2dSpec {
            c_in,
            c_out,
            kernel: (kernel, kernel),
            stride,
            bias: false,
        }
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let odd = |k: usize| matches!(k, 1 | 3 | 5);
        if !odd(self.kernel.0) || !odd(self.kernel.1) {
            return Err(Error::config(format!(
                "conv kernel extents must be 1, 3 or 5, got {:?}",
                self.kernel
            )));
        }
        if self.c_in == 0 || self.c_out == 0 || self.stride == 0 {
            return Err(Error::config(format!("degenerate conv spec {:?}", self)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d(Conv2dSpec),
    BatchNorm2d { channels: usize },
    MaxPool2d,
    GlobalAvgPool,
    Dense { f_in: usize, f_out: usize },
    Relu,
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    spec: Conv2dSpec,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, spec: Conv2dSpec) -> Result<Self> {
        spec.validate()?;
        let (kh, kw) = spec.kernel;
        let fan_in = spec.c_in * kh * kw;
        let weight = store.declare(
            &format!("{name}.weight"),
            &[spec.c_out, spec.c_in, kh, kw],
            Init::HeNormal { fan_in },
            ParamRole::Trainable,
        )?;
        let bias = if spec.bias {
            Some(store.declare(&format!("{name}.bias"), &[spec.c_out], Init::Zeros, ParamRole::Trainable)?)
        } else {
            None
        };
        Ok(Conv2d { spec, weight, bias })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2d(self.spec)
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        let shape = s.tape.shape(x);
        if shape.len() != 4 {
            return Err(Error::dim(format!("conv2d expects N×C×H×W, got {:?}", shape)));
        }
        let geom = ConvGeometry::same((shape[2], shape[3]), self.spec.kernel, self.spec.stride);
        s.tape.conv2d(x, w, b, geom)
    }
}

/// Batch normalisation with momentum 0.1 running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    channels: usize,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm2d {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            channels,
            gamma: store.declare(&format!("{name}.gamma"), &[channels], Init::Ones, ParamRole::Trainable)?,
            beta: store.declare(&format!("{name}.beta"), &[channels], Init::Zeros, ParamRole::Trainable)?,
            running_mean: store.declare(&format!("{name}.running_mean"), &[channels], Init::Zeros, ParamRole::Buffer)?,
            running_var: store.declare(&format!("{name}.running_var"), &[channels], Init::Ones, ParamRole::Buffer)?,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm2d {
            channels: self.channels,
        }
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.gamma, self.beta, self.running_mean, self.running_var]
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        let mode = s.mode();
        let (tape, store) = s.split();
        match mode {
            Mode::Eval => {
                let mean = store.get(self.running_mean).data();
                let var = store.get(self.running_var).data();
                let (y, _) = tape.batch_norm(x, gamma, beta, NormMode::Running { mean, var }, Self::EPS)?;
                Ok(y)
            }
            Mode::Train => {
                let (y, stats) = tape.batch_norm(x, gamma, beta, NormMode::Batch, Self::EPS)?;
                let (mean, var) = stats.expect("batch mode returns statistics");
                let m = T::of(Self::MOMENTUM);
                let keep = T::one() - m;
                for (r, b) in store.get_mut(self.running_mean).data_mut().iter_mut().zip(&mean) {
                    *r = keep * *r + m * *b;
                }
                for (r, b) in store.get_mut(self.running_var).data_mut().iter_mut().zip(&var) {
                    *r = keep * *r + m * *b;
                }
                Ok(y)
            }
        }
    }
}

/// Affine map `x·Wᵀ + b` with `W: F_out×F_in`.
#[derive(Clone, Debug)]
pub struct Dense {
    f_in: usize,
    f_out: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, f_in: usize, f_out: usize) -> Result<Self> {
        if f_in == 0 || f_out == 0 {
            return Err(Error::config(format!("dense layer {name} with zero width")));
        }
        Ok(Dense {
            f_in,
            f_out,
            weight: store.declare(
                &format!("{name}.weight"),
                &[f_out, f_in],
                Init::HeNormal { fan_in: f_in },
                ParamRole::Trainable,
            )?,
            bias: store.declare(&format!("{name}.bias"), &[f_out], Init::Zeros, ParamRole::Trainable)?,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            f_in: self.f_in,
            f_out: self.f_out,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn f_out(&self) -> usize {
        self.f_out
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x);
        if shape.len() != 2 || shape[1] != self.f_in {
            return Err(Error::dim(format!(
                "dense expects N×{}, got {:?}",
                self.f_in, shape
            )));
        }
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let wt = s.tape.transpose(w)?;
        let xw = s.tape.matmul(x, wt)?;
        s.tape.binary(BinaryKind::Add, xw, b, Broadcast::Channel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn even_kernel_is_config_error() {
        let mut store = ParamStore::<f32>::new();
        let spec = Conv2dSpec::square(1, 1, 2, 1);
        assert!(matches!(Conv2d::new(&mut store, "c", spec), Err(Error::Config(_))));
    }

    #[test]
    fn dense_identity_and_bias_only() {
        let mut store = ParamStore::<f64>::new();
        let d = Dense::new(&mut store, "fc", 3, 3).unwrap();
        store.set(d.weight, Tensor::from_f64([3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap()).unwrap();
        let x = Tensor::from_f64([2, 3], &[1., -2., 3., 0.5, 0.25, -1.]).unwrap();
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let xv = s.input(x.clone());
        let y = d.forward(&mut s, xv).unwrap();
        assert_eq!(s.tape.value(y), &x);
        drop(s);

        store.set(d.weight, Tensor::zeros([3, 3]).unwrap()).unwrap();
        store.set(d.bias, Tensor::from_f64([3], &[7., 8., 9.]).unwrap()).unwrap();
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let xv = s.input(x);
        let y = d.forward(&mut s, xv).unwrap();
        assert_eq!(s.tape.value(y).data(), &[7., 8., 9., 7., 8., 9.]);
    }

    #[test]
    fn batchnorm_eval_cases() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 2).unwrap();
        store.init_parameters(0);
        let [gamma, beta, mean, _] = bn.params();
        store.set(mean, Tensor::from_f64([2], &[0.3, -0.7]).unwrap()).unwrap();
        let mut x = Tensor::<f64>::zeros([1, 2, 2, 2]).unwrap();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = if i < 4 { 0.3 } else { -0.7 };
        }
        {
            let mut s = Session::new(&mut store, Mode::Eval, false);
            let xv = s.input(x.clone());
            let y = bn.forward(&mut s, xv).unwrap();
            assert!(s.tape.value(y).data().iter().all(|&v| v == 0.0));
        }
        store.set(gamma, Tensor::zeros([2]).unwrap()).unwrap();
        store.set(beta, Tensor::from_f64([2], &[1.5, -2.5]).unwrap()).unwrap();
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let xv = s.input(x);
        let y = bn.forward(&mut s, xv).unwrap();
        let y = s.tape.value(y).data();
        assert!(y[..4].iter().all(|&v| v == 1.5) && y[4..].iter().all(|&v| v == -2.5));
    }

    #[test]
    fn batchnorm_eval_does_not_mutate_running_stats() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 3).unwrap();
        store.init_parameters(0);
        let x = Tensor::from_f64([2, 3, 1, 2], &[0.1, 0.5, -0.3, 0.9, 1.2, -1.0, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let before: Vec<_> = bn.params().iter().map(|&p| store.get(p).clone()).collect();
        let run = |store: &mut ParamStore<f64>| {
            let mut s = Session::new(store, Mode::Eval, false);
            let xv = s.input(x.clone());
            let y = bn.forward(&mut s, xv).unwrap();
            s.tape.value(y).clone()
        };
        let (a, b) = (run(&mut store), run(&mut store));
        assert_eq!(a, b);
        let after: Vec<_> = bn.params().iter().map(|&p| store.get(p).clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn batchnorm_train_updates_running_stats_with_momentum() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 1).unwrap();
        store.init_parameters(0);
        let x = Tensor::from_f64([2, 1, 1, 2], &[1., 2., 3., 4.]).unwrap();
        let mut s = Session::new(&mut store, Mode::Train, true);
        let xv = s.input(x);
        bn.forward(&mut s, xv).unwrap();
        drop(s);
        let [_, _, m, v] = bn.params();
        // batch mean 2.5, unbiased variance 5/3
        assert!((store.get(m).data()[0] - 0.25).abs() < 1e-12);
        assert!((store.get(v).data()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }
}
