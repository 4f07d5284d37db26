//! Feature extractors with attention inserted at fixed stage boundaries.

mod inception;
mod resnet;

use crate::attention::{AttentionBlock, AttentionConfig, AttentionRegistry};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Conv2dSpec, ParamStore, Session};
use crate::tensor::{Real, Var};

pub use inception::InceptionTiny;
pub use resnet::ResNetTiny;

pub const RESNET_TINY: &str = "resnet_tiny";
pub const INCEPTION_TINY: &str = "inception_tiny";

/// Maps a `N×1×H×W` batch to `N×feature_dim` pooled features.
pub trait Backbone<T: Real>: Send + Sync {
    fn family(&self) -> &'static str;

    fn feature_dim(&self) -> usize;

    fn input_size(&self) -> usize;

    fn attention(&self) -> Vec<&dyn AttentionBlock<T>>;

    fn features(&self, s: &mut Session<T>, x: Var) -> Result<Var>;

    /// Validates the input shape, then runs [`Backbone::features`].
    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x);
        let side = self.input_size();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != side || shape[3] != side {
            return Err(Error::dim(format!(
                "{} expects N×1×{}×{} input, got {:?}",
                self.family(),
                side,
                side,
                shape
            )));
        }
        self.features(s, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneSpec {
    pub family: String,
    pub attention: AttentionConfig,
    /// Stage widths of `resnet_tiny`; ignored by `inception_tiny`.
    pub widths: Vec<usize>,
    /// Square grayscale input side.
    pub input_size: usize,
}

impl BackboneSpec {
    pub fn new(family: &str, attention: &str) -> Self {
        BackboneSpec {
            family: family.to_string(),
            attention: AttentionConfig::of_kind(attention),
            widths: vec![8, 16, 32, 64],
            input_size: 32,
        }
    }

    pub fn with_input_size(mut self, side: usize) -> Self {
        self.input_size = side;
        self
    }

    fn check_input_size(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(8) {
            return Err(Error::config(format!(
                "input size must be a positive multiple of 8, got {}",
                self.input_size
            )));
        }
        Ok(())
    }
}

pub type BackboneFactory<T> =
    fn(&BackboneSpec, &AttentionRegistry<T>, &mut ParamStore<T>) -> Result<Box<dyn Backbone<T>>>;

/// Name → constructor table for backbone families.
pub struct BackboneRegistry<T: Real> {
    entries: Vec<(&'static str, BackboneFactory<T>)>,
}

impl<T: Real> BackboneRegistry<T> {
    pub fn empty() -> Self {
        BackboneRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(RESNET_TINY, |spec, att, store| Ok(Box::new(ResNetTiny::build(spec, att, store)?)));
        r.register(INCEPTION_TINY, |spec, att, store| {
            Ok(Box::new(InceptionTiny::build(spec, att, store)?))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: BackboneFactory<T>) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn build(
        &self,
        spec: &BackboneSpec,
        attention: &AttentionRegistry<T>,
        store: &mut ParamStore<T>,
    ) -> Result<Box<dyn Backbone<T>>> {
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| *n == spec.family)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown backbone {:?} (known: {})",
                    spec.family,
                    self.names().join(", ")
                ))
            })?;
        factory(spec, attention, store)
    }
}

impl<T: Real> Default for BackboneRegistry<T> {
    fn default() -> Self {
        Self::builtin()
    }
}

/// conv → batchnorm → optional relu.
pub(crate) struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
    relu: bool,
}

impl ConvBn {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, spec: Conv2dSpec, relu: bool) -> Result<Self> {
        Ok(ConvBn {
            conv: Conv2d::new(store, &format!("{name}.conv"), spec)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), spec.c_out)?,
            relu,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(s, x)?;
        let y = self.bn.forward(s, y)?;
        Ok(if self.relu { s.tape.relu(y) } else { y })
    }
}

pub(crate) fn apply_attention<T: Real>(
    block: Option<&dyn AttentionBlock<T>>,
    s: &mut Session<T>,
    x: Var,
) -> Result<Var> {
    match block {
        Some(b) => b.forward(s, x),
        None => Ok(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::tensor::Tensor;

    fn build(family: &str, attention: &str, side: usize) -> (Box<dyn Backbone<f64>>, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let spec = BackboneSpec::new(family, attention).with_input_size(side);
        let net = BackboneRegistry::builtin()
            .build(&spec, &AttentionRegistry::builtin(), &mut store)
            .unwrap();
        store.init_parameters(7);
        (net, store)
    }

    #[test]
    fn attention_counts_per_family() {
        for kind in ["se", "sk", "eca", "sge"] {
            assert_eq!(build(RESNET_TINY, kind, 32).0.attention().len(), 4);
            assert_eq!(build(INCEPTION_TINY, kind, 32).0.attention().len(), 5);
        }
        assert!(build(RESNET_TINY, "none", 32).0.attention().is_empty());
        assert!(build(INCEPTION_TINY, "none", 32).0.attention().is_empty());
    }

    #[test]
    fn output_widths() {
        for (family, width) in [(RESNET_TINY, 64), (INCEPTION_TINY, 128)] {
            let (net, mut store) = build(family, "se", 32);
            let mut s = Session::new(&mut store, Mode::Eval, false);
            let x = s.input(Tensor::full(vec![1, 1, 32, 32], 0.3).unwrap());
            let y = net.forward(&mut s, x).unwrap();
            assert_eq!(s.tape.shape(y), &[1, width]);
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let (net, mut store) = build(RESNET_TINY, "none", 16);
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let x = s.input(Tensor::zeros(vec![1, 1, 32, 32]).unwrap());
        assert!(matches!(net.forward(&mut s, x), Err(Error::Dimension(_))));
    }

    #[test]
    fn unknown_family_and_bad_size() {
        let mut store = ParamStore::<f64>::new();
        let att = AttentionRegistry::builtin();
        let reg = BackboneRegistry::builtin();
        assert!(matches!(reg.build(&BackboneSpec::new("vgg", "none"), &att, &mut store), Err(Error::Config(_))));
        let odd = BackboneSpec::new(RESNET_TINY, "none").with_input_size(12);
        assert!(matches!(reg.build(&odd, &att, &mut store), Err(Error::Config(_))));
    }
}
