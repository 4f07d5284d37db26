//! The twin-embedding model, its losses, optimizer and training steps.

mod loss;
mod optim;

use crate::attention::AttentionRegistry;
use crate::backbone::{Backbone, BackboneRegistry, BackboneSpec};
use crate::data::{batch_tensor, LabeledImage, PairSample};
use crate::error::{Error, Result};
use crate::nn::{Dense, Mode, ParamStore, Session};
use crate::tensor::{Real, Tensor, Var};

pub use loss::{
    contrastive_loss, contrastive_loss_var, cross_entropy_loss, cross_entropy_var, euclidean_distance,
    pair_distance_var, DistanceRecord, CE_FLOOR,
};
pub use optim::Adam;

pub const EMBED_DIM: usize = 512;
pub const DEFAULT_MARGIN: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneSpec,
    pub classes: usize,
    pub embed_dim: usize,
    pub margin: f64,
}

impl ModelConfig {
    pub fn new(backbone: BackboneSpec, classes: usize) -> Self {
        ModelConfig {
            backbone,
            classes,
            embed_dim: EMBED_DIM,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// Backbone plus the two heads. Holds parameter handles only; values live in a store.
pub struct Network<T: Real> {
    backbone: Box<dyn Backbone<T>>,
    embed_head: Dense,
    class_head: Dense,
}

impl<T: Real> Network<T> {
    pub fn backbone(&self) -> &dyn Backbone<T> {
        self.backbone.as_ref()
    }

    pub fn embed_head(&self) -> &Dense {
        &self.embed_head
    }

    pub fn class_head(&self) -> &Dense {
        &self.class_head
    }

    pub fn embed(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let f = self.backbone.forward(s, x)?;
        self.embed_head.forward(s, f)
    }

    pub fn logits(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let f = self.backbone.forward(s, x)?;
        self.class_head.forward(s, f)
    }

    /// Contrastive objective of a pair batch stacked as `[a; b]` along the batch axis,
    /// so both twins run in one forward.
    ///
    /// Returns the loss and the per-pair distances.
    pub fn contrastive_objective(&self, s: &mut Session<T>, both: Var, labels: &[u8], margin: f64) -> Result<(Var, Var)> {
        let n = labels.len();
        if s.tape.shape(both).first() != Some(&(2 * n)) {
            return Err(Error::dim(format!("pair batch {:?} for {} labels", s.tape.shape(both), n)));
        }
        let e = self.embed(s, both)?;
        let ea = s.tape.slice(e, 0, 0, n)?;
        let eb = s.tape.slice(e, 0, n, n)?;
        let d = pair_distance_var(&mut s.tape, ea, eb)?;
        let loss = contrastive_loss_var(&mut s.tape, d, labels, margin)?;
        Ok((loss, d))
    }
}

/// A network together with the single parameter store both twin branches read.
pub struct SiameseModel<T: Real> {
    config: ModelConfig,
    net: Network<T>,
    store: ParamStore<T>,
}

impl<T: Real> SiameseModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_registries(config, &BackboneRegistry::builtin(), &AttentionRegistry::builtin(), seed)
    }

    pub fn with_registries(
        config: ModelConfig,
        backbones: &BackboneRegistry<T>,
        attention: &AttentionRegistry<T>,
        seed: u64,
    ) -> Result<Self> {
        if config.classes < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {}", config.classes)));
        }
        if !(config.margin > 0.0) {
            return Err(Error::config("contrastive margin must be positive"));
        }
        let mut store = ParamStore::new();
        let backbone = backbones.build(&config.backbone, attention, &mut store)?;
        let f = backbone.feature_dim();
        let embed_head = Dense::new(&mut store, "embed_head", f, config.embed_dim)?;
        let class_head = Dense::new(&mut store, "class_head", f, config.classes)?;
        store.init_parameters(seed);
        Ok(SiameseModel {
            config,
            net: Network {
                backbone,
                embed_head,
                class_head,
            },
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Split borrow for building sessions against the network.
    pub fn parts_mut(&mut self) -> (&Network<T>, &mut ParamStore<T>) {
        (&self.net, &mut self.store)
    }

    fn eval_rows(&mut self, images: &[&LabeledImage], head: fn(&Network<T>, &mut Session<T>, Var) -> Result<Var>) -> Result<Tensor<T>> {
        let x = batch_tensor::<T>(images)?;
        let mut s = Session::new(&mut self.store, Mode::Eval, false);
        let xv = s.input(x);
        let y = head(&self.net, &mut s, xv)?;
        Ok(s.tape.value(y).clone())
    }

    /// Eval-mode embeddings, one row per image, computed as a single batch.
    pub fn embed_batch(&mut self, images: &[&LabeledImage]) -> Result<Vec<Vec<f64>>> {
        let e = self.eval_rows(images, Network::embed)?;
        Ok(e.to_f64_vec().chunks(self.config.embed_dim).map(<[f64]>::to_vec).collect())
    }

    /// Eval-mode embedding of one image (batch size 1).
    pub fn embed(&mut self, image: &LabeledImage) -> Result<Vec<f64>> {
        Ok(self.eval_rows(&[image], Network::embed)?.to_f64_vec())
    }

    /// Eval-mode class probabilities of one image from the baseline head.
    pub fn class_probs(&mut self, image: &LabeledImage) -> Result<Vec<f64>> {
        let logits = self.eval_rows(&[image], Network::logits)?.to_f64_vec();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / z).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub records: Vec<DistanceRecord>,
}

/// One contrastive update over a batch of pairs drawn from `images`.
pub fn siamese_train_step<T: Real>(
    model: &mut SiameseModel<T>,
    opt: &mut Adam<T>,
    images: &[LabeledImage],
    pairs: &[PairSample],
) -> Result<StepOutcome> {
    if pairs.len() < 2 {
        return Err(Error::contract(format!("train step needs at least 2 pairs, got {}", pairs.len())));
    }
    let a: Vec<&LabeledImage> = pairs.iter().map(|p| &images[p.a]).collect();
    let b: Vec<&LabeledImage> = pairs.iter().map(|p| &images[p.b]).collect();
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let both = Tensor::concat_rows(&[&batch_tensor::<T>(&a)?, &batch_tensor::<T>(&b)?])?;
    let margin = model.config.margin;
    let (net, store) = model.parts_mut();
    let mut s = Session::new(store, Mode::Train, true);
    let x = s.input(both);
    let (loss, d) = net.contrastive_objective(&mut s, x, &labels, margin)?;
    let loss_value = s.tape.value(loss).item()?.as_f64();
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!("contrastive loss became {loss_value}")));
    }
    let records = s
        .tape
        .value(d)
        .data()
        .iter()
        .zip(&labels)
        .map(|(&d, &y)| DistanceRecord { d: d.as_f64(), y })
        .collect();
    s.backward(loss)?;
    let grads = s.param_grads();
    drop(s);
    opt.step(store, &grads)?;
    Ok(StepOutcome {
        loss: loss_value,
        records,
    })
}

/// One cross-entropy update of backbone and class head over a labelled batch.
pub fn baseline_train_step<T: Real>(
    model: &mut SiameseModel<T>,
    opt: &mut Adam<T>,
    batch: &[&LabeledImage],
) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::contract(format!("train step needs at least 2 images, got {}", batch.len())));
    }
    let labels: Vec<usize> = batch.iter().map(|i| i.class_id).collect();
    let x = batch_tensor::<T>(batch)?;
    let (net, store) = model.parts_mut();
    let mut s = Session::new(store, Mode::Train, true);
    let xv = s.input(x);
    let logits = net.logits(&mut s, xv)?;
    let loss = cross_entropy_var(&mut s.tape, logits, &labels)?;
    let loss_value = s.tape.value(loss).item()?.as_f64();
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!("cross-entropy loss became {loss_value}")));
    }
    s.backward(loss)?;
    let grads = s.param_grads();
    drop(s);
    opt.step(store, &grads)?;
    Ok(loss_value)
}
