//! Shape-preserving attention blocks, selectable by name.
//!
//! Every block maps `N×C×H×W` to `N×C×H×W`, which is what lets a backbone insert
//! one after any stage without touching the surrounding layers.

mod eca;
mod se;
mod sge;
mod sk;

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Session};
use crate::tensor::{Real, Var};

pub use eca::{eca_kernel_size, EcaBlock};
pub use se::SeBlock;
pub use sge::SgeBlock;
pub use sk::SkBlock;

pub trait AttentionBlock<T: Real>: Send + Sync {
    /// Registry name of the mechanism (`"se"`, `"sk"`, ...).
    fn kind(&self) -> &'static str;

    fn channels(&self) -> usize;

    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var>;
}

/// Hyperparameters shared by all attention kinds; each block reads its own fields.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    /// Registry name, or `"none"`.
    pub kind: String,
    pub se_reduction: usize,
    pub eca_gamma: f64,
    pub eca_b: f64,
    pub sk_reduction: usize,
    pub sge_groups: usize,
    pub sge_eps: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            kind: NONE.to_string(),
            se_reduction: 4,
            eca_gamma: 2.0,
            eca_b: 1.0,
            sk_reduction: 4,
            sge_groups: 4,
            sge_eps: 1e-5,
        }
    }
}

impl AttentionConfig {
    pub fn of_kind(kind: &str) -> Self {
        AttentionConfig {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == NONE
    }
}

pub const NONE: &str = "none";

pub type AttentionFactory<T> =
    fn(&AttentionConfig, usize, &str, &mut ParamStore<T>) -> Result<Box<dyn AttentionBlock<T>>>;

/// Name → constructor table for attention blocks.
pub struct AttentionRegistry<T: Real> {
    entries: Vec<(&'static str, AttentionFactory<T>)>,
}

impl<T: Real> AttentionRegistry<T> {
    pub fn empty() -> Self {
        AttentionRegistry { entries: Vec::new() }
    }

    /// SE, SK, ECA and SGE.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("se", |cfg, c, name, store| Ok(Box::new(SeBlock::new(cfg, c, name, store)?)));
        r.register("sk", |cfg, c, name, store| Ok(Box::new(SkBlock::new(cfg, c, name, store)?)));
        r.register("eca", |cfg, c, name, store| Ok(Box::new(EcaBlock::new(cfg, c, name, store)?)));
        r.register("sge", |cfg, c, name, store| Ok(Box::new(SgeBlock::new(cfg, c, name, store)?)));
        r
    }

    /// Adds or replaces the constructor registered under `name`.
    pub fn register(&mut self, name: &'static str, factory: AttentionFactory<T>) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        name == NONE || self.entries.iter().any(|(n, _)| *n == name)
    }

    /// Builds a block for `channels`, or `None` when `cfg.kind` is `"none"`.
    pub fn build(
        &self,
        cfg: &AttentionConfig,
        channels: usize,
        name: &str,
        store: &mut ParamStore<T>,
    ) -> Result<Option<Box<dyn AttentionBlock<T>>>> {
        if cfg.is_none() {
            return Ok(None);
        }
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| *n == cfg.kind)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown attention kind {:?} (known: none, {})",
                    cfg.kind,
                    self.names().join(", ")
                ))
            })?;
        factory(cfg, channels, name, store).map(Some)
    }
}

impl<T: Real> Default for AttentionRegistry<T> {
    fn default() -> Self {
        Self::builtin()
    }
}
