use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer.
    Trainable,
    /// Running statistics; updated only by train-mode forwards.
    Buffer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize },
    Zeros,
    Ones,
    Constant(f64),
}

struct Entry<T> {
    name: String,
    value: Tensor<T>,
    role: ParamRole,
    init: Init,
}

/// Named model parameters and buffers in declaration order.
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Declares a zero-filled slot; values are assigned by [`ParamStore::init_parameters`].
    pub fn declare(&mut self, name: &str, shape: &[usize], init: Init, role: ParamRole) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name {}", name)));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            value: Tensor::zeros(shape.to_vec())?,
            role,
            init,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Fills every slot from its init rule. One generator drives all draws in
    /// declaration order, so the result depends only on `seed` and the architecture.
    pub fn init_parameters(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in &mut self.entries {
            match e.init {
                Init::HeNormal { fan_in } => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    for v in e.value.data_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v = T::of(z * std);
                    }
                }
                Init::Zeros => e.value.data_mut().fill(T::zero()),
                Init::Ones => e.value.data_mut().fill(T::one()),
                Init::Constant(c) => e.value.data_mut().fill(T::of(c)),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| self.role(id) == ParamRole::Trainable)
    }

    pub fn buffers(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| self.role(id) == ParamRole::Buffer)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn role(&self, id: ParamId) -> ParamRole {
        self.entries[id.0].role
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    /// Replaces a value; the shape is fixed at declaration.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::dim(format!(
                "{} has shape {:?}, got {:?}",
                slot.name,
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|id| self.get(id).len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(seed: u64) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.declare("conv.weight", &[64, 64, 3, 3], Init::HeNormal { fan_in: 576 }, ParamRole::Trainable)
            .unwrap();
        s.declare("bn.gamma", &[64], Init::Ones, ParamRole::Trainable).unwrap();
        s.declare("bn.beta", &[64], Init::Zeros, ParamRole::Trainable).unwrap();
        s.init_parameters(seed);
        s
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (a, b) = (store(7), store(7));
        for id in a.ids() {
            assert_eq!(a.get(id), b.get(id));
        }
        assert_ne!(a.get(ParamId(0)), store(8).get(ParamId(0)));
    }

    #[test]
    fn gamma_ones_and_he_std() {
        let s = store(3);
        assert!(s.get(s.id("bn.gamma").unwrap()).data().iter().all(|&v| v == 1.0));
        let w = s.get(ParamId(0)).to_f64_vec();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = (2.0f64 / 576.0).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.1);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f64>::new();
        s.declare("a", &[1], Init::Zeros, ParamRole::Trainable).unwrap();
        assert!(s.declare("a", &[2], Init::Zeros, ParamRole::Trainable).is_err());
    }
}
