use crate::error::{Error, Result};
use crate::nn::{Init, ParamId, ParamRole, ParamStore, Session};
use crate::tensor::{BinaryKind, Broadcast, Real, Var};

use super::{AttentionBlock, AttentionConfig};

/// Spatial group-wise enhancement.
///
/// Channels are split into groups. Within a group, each position's feature is
/// dotted with the group's pooled descriptor; the resulting map is standardised
/// over positions, passed through a learned per-group affine map and a sigmoid,
/// and used to gate every channel of the group at that position.
pub struct SgeBlock {
    channels: usize,
    groups: usize,
    eps: f64,
    weight: ParamId,
    bias: ParamId,
}

impl SgeBlock {
    pub fn new<T: Real>(cfg: &AttentionConfig, channels: usize, name: &str, store: &mut ParamStore<T>) -> Result<Self> {
        let g = cfg.sge_groups;
        if g == 0 || !channels.is_multiple_of(g) {
            return Err(Error::config(format!(
                "SGE needs channels divisible by groups, got {} channels and {} groups",
                channels, g
            )));
        }
        Ok(SgeBlock {
            channels,
            groups: g,
            eps: cfg.sge_eps,
            weight: store.declare(&format!("{name}.weight"), &[g], Init::Ones, ParamRole::Trainable)?,
            bias: store.declare(&format!("{name}.bias"), &[g], Init::Zeros, ParamRole::Trainable)?,
        })
    }

    pub fn affine(&self) -> (ParamId, ParamId) {
        (self.weight, self.bias)
    }
}

impl<T: Real> AttentionBlock<T> for SgeBlock {
    fn kind(&self) -> &'static str {
        "sge"
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::dim(format!(
                "SGE built for {} channels got {:?}",
                self.channels, shape
            )));
        }
        let (n, g) = (shape[0], self.groups);
        let cg = self.channels / g;
        let hw = shape[2] * shape[3];
        let inv_hw = 1.0 / hw as f64;

        let xg = s.tape.reshape(x, &[n * g, cg, hw])?;
        let pooled = s.tape.sum_axis(xg, 2)?;
        let pooled = s.tape.scale(pooled, inv_hw);
        let weighted = s.tape.binary(BinaryKind::Mul, xg, pooled, Broadcast::Leading)?;
        let sim = s.tape.sum_axis(weighted, 1)?;

        let mean = s.tape.sum_axis(sim, 1)?;
        let mean = s.tape.scale(mean, inv_hw);
        let centered = s.tape.binary(BinaryKind::Sub, sim, mean, Broadcast::Leading)?;
        let sq = s.tape.square(centered);
        let var = s.tape.sum_axis(sq, 1)?;
        let var = s.tape.scale(var, inv_hw);
        let std = s.tape.sqrt(var);
        let denom = s.tape.offset(std, self.eps);
        let normed = s.tape.binary(BinaryKind::Div, centered, denom, Broadcast::Leading)?;

        let normed = s.tape.reshape(normed, &[n, g, hw])?;
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let scaled = s.tape.binary(BinaryKind::Mul, normed, w, Broadcast::Channel)?;
        let shifted = s.tape.binary(BinaryKind::Add, scaled, b, Broadcast::Channel)?;
        let gate = s.tape.sigmoid(shifted);
        let gate = s.tape.reshape(gate, &[n * g, 1, hw])?;

        let out = s.tape.binary(BinaryKind::Mul, xg, gate, Broadcast::AcrossChannels)?;
        s.tape.reshape(out, &shape)
    }
}
