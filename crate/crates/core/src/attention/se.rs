use crate::error::{Error, Result};
use crate::nn::{Dense, ParamStore, Session};
use crate::tensor::{BinaryKind, Broadcast, Real, Var};

use super::{AttentionBlock, AttentionConfig};

/// Squeeze-and-excitation: `x · sigmoid(W₂·relu(W₁·GAP(x)))` per channel.
pub struct SeBlock {
    channels: usize,
    reduce: Dense,
    expand: Dense,
}

impl SeBlock {
    pub fn new<T: Real>(cfg: &AttentionConfig, channels: usize, name: &str, store: &mut ParamStore<T>) -> Result<Self> {
        let hidden = channels / cfg.se_reduction.max(1);
        if cfg.se_reduction == 0 || hidden == 0 {
            return Err(Error::config(format!(
                "SE reduction {} leaves no hidden units for {} channels",
                cfg.se_reduction, channels
            )));
        }
        Ok(SeBlock {
            channels,
            reduce: Dense::new(store, &format!("{name}.fc1"), channels, hidden)?,
            expand: Dense::new(store, &format!("{name}.fc2"), hidden, channels)?,
        })
    }

    pub fn layers(&self) -> (&Dense, &Dense) {
        (&self.reduce, &self.expand)
    }
}

impl<T: Real> AttentionBlock<T> for SeBlock {
    fn kind(&self) -> &'static str {
        "se"
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let squeezed = s.tape.global_avg_pool(x)?;
        let h = self.reduce.forward(s, squeezed)?;
        let h = s.tape.relu(h);
        let e = self.expand.forward(s, h)?;
        let gate = s.tape.sigmoid(e);
        s.tape.binary(BinaryKind::Mul, x, gate, Broadcast::Leading)
    }
}
