use crate::error::{Error, Result};
use crate::nn::{Conv2d, Conv2dSpec, Dense, ParamStore, Session};
use crate::tensor::{BinaryKind, Broadcast, Real, Var};

use super::{AttentionBlock, AttentionConfig};

/// Selective kernel fusion over a 3×3 and a 5×5 branch.
///
/// `U₃ = relu(conv₃(x))`, `U₅ = relu(conv₅(x))`, `z = relu(fc(GAP(U₃ + U₅)))`;
/// per-branch logits from `z` are softmaxed across the two branches for each
/// channel and the output is `a₃·U₃ + a₅·U₅`.
pub struct SkBlock {
    channels: usize,
    branch3: Conv2d,
    branch5: Conv2d,
    squeeze: Dense,
    select3: Dense,
    select5: Dense,
}

impl SkBlock {
    pub fn new<T: Real>(cfg: &AttentionConfig, channels: usize, name: &str, store: &mut ParamStore<T>) -> Result<Self> {
        if cfg.sk_reduction == 0 || channels / cfg.sk_reduction == 0 {
            return Err(Error::config(format!(
                "SK reduction {} too large for {} channels",
                cfg.sk_reduction, channels
            )));
        }
        let hidden = (channels / cfg.sk_reduction).max(4);
        Ok(SkBlock {
            channels,
            branch3: Conv2d::new(store, &format!("{name}.conv3"), Conv2dSpec::square(channels, channels, 3, 1).with_bias())?,
            branch5: Conv2d::new(store, &format!("{name}.conv5"), Conv2dSpec::square(channels, channels, 5, 1).with_bias())?,
            squeeze: Dense::new(store, &format!("{name}.fc"), channels, hidden)?,
            select3: Dense::new(store, &format!("{name}.fc3"), hidden, channels)?,
            select5: Dense::new(store, &format!("{name}.fc5"), hidden, channels)?,
        })
    }

    pub fn branches(&self) -> (&Conv2d, &Conv2d) {
        (&self.branch3, &self.branch5)
    }

    pub fn selectors(&self) -> (&Dense, &Dense, &Dense) {
        (&self.squeeze, &self.select3, &self.select5)
    }
}

impl<T: Real> AttentionBlock<T> for SkBlock {
    fn kind(&self) -> &'static str {
        "sk"
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let u3 = self.branch3.forward(s, x)?;
        let u3 = s.tape.relu(u3);
        let u5 = self.branch5.forward(s, x)?;
        let u5 = s.tape.relu(u5);
        let fused = s.tape.add(u3, u5)?;
        let pooled = s.tape.global_avg_pool(fused)?;
        let z = self.squeeze.forward(s, pooled)?;
        let z = s.tape.relu(z);

        let n = s.tape.shape(x)[0];
        let c = self.channels;
        let l3 = self.select3.forward(s, z)?;
        let l3 = s.tape.reshape(l3, &[n, 1, c])?;
        let l5 = self.select5.forward(s, z)?;
        let l5 = s.tape.reshape(l5, &[n, 1, c])?;
        let logits = s.tape.concat(&[l3, l5], 1)?;
        let weights = s.tape.softmax(logits, 1)?;
        let a3 = s.tape.slice(weights, 1, 0, 1)?;
        let a3 = s.tape.reshape(a3, &[n, c])?;
        let a5 = s.tape.slice(weights, 1, 1, 1)?;
        let a5 = s.tape.reshape(a5, &[n, c])?;

        let y3 = s.tape.binary(BinaryKind::Mul, u3, a3, Broadcast::Leading)?;
        let y5 = s.tape.binary(BinaryKind::Mul, u5, a5, Broadcast::Leading)?;
        s.tape.add(y3, y5)
    }
}
