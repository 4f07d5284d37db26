use crate::error::{Error, Result};
use crate::nn::{Init, ParamId, ParamRole, ParamStore, Session};
use crate::tensor::{BinaryKind, Broadcast, Real, Var};

use super::{AttentionBlock, AttentionConfig};

/// Nearest odd integer to `|log₂(C)/γ + b/γ|`, ties rounded up, at least 1.
pub fn eca_kernel_size(channels: usize, gamma: f64, b: f64) -> usize {
    let t = ((channels as f64).log2() / gamma + b / gamma).abs();
    let half = ((t - 1.0) / 2.0 + 0.5).floor().max(0.0);
    2 * half as usize + 1
}

/// Efficient channel attention: a 1-D convolution across the pooled channel
/// descriptor replaces SE's bottleneck.
pub struct EcaBlock {
    channels: usize,
    kernel: ParamId,
    kernel_size: usize,
}

impl EcaBlock {
    pub fn new<T: Real>(cfg: &AttentionConfig, channels: usize, name: &str, store: &mut ParamStore<T>) -> Result<Self> {
        if cfg.eca_gamma <= 0.0 {
            return Err(Error::config("ECA gamma must be positive"));
        }
        let k = eca_kernel_size(channels, cfg.eca_gamma, cfg.eca_b);
        let kernel = store.declare(
            &format!("{name}.conv.weight"),
            &[k],
            Init::HeNormal { fan_in: k },
            ParamRole::Trainable,
        )?;
        Ok(EcaBlock {
            channels,
            kernel,
            kernel_size: k,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn kernel(&self) -> ParamId {
        self.kernel
    }
}

impl<T: Real> AttentionBlock<T> for EcaBlock {
    fn kind(&self) -> &'static str {
        "eca"
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn forward(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let squeezed = s.tape.global_avg_pool(x)?;
        let w = s.param(self.kernel);
        let mixed = s.tape.channel_conv1d(squeezed, w)?;
        let gate = s.tape.sigmoid(mixed);
        s.tape.binary(BinaryKind::Mul, x, gate, Broadcast::Leading)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_size_rounds_to_nearest_odd() {
        assert_eq!(eca_kernel_size(64, 2.0, 1.0), 3);
        assert_eq!(eca_kernel_size(8, 2.0, 1.0), 3);
        assert_eq!(eca_kernel_size(128, 2.0, 1.0), 5);
        assert_eq!(eca_kernel_size(1, 2.0, 1.0), 1);
        assert_eq!(eca_kernel_size(2, 2.0, 1.0), 1);
    }
}
