use crate::attention::{AttentionBlock, AttentionRegistry};
use crate::error::{Error, Result};
use crate::nn::{Conv2dSpec, ParamStore, Session};
use crate::tensor::{Real, Var};

use super::{apply_attention, Backbone, BackboneSpec, ConvBn, RESNET_TINY};

/// Two 3×3 conv-bn stages plus an identity or projected skip.
///
/// A stride-2 projection is a 2×2 max pool followed by a 1×1 conv-bn.
struct ResidualBlock {
    conv1: ConvBn,
    conv2: ConvBn,
    projection: Option<ConvBn>,
    downsample: bool,
}

impl ResidualBlock {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        let projection = if stride != 1 || c_in != c_out {
            Some(ConvBn::new(store, &format!("{name}.proj"), Conv2dSpec::square(c_in, c_out, 1, 1), false)?)
        } else {
            None
        };
        Ok(ResidualBlock {
            conv1: ConvBn::new(store, &format!("{name}.conv1"), Conv2dSpec::square(c_in, c_out, 3, stride), true)?,
            conv2: ConvBn::new(store, &format!("{name}.conv2"), Conv2dSpec::square(c_out, c_out, 3, 1), false)?,
            projection,
            downsample: stride != 1,
        })
    }

    fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let y = self.conv1.forward(s, x)?;
        let y = self.conv2.forward(s, y)?;
        let skip = match &self.projection {
            Some(p) => {
                let src = if self.downsample { s.tape.max_pool2x2(x)? } else { x };
                p.forward(s, src)?
            }
            None => x,
        };
        let sum = s.tape.add(y, skip)?;
        Ok(s.tape.relu(sum))
    }
}

/// Four layers of two residual blocks; optional attention after each layer.
pub struct ResNetTiny<T: Real> {
    input_size: usize,
    widths: [usize; 4],
    stem: ConvBn,
    layers: Vec<[ResidualBlock; 2]>,
    attention: Vec<Option<Box<dyn AttentionBlock<T>>>>,
}

impl<T: Real> ResNetTiny<T> {
    pub const BLOCKS_PER_LAYER: usize = 2;

    pub fn build(spec: &BackboneSpec, registry: &AttentionRegistry<T>, store: &mut ParamStore<T>) -> Result<Self> {
        spec.check_input_size()?;
        let widths: [usize; 4] = spec.widths.as_slice().try_into().map_err(|_| {
            Error::config(format!("resnet_tiny needs 4 stage widths, got {:?}", spec.widths))
        })?;
        if widths.contains(&0) {
            return Err(Error::config("resnet_tiny stage widths must be positive"));
        }
        let stem = ConvBn::new(store, "stem", Conv2dSpec::square(1, widths[0], 3, 1), true)?;
        let mut layers = Vec::with_capacity(4);
        let mut attention = Vec::with_capacity(4);
        let mut c_in = widths[0];
        for (i, &w) in widths.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let name = format!("layer{}", i + 1);
            layers.push([
                ResidualBlock::new(store, &format!("{name}.0"), c_in, w, stride)?,
                ResidualBlock::new(store, &format!("{name}.1"), w, w, 1)?,
            ]);
            attention.push(registry.build(&spec.attention, w, &format!("{name}.attention"), store)?);
            c_in = w;
        }
        Ok(ResNetTiny {
            input_size: spec.input_size,
            widths,
            stem,
            layers,
            attention,
        })
    }
}

impl<T: Real> Backbone<T> for ResNetTiny<T> {
    fn family(&self) -> &'static str {
        RESNET_TINY
    }

    fn feature_dim(&self) -> usize {
        self.widths[3]
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn attention(&self) -> Vec<&dyn AttentionBlock<T>> {
        self.attention.iter().flatten().map(|b| b.as_ref()).collect()
    }

    fn features(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let mut h = self.stem.forward(s, x)?;
        for (blocks, att) in self.layers.iter().zip(&self.attention) {
            for block in blocks {
                h = block.forward(s, h)?;
            }
            h = apply_attention(att.as_deref(), s, h)?;
        }
        s.tape.global_avg_pool(h)
    }
}
