use crate::attention::{AttentionBlock, AttentionRegistry};
use crate::error::Result;
use crate::nn::{Conv2dSpec, ParamStore, Session};
use crate::tensor::{Real, Var};

use super::{apply_attention, Backbone, BackboneSpec, ConvBn, INCEPTION_TINY};

fn cbr<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, k: (usize, usize), stride: usize) -> Result<ConvBn> {
    let spec = Conv2dSpec {
        c_in,
        c_out,
        kernel: k,
        stride,
        bias: false,
    };
    ConvBn::new(store, name, spec, true)
}

fn chain<T: Real>(layers: &[ConvBn], s: &mut Session<T>, x: Var) -> Result<Var> {
    layers.iter().try_fold(x, |h, l| l.forward(s, h))
}

enum Block {
    Stem(Vec<ConvBn>),
    /// 1×1 | 1×1→3×3 | 1×1→3×3→3×3 | avgpool→1×1
    InceptionA {
        branches: [Vec<ConvBn>; 3],
        pool_proj: ConvBn,
    },
    /// strided 3×3 | 2×2 max pool
    Reduction(ConvBn),
    /// 1×1 | 1×1→1×3→3×1
    InceptionB([Vec<ConvBn>; 2]),
}

impl Block {
    fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        match self {
            Block::Stem(layers) => chain(layers, s, x),
            Block::InceptionA { branches, pool_proj } => {
                let mut outs = Vec::with_capacity(4);
                for b in branches {
                    outs.push(chain(b, s, x)?);
                }
                let pooled = s.tape.avg_pool3x3(x)?;
                outs.push(pool_proj.forward(s, pooled)?);
                s.tape.concat(&outs, 1)
            }
            Block::Reduction(conv) => {
                let a = conv.forward(s, x)?;
                let b = s.tape.max_pool2x2(x)?;
                s.tape.concat(&[a, b], 1)
            }
            Block::InceptionB(branches) => {
                let a = chain(&branches[0], s, x)?;
                let b = chain(&branches[1], s, x)?;
                s.tape.concat(&[a, b], 1)
            }
        }
    }
}

/// One block of each of five types: stem, inception-A, reduction-A, inception-B,
/// reduction-B, with optional attention after each.
///
/// Channels: 1 → 16 (stem, stride 2) → 32 → 64 (stride 2) → 64 → 128 (stride 2).
pub struct InceptionTiny<T: Real> {
    input_size: usize,
    blocks: Vec<Block>,
    attention: Vec<Option<Box<dyn AttentionBlock<T>>>>,
}

impl<T: Real> InceptionTiny<T> {
    pub const BLOCK_WIDTHS: [usize; 5] = [16, 32, 64, 64, 128];
    pub const BLOCK_TYPES: [&'static str; 5] = ["stem", "inception_a", "reduction_a", "inception_b", "reduction_b"];

    pub fn build(spec: &BackboneSpec, registry: &AttentionRegistry<T>, store: &mut ParamStore<T>) -> Result<Self> {
        spec.check_input_size()?;
        let blocks = vec![
            Block::Stem(vec![
                cbr(store, "stem.0", 1, 16, (3, 3), 1)?,
                cbr(store, "stem.1", 16, 16, (3, 3), 2)?,
            ]),
            Block::InceptionA {
                branches: [
                    vec![cbr(store, "inception_a.b1", 16, 8, (1, 1), 1)?],
                    vec![
                        cbr(store, "inception_a.b3.0", 16, 8, (1, 1), 1)?,
                        cbr(store, "inception_a.b3.1", 8, 8, (3, 3), 1)?,
                    ],
                    vec![
                        cbr(store, "inception_a.b33.0", 16, 8, (1, 1), 1)?,
                        cbr(store, "inception_a.b33.1", 8, 8, (3, 3), 1)?,
                        cbr(store, "inception_a.b33.2", 8, 8, (3, 3), 1)?,
                    ],
                ],
                pool_proj: cbr(store, "inception_a.pool", 16, 8, (1, 1), 1)?,
            },
            Block::Reduction(cbr(store, "reduction_a.conv", 32, 32, (3, 3), 2)?),
            Block::InceptionB([
                vec![cbr(store, "inception_b.b1", 64, 32, (1, 1), 1)?],
                vec![
                    cbr(store, "inception_b.b7.0", 64, 16, (1, 1), 1)?,
                    cbr(store, "inception_b.b7.1", 16, 16, (1, 3), 1)?,
                    cbr(store, "inception_b.b7.2", 16, 32, (3, 1), 1)?,
                ],
            ]),
            Block::Reduction(cbr(store, "reduction_b.conv", 64, 64, (3, 3), 2)?),
        ];
        let mut attention = Vec::with_capacity(blocks.len());
        for (name, &c) in Self::BLOCK_TYPES.iter().zip(&Self::BLOCK_WIDTHS) {
            attention.push(registry.build(&spec.attention, c, &format!("{name}.attention"), store)?);
        }
        Ok(InceptionTiny {
            input_size: spec.input_size,
            blocks,
            attention,
        })
    }
}

impl<T: Real> Backbone<T> for InceptionTiny<T> {
    fn family(&self) -> &'static str {
        INCEPTION_TINY
    }

    fn feature_dim(&self) -> usize {
        Self::BLOCK_WIDTHS[4]
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn attention(&self) -> Vec<&dyn AttentionBlock<T>> {
        self.attention.iter().flatten().map(|b| b.as_ref()).collect()
    }

    fn features(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (block, att) in self.blocks.iter().zip(&self.attention) {
            h = block.forward(s, h)?;
            h = apply_attention(att.as_deref(), s, h)?;
        }
        s.tape.global_avg_pool(h)
    }
}
