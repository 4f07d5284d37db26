//! Balanced positive/negative pair epochs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::LabeledImage;

/// Number of unordered pairs among `n` images.
pub fn max_pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Indices into an image list plus the pair label (0 = same class, 1 = different).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub label: u8,
}

impl PairSample {
    pub fn images<'a>(&self, images: &'a [LabeledImage]) -> (&'a LabeledImage, &'a LabeledImage) {
        (&images[self.a], &images[self.b])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairEpochPlan {
    pub length: usize,
    pub seed: u64,
}

/// Draws `length/2` positives uniformly from the same-class pair universe and
/// `length/2` negatives uniformly from the cross-class universe, with replacement,
/// then shuffles.
pub fn build_pair_epoch(images: &[LabeledImage], plan: PairEpochPlan) -> Result<Vec<PairSample>> {
    if plan.length == 0 || !plan.length.is_multiple_of(2) {
        return Err(Error::config(format!("pair epoch length must be even and positive, got {}", plan.length)));
    }
    let classes = images.iter().map(|i| i.class_id).max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for img in images {
        counts[img.class_id] += 1;
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::config("negative pairs need at least 2 classes"));
    }
    if let Some(&c) = present.iter().find(|&&c| counts[c] < 2) {
        return Err(Error::config(format!("class {c} has fewer than 2 images; positive pairs need 2")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let n = images.len();
    let half = plan.length / 2;
    let mut out = Vec::with_capacity(plan.length);
    for label in [0u8, 1] {
        let mut drawn = 0;
        while drawn < half {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let same = images[a].class_id == images[b].class_id;
            if a != b && same == (label == 0) {
                out.push(PairSample { a, b, label });
                drawn += 1;
            }
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}
