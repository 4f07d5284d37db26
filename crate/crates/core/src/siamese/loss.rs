use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Embedding distance of one pair with its label (0 = same class, 1 = different).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceRecord {
    pub d: f64,
    pub y: u8,
}

pub const CE_FLOOR: f64 = 1e-12;

fn check_labels(labels: impl IntoIterator<Item = u8>) -> Result<()> {
    for y in labels {
        if y > 1 {
            return Err(Error::contract(format!("pair label must be 0 or 1, got {y}")));
        }
    }
    Ok(())
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim(format!("distance between lengths {} and {}", u.len(), v.len())));
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// `(1/2N) Σ [(1−y)·d² + y·max(margin − d, 0)²]`.
pub fn contrastive_loss(records: &[DistanceRecord], margin: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::contract("contrastive loss of an empty batch"));
    }
    if !(margin > 0.0) {
        return Err(Error::contract("margin must be positive"));
    }
    check_labels(records.iter().map(|r| r.y))?;
    let total: f64 = records
        .iter()
        .map(|r| {
            if r.y == 0 {
                r.d * r.d
            } else {
                let h = (margin - r.d).max(0.0);
                h * h
            }
        })
        .sum();
    Ok(total / (2.0 * records.len() as f64))
}

/// Tape version of [`contrastive_loss`] over a rank-1 distance vector.
pub fn contrastive_loss_var<T: Real>(tape: &mut Tape<T>, d: Var, labels: &[u8], margin: f64) -> Result<Var> {
    let n = labels.len();
    if n == 0 || tape.shape(d) != [n] {
        return Err(Error::dim(format!("{} labels for distances {:?}", n, tape.shape(d))));
    }
    if !(margin > 0.0) {
        return Err(Error::contract("margin must be positive"));
    }
    check_labels(labels.iter().copied())?;
    let same: Vec<f64> = labels.iter().map(|&y| 1.0 - y as f64).collect();
    let diff: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    let same = tape.constant(Tensor::from_f64([n], &same)?);
    let diff = tape.constant(Tensor::from_f64([n], &diff)?);
    let d2 = tape.square(d);
    let neg = tape.scale(d, -1.0);
    let gap = tape.offset(neg, margin);
    let hinge = tape.relu(gap);
    let h2 = tape.square(hinge);
    let pos_terms = tape.mul(d2, same)?;
    let neg_terms = tape.mul(h2, diff)?;
    let terms = tape.add(pos_terms, neg_terms)?;
    let total = tape.sum(terms);
    Ok(tape.scale(total, 1.0 / (2.0 * n as f64)))
}

/// Row-wise Euclidean distance between two `N×E` embeddings, giving `[N]`.
pub fn pair_distance_var<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    if tape.shape(a).len() != 2 {
        return Err(Error::dim(format!("pair distance expects N×E, got {:?}", tape.shape(a))));
    }
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff);
    let ss = tape.sum_axis(sq, 1)?;
    Ok(tape.sqrt(ss))
}

/// `−(1/N) Σ_i log p_i,y_i` with probabilities clamped at [`CE_FLOOR`].
pub fn cross_entropy_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::contract(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::contract(format!("label {y} out of range for {} classes", row.len())))?;
        total -= p.max(CE_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

/// Softmax cross-entropy of `N×C` logits.
pub fn cross_entropy_var<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::dim(format!("{} labels for logits {:?}", labels.len(), shape)));
    }
    let (n, c) = (shape[0], shape[1]);
    let mut onehot = vec![0.0; n * c];
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::contract(format!("label {y} out of range for {c} classes")));
        }
        onehot[i * c + y] = 1.0;
    }
    let onehot = tape.constant(Tensor::from_f64([n, c], &onehot)?);
    let p = tape.softmax(logits, 1)?;
    let p = tape.clamp_min(p, CE_FLOOR);
    let logp = tape.ln(p);
    let picked = tape.mul(logp, onehot)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0 / n as f64))
}
