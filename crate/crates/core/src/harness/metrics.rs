use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::dim("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix {
            classes: c,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-class true counts `a_c`.
    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|r| (0..self.classes).map(|c| self.get(r, c)).sum()).collect()
    }

    /// Per-class predicted counts `b_c`.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|c| (0..self.classes).map(|r| self.get(r, c)).sum()).collect()
    }

    pub fn observed_agreement(&self) -> f64 {
        let trace: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        trace as f64 / self.n() as f64
    }

    pub fn chance_agreement(&self) -> f64 {
        let n = self.n() as f64;
        let dot: f64 = self.row_sums().iter().zip(self.col_sums()).map(|(&a, b)| a as f64 * b as f64).sum();
        dot / (n * n)
    }

    /// Relabels classes: old class `i` becomes `perm[i]` on both axes.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = ConfusionMatrix::new(self.classes);
        for r in 0..self.classes {
            for c in 0..self.classes {
                out.counts[perm[r] * self.classes + perm[c]] = self.get(r, c);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.classes {
            let row: Vec<String> = (0..self.classes).map(|c| self.get(r, c).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Cohen's kappa `(p_o − p_e) / (1 − p_e)`.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.n() == 0 {
        return Err(Error::contract("kappa of an empty confusion matrix"));
    }
    let po = cm.observed_agreement();
    let pe = cm.chance_agreement();
    if pe >= 1.0 {
        return Err(Error::Numeric("kappa undefined: chance agreement is 1".into()));
    }
    Ok((po - pe) / (1.0 - pe))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let perfect = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 5]]).unwrap();
        assert_eq!(kappa(&perfect).unwrap(), 1.0);
        let two = ConfusionMatrix::from_rows(&[vec![4, 1], vec![1, 4]]).unwrap();
        assert!((two.observed_agreement() - 0.8).abs() < 1e-15);
        assert!((two.chance_agreement() - 0.5).abs() < 1e-15);
        assert!((kappa(&two).unwrap() - 0.6).abs() < 1e-12);
        let mut all_zero = ConfusionMatrix::new(4);
        for t in 0..4 {
            for _ in 0..5 {
                all_zero.add(t, 0);
            }
        }
        assert!(kappa(&all_zero).unwrap().abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        let one = ConfusionMatrix::from_rows(&[vec![6, 0], vec![0, 0]]).unwrap();
        assert!(matches!(kappa(&one), Err(Error::Numeric(_))));
        assert!(kappa(&ConfusionMatrix::new(3)).is_err());
    }
}
