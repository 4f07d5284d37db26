use crate::error::{Error, Result};
use crate::siamese::DistanceRecord;

pub const FIT_LR: f64 = 0.1;
pub const FIT_ITERATIONS: usize = 500;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(different | d) = sigmoid(w·d + b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogisticModel {
    pub w: f64,
    pub b: f64,
}

impl LogisticModel {
    /// Full-batch gradient descent on the mean negative log-likelihood from zero.
    ///
    /// Distances are divided by their root mean square (when above 1) during descent so
    /// the fixed step stays stable for unnormalised embeddings; the slope is mapped back.
    pub fn fit(records: &[DistanceRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::contract("logistic fit on no records"));
        }
        let positives = records.iter().filter(|r| r.y == 1).count();
        if positives == 0 || positives == records.len() {
            return Err(Error::contract("degenerate logistic fit: records carry a single label"));
        }
        if records.iter().any(|r| !r.d.is_finite() || r.d < 0.0) {
            return Err(Error::Numeric("distances must be finite and non-negative".into()));
        }
        let n = records.len() as f64;
        let rms = (records.iter().map(|r| r.d * r.d).sum::<f64>() / n).sqrt();
        let scale = rms.max(1.0);
        let (mut w, mut b) = (0.0, 0.0);
        for _ in 0..FIT_ITERATIONS {
            let (mut gw, mut gb) = (0.0, 0.0);
            for r in records {
                let x = r.d / scale;
                let err = sigmoid(w * x + b) - r.y as f64;
                gw += err * x;
                gb += err;
            }
            w -= FIT_LR * gw / n;
            b -= FIT_LR * gb / n;
        }
        Ok(LogisticModel { w: w / scale, b })
    }

    pub fn predict_same(&self, d: f64) -> f64 {
        1.0 - sigmoid(self.w * d + self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(flip: bool) -> Vec<DistanceRecord> {
        let mut out = Vec::new();
        for _ in 0..20 {
            out.push(DistanceRecord { d: 0.1, y: flip as u8 });
            out.push(DistanceRecord { d: 3.0, y: !flip as u8 });
        }
        out
    }

    #[test]
    fn separable_fit_orientation() {
        let m = LogisticModel::fit(&separable(false)).unwrap();
        assert!(m.w > 0.0);
        assert!(m.predict_same(0.1) > 0.5 && 0.5 > m.predict_same(3.0));
        let flipped = LogisticModel::fit(&separable(true)).unwrap();
        assert!(flipped.w < 0.0);
    }

    #[test]
    fn single_label_is_rejected() {
        let recs = vec![DistanceRecord { d: 1.0, y: 0 }; 5];
        assert!(LogisticModel::fit(&recs).is_err());
        assert!(LogisticModel::fit(&[]).is_err());
    }

    #[test]
    fn predict_hand_cases() {
        assert_eq!(LogisticModel::default().predict_same(7.0), 0.5);
        assert_eq!(LogisticModel { w: 2.0, b: -2.0 }.predict_same(1.0), 0.5);
        let m = LogisticModel { w: 1.5, b: 0.3 };
        assert!(m.predict_same(0.5) > m.predict_same(0.6));
    }
}
