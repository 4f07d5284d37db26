//! Distance-to-probability back-end and the iterative base-probability classifier.

mod logistic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::siamese::euclidean_distance;

pub use logistic::{LogisticModel, FIT_ITERATIONS, FIT_LR};

pub const DEFAULT_BASE: f64 = 0.5;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
/// A class is chosen once its base exceeds this.
pub const ACCEPT_ABOVE: f64 = 1.0;
/// A class is abandoned once its base drops below this.
pub const ABANDON_BELOW: f64 = 0.0;

/// Evidence source for one unknown image against a per-class reference gallery.
pub trait PairScorer {
    fn classes(&self) -> usize;

    fn gallery_size(&self, class: usize) -> usize;

    /// Distance to gallery image `k` of `class` and the resulting same-class probability.
    fn score(&mut self, class: usize, k: usize) -> Result<(f64, f64)>;
}

/// Scores against cached gallery embeddings with a fitted logistic back-end.
pub struct EmbeddingScorer<'a> {
    pub unknown: &'a [f64],
    /// `gallery[class][k]` is an embedding.
    pub gallery: &'a [Vec<Vec<f64>>],
    pub logistic: LogisticModel,
}

impl PairScorer for EmbeddingScorer<'_> {
    fn classes(&self) -> usize {
        self.gallery.len()
    }

    fn gallery_size(&self, class: usize) -> usize {
        self.gallery[class].len()
    }

    fn score(&mut self, class: usize, k: usize) -> Result<(f64, f64)> {
        let d = euclidean_distance(self.unknown, &self.gallery[class][k])?;
        Ok((d, self.logistic.predict_same(d)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorState {
    pub base: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub max_iterations: usize,
}

impl PredictorState {
    pub fn new(classes: usize, base_init: f64, max_iterations: usize) -> Self {
        PredictorState {
            base: vec![base_init; classes],
            active: vec![true; classes],
            iterations: 0,
            max_iterations,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub class: usize,
    pub distance: f64,
    pub predict: f64,
    pub base: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Threshold,
    AllAbandoned,
    Cap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub termination: Termination,
    pub state: PredictorState,
    pub trace: Vec<TraceRow>,
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs the additive evidence loop `base[i] += predict[i] − 0.5` until a class
/// exceeds 1, every class is abandoned, or the iteration cap is hit.
///
/// Each round visits active classes in id order and draws one gallery image per class
/// from a generator seeded with `seed`.
pub fn iterative_classify<S: PairScorer>(scorer: &mut S, mut state: PredictorState, seed: u64) -> Result<Classification> {
    let classes = scorer.classes();
    if classes == 0 || state.base.len() != classes || state.active.len() != classes {
        return Err(Error::config(format!("predictor state for {} classes, gallery has {}", state.base.len(), classes)));
    }
    if let Some(c) = (0..classes).find(|&c| scorer.gallery_size(c) == 0) {
        return Err(Error::config(format!("gallery class {c} is empty")));
    }
    if state.max_iterations == 0 {
        return Err(Error::config("max iterations must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    loop {
        state.iterations += 1;
        for c in 0..classes {
            if !state.active[c] {
                continue;
            }
            let k = rng.gen_range(0..scorer.gallery_size(c));
            let (distance, predict) = scorer.score(c, k)?;
            if !(0.0..=1.0).contains(&predict) {
                return Err(Error::Numeric(format!("same-class probability {predict} outside [0, 1]")));
            }
            state.base[c] += predict - 0.5;
            trace.push(TraceRow {
                iteration: state.iterations,
                class: c,
                distance,
                predict,
                base: state.base[c],
            });
        }
        for c in 0..classes {
            if state.active[c] && state.base[c] < ABANDON_BELOW {
                state.active[c] = false;
            }
        }
        let winner = (0..classes).find(|&c| state.active[c] && state.base[c] > ACCEPT_ABOVE);
        let termination = if winner.is_some() {
            Termination::Threshold
        } else if !state.active.contains(&true) {
            Termination::AllAbandoned
        } else if state.iterations >= state.max_iterations {
            Termination::Cap
        } else {
            continue;
        };
        let class = winner.unwrap_or_else(|| argmax_lowest(&state.base));
        return Ok(Classification {
            class,
            termination,
            state,
            trace,
        });
    }
}

/// Recomputes each class's final base from the trace: `init + Σ (predict − 0.5)`.
pub fn replay_bases(trace: &[TraceRow], classes: usize, base_init: f64) -> Vec<f64> {
    let mut base = vec![base_init; classes];
    for row in trace {
        base[row.class] += row.predict - 0.5;
    }
    base
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,class,distance,predict,base\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.class, r.distance, r.predict, r.base));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed probability per class, independent of the drawn gallery image.
    struct Stub(Vec<f64>);

    impl PairScorer for Stub {
        fn classes(&self) -> usize {
            self.0.len()
        }
        fn gallery_size(&self, _: usize) -> usize {
            3
        }
        fn score(&mut self, class: usize, _: usize) -> Result<(f64, f64)> {
            Ok((1.0 - self.0[class], self.0[class]))
        }
    }

    fn run(p: &[f64]) -> Classification {
        iterative_classify(&mut Stub(p.to_vec()), PredictorState::new(p.len(), DEFAULT_BASE, DEFAULT_MAX_ITERATIONS), 1).unwrap()
    }

    #[test]
    fn strong_true_class_wins_at_iteration_two() {
        let out = run(&[0.2, 0.2, 0.8, 0.2]);
        assert_eq!(out.class, 2);
        assert_eq!(out.state.iterations, 2);
        assert_eq!(out.termination, Termination::Threshold);
        assert_eq!(out.state.active, vec![false, false, true, false]);
        assert!((out.state.base[2] - 1.1).abs() < 1e-12);
        assert!((out.state.base[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn neutral_evidence_hits_cap_and_picks_lowest() {
        let out = run(&[0.5; 4]);
        assert_eq!(out.termination, Termination::Cap);
        assert_eq!(out.state.iterations, DEFAULT_MAX_ITERATIONS);
        assert_eq!(out.class, 0);
        assert_eq!(out.state.base, vec![0.5; 4]);
    }

    #[test]
    fn zero_probability_class_abandoned_at_two() {
        let out = run(&[0.5, 0.0, 0.5, 0.5]);
        let rows: Vec<_> = out.trace.iter().filter(|r| r.class == 1).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].iteration, 2);
        assert_eq!(rows[1].base, -0.5);
        assert_eq!(out.state.base[1], -0.5);
        assert!(!out.state.active[1]);
    }

    #[test]
    fn all_abandoned_falls_back_to_argmax() {
        let out = run(&[0.1, 0.45, 0.2, 0.0]);
        assert_eq!(out.termination, Termination::AllAbandoned);
        assert_eq!(out.class, 1);
    }

    #[test]
    fn replay_and_csv() {
        let out = run(&[0.45, 0.55, 0.5, 0.52]);
        assert_eq!(replay_bases(&out.trace, 4, DEFAULT_BASE), out.state.base);
        let csv = trace_csv(&out.trace);
        assert!(csv.starts_with("iteration,class,distance,predict,base\n"));
        assert_eq!(csv.lines().count(), out.trace.len() + 1);
    }

    #[test]
    fn empty_gallery_class_is_config_error() {
        let gallery = vec![vec![vec![0.0; 2]], vec![]];
        let mut s = EmbeddingScorer {
            unknown: &[0.0, 0.0],
            gallery: &gallery,
            logistic: LogisticModel::default(),
        };
        let r = iterative_classify(&mut s, PredictorState::new(2, 0.5, 5), 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
