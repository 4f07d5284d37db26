//! Training and evaluation loops.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::BackboneSpec;
use crate::data::{build_pair_epoch, gen_synthetic, load_dataset, LabeledImage, PairEpochPlan, SyntheticSpec};
use crate::error::{Error, Result};
use crate::predictor::{iterative_classify, Classification, EmbeddingScorer, LogisticModel, PredictorState, TraceRow};
use crate::seed::derive;
use crate::siamese::{baseline_train_step, siamese_train_step, Adam, ModelConfig, SiameseModel};

use super::checkpoint::Checkpoint;
use super::config::{parse_entries, DataSource, TrainConfig, TrainMode};
use super::metrics::{kappa, ConfusionMatrix};

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub class_names: Vec<String>,
}

impl Splits {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

pub fn resolve_data(cfg: &TrainConfig) -> Result<Splits> {
    match &cfg.data {
        DataSource::Synthetic {
            train_per_class,
            test_per_class,
            noise_sigma,
        } => {
            let spec = |per_class, stream| SyntheticSpec {
                classes: 4,
                per_class,
                image_size: cfg.image_size,
                noise_sigma: *noise_sigma,
                seed: derive(cfg.seed, stream, 0),
            };
            Ok(Splits {
                train: gen_synthetic(&spec(*train_per_class, "train-data"))?,
                test: gen_synthetic(&spec(*test_per_class, "test-data"))?,
                class_names: ["disk", "cross", "stripes", "ring"].map(String::from).to_vec(),
            })
        }
        DataSource::Directory(root) => {
            let train = load_dataset(&root.join("train"), cfg.image_size)?;
            let test = load_dataset(&root.join("test"), cfg.image_size)?;
            if train.class_names != test.class_names {
                return Err(Error::config(format!(
                    "train classes {:?} differ from test classes {:?}",
                    train.class_names, test.class_names
                )));
            }
            Ok(Splits {
                train: train.images,
                test: test.images,
                class_names: train.class_names,
            })
        }
    }
}

pub fn model_config(cfg: &TrainConfig, classes: usize) -> ModelConfig {
    let backbone = BackboneSpec::new(&cfg.backbone, &cfg.attention).with_input_size(cfg.image_size);
    ModelConfig::new(backbone, classes)
}

/// Config text stored in checkpoints: the canonical config plus the class count.
pub fn config_echo(cfg: &TrainConfig, classes: usize) -> String {
    format!("{}classes = {}\n", cfg.to_text(), classes)
}

pub fn parse_echo(echo: &str) -> Result<(TrainConfig, usize)> {
    let mut entries = parse_entries(echo)?;
    let pos = entries
        .iter()
        .position(|(k, _)| k == "classes")
        .ok_or_else(|| Error::config("checkpoint config lacks a class count"))?;
    let (_, v) = entries.remove(pos);
    let classes = v.parse().map_err(|_| Error::config(format!("bad class count {v:?}")))?;
    Ok((TrainConfig::from_entries(&entries)?, classes))
}

/// Rebuilds the model described by a checkpoint and loads its tensors.
pub fn load_model(ck: &Checkpoint) -> Result<(TrainConfig, SiameseModel<f32>)> {
    let (cfg, classes) = parse_echo(&ck.config)?;
    let mut model = SiameseModel::new(model_config(&cfg, classes), 0)?;
    ck.restore(model.store_mut())?;
    Ok((cfg, model))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub base_init: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl EvalOptions {
    pub fn from_config(cfg: &TrainConfig, seed: u64) -> Self {
        EvalOptions {
            base_init: cfg.base_init,
            max_iterations: cfg.max_iterations,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub kappa: f64,
}

/// Eval-mode embeddings grouped by class, computed one image at a time.
pub fn gallery_embeddings(model: &mut SiameseModel<f32>, gallery: &[LabeledImage]) -> Result<Vec<Vec<Vec<f64>>>> {
    let classes = model.config().classes;
    let mut out = vec![Vec::new(); classes];
    for img in gallery {
        if img.class_id >= classes {
            return Err(Error::config(format!("gallery class {} but model has {classes} classes", img.class_id)));
        }
        out[img.class_id].push(model.embed(img)?);
    }
    Ok(out)
}

pub fn classify_embedding(
    unknown: &[f64],
    gallery: &[Vec<Vec<f64>>],
    logistic: LogisticModel,
    opts: &EvalOptions,
    seed: u64,
) -> Result<Classification> {
    let mut scorer = EmbeddingScorer {
        unknown,
        gallery,
        logistic,
    };
    let state = PredictorState::new(gallery.len(), opts.base_init, opts.max_iterations);
    iterative_classify(&mut scorer, state, seed)
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Classifies every image of `queries` and accumulates the confusion matrix.
///
/// Siamese mode needs a logistic back-end and classifies against `gallery`; with
/// `leave_one_out` the queries are the gallery itself and each query is removed from
/// its own reference set. Baseline mode uses the class head.
pub fn evaluate(
    model: &mut SiameseModel<f32>,
    mode: TrainMode,
    logistic: Option<LogisticModel>,
    gallery: &[LabeledImage],
    queries: &[LabeledImage],
    opts: &EvalOptions,
    leave_one_out: bool,
) -> Result<Evaluation> {
    if queries.is_empty() {
        return Err(Error::contract("evaluation on an empty test set"));
    }
    let classes = model.config().classes;
    if let Some(img) = queries.iter().find(|i| i.class_id >= classes) {
        return Err(Error::config(format!(
            "image {} has class {} but the model has {classes} classes",
            img.source, img.class_id
        )));
    }
    let mut matrix = ConfusionMatrix::new(classes);
    match mode {
        TrainMode::Baseline => {
            for img in queries {
                let p = model.class_probs(img)?;
                matrix.add(img.class_id, argmax(&p));
            }
        }
        TrainMode::Siamese => {
            let logistic = logistic.ok_or_else(|| Error::config("siamese evaluation needs a fitted back-end"))?;
            let full = gallery_embeddings(model, gallery)?;
            let mut positions = vec![0usize; queries.len()];
            if leave_one_out {
                let mut seen = vec![0usize; classes];
                for (i, img) in queries.iter().enumerate() {
                    positions[i] = seen[img.class_id];
                    seen[img.class_id] += 1;
                }
            }
            for (i, img) in queries.iter().enumerate() {
                let seed = derive(opts.seed, "classify", i as u64);
                let result = if leave_one_out {
                    let mut g = full.clone();
                    let own = g[img.class_id].remove(positions[i]);
                    classify_embedding(&own, &g, logistic, opts, seed)?
                } else {
                    let e = model.embed(img)?;
                    classify_embedding(&e, &full, logistic, opts, seed)?
                };
                matrix.add(img.class_id, result.class);
            }
        }
    }
    let kappa = kappa(&matrix)?;
    Ok(Evaluation { matrix, kappa })
}

fn check_classes(model: &SiameseModel<f32>, splits: &Splits) -> Result<()> {
    let expected = model.config().classes;
    if splits.classes() != expected {
        return Err(Error::config(format!(
            "checkpoint has {expected} classes but the data has {} ({:?})",
            splits.classes(),
            splits.class_names
        )));
    }
    Ok(())
}

/// Loads a checkpoint and evaluates its test split against its training gallery.
/// `data` replaces the data source recorded in the checkpoint.
pub fn evaluate_checkpoint(ck: &Checkpoint, data: Option<DataSource>, seed: u64) -> Result<(TrainConfig, Evaluation)> {
    let (mut cfg, mut model) = load_model(ck)?;
    if let Some(d) = data {
        cfg.data = d;
    }
    let splits = resolve_data(&cfg)?;
    check_classes(&model, &splits)?;
    let opts = EvalOptions::from_config(&cfg, seed);
    let eval = evaluate(&mut model, cfg.mode, ck.logistic, &splits.train, &splits.test, &opts, false)?;
    Ok((cfg, eval))
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub class: usize,
    pub class_name: String,
    /// Class probabilities (baseline) or final per-class bases (siamese).
    pub scores: Vec<f64>,
    /// The iterative trace; empty in baseline mode.
    pub trace: Vec<TraceRow>,
}

/// Classifies one image with a checkpoint, using the checkpoint's training split as gallery.
pub fn predict_image(ck: &Checkpoint, image: &LabeledImage, data: Option<DataSource>, seed: u64) -> Result<Prediction> {
    let (mut cfg, mut model) = load_model(ck)?;
    if let Some(d) = data {
        cfg.data = d;
    }
    if image.size != cfg.image_size {
        return Err(Error::dim(format!("image is {0}×{0}, model expects {1}×{1}", image.size, cfg.image_size)));
    }
    let splits = resolve_data(&cfg)?;
    check_classes(&model, &splits)?;
    let (class, scores, trace) = match cfg.mode {
        TrainMode::Baseline => {
            let p = model.class_probs(image)?;
            (argmax(&p), p, Vec::new())
        }
        TrainMode::Siamese => {
            let logistic = ck.logistic.ok_or_else(|| Error::config("checkpoint lacks a logistic back-end"))?;
            let gallery = gallery_embeddings(&mut model, &splits.train)?;
            let e = model.embed(image)?;
            let opts = EvalOptions::from_config(&cfg, seed);
            let r = classify_embedding(&e, &gallery, logistic, &opts, derive(seed, "classify", 0))?;
            (r.class, r.state.base, r.trace)
        }
    };
    Ok(Prediction {
        class,
        class_name: splits.class_names[class].clone(),
        scores,
        trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_kappa: f64,
    pub test_kappa: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,loss,train_kappa,test_kappa\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.train_kappa, r.test_kappa));
    }
    out
}

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub best_epoch: usize,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub model: SiameseModel<f32>,
}

impl TrainOutcome {
    pub fn best_test_kappa(&self) -> f64 {
        self.rows[self.best_epoch - 1].test_kappa
    }
}

/// Contiguous batches of `size`; a final remainder below 2 joins the previous batch.
fn batches<I: Copy>(items: &[I], size: usize) -> Vec<&[I]> {
    let mut out: Vec<&[I]> = Vec::new();
    let mut start = 0;
    while start < items.len() {
        let mut end = (start + size).min(items.len());
        if items.len() - end < 2 {
            end = items.len();
        }
        out.push(&items[start..end]);
        start = end;
    }
    out
}

fn validate_splits(splits: &Splits) -> Result<()> {
    let c = splits.classes();
    let mut counts = vec![0usize; c];
    for img in splits.train.iter().chain(&splits.test) {
        if img.class_id >= c {
            return Err(Error::config(format!("image {} has class {} of {c}", img.source, img.class_id)));
        }
    }
    for img in &splits.train {
        counts[img.class_id] += 1;
    }
    if let Some(k) = counts.iter().position(|&n| n < 2) {
        return Err(Error::config(format!("training class {:?} needs at least 2 images", splits.class_names[k])));
    }
    if splits.test.is_empty() {
        return Err(Error::config("test set is empty"));
    }
    Ok(())
}

/// Trains per `cfg` on the given splits, evaluating train and test kappa after every epoch.
/// `on_epoch` sees each metrics row as it is produced.
pub fn train_on(cfg: &TrainConfig, splits: &Splits, mut on_epoch: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    validate_splits(splits)?;
    let classes = splits.classes();
    let echo = config_echo(cfg, classes);
    let mut model = SiameseModel::<f32>::new(model_config(cfg, classes), derive(cfg.seed, "init", 0))?;
    let mut opt = Adam::new(cfg.lr);
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    let mut last = None;
    for epoch in 1..=cfg.epochs {
        let e = epoch as u64;
        let eval = EvalOptions::from_config(cfg, derive(cfg.seed, "eval", e));
        let (loss, logistic) = match cfg.mode {
            TrainMode::Siamese => {
                let plan = PairEpochPlan {
                    length: cfg.length,
                    seed: derive(cfg.seed, "pairs", e),
                };
                let pairs = build_pair_epoch(&splits.train, plan)?;
                let mut records = Vec::with_capacity(pairs.len());
                let mut total = 0.0;
                for batch in batches(&pairs, cfg.batch_size) {
                    let step = siamese_train_step(&mut model, &mut opt, &splits.train, batch)?;
                    total += step.loss * batch.len() as f64;
                    records.extend(step.records);
                }
                (total / pairs.len() as f64, Some(LogisticModel::fit(&records)?))
            }
            TrainMode::Baseline => {
                let mut order: Vec<usize> = (0..splits.train.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(cfg.seed, "order", e)));
                let mut total = 0.0;
                for batch in batches(&order, cfg.batch_size) {
                    let imgs: Vec<&LabeledImage> = batch.iter().map(|&i| &splits.train[i]).collect();
                    total += baseline_train_step(&mut model, &mut opt, &imgs)? * batch.len() as f64;
                }
                (total / order.len() as f64, None)
            }
        };
        let train_eval = evaluate(&mut model, cfg.mode, logistic, &splits.train, &splits.train, &eval, true)?;
        let test_eval = evaluate(&mut model, cfg.mode, logistic, &splits.train, &splits.test, &eval, false)?;
        let row = MetricsRow {
            epoch,
            loss,
            train_kappa: train_eval.kappa,
            test_kappa: test_eval.kappa,
        };
        on_epoch(&row);
        rows.push(row);
        let ck = Checkpoint::capture(echo.clone(), model.store(), logistic);
        if best.as_ref().is_none_or(|(_, k, _)| row.test_kappa > *k) {
            best = Some((epoch, row.test_kappa, ck.clone()));
        }
        last = Some(ck);
    }
    let (best_epoch, _, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        rows,
        best_epoch,
        best,
        last: last.expect("at least one epoch"),
        model,
    })
}

/// Resolves data, trains, and writes `metrics.csv`, `best.ckpt`, `final.ckpt` and
/// `config.txt` into `out_dir`.
pub fn train(cfg: &TrainConfig, out_dir: &Path, on_epoch: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    let splits = resolve_data(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let outcome = train_on(cfg, &splits, on_epoch)?;
    let write = |name: &str, bytes: &[u8]| {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write("metrics.csv", metrics_csv(&outcome.rows).as_bytes())?;
    write("config.txt", config_echo(cfg, splits.classes()).as_bytes())?;
    write("best.ckpt", &outcome.best.to_bytes())?;
    write("final.ckpt", &outcome.last.to_bytes())?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batching_absorbs_singletons() {
        let v: Vec<usize> = (0..65).collect();
        let sizes: Vec<usize> = batches(&v, 32).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![32, 33]);
        let v: Vec<usize> = (0..500).collect();
        let sizes: Vec<usize> = batches(&v, 32).iter().map(|b| b.len()).collect();
        assert_eq!(sizes.len(), 16);
        assert_eq!(*sizes.last().unwrap(), 20);
    }

    #[test]
    fn echo_round_trip() {
        let cfg = TrainConfig {
            attention: "eca".into(),
            seed: 3,
            ..Default::default()
        };
        let (back, classes) = parse_echo(&config_echo(&cfg, 4)).unwrap();
        assert_eq!((back, classes), (cfg, 4));
    }
}
