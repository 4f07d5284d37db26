use std::path::Path;

use siamese::data::{gen_synthetic, write_pgm, ShapeFamily, SyntheticSpec};
use siamese::harness::{
    evaluate, evaluate_checkpoint, load_model, predict_image, resolve_data, train, Checkpoint, DataSource, EvalOptions, TrainConfig,
    TrainMode,
};
use siamese::predictor::replay_bases;
use siamese::Error;

fn tiny(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        length: 32,
        batch_size: 16,
        epochs: 2,
        seed: 4,
        image_size: 16,
        data: DataSource::Synthetic {
            train_per_class: 3,
            test_per_class: 2,
            noise_sigma: 0.05,
        },
        ..TrainConfig::default()
    }
}

fn write_dataset(root: &Path, classes: usize, per_class: usize, size: usize) {
    for (split, seed) in [("train", 1), ("test", 2)] {
        let spec = SyntheticSpec {
            classes,
            per_class,
            image_size: size,
            noise_sigma: 0.05,
            seed,
        };
        for (k, img) in gen_synthetic(&spec).unwrap().iter().enumerate() {
            let dir = root.join(split).join(ShapeFamily::ALL[img.class_id].name());
            std::fs::create_dir_all(&dir).unwrap();
            write_pgm(&dir.join(format!("{k:03}.pgm")), size, size, &img.pixels).unwrap();
        }
    }
}

#[test]
fn training_writes_outputs_and_evaluation_is_pure() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(&tiny(TrainMode::Siamese), dir.path(), |_| {}).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss,train_kappa,test_kappa");
    assert_eq!(lines.len(), 3);
    for name in ["best.ckpt", "final.ckpt", "config.txt"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let ck = Checkpoint::load(&dir.path().join("best.ckpt")).unwrap();
    assert_eq!(ck, out.best);
    let (_, a) = evaluate_checkpoint(&ck, None, 5).unwrap();
    let (_, b) = evaluate_checkpoint(&ck, None, 5).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.kappa.to_bits(), b.kappa.to_bits());
}

#[test]
fn siamese_prediction_trace_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(TrainMode::Siamese);
    let out = train(&cfg, dir.path(), |_| {}).unwrap();
    let splits = resolve_data(&cfg).unwrap();
    let p = predict_image(&out.best, &splits.test[0], None, 1).unwrap();
    assert_eq!(replay_bases(&p.trace, 4, cfg.base_init), p.scores);
    assert_eq!(p.class_name, splits.class_names[p.class]);
    let again = predict_image(&out.best, &splits.test[0], None, 1).unwrap();
    assert_eq!(again.trace, p.trace);
}

#[test]
fn baseline_prediction_gives_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(TrainMode::Baseline);
    let out = train(&cfg, dir.path(), |_| {}).unwrap();
    assert!(out.best.logistic.is_none());
    let splits = resolve_data(&cfg).unwrap();
    let p = predict_image(&out.best, &splits.test[1], None, 0).unwrap();
    assert!(p.trace.is_empty());
    assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn directory_data_trains_and_mismatched_classes_are_rejected() {
    let four = tempfile::tempdir().unwrap();
    write_dataset(four.path(), 4, 3, 16);
    let cfg = TrainConfig {
        data: DataSource::Directory(four.path().to_path_buf()),
        ..tiny(TrainMode::Siamese)
    };
    let out = train(&cfg, &four.path().join("run"), |_| {}).unwrap();
    assert_eq!(out.rows.len(), 2);

    let three = tempfile::tempdir().unwrap();
    write_dataset(three.path(), 3, 3, 16);
    let err = evaluate_checkpoint(&out.best, Some(DataSource::Directory(three.path().to_path_buf())), 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn empty_test_set_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(TrainMode::Baseline);
    let out = train(&cfg, dir.path(), |_| {}).unwrap();
    let (cfg, mut model) = load_model(&out.last).unwrap();
    let splits = resolve_data(&cfg).unwrap();
    let opts = EvalOptions::from_config(&cfg, 0);
    assert!(evaluate(&mut model, cfg.mode, None, &splits.train, &[], &opts, false).is_err());
}

#[test]
fn config_problems_are_reported_together() {
    let entries: Vec<(String, String)> = [("length", "7"), ("backbone", "vgg"), ("lr", "fast")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    match TrainConfig::from_entries(&entries) {
        Err(Error::ConfigList(items)) => assert!(items.len() >= 3, "{items:?}"),
        other => panic!("expected itemised config errors, got {other:?}"),
    }
}

#[test]
fn truncated_checkpoint_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(&tiny(TrainMode::Baseline), dir.path(), |_| {}).unwrap();
    let bytes = out.best.to_bytes();
    let path = dir.path().join("cut.ckpt");
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}
