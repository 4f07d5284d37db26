use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use siamese::data::{gen_synthetic, load_image, write_pgm, ShapeFamily, SyntheticSpec};
use siamese::harness::{
    evaluate_checkpoint, gradcheck, predict_image, train, Checkpoint, DataSource, TrainConfig,
};
use siamese::predictor::trace_csv;
use siamese::{Error, Result};

#[derive(Parser)]
#[command(name = "siamese", version, about = "Few-shot classification with attention-based Siamese networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.csv, config.txt, best.ckpt and final.ckpt.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of its data source.
    Eval(EvalArgs),
    /// Classify a single PGM/PPM image.
    Predict(PredictArgs),
    /// Write a synthetic dataset as train/<class>/*.pgm and test/<class>/*.pgm.
    GenSynthetic(GenArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root holding train/ and test/ class directories.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long, value_parser = ["siamese", "baseline"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["resnet_tiny", "inception_tiny"])]
    backbone: Option<String>,
    #[arg(long, value_parser = ["none", "se", "sk", "eca", "sge"])]
    attention: Option<String>,
    /// Any further config entry, e.g. --set epochs=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root replacing the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for confusion.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    image: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for trace.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    train_per_class: usize,
    #[arg(long, default_value_t = 40)]
    test_per_class: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only run cases whose name contains this string.
    #[arg(long, default_value = "")]
    filter: String,
}

fn config_from(args: &TrainArgs) -> Result<TrainConfig> {
    let mut overrides = Vec::new();
    for entry in &args.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {entry:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let flags = [
        ("seed", args.seed.map(|s| s.to_string())),
        ("data", args.data.as_ref().map(|d| d.display().to_string())),
        ("mode", args.mode.clone()),
        ("backbone", args.backbone.clone()),
        ("attention", args.attention.clone()),
    ];
    overrides.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    match &args.config {
        Some(path) => TrainConfig::from_file(path, &overrides),
        None => TrainConfig::from_entries(&overrides),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = config_from(&args)?;
    let outcome = train(&cfg, &args.out, |r| {
        if r.epoch == 1 {
            eprintln!("epoch,loss,train_kappa,test_kappa");
        }
        eprintln!("{},{:.6},{:.4},{:.4}", r.epoch, r.loss, r.train_kappa, r.test_kappa)
    })?;
    println!(
        "best epoch {} test kappa {:.4}; outputs in {}",
        outcome.best_epoch,
        outcome.best_test_kappa(),
        args.out.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let data = args.data.map(DataSource::Directory);
    let (_, eval) = evaluate_checkpoint(&ck, data, args.seed)?;
    let csv = eval.matrix.to_csv();
    print!("{csv}");
    println!("kappa {:.6}", eval.kappa);
    if let Some(dir) = args.out {
        ensure_dir(&dir)?;
        write(&dir.join("confusion.csv"), &csv)?;
    }
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (cfg, _) = siamese::harness::parse_echo(&ck.config)?;
    let image = load_image(&args.image, cfg.image_size, 0)?;
    let data = args.data.map(DataSource::Directory);
    let p = predict_image(&ck, &image, data, args.seed)?;
    let scores: Vec<String> = p.scores.iter().map(|s| format!("{s:.4}")).collect();
    println!("{} (class {}) scores [{}]", p.class_name, p.class, scores.join(", "));
    if let Some(dir) = args.out {
        ensure_dir(&dir)?;
        write(&dir.join("trace.csv"), &trace_csv(&p.trace))?;
    }
    Ok(())
}

fn run_gen(args: GenArgs) -> Result<()> {
    for (split, per_class, stream) in [("train", args.train_per_class, 0), ("test", args.test_per_class, 1)] {
        let spec = SyntheticSpec {
            per_class,
            image_size: args.size,
            noise_sigma: args.noise,
            seed: siamese::seed::derive(args.seed, split, stream),
            ..SyntheticSpec::default()
        };
        let images = gen_synthetic(&spec)?;
        for (k, img) in images.iter().enumerate() {
            let dir = args.out.join(split).join(ShapeFamily::ALL[img.class_id].name());
            ensure_dir(&dir)?;
            write_pgm(&dir.join(format!("{k:04}.pgm")), img.size, img.size, &img.pixels)?;
        }
        println!("{}: {} images", split, images.len());
    }
    Ok(())
}

fn run_gradcheck(args: GradArgs) -> Result<()> {
    let outcomes = gradcheck::run_suite(args.seed, &args.filter);
    let mut failed = 0;
    for o in &outcomes {
        match &o.report {
            Ok(r) => println!(
                "{} {:<12} {:<44} {:.2e} ({} coords, {} skipped)",
                if o.passed() { "ok  " } else { "FAIL" },
                o.group,
                o.name,
                r.max_rel_error,
                r.coordinates,
                r.skipped
            ),
            Err(e) => println!("FAIL {:<12} {:<44} {e}", o.group, o.name),
        }
        failed += usize::from(!o.passed());
    }
    println!("{} of {} cases pass", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        return Err(Error::Numeric(format!("{failed} gradient cases exceed tolerance")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::GenSynthetic(a) => run_gen(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
