//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Siamese,
    Baseline,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Siamese => "siamese",
            TrainMode::Baseline => "baseline",
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "siamese" => Ok(TrainMode::Siamese),
            "baseline" => Ok(TrainMode::Baseline),
            other => Err(format!("mode must be siamese or baseline, got {other:?}")),
        }
    }
}

/// Where training and test images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Generated shapes; train and test sets use independent derived seeds.
    Synthetic {
        train_per_class: usize,
        test_per_class: usize,
        noise_sigma: f64,
    },
    /// `root/train/<class>/…` and `root/test/<class>/…`.
    Directory(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub backbone: String,
    pub attention: String,
    pub length: usize,
    pub batch_size: usize,
    pub base_init: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub image_size: usize,
    pub max_iterations: usize,
    pub data: DataSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Siamese,
            backbone: "resnet_tiny".into(),
            attention: "none".into(),
            length: 500,
            batch_size: 32,
            base_init: 0.5,
            lr: 0.001,
            epochs: 30,
            seed: 0,
            image_size: 32,
            max_iterations: 50,
            data: DataSource::Synthetic {
                train_per_class: 10,
                test_per_class: 40,
                noise_sigma: 0.05,
            },
        }
    }
}

/// Splits config text into `(key, value)` entries; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((k.trim().to_string(), v.trim().to_string())),
            _ => problems.push(format!("line {}: expected key = value, got {:?}", i + 1, raw.trim())),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::ConfigList(problems))
    }
}

fn parse_field<V: FromStr>(key: &str, value: &str, problems: &mut Vec<String>) -> Option<V>
where
    V::Err: std::fmt::Display,
{
    match value.parse() {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{key}: cannot parse {value:?}: {e}"));
            None
        }
    }
}

impl TrainConfig {
    /// Applies entries in order over the defaults (later entries win), then validates.
    /// Every problem found is reported at once.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let mut c = TrainConfig::default();
        let mut problems = Vec::new();
        let (mut train_pc, mut test_pc, mut sigma) = (10usize, 40usize, 0.05f64);
        let mut data: Option<String> = None;
        for (key, value) in entries {
            let p = &mut problems;
            match key.as_str() {
                "mode" => match value.parse() {
                    Ok(m) => c.mode = m,
                    Err(e) => p.push(e),
                },
                "backbone" => c.backbone = value.clone(),
                "attention" => c.attention = value.clone(),
                "length" => c.length = parse_field(key, value, p).unwrap_or(c.length),
                "batch_size" => c.batch_size = parse_field(key, value, p).unwrap_or(c.batch_size),
                "base_init" => c.base_init = parse_field(key, value, p).unwrap_or(c.base_init),
                "lr" => c.lr = parse_field(key, value, p).unwrap_or(c.lr),
                "epochs" => c.epochs = parse_field(key, value, p).unwrap_or(c.epochs),
                "seed" => c.seed = parse_field(key, value, p).unwrap_or(c.seed),
                "image_size" => c.image_size = parse_field(key, value, p).unwrap_or(c.image_size),
                "max_iterations" => c.max_iterations = parse_field(key, value, p).unwrap_or(c.max_iterations),
                "data" => data = Some(value.clone()),
                "train_per_class" => train_pc = parse_field(key, value, p).unwrap_or(train_pc),
                "test_per_class" => test_pc = parse_field(key, value, p).unwrap_or(test_pc),
                "noise_sigma" => sigma = parse_field(key, value, p).unwrap_or(sigma),
                other => p.push(format!("unknown key {other:?}")),
            }
        }
        c.data = match data.as_deref() {
            None | Some("synthetic") => DataSource::Synthetic {
                train_per_class: train_pc,
                test_per_class: test_pc,
                noise_sigma: sigma,
            },
            Some(dir) => DataSource::Directory(PathBuf::from(dir)),
        };
        problems.extend(c.problems());
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(Error::ConfigList(problems))
        }
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = parse_entries(&text)?;
        entries.extend_from_slice(overrides);
        Self::from_entries(&entries)
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !["resnet_tiny", "inception_tiny"].contains(&self.backbone.as_str()) {
            p.push(format!("backbone must be resnet_tiny or inception_tiny, got {:?}", self.backbone));
        }
        if !["none", "se", "sk", "eca", "sge"].contains(&self.attention.as_str()) {
            p.push(format!("attention must be none, se, sk, eca or sge, got {:?}", self.attention));
        }
        if self.length == 0 || !self.length.is_multiple_of(2) {
            p.push(format!("length must be even and positive, got {}", self.length));
        }
        if self.batch_size < 2 {
            p.push(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            p.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.base_init > 0.0 && self.base_init < 1.0) {
            p.push(format!("base_init must lie in (0, 1), got {}", self.base_init));
        }
        if self.epochs == 0 {
            p.push("epochs must be at least 1".into());
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            p.push(format!("image_size must be a positive multiple of 8, got {}", self.image_size));
        }
        if self.max_iterations == 0 {
            p.push("max_iterations must be at least 1".into());
        }
        if let DataSource::Synthetic {
            train_per_class,
            test_per_class,
            noise_sigma,
        } = self.data
        {
            if train_per_class < 2 {
                p.push(format!("train_per_class must be at least 2, got {train_per_class}"));
            }
            if test_per_class == 0 {
                p.push("test_per_class must be at least 1".into());
            }
            if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                p.push(format!("noise_sigma must be non-negative, got {noise_sigma}"));
            }
        }
        p
    }

    /// Canonical `key = value` text that [`TrainConfig::from_entries`] reads back unchanged.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("mode = {}", self.mode.as_str()),
            format!("backbone = {}", self.backbone),
            format!("attention = {}", self.attention),
            format!("length = {}", self.length),
            format!("batch_size = {}", self.batch_size),
            format!("base_init = {}", self.base_init),
            format!("lr = {}", self.lr),
            format!("epochs = {}", self.epochs),
            format!("seed = {}", self.seed),
            format!("image_size = {}", self.image_size),
            format!("max_iterations = {}", self.max_iterations),
        ];
        match &self.data {
            DataSource::Synthetic {
                train_per_class,
                test_per_class,
                noise_sigma,
            } => {
                lines.push("data = synthetic".into());
                lines.push(format!("train_per_class = {train_per_class}"));
                lines.push(format!("test_per_class = {test_per_class}"));
                lines.push(format!("noise_sigma = {noise_sigma}"));
            }
            DataSource::Directory(dir) => lines.push(format!("data = {}", dir.display())),
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
