//! Images, dataset ingestion, the synthetic shape generator and pair sampling.

mod pairs;
mod pnm;
mod synthetic;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub use pairs::{build_pair_epoch, max_pairs, PairEpochPlan, PairSample};
pub use pnm::{decode_pnm, encode_pgm, read_pnm, resize_bilinear, write_pgm, GrayImage};
pub use synthetic::{gen_synthetic, render_shape, Pose, ShapeFamily, SyntheticSpec};

/// A square grayscale image with pixels in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Vec<f64>,
    pub size: usize,
    pub class_id: usize,
    pub source: String,
}

impl LabeledImage {
    pub fn new(pixels: Vec<f64>, size: usize, class_id: usize, source: impl Into<String>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::dim(format!("{} pixels for a {size}×{size} image", pixels.len())));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::contract("pixel values must lie in [0, 1]"));
        }
        Ok(LabeledImage {
            pixels,
            size,
            class_id,
            source: source.into(),
        })
    }
}

/// Stacks images into an `N×1×S×S` batch.
pub fn batch_tensor<T: Real>(images: &[&LabeledImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::contract("empty image batch"))?;
    let side = first.size;
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in images {
        if img.size != side {
            return Err(Error::dim(format!("mixed image sizes {} and {}", side, img.size)));
        }
        data.extend(img.pixels.iter().map(|&p| T::of(p)));
    }
    Tensor::new(vec![images.len(), 1, side, side], data)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn per_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count()];
        for (i, img) in self.images.iter().enumerate() {
            out[img.class_id].push(i);
        }
        out
    }
}

fn is_pnm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Reads one PGM/PPM file as a grey image resized to `image_size`².
pub fn load_image(path: &Path, image_size: usize, class_id: usize) -> Result<LabeledImage> {
    let img = read_pnm(path).map_err(|e| match e {
        Error::Format { offset, message } => Error::data(path, format!("byte {offset}: {message}")),
        other => other,
    })?;
    let pixels = resize_bilinear(&img, image_size, image_size);
    LabeledImage::new(pixels, image_size, class_id, path.display().to_string())
}

/// Loads `root/<class>/<image>.pgm|.ppm`, resizing each image to `image_size`².
///
/// Class ids follow the sorted directory names. Every unreadable file is listed in
/// the returned error.
pub fn load_dataset(root: &Path, image_size: usize) -> Result<Dataset> {
    if image_size == 0 {
        return Err(Error::config("image size must be positive"));
    }
    if !root.is_dir() {
        return Err(Error::data(root, "dataset directory not found"));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::data(root, "no class subdirectories"));
    }
    let mut images = Vec::new();
    let mut class_names = Vec::new();
    let mut failures = Vec::new();
    for (class_id, dir) in class_dirs.iter().enumerate() {
        class_names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_file() && is_pnm(p)).collect();
        if files.is_empty() {
            failures.push(format!("{}: empty class directory", dir.display()));
            continue;
        }
        for file in files {
            match read_pnm(&file) {
                Ok(img) => {
                    let pixels = resize_bilinear(&img, image_size, image_size);
                    images.push(LabeledImage::new(pixels, image_size, class_id, file.display().to_string())?);
                }
                Err(e) => failures.push(format!("{}: {}", file.display(), e)),
            }
        }
    }
    match failures.len() {
        0 => Ok(Dataset { images, class_names }),
        1 => Err(Error::data(root, failures.remove(0))),
        n => Err(Error::data(root, format!("{n} problems:\n  {}", failures.join("\n  ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(LabeledImage::new(vec![0.5, 1.5, 0.0, 0.0], 2, 0, "x").is_err());
        assert!(LabeledImage::new(vec![0.5; 3], 2, 0, "x").is_err());
    }

    #[test]
    fn batch_layout() {
        let a = LabeledImage::new(vec![0.0, 0.25, 0.5, 0.75], 2, 0, "a").unwrap();
        let b = LabeledImage::new(vec![1.0; 4], 2, 1, "b").unwrap();
        let t: Tensor<f64> = batch_tensor(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        assert_eq!(&t.data()[..4], &a.pixels[..]);
    }
}
