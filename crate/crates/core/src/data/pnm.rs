//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded image as row-major intensities in [0, 1]; color is averaged to gray.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| Error::Format {
                offset: start,
                message: format!("expected positive {what}"),
            })
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<GrayImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(Error::Format {
                offset: 0,
                message: "not a binary PGM (P5) or PPM (P6) file".into(),
            })
        }
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval > 255 {
        return Err(Error::Format {
            offset: h.pos,
            message: format!("maxval {maxval} is not 8-bit"),
        });
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => {
            return Err(Error::Format {
                offset: h.pos,
                message: "missing whitespace after header".into(),
            })
        }
    }
    let need = width * height * channels;
    let raster = bytes.get(h.pos..h.pos + need).ok_or_else(|| Error::Format {
        offset: bytes.len(),
        message: format!("raster truncated: need {need} bytes after offset {}", h.pos),
    })?;
    let scale = 1.0 / maxval as f64;
    let pixels = raster
        .chunks_exact(channels)
        .map(|px| {
            let sum: f64 = px.iter().map(|&v| v as f64).sum();
            (sum / channels as f64 * scale).min(1.0)
        })
        .collect();
    Ok(GrayImage { width, height, pixels })
}

pub fn read_pnm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

/// Encodes square or rectangular intensities in [0, 1] as an 8-bit P5 file.
pub fn encode_pgm(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, pixels)).map_err(|e| Error::io(path, e))
}

/// Bilinear resampling with aligned corners, so the four corner pixels are preserved.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let x0 = (x.floor() as usize).min(n_in - 1);
        let x1 = (x0 + 1).min(n_in - 1);
        (x0, x1, x - x0 as f64)
    };
    let at = |x: usize, y: usize| img.pixels[y * img.width + x];
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, out_h, img.height);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, out_w, img.width);
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1 # trailing\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn color_is_averaged() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend([255u8, 0, 0]);
        let img = decode_pnm(&bytes).unwrap();
        assert!((img.pixels[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([1u8, 2, 3]);
        assert!(matches!(decode_pnm(&bytes), Err(Error::Format { .. })));
        assert!(matches!(decode_pnm(b"P2 1 1 255\n0"), Err(Error::Format { offset: 0, .. })));
        assert!(decode_pnm(b"P5 1 1 65535\n\0\0").is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let pixels = [0.0, 0.2, 0.6, 1.0];
        let img = decode_pnm(&encode_pgm(2, 2, &pixels)).unwrap();
        for (a, b) in img.pixels.iter().zip(pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn upsampling_preserves_corners() {
        let pixels: Vec<f64> = (0..256).map(|i| i as f64 / 255.0).collect();
        let img = GrayImage { width: 16, height: 16, pixels };
        let out = resize_bilinear(&img, 32, 32);
        assert_eq!(out.len(), 1024);
        assert_eq!(out[0], img.pixels[0]);
        assert_eq!(out[31], img.pixels[15]);
        assert_eq!(out[31 * 32], img.pixels[15 * 16]);
        assert!((out[1023] - img.pixels[255]).abs() < 1e-12);
    }
}
