//! Output formats: 8-bit binary PGM (P5) images and `index,weight` CSV.

use std::fmt::Write as _;

use crate::{Error, Result};

/// A grayscale image with intensities in `[0, 1]` (or beyond, before clamping).
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

/// `round(255 x)` clamped to `[0, 255]`.
pub fn quantize(x: f64) -> u8 {
    (255.0 * x).round().clamp(0.0, 255.0) as u8
}

pub fn encode_pgm(pixels: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch { expected: width * height, got: pixels.len() });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| quantize(v)));
    Ok(out)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("PGM header: expected a number at byte {start}")))
}

/// Decodes a P5 PGM with `maxval <= 255` into intensities `v / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let mut pos = 2;
    let width = next_token(bytes, &mut pos)?;
    let height = next_token(bytes, &mut pos)?;
    let maxval = next_token(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    let raster = bytes.get(pos..pos + need).ok_or(Error::Truncated {
        expected: need,
        found: bytes.len().saturating_sub(pos),
    })?;
    let pixels = raster.iter().map(|&v| v as f64 / maxval as f64).collect();
    Ok(GrayImage { width, height, pixels })
}

pub fn write_pgm(path: impl AsRef<std::path::Path>, pixels: &[f64], width: usize, height: usize) -> Result<()> {
    std::fs::write(path, encode_pgm(pixels, width, height)?)?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<std::path::Path>) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

/// `index,weight` rows with a header; weights in shortest round-trip form.
pub fn weights_csv(weights: &[f64]) -> String {
    let mut s = String::from("index,weight\n");
    for (i, w) in weights.iter().enumerate() {
        let _ = writeln!(s, "{i},{w:e}");
    }
    s
}
