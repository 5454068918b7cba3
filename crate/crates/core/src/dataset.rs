//! Image ingestion: IDX tensors, normalization into `[0,1]^d`, subsampling.
//!
//! # IDX layout
//! ```text
//! bytes  0-3:   magic, big-endian: 0x00000803 (u8, 3 dims) for images,
//!               0x00000801 (u8, 1 dim) for labels
//! bytes  4-..:  one big-endian u32 per dimension
//! then:         product(dims) payload bytes, row-major
//! ```
//! Gzip containers (`1f 8b` prefix) are decompressed transparently.

use std::borrow::Cow;
use std::io::Read;
use std::path::Path;

use rand::Rng;

use crate::rng::rng_from_seed;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw 8-bit images as stored in an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    pixels: Vec<u8>,
    count: usize,
    rows: usize,
    cols: usize,
    trailing: usize,
    labels: Option<Vec<u8>>,
}

impl ImageSet {
    pub fn new(pixels: Vec<u8>, count: usize, rows: usize, cols: usize) -> Result<Self> {
        let expected = count * rows * cols;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: pixels.len() });
        }
        Ok(Self { pixels, count, rows, cols, trailing: 0, labels: None })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Bytes found after the declared payload and ignored by [`parse_idx`].
    pub fn trailing_bytes(&self) -> usize {
        self.trailing
    }

    /// Labels are metadata only; MEM never reads them.
    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn attach_labels(&mut self, labels: Vec<u8>) -> Result<()> {
        if labels.len() != self.count {
            return Err(Error::DimensionMismatch { expected: self.count, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(())
    }
}

/// `n × d` matrix of samples with every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleMatrix {
    /// Row-major data; rejects empty input, ragged shapes and entries outside `[0,1]`.
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptySamples);
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: data.len() });
        }
        if let Some(k) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange { row: k / d, col: k % d, value: data[k] });
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(Error::EmptySamples)?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: i });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }

    /// All rows except `skip`.
    pub fn without_row(&self, skip: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != skip).collect();
        self.select(&keep)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let inv = 1.0 / self.n as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Decompresses gzip input, passes anything else through.
pub fn decode_container(bytes: &[u8]) -> Result<Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip: {e}")))?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

fn header(bytes: &[u8], magic: u32, ndims: usize) -> Result<(Vec<usize>, usize)> {
    let found = be_u32(bytes, 0).ok_or(Error::Truncated { expected: 4, found: bytes.len() })?;
    if found != magic {
        return Err(Error::MagicMismatch { expected: magic, found });
    }
    let header_len = 4 + 4 * ndims;
    let dims: Vec<usize> = (0..ndims)
        .map(|k| be_u32(bytes, 4 + 4 * k).map(|v| v as usize))
        .collect::<Option<_>>()
        .ok_or(Error::Truncated { expected: header_len, found: bytes.len() })?;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &v| acc.checked_mul(v))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let available = bytes.len() - header_len;
    if available < payload {
        return Err(Error::Truncated { expected: payload, found: available });
    }
    Ok((dims, header_len))
}

/// Parses a 3-D unsigned-byte IDX tensor (magic `0x00000803`).
///
/// Bytes past the declared payload are ignored and counted in
/// [`ImageSet::trailing_bytes`]; use [`parse_idx_strict`] to reject them.
pub fn parse_idx(bytes: &[u8]) -> Result<ImageSet> {
    let bytes = decode_container(bytes)?;
    let (dims, start) = header(&bytes, IMAGE_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let end = start + count * rows * cols;
    let mut set = ImageSet::new(bytes[start..end].to_vec(), count, rows, cols)?;
    set.trailing = bytes.len() - end;
    Ok(set)
}

pub fn parse_idx_strict(bytes: &[u8]) -> Result<ImageSet> {
    let set = parse_idx(bytes)?;
    match set.trailing {
        0 => Ok(set),
        extra => Err(Error::TrailingBytes { extra }),
    }
}

/// Parses an IDX label vector (magic `0x00000801`).
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = decode_container(bytes)?;
    let (dims, start) = header(&bytes, LABEL_MAGIC, 1)?;
    Ok(bytes[start..start + dims[0]].to_vec())
}

/// Inverse of [`parse_idx`] (uncompressed).
pub fn serialize_idx(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for v in [set.count, set.rows, set.cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(&set.pixels);
    out
}

pub fn load_images(path: impl AsRef<Path>) -> Result<ImageSet> {
    parse_idx(&std::fs::read(path)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_labels(&std::fs::read(path)?)
}

/// Maps raw intensities to `raw / 255`. Fails only on an empty set.
pub fn normalize(set: &ImageSet) -> Result<SampleMatrix> {
    let data = set.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    SampleMatrix::new(data, set.count, set.dim())
}

/// Indices of `n` distinct rows out of `total`, by partial Fisher–Yates.
pub fn subsample_indices(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::SampleTooLarge { requested: n, available: total });
    }
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = rng.random_range(i as u64..total as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(idx)
}

/// `n` rows drawn uniformly without replacement; deterministic in `seed`.
pub fn subsample(data: &SampleMatrix, n: usize, seed: u64) -> Result<SampleMatrix> {
    let idx = subsample_indices(data.n, n, seed)?;
    data.select(&idx)
}

/// Index of the row closest to `b` in Euclidean distance; ties go to the smallest index.
pub fn nearest_neighbor(data: &SampleMatrix, b: &[f64]) -> Result<usize> {
    if b.len() != data.d {
        return Err(Error::DimensionMismatch { expected: data.d, got: b.len() });
    }
    crate::check_finite(b)?;
    let mut best = (0, f64::INFINITY);
    for (i, r) in data.rows().enumerate() {
        let dist: f64 = r.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        if dist < best.1 {
            best = (i, dist);
        }
    }
    Ok(best.0)
}
