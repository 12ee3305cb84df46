//! IDX datasets (MNIST family), optionally gzip-wrapped.

use std::io::Read;
use std::path::{Path, PathBuf};

use d2nn_core::{encode_input, ComplexField, InputEncoding};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images and labels of one split. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    /// `len · rows · cols` bytes, image-major.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() * rows * cols {
            return Err(Error::Dataset(format!(
                "{} image bytes do not hold {} images of {rows}x{cols}",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { rows, cols, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.images[index * n..(index + 1) * n]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    /// Fails when a label is `>= classes`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l as usize >= classes) {
            Some(i) => Err(Error::Dataset(format!(
                "label {} at index {i} is outside 0..{classes}",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Self {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * self.rows * self.cols);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps samples whose label maps to `Some`, relabelled.
    pub fn filter_map_labels(&self, map: impl Fn(u8) -> Option<u8>) -> Self {
        let mut keep = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(m) = map(l) {
                keep.push(i);
                labels.push(m);
            }
        }
        let mut out = self.subset(&keep);
        out.labels = labels;
        out
    }

    /// EMNIST-letters classes 1..=10 (a..j) as 0..=9.
    pub fn emnist_first_ten(&self) -> Self {
        self.filter_map_labels(|l| (1..=10).contains(&l).then(|| l - 1))
    }

    /// A seeded random sample of `n` indices (all when `n >= len`), sorted.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if n < idx.len() {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(n);
            idx.sort_unstable();
        }
        idx
    }

    /// Input field of sample `index`.
    pub fn encode(&self, index: usize, grid_rows: usize, grid_cols: usize, encoding: &InputEncoding) -> Result<ComplexField> {
        Ok(encode_input(self.image(index), self.cols, self.rows, grid_rows, grid_cols, encoding)?)
    }

    pub fn encode_all(&self, grid_rows: usize, grid_cols: usize, encoding: &InputEncoding) -> Result<Vec<ComplexField>> {
        (0..self.len()).map(|i| self.encode(i, grid_rows, grid_cols, encoding)).collect()
    }
}

/// Reads a file, inflating it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl IdxReader<'_> {
    fn fail(&self, offset: usize, message: String) -> Error {
        Error::Idx {
            path: self.path.to_path_buf(),
            offset,
            message,
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let chunk = self.bytes.get(self.offset..end).ok_or_else(|| {
            self.fail(self.offset, format!("truncated header, file is {} bytes", self.bytes.len()))
        })?;
        self.offset = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let at = self.offset;
        let found = self.u32()?;
        if found != expected {
            return Err(self.fail(at, format!("bad magic 0x{found:08x}, expected 0x{expected:08x}")));
        }
        Ok(())
    }

    fn payload(&self, len: usize) -> Result<&[u8]> {
        let end = self.offset + len;
        if self.bytes.len() < end {
            return Err(self.fail(
                self.bytes.len(),
                format!("truncated payload, expected {len} bytes from offset {}", self.offset),
            ));
        }
        if self.bytes.len() > end {
            return Err(self.fail(end, format!("{} trailing bytes", self.bytes.len() - end)));
        }
        Ok(&self.bytes[self.offset..end])
    }
}

/// Parses an IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = IdxReader { bytes, offset: 0, path };
    r.magic(IMAGE_MAGIC)?;
    let n = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    Ok((n, rows, cols, r.payload(n * rows * cols)?.to_vec()))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut r = IdxReader { bytes, offset: 0, path };
    r.magic(LABEL_MAGIC)?;
    let n = r.u32()? as usize;
    Ok(r.payload(n)?.to_vec())
}

/// Loads an image/label file pair.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?, lp)?;
    if labels.len() != n {
        return Err(Error::Dataset(format!(
            "{} holds {n} images but {} holds {} labels",
            ip.display(),
            lp.display(),
            labels.len()
        )));
    }
    Dataset::new(rows, cols, pixels, labels)
}

/// Conventional file names under a dataset directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`, preferring
/// the gzip form when both exist.
pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let stem = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let pick = |kind: &str| {
        let plain = dir.join(format!("{stem}-{kind}-ubyte"));
        let gz = dir.join(format!("{stem}-{kind}-ubyte.gz"));
        if gz.exists() || !plain.exists() {
            gz
        } else {
            plain
        }
    };
    (pick("images-idx3"), pick("labels-idx1"))
}

pub fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (i, l) = split_paths(dir, split);
    load_idx(i, l)
}

/// Serializes to IDX bytes (images, labels).
pub fn to_idx(ds: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGE_MAGIC, ds.len() as u32, ds.rows as u32, ds.cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&ds.images);
    let mut labels = Vec::with_capacity(8 + ds.len());
    for v in [LABEL_MAGIC, ds.len() as u32] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend_from_slice(&ds.labels);
    (images, labels)
}
