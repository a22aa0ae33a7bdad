//! IDX reader for the MNIST files and 2x2 mean pooling.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{DataError, Dataset, DatasetMeta, Split};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw `u8` image tensor from an IDX file; images are row-major, one after another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    let chunk = bytes.get(offset..offset + 4).ok_or_else(|| DataError::Parse {
        offset,
        message: format!("file ends after {} bytes, expected a 4-byte header field", bytes.len()),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(DataError::Parse {
            offset: 0,
            message: format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8], DataError> {
    bytes.get(start..start + len).ok_or_else(|| DataError::Parse {
        offset: bytes.len(),
        message: format!("truncated file: payload needs {len} bytes from offset {start}, file has {}", bytes.len()),
    })
}

/// Parses an image file (`magic 0x00000803`, big-endian count/rows/cols, then pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = payload(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

/// Parses a label file (`magic 0x00000801`, big-endian count, then one byte per label).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

fn to_dataset<S: Scalar>(
    images: &IdxImages,
    labels: &[u8],
    limit: usize,
    split: Split,
) -> Result<Dataset<S>, DataError> {
    if images.count != labels.len() {
        return Err(DataError::Invalid(format!("{} images but {} labels", images.count, labels.len())));
    }
    let n = limit.min(images.count);
    let d = images.rows * images.cols;
    let scale = S::lit(1.0 / 255.0);
    let inputs = DMatrix::from_fn(d, n, |r, c| S::from_usize_lossy(images.pixels[c * d + r] as usize) * scale);
    let labels = labels[..n].iter().map(|&l| l as usize).collect();
    Dataset::new(inputs, labels, 10, split, DatasetMeta { source: "mnist".into(), seed: None })
}

/// Loads at most `max_train` / `max_test` leading samples of each split from the
/// standard file names in `dir`; pixels are scaled by 1/255.
pub fn load_mnist_limited<S: Scalar>(
    dir: impl AsRef<Path>,
    max_train: usize,
    max_test: usize,
) -> Result<(Dataset<S>, Dataset<S>), DataError> {
    let dir = dir.as_ref();
    let load = |img: &str, lab: &str, limit: usize, split: Split| -> Result<Dataset<S>, DataError> {
        let images = parse_idx_images(&read_file(&dir.join(img))?)?;
        let labels = parse_idx_labels(&read_file(&dir.join(lab))?)?;
        to_dataset(&images, &labels, limit, split)
    };
    Ok((
        load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", max_train, Split::Train)?,
        load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", max_test, Split::Test)?,
    ))
}

/// Loads both full splits (60000 / 10000 samples).
pub fn load_mnist<S: Scalar>(dir: impl AsRef<Path>) -> Result<(Dataset<S>, Dataset<S>), DataError> {
    load_mnist_limited(dir, usize::MAX, usize::MAX)
}

/// Non-overlapping 2x2 mean pooling of every column, read as a row-major `rows x cols` image.
pub fn avg_pool<S: Scalar>(images: &DMatrix<S>, rows: usize, cols: usize) -> Result<DMatrix<S>, DataError> {
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(DataError::Shape(format!("pooling needs even image dimensions, got {rows}x{cols}")));
    }
    if images.nrows() != rows * cols {
        return Err(DataError::Shape(format!("{} pixels per column, expected {rows}x{cols}", images.nrows())));
    }
    let (pr, pc) = (rows / 2, cols / 2);
    let quarter = S::lit(0.25);
    Ok(DMatrix::from_fn(pr * pc, images.ncols(), |k, j| {
        let (r, c) = (2 * (k / pc), 2 * (k % pc));
        let px = |rr: usize, cc: usize| images[(rr * cols + cc, j)];
        (px(r, c) + px(r, c + 1) + px(r + 1, c) + px(r + 1, c + 1)) * quarter
    }))
}
