//! Dataset loaders and the synthetic blob generator.
//!
//! IDX files follow the MNIST layout: a big-endian magic word whose last byte
//! is the number of dimensions, one big-endian `u32` size per dimension, then
//! unsigned bytes in row-major order. Images use magic `0x00000803`, labels
//! `0x00000801`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{Dataset, ModelError};
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid generator settings: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    let chunk = bytes.get(at..at + 4).ok_or(DataError::Truncated {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

/// Parsed IDX image file: `count` images of `rows × cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a classification dataset from parsed IDX parts, scaling pixels to `[0, 1]`.
pub fn idx_dataset(name: &str, images: &IdxImages, labels: &[u8]) -> Result<Dataset, DataError> {
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    if images.count == 0 {
        return Err(DataError::Empty("IDX file holds no images".into()));
    }
    let features = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Ok(Dataset::classification(name, images.rows * images.cols, features, labels, classes)?)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    let name = images_path
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    idx_dataset(&name, &images, &labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    /// Zero-based index of the integer label column.
    pub label_column: usize,
    pub has_header: bool,
}

/// Reads numeric features and integer labels from CSV text.
pub fn parse_csv(name: &str, text: &str, options: &CsvOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if options.label_column >= record.len() {
            return Err(DataError::Csv {
                line,
                message: format!("label column {} missing from {} columns", options.label_column, record.len()),
            });
        }
        width.get_or_insert(record.len() - 1);
        for (k, cell) in record.iter().enumerate() {
            if k == options.label_column {
                let label = cell.parse::<usize>().map_err(|_| DataError::Csv {
                    line,
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v = cell.parse::<f64>().map_err(|_| DataError::Csv {
                    line,
                    message: format!("cell {cell:?} in column {k} is not numeric"),
                })?;
                features.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(DataError::Empty("CSV has no data rows".into()));
    };
    if width == 0 {
        return Err(DataError::Empty("CSV has no feature columns".into()));
    }
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Ok(Dataset::classification(name, width, features, labels, classes)?)
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset, DataError> {
    let bytes = read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&name, &text, options)
}

/// Writes a classification dataset as `x0,…,x{p-1},label` with a header.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<(), DataError> {
    let labels = data
        .labels()
        .ok_or(DataError::InvalidArgument("only classification datasets can be written".into()))?;
    let io_err = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = (0..data.n_features()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(io_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        row.push(labels[i].to_string());
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 200,
            dims: 2,
            spread: 1.0,
            seed: 0,
        }
    }
}

/// Isotropic Gaussian clusters around seeded centers.
///
/// Centers are drawn uniformly from a box and redrawn until every pair is at
/// least `2 · spread` apart. Rows are interleaved by class.
pub fn gen_blobs(spec: &BlobSpec) -> Result<Dataset, DataError> {
    if spec.classes < 2 || spec.per_class == 0 || spec.dims == 0 {
        return Err(DataError::InvalidArgument(
            "need at least 2 classes, 1 sample per class and 1 dimension".into(),
        ));
    }
    if !(spec.spread > 0.0 && spec.spread.is_finite()) {
        return Err(DataError::InvalidArgument(format!("spread must be positive, got {}", spec.spread)));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, "blobs"));
    let min_gap = 2.0 * spec.spread;
    let mut half: f64 = 10.0;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut tries = 0;
    while centers.len() < spec.classes {
        let c: Vec<f64> = (0..spec.dims).map(|_| rng.random_range(-half..half)).collect();
        let far = centers.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_gap
        });
        if far {
            centers.push(c);
        }
        tries += 1;
        if tries % 1000 == 0 {
            half *= 1.5;
        }
    }
    let n = spec.classes * spec.per_class;
    let mut features = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % spec.classes;
        for &c in &centers[k] {
            features.push(c + spec.spread * rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(k);
    }
    Ok(Dataset::classification("blobs", spec.dims, features, labels, spec.classes)?)
}

/// Keeps at most `cap` rows, chosen uniformly at random and kept in order.
pub fn subsample(data: &Dataset, cap: usize, seed: u64) -> Result<Dataset, DataError> {
    if data.len() <= cap {
        return Ok(data.clone());
    }
    let mut rng = seed::rng(seed::derive(seed, "subsample"));
    let mut keep = sample(&mut rng, data.len(), cap).into_vec();
    keep.sort_unstable();
    Ok(data.select(&keep, data.name())?)
}
