//! MNIST IDX reader.
//!
//! Layout: a big-endian `u32` magic (`0x00000803` for images, `0x00000801`
//! for labels), one big-endian `u32` per dimension, then one unsigned byte
//! per element in row-major order. Gzipped files are detected by their magic
//! and decompressed transparently.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imageops::Image;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// The four canonical files with the SHA-256 of their uncompressed bytes.
pub const CANONICAL_FILES: [(&str, &str); 4] = [
    (
        TRAIN_IMAGES,
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        TRAIN_LABELS,
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        TEST_IMAGES,
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        TEST_LABELS,
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic word {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated IDX data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("label byte {value} at index {index} is not a digit class")]
    BadLabel { index: usize, value: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Header of an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawIdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl RawIdxHeader {
    pub fn len(&self) -> usize {
        4 * (1 + self.dims.len())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: offset + 4,
            available: bytes.len(),
        })
}

/// Validates magic and length, returning the header and the payload slice.
fn parse_header(bytes: &[u8], expected: u32, ndims: usize) -> Result<(RawIdxHeader, &[u8]), IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(IdxError::BadMagic { found: magic, expected });
    }
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i))
        .collect::<Result<Vec<_>, _>>()?;
    let header = RawIdxHeader { magic, dims };
    let start = header.len();
    let needed = start + header.payload_len();
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok((header, &bytes[start..needed]))
}

/// Decodes an image file; each byte `b` becomes intensity `b / 255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>, IdxError> {
    let (header, payload) = parse_header(bytes, IMAGE_MAGIC, 3)?;
    let rows = header.dims[1] as usize;
    let cols = header.dims[2] as usize;
    let per = rows * cols;
    if per == 0 {
        return Ok((0..header.dims[0]).map(|_| Image::zeros(cols, rows)).collect());
    }
    Ok(payload
        .chunks_exact(per)
        .map(|px| {
            let data = px.iter().map(|&b| b as f32 / 255.0).collect();
            Image::new(cols, rows, data).expect("payload chunk matches dims")
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let (_, payload) = parse_header(bytes, LABEL_MAGIC, 1)?;
    if let Some((index, &value)) = payload.iter().enumerate().find(|(_, &b)| b as usize >= NUM_CLASSES) {
        return Err(IdxError::BadLabel { index, value });
    }
    Ok(payload.to_vec())
}

/// Re-encodes images as an IDX image file. All images must share dimensions.
pub fn images_to_idx(images: &[Image]) -> Vec<u8> {
    let (w, h) = images.first().map_or((0, 0), |i| (i.width(), i.height()));
    let header = RawIdxHeader {
        magic: IMAGE_MAGIC,
        dims: vec![images.len() as u32, h as u32, w as u32],
    };
    let mut out = header.to_bytes();
    out.reserve(images.len() * w * h);
    for img in images {
        assert_eq!((img.width(), img.height()), (w, h), "ragged image list");
        out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn labels_to_idx(labels: &[u8]) -> Vec<u8> {
    let header = RawIdxHeader {
        magic: LABEL_MAGIC,
        dims: vec![labels.len() as u32],
    };
    let mut out = header.to_bytes();
    out.extend_from_slice(labels);
    out
}

/// Reads a file, gunzipping it if it starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io = |source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Resolves `dir/name`, falling back to `dir/name.gz`.
pub fn locate(dir: &Path, name: &str) -> PathBuf {
    let plain = dir.join(name);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        gz
    } else {
        plain
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Paired images and labels in file order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<u8>, split: Split) -> Result<Self, IdxError> {
        if images.len() != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Input geometry `(width, height)` of the first image.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| (i.width(), i.height()))
    }

    /// First `n` items (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Same labels, images replaced by `f(image)`.
    pub fn map_images<F: Fn(&Image) -> Image>(&self, f: F) -> Dataset {
        Dataset {
            images: self.images.iter().map(f).collect(),
            labels: self.labels.clone(),
            split: self.split,
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

pub fn load_dataset(image_path: &Path, label_path: &Path, split: Split) -> Result<Dataset, IdxError> {
    let images = parse_idx_images(&read_maybe_gzip(image_path)?)?;
    let labels = parse_idx_labels(&read_maybe_gzip(label_path)?)?;
    Dataset::new(images, labels, split)
}

/// Loads the canonical train or test pair from `dir` (plain or `.gz`).
pub fn load_split(dir: &Path, split: Split) -> Result<Dataset, IdxError> {
    let (img, lbl) = match split {
        Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
        Split::Test => (TEST_IMAGES, TEST_LABELS),
    };
    load_dataset(&locate(dir, img), &locate(dir, lbl), split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn image_file(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = RawIdxHeader {
            magic: IMAGE_MAGIC,
            dims: vec![count, rows, cols],
        }
        .to_bytes();
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn parses_tiny_image() {
        let imgs = parse_idx_images(&image_file(1, 2, 2, &[0, 255, 0, 255])).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0], Image::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]]));
    }

    #[test]
    fn preserves_row_major_order() {
        let imgs = parse_idx_images(&image_file(1, 2, 3, &[0, 51, 102, 153, 204, 255])).unwrap();
        assert_eq!((imgs[0].width(), imgs[0].height()), (3, 2));
        assert_eq!(imgs[0].get(2, 0), 0.4);
        assert_eq!(imgs[0].get(0, 1), 0.6);
    }

    #[test]
    fn image_truncated_after_header() {
        let bytes = image_file(2, 28, 28, &[]);
        assert!(matches!(parse_idx_images(&bytes), Err(IdxError::Truncated { .. })));
        assert!(matches!(parse_idx_images(&bytes[..6]), Err(IdxError::Truncated { .. })));
    }

    #[test]
    fn image_bad_magic() {
        let mut bytes = image_file(1, 1, 1, &[7]);
        bytes[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IdxError::BadMagic { found: 0x801, .. })
        ));
    }

    #[test]
    fn parses_labels() {
        assert_eq!(parse_idx_labels(&labels_to_idx(&[5, 0, 4])).unwrap(), vec![5, 0, 4]);
    }

    #[test]
    fn label_errors() {
        let bad = labels_to_idx(&[1, 12]);
        assert!(matches!(
            parse_idx_labels(&bad),
            Err(IdxError::BadLabel { index: 1, value: 12 })
        ));
        let short = &labels_to_idx(&[1, 2, 3])[..10];
        assert!(matches!(parse_idx_labels(short), Err(IdxError::Truncated { .. })));
        let images = image_file(1, 1, 1, &[0]);
        assert!(matches!(parse_idx_labels(&images), Err(IdxError::BadMagic { .. })));
    }

    #[test]
    fn count_mismatch() {
        let images = vec![Image::zeros(2, 2); 10];
        let labels = vec![0u8; 9];
        assert!(matches!(
            Dataset::new(images, labels, Split::Train),
            Err(IdxError::CountMismatch { images: 10, labels: 9 })
        ));
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let raw = labels_to_idx(&[3, 1, 4, 1, 5]);
        let path = dir.path().join("labels.gz");
        let mut enc =
            flate2::write::GzEncoder::new(std::fs::File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        enc.finish().unwrap();
        assert_eq!(read_maybe_gzip(&path).unwrap(), raw);
    }

    #[test]
    fn load_dataset_pairs_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        std::fs::write(&ip, image_file(2, 1, 2, &[0, 255, 255, 0])).unwrap();
        std::fs::write(&lp, labels_to_idx(&[7, 2])).unwrap();
        let ds = load_dataset(&ip, &lp, Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![7, 2]);
        assert_eq!(ds.images[1].get(0, 0), 1.0);
        assert_eq!(ds.split, Split::Test);
        std::fs::write(&lp, labels_to_idx(&[7])).unwrap();
        assert!(matches!(
            load_dataset(&ip, &lp, Split::Test),
            Err(IdxError::CountMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn image_bytes_round_trip(
            (count, rows, cols, payload) in (0u32..4, 1u32..6, 1u32..6).prop_flat_map(|(n, r, c)| {
                (Just(n), Just(r), Just(c), proptest::collection::vec(any::<u8>(), (n * r * c) as usize))
            })
        ) {
            let bytes = image_file(count, rows, cols, &payload);
            let imgs = parse_idx_images(&bytes).unwrap();
            prop_assert!(imgs.iter().all(|i| i.data().iter().all(|&v| (0.0..=1.0).contains(&v))));
            if count > 0 {
                prop_assert_eq!(images_to_idx(&imgs), bytes);
            }
        }
    }
}
