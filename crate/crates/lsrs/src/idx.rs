//! IDX image/label files (the MNIST container format).
//!
//! Images use magic `0x00000803` (`N × rows × cols`) or `0x00000804`
//! (`N × c × rows × cols`), labels use `0x00000801`. Every header field is a
//! big-endian u32 and payloads are unsigned bytes. Pixels are scaled by 1/255.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use lsrs_core::data::{Dataset, Split};
use lsrs_core::Tensor4;

pub const IMAGES3_MAGIC: u32 = 0x0000_0803;
pub const IMAGES4_MAGIC: u32 = 0x0000_0804;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("byte offset {offset}: unexpected end of file (need {needed} more bytes)")]
    Truncated { offset: u64, needed: u64 },

    #[error("byte offset {offset}: bad magic 0x{found:08x}, expected {expected}")]
    BadMagic { offset: u64, found: u32, expected: &'static str },

    #[error("byte offset {offset}: dimension {axis} is zero")]
    ZeroDim { offset: u64, axis: usize },

    #[error("byte offset {offset}: {extra} trailing bytes after payload")]
    Trailing { offset: u64, extra: u64 },

    #[error("byte offset {offset}: label {label} is not below class count {classes}")]
    LabelRange { offset: u64, label: u8, classes: usize },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error(transparent)]
    Dataset(#[from] lsrs_core::Error),
}

/// Decoded image file: `[N, c, rows, cols]` and raw bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub shape: [usize; 4],
    pub pixels: Vec<u8>,
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32, IdxError> {
    let offset = cur.position();
    let left = cur.get_ref().len() as u64 - offset.min(cur.get_ref().len() as u64);
    cur.read_u32::<BigEndian>()
        .map_err(|_| IdxError::Truncated { offset, needed: 4 - left })
}

fn read_payload(cur: &mut Cursor<&[u8]>, len: usize) -> Result<Vec<u8>, IdxError> {
    let offset = cur.position();
    let total = cur.get_ref().len() as u64;
    let left = total - offset;
    if (len as u64) > left {
        return Err(IdxError::Truncated { offset, needed: len as u64 - left });
    }
    let mut buf = vec![0; len];
    cur.read_exact(&mut buf).expect("length checked");
    if cur.position() < total {
        return Err(IdxError::Trailing { offset: cur.position(), extra: total - cur.position() });
    }
    Ok(buf)
}

fn read_dims(cur: &mut Cursor<&[u8]>, count: usize) -> Result<Vec<usize>, IdxError> {
    let mut dims = Vec::with_capacity(count);
    for axis in 0..count {
        let offset = cur.position();
        let d = read_u32(cur)? as usize;
        if d == 0 {
            return Err(IdxError::ZeroDim { offset, axis });
        }
        dims.push(d);
    }
    Ok(dims)
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut cur = Cursor::new(bytes);
    let magic = read_u32(&mut cur)?;
    let shape = match magic {
        IMAGES3_MAGIC => {
            let d = read_dims(&mut cur, 3)?;
            [d[0], 1, d[1], d[2]]
        }
        IMAGES4_MAGIC => {
            let d = read_dims(&mut cur, 4)?;
            [d[0], d[1], d[2], d[3]]
        }
        found => {
            return Err(IdxError::BadMagic { offset: 0, found, expected: "0x00000803 or 0x00000804" })
        }
    };
    let pixels = read_payload(&mut cur, shape.iter().product())?;
    Ok(IdxImages { shape, pixels })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut cur = Cursor::new(bytes);
    let magic = read_u32(&mut cur)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic { offset: 0, found: magic, expected: "0x00000801" });
    }
    let n = read_dims(&mut cur, 1)?[0];
    read_payload(&mut cur, n)
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

/// Pairs an image file with a label file. `n_classes` defaults to the
/// largest label plus one.
pub fn dataset_from_bytes(
    images: &[u8],
    labels: &[u8],
    n_classes: Option<usize>,
    split: Split,
) -> Result<Dataset, IdxError> {
    let img = parse_images(images)?;
    let lab = parse_labels(labels)?;
    if img.shape[0] != lab.len() {
        return Err(IdxError::CountMismatch { images: img.shape[0], labels: lab.len() });
    }
    let classes = n_classes.unwrap_or_else(|| lab.iter().copied().max().map_or(1, |m| m as usize + 1));
    if let Some((i, &label)) = lab.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
        return Err(IdxError::LabelRange { offset: 8 + i as u64, label, classes });
    }
    let data = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let inputs = Tensor4::from_vec(img.shape, data)?;
    let labels = lab.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new(inputs, labels, classes, split)?)
}

pub fn load_idx(
    images: &Path,
    labels: &Path,
    n_classes: Option<usize>,
    split: Split,
) -> Result<Dataset, IdxError> {
    dataset_from_bytes(&read_file(images)?, &read_file(labels)?, n_classes, split)
}

/// Encodes a dataset, rounding pixels to the nearest 1/255 step.
/// Single-channel data uses the 3-dimensional magic.
pub fn encode(data: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let [n, c, h, w] = data.inputs.shape();
    let mut images = Vec::new();
    if c == 1 {
        images.write_u32::<BigEndian>(IMAGES3_MAGIC).unwrap();
        for d in [n, h, w] {
            images.write_u32::<BigEndian>(d as u32).unwrap();
        }
    } else {
        images.write_u32::<BigEndian>(IMAGES4_MAGIC).unwrap();
        for d in [n, c, h, w] {
            images.write_u32::<BigEndian>(d as u32).unwrap();
        }
    }
    images.extend(data.inputs.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::new();
    labels.write_u32::<BigEndian>(LABELS_MAGIC).unwrap();
    labels.write_u32::<BigEndian>(n as u32).unwrap();
    labels.extend(data.labels.iter().map(|&l| l as u8));
    (images, labels)
}

pub fn save_idx(data: &Dataset, images: &Path, labels: &Path) -> std::io::Result<()> {
    let (img, lab) = encode(data);
    std::fs::File::create(images)?.write_all(&img)?;
    std::fs::File::create(labels)?.write_all(&lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v
    }

    #[test]
    fn parses_declared_dims() {
        let mut img = header(IMAGES3_MAGIC, &[2, 3, 4]);
        img.extend((0..24).map(|i| i as u8 * 10));
        let parsed = parse_images(&img).unwrap();
        assert_eq!(parsed.shape, [2, 1, 3, 4]);
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend([0, 2]);
        let ds = dataset_from_bytes(&img, &lab, None, Split::Test).unwrap();
        assert_eq!(ds.inputs.shape(), [2, 1, 3, 4]);
        assert_eq!(ds.n_classes, 3);
        assert_eq!(ds.inputs.data()[1], 10.0 / 255.0);
    }

    #[test]
    fn errors_carry_offsets() {
        let img = header(0x0000_0802, &[1, 1, 1]);
        assert!(matches!(parse_images(&img), Err(IdxError::BadMagic { offset: 0, found: 0x802, .. })));

        let mut img = header(IMAGES3_MAGIC, &[2, 2, 2]);
        img.extend([0; 5]);
        match parse_images(&img) {
            Err(IdxError::Truncated { offset: 16, needed: 3 }) => {}
            other => panic!("{other:?}"),
        }

        let short = &header(IMAGES3_MAGIC, &[2, 2])[..11];
        assert!(matches!(parse_images(short), Err(IdxError::Truncated { offset: 8, .. })));

        let img = header(IMAGES3_MAGIC, &[2, 0, 2]);
        assert!(matches!(parse_images(&img), Err(IdxError::ZeroDim { offset: 8, axis: 1 })));

        let mut lab = header(LABELS_MAGIC, &[1]);
        lab.extend([1, 1]);
        assert!(matches!(parse_labels(&lab), Err(IdxError::Trailing { offset: 9, extra: 1 })));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let mut img = header(IMAGES3_MAGIC, &[3, 1, 1]);
        img.extend([0; 3]);
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend([0, 1]);
        assert!(matches!(
            dataset_from_bytes(&img, &lab, None, Split::Train),
            Err(IdxError::CountMismatch { images: 3, labels: 2 })
        ));
        let mut lab = header(LABELS_MAGIC, &[3]);
        lab.extend([0, 1, 4]);
        assert!(matches!(
            dataset_from_bytes(&img, &lab, Some(3), Split::Train),
            Err(IdxError::LabelRange { offset: 10, label: 4, classes: 3 })
        ));
    }
}
