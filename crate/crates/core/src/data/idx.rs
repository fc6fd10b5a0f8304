//! The IDX container used by MNIST: a big-endian magic word
//! (`0x00000803` for 3-D unsigned-byte images, `0x00000801` for 1-D labels),
//! one big-endian `u32` per dimension, then the raw bytes.

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        /// Bytes mapped to `[0, 1]` by `/255`, image-major, row-major.
        pixels: Vec<f64>,
    },
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!(
                "truncated header: need 4 bytes, {} left",
                bytes.len().saturating_sub(offset)
            ),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0)?;
    let ndims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("unsupported magic 0x{other:08x}"),
            })
        }
    };
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * ndims;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Parse {
            offset: 4,
            message: format!("dimensions {dims:?} overflow"),
        })?;
    let available = bytes.len() - header;
    if available < payload {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "truncated payload: expected {payload} bytes after header, found {available}"
            ),
        });
    }
    if available > payload {
        return Err(Error::Parse {
            offset: header + payload,
            message: format!("{} trailing bytes after payload", available - payload),
        });
    }
    let body = &bytes[header..];
    Ok(if ndims == 3 {
        IdxData::Images {
            count: dims[0],
            rows: dims[1],
            cols: dims[2],
            pixels: body.iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    } else {
        IdxData::Labels(body.to_vec())
    })
}

fn dim(v: usize) -> [u8; 4] {
    u32::try_from(v)
        .expect("IDX dimension fits in u32")
        .to_be_bytes()
}

pub fn serialize_idx_images(count: usize, rows: usize, cols: usize, bytes: &[u8]) -> Vec<u8> {
    assert_eq!(bytes.len(), count * rows * cols, "pixel byte count");
    let mut out = Vec::with_capacity(16 + bytes.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim(count));
    out.extend_from_slice(&dim(rows));
    out.extend_from_slice(&dim(cols));
    out.extend_from_slice(bytes);
    out
}

pub fn serialize_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim(labels.len()));
    out.extend_from_slice(labels);
    out
}

impl IdxData {
    /// Inverse of [`parse_idx`].
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            } => {
                let raw: Vec<u8> = pixels.iter().map(|p| (p * 255.0).round() as u8).collect();
                serialize_idx_images(*count, *rows, *cols, &raw)
            }
            IdxData::Labels(l) => serialize_idx_labels(l),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_image_fixture() {
        let mut raw = vec![0u8; 2 * 28 * 28];
        raw[..784].fill(17);
        raw[784..]
            .iter_mut()
            .enumerate()
            .for_each(|(i, b)| *b = (i % 256) as u8);
        let blob = serialize_idx_images(2, 28, 28, &raw);
        match parse_idx(&blob).unwrap() {
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            } => {
                assert_eq!((count, rows, cols), (2, 28, 28));
                for (p, &b) in pixels.iter().zip(&raw) {
                    assert_eq!(*p, f64::from(b) / 255.0);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn label_fixture() {
        let blob = [0, 0, 8, 1, 0, 0, 0, 2, 7, 2];
        assert_eq!(parse_idx(&blob).unwrap(), IdxData::Labels(vec![7, 2]));
    }

    #[test]
    fn bad_magic() {
        let err = parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0])
            .unwrap_err()
            .to_string();
        assert!(err.contains("unsupported magic"), "{err}");
        assert!(err.contains("byte 0"), "{err}");
    }

    #[test]
    fn truncation_and_overflow() {
        let mut blob = serialize_idx_labels(&[1, 2, 3]);
        blob.pop();
        assert!(matches!(
            parse_idx(&blob),
            Err(Error::Parse { offset: 10, .. })
        ));
        assert!(matches!(
            parse_idx(&[0, 0, 8]),
            Err(Error::Parse { offset: 0, .. })
        ));
        let huge = [
            0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255,
        ];
        assert!(parse_idx(&huge).is_err());
        let mut extra = serialize_idx_labels(&[1]);
        extra.push(0);
        assert!(matches!(
            parse_idx(&extra),
            Err(Error::Parse { offset: 9, .. })
        ));
    }
}
