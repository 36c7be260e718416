use std::path::Path;

use super::Dataset;
use crate::error::{invalid, Error, Result};

/// An unsigned-byte IDX tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses big-endian IDX bytes with unsigned-byte elements and one or three dimensions.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("header needs 4 bytes, found {}", bytes.len()),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic prefix {:02x}{:02x}", bytes[0], bytes[1]),
        });
    }
    if bytes[2] != 0x08 {
        return Err(Error::UnsupportedIdxType(bytes[2]));
    }
    let ndim = bytes[3] as usize;
    if ndim != 1 && ndim != 3 {
        return Err(Error::Format {
            offset: 3,
            reason: format!("expected 1 or 3 dimensions, found {ndim}"),
        });
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("header needs {header} bytes, found {}", bytes.len()),
        });
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| {
            let b = &bytes[4 + 4 * k..8 + 4 * k];
            u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
        })
        .collect();
    let expected = dims.iter().product::<usize>();
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::Format {
            offset: header,
            reason: format!("payload length {actual}, expected {expected}"),
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Loads an image/label IDX pair as a dataset with pixels scaled to [0, 1].
pub fn load_idx_dataset(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let img = parse_idx(&std::fs::read(images)?)?;
    let lab = parse_idx(&std::fs::read(labels)?)?;
    if img.dims.len() != 3 || lab.dims.len() != 1 {
        return Err(invalid("expected a 3-D image file and a 1-D label file"));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(Error::DimensionMismatch {
            expected: img.dims[0],
            found: lab.dims[0],
        });
    }
    let dim = img.dims[1] * img.dims[2];
    let features = img.data.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = lab.data.iter().map(|&y| y as usize).collect();
    Dataset::new(features, labels, dim, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 4, 1, 2, 3, 4];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![4]);
        assert_eq!(t.data, vec![1, 2, 3, 4]);
    }

    #[test]
    fn three_dimensional() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3];
        bytes.extend([9, 8, 7, 6, 5, 4]);
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![2, 1, 3]);
        assert_eq!(t.data.len(), 6);
    }

    #[test]
    fn truncated_payload() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 4, 1, 2, 3];
        match parse_idx(&bytes) {
            Err(Error::Format { offset, reason }) => {
                assert_eq!(offset, 8);
                assert!(reason.contains('3') && reason.contains('4'));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&[0, 0, 8, 3, 0, 0]), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic() {
        let bytes = [0, 0, 9, 0x99, 0, 0, 0, 0];
        assert!(matches!(parse_idx(&bytes), Err(Error::UnsupportedIdxType(0x09))));
        assert!(matches!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]), Err(Error::Format { offset: 3, .. })));
    }
}
