//! `TNSR` files: magic, one-line JSON header, raw little-endian f32 payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
    layout: String,
    endian: String,
}

/// Dense row-major f32 array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dtype: "f32".into(),
            shape: self.shape.clone(),
            layout: "row-major".into(),
            endian: "little".into(),
        };
        let header = serde_json::to_string(&header).expect("header serializes");
        let mut out = Vec::with_capacity(4 + header.len() + 1 + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::format(origin, "bad TNSR magic"));
        }
        let nl = bytes[4..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(origin, "unterminated TNSR header"))?;
        let header: Header = serde_json::from_slice(&bytes[4..4 + nl])
            .map_err(|e| Error::format(origin, format!("bad TNSR header: {e}")))?;
        if header.dtype != "f32" || header.layout != "row-major" || header.endian != "little" {
            return Err(Error::format(
                origin,
                format!("unsupported TNSR encoding {}/{}/{}", header.dtype, header.layout, header.endian),
            ));
        }
        let payload = &bytes[4 + nl + 1..];
        let count: usize = header.shape.iter().product();
        if payload.len() != 4 * count {
            return Err(Error::format(
                origin,
                format!("payload has {} bytes, shape {:?} needs {}", payload.len(), header.shape, 4 * count),
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor {
            shape: header.shape,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Fails with a message naming `origin` when the shape differs from `expected`
    /// (`None` entries match any size).
    pub fn expect_shape(&self, expected: &[Option<usize>], origin: &Path) -> Result<()> {
        let ok = self.shape.len() == expected.len()
            && self.shape.iter().zip(expected).all(|(s, e)| e.is_none_or(|e| e == *s));
        if ok {
            Ok(())
        } else {
            Err(Error::format(origin, format!("unexpected tensor shape {:?}, want {expected:?}", self.shape)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut b = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().to_bytes();
        b[0] = b'X';
        let err = Tensor::from_bytes(&b, Path::new("views.tnsr")).unwrap_err();
        assert!(err.to_string().contains("views.tnsr"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let b = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().to_bytes();
        assert!(Tensor::from_bytes(&b[..b.len() - 1], Path::new("t")).is_err());
    }

    #[test]
    fn header_layout() {
        let b = Tensor::new(vec![1, 2], vec![0.5, -1.0]).unwrap().to_bytes();
        let text = String::from_utf8_lossy(&b[4..]);
        let line = text.lines().next().unwrap();
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["dtype"], "f32");
        assert_eq!(v["shape"], serde_json::json!([1, 2]));
        assert_eq!(v["layout"], "row-major");
        assert_eq!(v["endian"], "little");
    }

    proptest! {
        #[test]
        fn round_trip(data in prop::collection::vec(-1e6f32..1e6, 0..64)) {
            let t = Tensor::new(vec![data.len()], data).unwrap();
            prop_assert_eq!(Tensor::from_bytes(&t.to_bytes(), Path::new("t")).unwrap(), t);
        }
    }
}
