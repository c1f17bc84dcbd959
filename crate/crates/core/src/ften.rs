//! FTEN v1 binary tensor files.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! b"FTEN" | version=1 | ndim | dims[ndim] | dtype (0 = f32) | f32 payload
//! ```
//!
//! The payload is row-major and must hold exactly `∏ dims` elements.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ChannelVector, FeatureMap};

pub const MAGIC: &[u8; 4] = b"FTEN";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

/// A decoded FTEN tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected FTEN".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported FTEN version {version}")));
        }
        let ndim = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        let dtype = cur.u32()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype code {dtype}")));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
        let payload = &bytes[cur.pos..];
        if Some(payload.len()) != count.checked_mul(4) {
            return Err(Error::Format(format!(
                "payload is {} bytes, dims {dims:?} need {}",
                payload.len(),
                count.saturating_mul(4)
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl From<&FeatureMap<f32>> for TensorRecord {
    fn from(m: &FeatureMap<f32>) -> Self {
        let (c, h, w) = m.shape();
        Self {
            dims: vec![c, h, w],
            data: m.data().to_vec(),
        }
    }
}

impl From<&ChannelVector<f32>> for TensorRecord {
    fn from(v: &ChannelVector<f32>) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.data().to_vec(),
        }
    }
}

impl TryFrom<TensorRecord> for FeatureMap<f32> {
    type Error = Error;

    fn try_from(r: TensorRecord) -> Result<Self> {
        match r.dims[..] {
            [c, h, w] => FeatureMap::new(c, h, w, r.data),
            _ => Err(Error::Shape(format!(
                "feature map needs 3 dims, file has {:?}",
                r.dims
            ))),
        }
    }
}

impl TryFrom<TensorRecord> for ChannelVector<f32> {
    type Error = Error;

    fn try_from(r: TensorRecord) -> Result<Self> {
        // A C×1×1 map is accepted as a channel vector too.
        match r.dims[..] {
            [_] | [_, 1, 1] => ChannelVector::new(r.data),
            _ => Err(Error::Shape(format!(
                "channel vector needs 1 dim, file has {:?}",
                r.dims
            ))),
        }
    }
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap<f32>> {
    TensorRecord::read(path)?.try_into()
}

pub fn write_feature_map(path: impl AsRef<Path>, m: &FeatureMap<f32>) -> Result<()> {
    TensorRecord::from(m).write(path)
}

pub fn read_channel_vector(path: impl AsRef<Path>) -> Result<ChannelVector<f32>> {
    TensorRecord::read(path)?.try_into()
}

pub fn write_channel_vector(path: impl AsRef<Path>, v: &ChannelVector<f32>) -> Result<()> {
    TensorRecord::from(v).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let rec = TensorRecord::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let bytes = rec.encode();
        assert_eq!(&bytes[..4], b"FTEN");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[1, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[0, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 32);
    }

    #[test]
    fn rejects_corrupt_files() {
        let good = TensorRecord::new(vec![3], vec![1.0, 2.0, 3.0])
            .unwrap()
            .encode();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            TensorRecord::decode(&bad_magic),
            Err(Error::Format(_))
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(
            TensorRecord::decode(&bad_version),
            Err(Error::Format(_))
        ));

        let short = &good[..good.len() - 1];
        assert!(matches!(TensorRecord::decode(short), Err(Error::Format(_))));

        let mut long = good.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(TensorRecord::decode(&long), Err(Error::Format(_))));

        let mut bad_dtype = good.clone();
        bad_dtype[16] = 1;
        assert!(matches!(
            TensorRecord::decode(&bad_dtype),
            Err(Error::Format(_))
        ));

        assert!(TensorRecord::decode(b"FT").is_err());
    }

    #[test]
    fn typed_conversions_check_rank() {
        let rec = TensorRecord::new(vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(FeatureMap::<f32>::try_from(rec.clone()).is_err());
        assert!(ChannelVector::<f32>::try_from(rec).is_err());
    }

    proptest! {
        #[test]
        fn feature_map_round_trips(c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let mut state = seed;
            let m = FeatureMap::<f32>::from_fn(c, h, w, |_, _, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 40) as f32) / 1000.0 - 8000.0
            }).unwrap();
            let back: FeatureMap<f32> = TensorRecord::decode(&TensorRecord::from(&m).encode())
                .unwrap()
                .try_into()
                .unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
