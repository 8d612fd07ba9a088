//! Binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"CANM" | dtype: u8 (0 = f64, 1 = f32) | rank: u8 | rank x dim: u32 | payload
//! ```
//!
//! The payload is row-major, little-endian IEEE floats of the given dtype.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{CanmError, Result};

const MAGIC: &[u8; 4] = b"CANM";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F64 = 0,
    F32 = 1,
}

impl DType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DType::F64),
            1 => Ok(DType::F32),
            t => Err(CanmError::Format(format!("unknown dtype tag {t}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
        }
    }
}

pub fn write_tensor_to(w: &mut impl Write, t: &Tensor, dtype: DType) -> std::io::Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "rank exceeds 255")
    })?;
    let mut buf = Vec::with_capacity(6 + 4 * t.rank() + dtype.width() * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(dtype as u8);
    buf.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32")
        })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        DType::F64 => t
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        DType::F32 => t
            .data()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    w.write_all(&buf)
}

pub fn read_tensor_from(r: &mut impl Read) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| CanmError::io("reading tensor", e))?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let truncated = || CanmError::Format("truncated tensor file".into());
    if bytes.len() < 6 {
        return Err(truncated());
    }
    if &bytes[..4] != MAGIC {
        return Err(CanmError::Format("bad magic bytes".into()));
    }
    let dtype = DType::from_tag(bytes[4])?;
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated());
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n: usize = shape.iter().product();
    let payload = &bytes[header..];
    if payload.len() != n * dtype.width() {
        return Err(if payload.len() < n * dtype.width() {
            truncated()
        } else {
            CanmError::Format("trailing bytes after payload".into())
        });
    }
    let data = match dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Tensor::new(&shape, data).map_err(|e| CanmError::Format(e.to_string()))
}

pub fn write_tensor(path: &Path, t: &Tensor, dtype: DType) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor_to(&mut buf, t, dtype).map_err(|e| CanmError::io("encoding tensor", e))?;
    crate::fsutil::write_atomic(path, &buf)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes =
        fs::read(path).map_err(|e| CanmError::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 1], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t, DType::F64).unwrap();
        assert_eq!(&buf[..4], b"CANM");
        assert_eq!(buf[4], 0);
        assert_eq!(buf[5], 2);
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        assert_eq!(&buf[10..14], &1u32.to_le_bytes());
        assert_eq!(&buf[14..22], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 14 + 16);
    }

    #[test]
    fn f32_payload_is_narrowed() {
        let t = Tensor::new(&[3], vec![0.5, 0.1, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t, DType::F32).unwrap();
        assert_eq!(buf.len(), 6 + 4 + 12);
        let back = read_tensor_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data()[0], 0.5);
        assert_eq!(back.data()[1], 0.1f32 as f64);
    }

    #[test]
    fn truncated_and_corrupt_inputs_fail() {
        let t = Tensor::ones(&[4, 4]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t, DType::F64).unwrap();
        for cut in [0, 3, 5, 9, buf.len() - 1] {
            assert!(read_tensor_from(&mut &buf[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_tensor_from(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[4] = 7;
        assert!(read_tensor_from(&mut bad.as_slice()).is_err());
        let mut long = buf;
        long.push(0);
        assert!(read_tensor_from(&mut long.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn f64_roundtrip_is_exact(
            shape in prop::collection::vec(1usize..5, 0..4),
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::randn(&shape, 3.0, &mut rng);
            let mut buf = Vec::new();
            write_tensor_to(&mut buf, &t, DType::F64).unwrap();
            let back = read_tensor_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
