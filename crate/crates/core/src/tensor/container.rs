//! Binary model container.
//!
//! ```text
//! magic[4] | version u32 | record count u32 |
//!   { tag u32 | rank u32 | dims u32 * rank | element count u64 | payload }*
//! ```
//!
//! All integers and payload elements are little-endian. The element type is
//! fixed per magic: network weights use `f32`, SVM models `f64`.

use crate::error::{Error, Result};
use std::path::Path;

pub trait Element: Copy + PartialEq + std::fmt::Debug {
    const BYTES: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const BYTES: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const BYTES: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub tag: u32,
    pub shape: Vec<u32>,
    pub data: Vec<T>,
}

pub fn encode<T: Element>(magic: [u8; 4], version: u32, records: &[Record<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.tag.to_le_bytes());
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for d in &r.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(r.data.len() as u64).to_le_bytes());
        for &v in &r.data {
            v.put(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a container, returning its version and records.
pub fn decode<T: Element>(bytes: &[u8], magic: [u8; 4]) -> Result<(u32, Vec<Record<T>>)> {
    let mut r = Reader { bytes, pos: 0 };
    let m = r.take(4)?;
    if m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(m),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.u32()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let tag = r.u32()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len = r.u64()? as usize;
        let payload = r.take(len.checked_mul(T::BYTES).ok_or_else(|| Error::Format("payload overflow".into()))?)?;
        let data = payload.chunks_exact(T::BYTES).map(T::get).collect();
        records.push(Record { tag, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((version, records))
}

pub fn write_file<T: Element>(path: &Path, magic: [u8; 4], version: u32, records: &[Record<T>]) -> Result<()> {
    std::fs::write(path, encode(magic, version, records)).map_err(|e| Error::io(path, e))
}

pub fn read_file<T: Element>(path: &Path, magic: [u8; 4]) -> Result<(u32, Vec<Record<T>>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, magic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            tags in proptest::collection::vec(0u32..10, 0..5),
            bits in proptest::collection::vec(any::<u32>(), 0..64),
            version in any::<u32>(),
        ) {
            let records: Vec<Record<f32>> = tags
                .iter()
                .map(|&tag| Record {
                    tag,
                    shape: vec![bits.len() as u32],
                    data: bits.iter().map(|&b| f32::from_bits(b)).collect(),
                })
                .collect();
            let bytes = encode(*b"SDCS", version, &records);
            let (v, back) = decode::<f32>(&bytes, *b"SDCS").unwrap();
            prop_assert_eq!(v, version);
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in records.iter().zip(&back) {
                prop_assert_eq!(a.tag, b.tag);
                let ab: Vec<u32> = a.data.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
            prop_assert_eq!(encode(*b"SDCS", version, &back), bytes);
        }
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let bytes = encode(*b"SVM1", 1, &[Record { tag: 1, shape: vec![2], data: vec![1.0f64, 2.0] }]);
        assert!(decode::<f64>(&bytes, *b"SDCS").is_err());
        assert!(decode::<f64>(&bytes[..bytes.len() - 1], *b"SVM1").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<f64>(&extra, *b"SVM1").is_err());
    }
}
