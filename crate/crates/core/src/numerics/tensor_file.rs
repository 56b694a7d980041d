//! `TEN1` named-tensor container.
//!
//! Layout: magic `TEN1`, u32 tensor count, then per tensor a u16 name length,
//! UTF-8 name, u32 rows, u32 cols and rows*cols f32 values; all little-endian.

use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TEN1";

pub fn encode<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<Vec<u8>> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| Error::format(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("TEN1 file truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes every tensor in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("missing TEN1 magic"));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("tensor name is not UTF-8"))?
            .to_owned();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format("tensor size overflows"))?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after TEN1 tensors"));
    }
    Ok(out)
}

pub fn write<'a>(path: &Path, tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<()> {
    fs::write(path, encode(tensors)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<(String, Matrix)>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let bytes = encode([("ab", &m)]).unwrap();
        let mut want = b"TEN1".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u16.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"TEN2\0\0\0\0").is_err());
        assert!(decode(b"TEN1\x01\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(shapes in proptest::collection::vec((0usize..5, 0usize..5, "[a-z.0-9]{0,12}"), 0..4)) {
            let ms: Vec<(String, Matrix)> = shapes
                .iter()
                .enumerate()
                .map(|(i, (r, c, n))| (n.clone(), Matrix::from_fn(*r, *c, |a, b| (a * 7 + b + i) as f32 * 0.5 - 3.0)))
                .collect();
            let bytes = encode(ms.iter().map(|(n, m)| (n.as_str(), m))).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), ms);
        }
    }
}
