//! `HEXFLEET1` checkpoint format.
//!
//! ```text
//! magic   9 bytes  "HEXFLEET1"
//! then, per parameter, until end of file:
//!   name_len  u64 LE
//!   name      name_len bytes, UTF-8
//!   rank      u64 LE
//!   dims      rank x u64 LE
//!   values    prod(dims) x f64 LE, row-major
//! ```

use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"HEXFLEET1";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 16 * store.len() + 8 * store.num_values());
    out.extend_from_slice(MAGIC);
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.value(id);
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(value.shape().len() as u64).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in value.data() {
            out.extend_from_slice(&v.to_le_bytes());
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len().saturating_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("implausible {what} {v}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let found = &bytes[..bytes.len().min(MAGIC.len())];
        return Err(Error::Checkpoint(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(MAGIC),
            String::from_utf8_lossy(found)
        )));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let mut store = ParamStore::new();
    while r.pos < bytes.len() {
        let name_len = r.len("name length")?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name: {e}")))?
            .to_owned();
        let rank = r.len("rank")?;
        let dims = (0..rank)
            .map(|_| r.len("dimension"))
            .collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("dimension overflow in {name}")))?;
        let raw = r.take(
            numel
                .checked_mul(8)
                .ok_or_else(|| Error::Checkpoint(format!("size overflow in {name}")))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store
            .insert(name, Tensor::new(dims, values)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian_records() {
        let mut store = ParamStore::new();
        store.insert("ab", Tensor::row(vec![1.5])).unwrap();
        let bytes = encode(&store);
        let mut expected = MAGIC.to_vec();
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_foreign_magic_and_truncation() {
        assert!(matches!(decode(b"HEXFLEET2"), Err(Error::Checkpoint(_))));
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(2, 2)).unwrap();
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            params in proptest::collection::vec(
                (1usize..4, 1usize..5, proptest::collection::vec(proptest::num::f64::ANY, 16)),
                1..5,
            )
        ) {
            let mut store = ParamStore::new();
            for (i, (r, c, vals)) in params.iter().enumerate() {
                let data = vals.iter().cycle().take(r * c).copied().collect();
                store.insert(format!("p{i}"), Tensor::new(vec![*r, *c], data).unwrap()).unwrap();
            }
            let bytes = encode(&store);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
