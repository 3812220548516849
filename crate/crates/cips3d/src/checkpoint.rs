//! Binary checkpoint format. All integers are little-endian.
//!
//! ```text
//! magic      7 bytes  "CIPS3D\0"
//! version    u32
//! count      u32
//! per tensor, in name order:
//!   name_len u16, name (UTF-8)
//!   rank     u8, dims u32 × rank
//!   dtype    u8 (0 = f32, 1 = f64)
//!   data     little-endian elements
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::autodiff::ParamStore;
use crate::error::{ensure, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 7] = b"CIPS3D\0";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(params: &ParamStore<T>) -> Result<Vec<u8>> {
    let count = u32::try_from(params.len()).map_err(|_| Error::Checkpoint("too many tensors".into()))?;
    let mut out = Vec::with_capacity(16 + params.num_elements() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (name, p) in params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let shape = p.value.shape();
        let rank = u8::try_from(shape.len()).map_err(|_| Error::Checkpoint(format!("{name}: rank too large")))?;
        out.push(rank);
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("{name}: dim {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(T::DTYPE_TAG);
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>> {
    let mut r = Reader { bytes, pos: 0 };
    ensure!(r.take(MAGIC.len(), "magic")? == MAGIC, Checkpoint, "bad magic, not a checkpoint file");
    let version = r.u32("version")?;
    ensure!(
        version == VERSION,
        Checkpoint,
        "unsupported format version {version} (this build reads version {VERSION})"
    );
    let count = r.u32("tensor count")?;
    let mut store = ParamStore::new();
    let mut seen = BTreeSet::new();
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        ensure!(!name.is_empty(), Checkpoint, "tensor {i}: empty name");
        ensure!(seen.insert(name.clone()), Checkpoint, "duplicate tensor name {name}");
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u32("dims")? as usize;
            ensure!(d > 0, Checkpoint, "{name}: zero-sized dimension");
            shape.push(d);
        }
        let dtype = r.u8("dtype")?;
        ensure!(
            dtype == T::DTYPE_TAG,
            Checkpoint,
            "{name}: dtype tag {dtype}, expected {}",
            T::DTYPE_TAG
        );
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape {shape:?} overflows")))?;
        let nbytes = numel
            .checked_mul(T::BYTES)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape {shape:?} overflows")))?;
        let raw = r.take(nbytes, "tensor data")?;
        let value = if rank == 0 {
            Tensor::scalar(T::read_le(raw))
        } else {
            Tensor::new(shape, raw.chunks_exact(T::BYTES).map(T::read_le).collect())
        };
        store.insert(name, value);
    }
    ensure!(
        r.pos == bytes.len(),
        Checkpoint,
        "{} trailing bytes after the last tensor",
        bytes.len() - r.pos
    );
    Ok(store)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save<T: Scalar>(path: &Path, params: &ParamStore<T>) -> Result<()> {
    write_atomic(path, &encode(params)?)
}

pub fn load<T: Scalar>(path: &Path) -> Result<ParamStore<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
