//! Binary named-tensor persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "ATNV"
//! version u16      currently 1
//! count   u32      number of records
//! record:
//!   name_len u16, name (UTF-8), rank u8, dims u32 × rank,
//!   data f32 × Π dims (little-endian)
//! ```
//!
//! Values are stored as 32-bit floats; loading widens back to `f64`, so a
//! freshly loaded tensor round-trips bit-exactly through further saves.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, Tensor, TensorError};

pub const FORMAT_MAGIC: [u8; 4] = *b"ATNV";
pub const FORMAT_VERSION: u16 = 1;

fn format_err(msg: impl Into<String>) -> TensorError {
    TensorError::Format(msg.into())
}

/// Writes named tensors in file order.
pub fn save_named(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FORMAT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let count = u32::try_from(entries.len())
        .map_err(|_| format_err(format!("too many records: {}", entries.len())))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in entries {
        let name_len = u16::try_from(name.len())
            .map_err(|_| format_err(format!("record name too long: {name:?}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| format_err(format!("rank {} exceeds format limit", tensor.rank())))?;
        w.write_all(&[rank])?;
        for &dim in tensor.shape() {
            let dim = u32::try_from(dim)
                .map_err(|_| format_err(format!("dimension {dim} exceeds format limit")))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a named-tensor file written by [`save_named`], preserving order.
pub fn load_named(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);

    fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
        r.read_exact(buf)
            .map_err(|_| format_err(format!("truncated while reading {what}")))
    }

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != FORMAT_MAGIC {
        return Err(format_err(format!(
            "bad magic {magic:?}, expected {FORMAT_MAGIC:?}"
        )));
    }
    let mut v2 = [0u8; 2];
    read_exact(&mut r, &mut v2, "version")?;
    let version = u16::from_le_bytes(v2);
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut v4 = [0u8; 4];
    read_exact(&mut r, &mut v4, "record count")?;
    let count = u32::from_le_bytes(v4) as usize;

    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        read_exact(&mut r, &mut v2, "name length")?;
        let name_len = u16::from_le_bytes(v2) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| format_err(format!("record {i} name is not UTF-8")))?;
        let mut rank_byte = [0u8; 1];
        read_exact(&mut r, &mut rank_byte, "rank")?;
        let mut shape = Vec::with_capacity(rank_byte[0] as usize);
        for _ in 0..rank_byte[0] {
            read_exact(&mut r, &mut v4, "dimension")?;
            shape.push(u32::from_le_bytes(v4) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            read_exact(&mut r, &mut v4, "tensor data")?;
            data.push(f32::from_le_bytes(v4) as f64);
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    // Anything after the declared records is a corrupt or mismatched file.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after final record"));
    }
    Ok(entries)
}
