//! Named-tensor container used for checkpoints, feature caches and datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SNNTENS\0"
//! version  u32      1
//! count    u32      number of entries
//! entry*   name_len u32, name (UTF-8), dtype u8 (1 = f64),
//!          ndim u32, dims u64 * ndim, payload (product(dims) values, row-major)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SNNTENS\0";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;

pub fn write_tensors<W: Write>(mut w: W, entries: &[(String, Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[DTYPE_F64])?;
        w.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(8 * t.numel());
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("unexpected end of container: {e}")))?;
    Ok(buf)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let magic: [u8; 8] = read_exact(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("name is not UTF-8".into()))?;
        let [dtype] = read_exact::<_, 1>(&mut r)?;
        if dtype != DTYPE_F64 {
            return Err(Error::Format(format!("{name}: unknown dtype tag {dtype}")));
        }
        let ndim = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 8];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("{name}: truncated payload: {e}")))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, entries: &[(String, Tensor)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_tensors(std::io::BufWriter::new(file), entries)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let file = std::fs::File::open(path)?;
    read_tensors(std::io::BufReader::new(file))
}
