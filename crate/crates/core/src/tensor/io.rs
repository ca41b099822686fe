//! Binary `.tns` format.
//!
//! ```text
//! 0..8    magic "SPIKTENS"
//! 8..12   u32 version (= 1)
//! 12..16  u32 p
//! 16..24  u64 n
//! 24      u8 dtype (1 = f64)
//! 25..32  reserved (zero)
//! 32..    C(n, p) little-endian f64, colex order
//! ```

use super::{checked_len, SymmetricTensor};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SPIKTENS";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_tensor(path: impl AsRef<Path>, t: &SymmetricTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn write_to(w: &mut impl Write, t: &SymmetricTensor) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(MAGIC);
    header[8..12].copy_from_slice(&VERSION.to_le_bytes());
    header[12..16].copy_from_slice(&(t.p() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&(t.n() as u64).to_le_bytes());
    header[24] = DTYPE_F64;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * 8192);
    for chunk in t.data().chunks(8192) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<SymmetricTensor> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    read_from(&mut BufReader::new(file), Some(file_len))
}

/// Reads a tensor; `total_len`, when known, is checked against the header.
pub fn read_from(r: &mut impl Read, total_len: Option<u64>) -> Result<SymmetricTensor> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 32-byte header".into()))?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let p = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    if header[24] != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype {}", header[24])));
    }
    if p < 2 {
        return Err(Error::Format(format!("order p = {p} must be ≥ 2")));
    }
    if n < p {
        return Err(Error::Format(format!("n = {n} smaller than p = {p}")));
    }
    let len = checked_len(n, p)?;
    if let Some(total) = total_len {
        let expected = HEADER_LEN as u64 + 8 * len as u64;
        if total != expected {
            return Err(Error::Format(format!("file has {total} bytes, header implies {expected}")));
        }
    }
    let mut data = vec![0.0; len];
    let mut buf = vec![0u8; 8 * 8192];
    let mut filled = 0;
    while filled < len {
        let take = (len - filled).min(8192);
        r.read_exact(&mut buf[..8 * take])
            .map_err(|_| Error::Format(format!("truncated payload after {filled} of {len} entries")))?;
        for (k, b) in buf[..8 * take].chunks_exact(8).enumerate() {
            data[filled + k] = f64::from_le_bytes(b.try_into().unwrap());
        }
        filled += take;
    }
    SymmetricTensor::from_data(n, p, data)
}
