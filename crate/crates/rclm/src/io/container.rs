//! Chunked binary container for trained models.
//!
//! Layout: the magic `RCLM1`, a little-endian `u32` format version, a `u32`
//! chunk count, then that many chunks. Each chunk is
//! `[u16 name_len][name][u64 payload_len][payload][u32 crc32]`, all integers
//! little-endian, the checksum covering the payload bytes. Readers verify
//! every checksum and fail on truncation rather than returning a partial
//! model — the up-front count is what makes a file cut at a chunk boundary
//! detectable.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"RCLM1";
pub const VERSION: u32 = 1;

/// One named section of a container.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub name: String,
    pub payload: Vec<u8>,
}

/// CRC-32 (reflected, polynomial 0xEDB88320), the variant used by zip/png.
pub fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = crc_table();
    let mut crc = !0u32;
    for &b in bytes {
        crc = (crc >> 8) ^ TABLE[((crc ^ b as u32) & 0xff) as usize];
    }
    !crc
}

const fn crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

pub fn write_container<W: Write>(w: &mut W, chunks: &[Chunk]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(chunks.len())
        .map_err(|_| Error::InvalidParameter("too many chunks for one container".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for c in chunks {
        let name = c.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "chunk name '{}...' too long",
                &c.name[..32.min(c.name.len())]
            )));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(c.payload.len() as u64).to_le_bytes())?;
        w.write_all(&c.payload)?;
        w.write_all(&crc32(&c.payload).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_container<R: Read>(r: &mut R) -> Result<Vec<Chunk>> {
    let mut magic = [0u8; 5];
    fill(r, &mut magic, "magic")?.ok_or(Error::BadMagic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut version = [0u8; 4];
    fill(r, &mut version, "version")?.ok_or_else(|| Error::Truncated("version".into()))?;
    let version = u32::from_le_bytes(version);
    if version > VERSION {
        return Err(Error::UnsupportedVersion(version));
    }

    let mut count = [0u8; 4];
    fill(r, &mut count, "chunk count")?
        .ok_or_else(|| Error::Truncated("chunk count".into()))?;
    let count = u32::from_le_bytes(count);

    let mut chunks = Vec::new();
    for _ in 0..count {
        let mut len = [0u8; 2];
        fill(r, &mut len, "chunk header")?
            .ok_or_else(|| Error::Truncated("chunk header".into()))?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        fill(r, &mut name, "chunk name")?
            .ok_or_else(|| Error::Truncated("chunk name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Truncated("chunk name (not utf-8)".into()))?;
        let mut len = [0u8; 8];
        fill(r, &mut len, "payload length")?
            .ok_or_else(|| Error::Truncated(name.clone()))?;
        let payload_len = u64::from_le_bytes(len);
        let mut payload = vec![0u8; usize::try_from(payload_len)
            .map_err(|_| Error::Truncated(name.clone()))?];
        fill(r, &mut payload, "payload")?.ok_or_else(|| Error::Truncated(name.clone()))?;
        let mut crc = [0u8; 4];
        fill(r, &mut crc, "checksum")?.ok_or_else(|| Error::Truncated(name.clone()))?;
        if u32::from_le_bytes(crc) != crc32(&payload) {
            return Err(Error::ChecksumMismatch(name));
        }
        chunks.push(Chunk { name, payload });
    }
    Ok(chunks)
}

/// Reads exactly `buf.len()` bytes. `Ok(None)` only when the source was
/// already exhausted; a partial read is a truncation error naming `what`.
fn fill<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<Option<()>> {
    let mut got = 0;
    while got < buf.len() {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Truncated(what.to_string()));
        }
        got += n;
    }
    Ok(Some(()))
}
