//! `MSEMB001` embedding matrices.
//!
//! Layout: 8-byte magic, u32 count, u32 dim, u8 normalized flag, 3 zero
//! bytes, then `count * dim` f32 values in row-major order, little-endian.

use std::path::Path;

use masktext_core::EmbeddingMatrix;

use crate::error::{read_bytes, write_bytes, Error, Result};

pub const EMB_MAGIC: &[u8; 8] = b"MSEMB001";
const HEADER_LEN: usize = 20;

pub fn parse_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingMatrix> {
    let ctx = || format!("embeddings {}", path.display());
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(ctx(), format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[..8] != EMB_MAGIC {
        return Err(Error::format(ctx(), "bad magic, expected MSEMB001"));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let flag = bytes[16];
    if dim == 0 {
        return Err(Error::format(ctx(), "dimension is 0"));
    }
    if flag > 1 {
        return Err(Error::format(ctx(), format!("normalized flag is {flag}, expected 0 or 1")));
    }
    if bytes[17..20] != [0, 0, 0] {
        return Err(Error::format(ctx(), "padding bytes are not zero"));
    }
    let expect = (count as u64 * dim as u64 * 4).checked_add(HEADER_LEN as u64);
    if expect != Some(bytes.len() as u64) {
        return Err(Error::format(
            ctx(),
            format!("{count}x{dim} payload needs {} bytes, file has {}", expect.unwrap_or(u64::MAX), bytes.len()),
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingMatrix::new(count, dim, data, flag == 1).map_err(|e| match e {
        masktext_core::Error::Contract(m) | masktext_core::Error::Format(m) => Error::format(ctx(), m),
    })
}

/// Serializes with f32 values; the flag is copied from the matrix.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(m.count() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.extend_from_slice(&[m.is_normalized() as u8, 0, 0, 0]);
    for v in m.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    parse_embeddings(&read_bytes(path, "embeddings")?, path)
}

pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    write_bytes(path, &encode_embeddings(m))
}
