//! `MSDEPTH1` raw depth images.
//!
//! Layout: 8-byte magic, u32 height, u32 width, f32 scale (meters per unit),
//! then `height * width` u16 values in row-major order, all little-endian.
//! A raw value of 0 marks an invalid pixel.

use std::path::Path;

use masktext_core::DepthMap;

use crate::error::{read_bytes, write_bytes, Error, Result};

pub const DEPTH_MAGIC: &[u8; 8] = b"MSDEPTH1";
const HEADER_LEN: usize = 20;

/// The file contents before conversion to meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDepth {
    pub height: u32,
    pub width: u32,
    pub scale: f32,
    pub raw: Vec<u16>,
}

impl RawDepth {
    /// Meters per pixel; the product is taken in f32 and widened.
    pub fn to_depth_map(&self) -> Result<DepthMap> {
        let values = self.raw.iter().map(|&r| (r as f32 * self.scale) as f64).collect();
        DepthMap::new(self.height, self.width, values).map_err(|e| Error::from_core("depth", e))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.raw.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.scale.to_le_bytes());
        for v in &self.raw {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn parse_depth(bytes: &[u8], path: &Path) -> Result<RawDepth> {
    let ctx = || format!("depth {}", path.display());
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(ctx(), format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[..8] != DEPTH_MAGIC {
        return Err(Error::format(ctx(), "bad magic, expected MSDEPTH1"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (height, width) = (u32_at(8), u32_at(12));
    let scale = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::format(ctx(), format!("depth scale {scale} must be finite and positive")));
    }
    let expect = (height as u64 * width as u64 * 2).checked_add(HEADER_LEN as u64);
    if expect != Some(bytes.len() as u64) {
        return Err(Error::format(
            ctx(),
            format!("{height}x{width} payload needs {} bytes, file has {}", expect.unwrap_or(u64::MAX), bytes.len()),
        ));
    }
    let raw = bytes[HEADER_LEN..].chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    Ok(RawDepth { height, width, scale, raw })
}

pub fn read_raw_depth(path: &Path) -> Result<RawDepth> {
    parse_depth(&read_bytes(path, "depth")?, path)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    read_raw_depth(path)?.to_depth_map()
}

pub fn write_depth(path: &Path, depth: &RawDepth) -> Result<()> {
    write_bytes(path, &depth.encode())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_fixture() {
        let raw = RawDepth { height: 2, width: 2, scale: 0.001, raw: vec![0, 1000, 2000, 65535] };
        let parsed = parse_depth(&raw.encode(), Path::new("d")).unwrap();
        assert_eq!(parsed, raw);
        let m = parsed.to_depth_map().unwrap();
        let want = [0.0, 1.0, 2.0, 65.535];
        for (got, want) in m.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        assert_eq!(m.values()[0], 0.0);
    }

    #[test]
    fn zero_payload_is_all_invalid() {
        let raw = RawDepth { height: 3, width: 4, scale: 0.5, raw: vec![0; 12] };
        assert!(raw.to_depth_map().unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_files() {
        let good = RawDepth { height: 1, width: 2, scale: 1.0, raw: vec![1, 2] }.encode();
        let p = Path::new("d");
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(parse_depth(&bad_magic, p).is_err());
        assert!(parse_depth(&good[..good.len() - 1], p).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(parse_depth(&extra, p).is_err());
        let mut neg = good.clone();
        neg[16..20].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert_eq!(parse_depth(&neg, p).unwrap_err().exit_code(), 2);
    }
}
