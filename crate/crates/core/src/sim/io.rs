//! On-disk formats for heightmaps and scenes.
//!
//! A heightmap file is a 16-byte header followed by `H * W * C` little-endian
//! `f32` values in row-major, channel-last order (r, g, b, depth):
//!
//! | bytes | field                      |
//! |-------|----------------------------|
//! | 0..4  | magic `AGHM`               |
//! | 4..6  | dtype code (`1` = f32), u16 |
//! | 6..8  | channels C, u16            |
//! | 8..12 | height H, u32              |
//! | 12..16| width W, u32               |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::render::Heightmap;
use super::scene::Scene;
use crate::error::{Error, Result};

pub const HEIGHTMAP_MAGIC: &[u8; 4] = b"AGHM";
pub const DTYPE_F32: u16 = 1;
const CHANNELS: u16 = 4;

pub fn encode_heightmap(hm: &Heightmap) -> Vec<u8> {
    let n = hm.size;
    let mut out = Vec::with_capacity(16 + n * n * 16);
    out.extend_from_slice(HEIGHTMAP_MAGIC);
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for i in 0..n * n {
        for v in &hm.rgb[3 * i..3 * i + 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&hm.depth[i].to_le_bytes());
    }
    out
}

pub fn decode_heightmap(bytes: &[u8], resolution: f64, path: &Path) -> Result<Heightmap> {
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 16 || &bytes[0..4] != HEIGHTMAP_MAGIC {
        return Err(bad("missing heightmap magic"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if u16_at(4) != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    if u16_at(6) != CHANNELS {
        return Err(bad("expected 4 channels"));
    }
    let (h, w) = (u32_at(8) as usize, u32_at(12) as usize);
    if h != w {
        return Err(bad("heightmaps must be square"));
    }
    if bytes.len() != 16 + h * w * 16 {
        return Err(bad("payload size does not match header"));
    }
    let mut hm = Heightmap::new(h, resolution);
    for (i, px) in bytes[16..].chunks_exact(16).enumerate() {
        let f = |j: usize| f32::from_le_bytes(px[4 * j..4 * j + 4].try_into().unwrap());
        hm.rgb[3 * i] = f(0);
        hm.rgb[3 * i + 1] = f(1);
        hm.rgb[3 * i + 2] = f(2);
        hm.depth[i] = f(3);
    }
    Ok(hm)
}

pub fn write_heightmap(path: &Path, hm: &Heightmap) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_heightmap(hm))?;
    Ok(())
}

pub fn read_heightmap(path: &Path, resolution: f64) -> Result<Heightmap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_heightmap(&bytes, resolution, path)
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(scene)?)?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
