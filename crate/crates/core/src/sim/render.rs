use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::SimConfig;

/// Top-down RGB-D image of the workspace, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    pub size: usize,
    /// Meters per pixel.
    pub resolution: f64,
    /// `size * size * 3` values in `[0, 1]`, channel-last.
    pub rgb: Vec<f32>,
    /// Height above the table in meters.
    pub depth: Vec<f32>,
}

impl Heightmap {
    pub fn new(size: usize, resolution: f64) -> Self {
        Self { size, resolution, rgb: vec![0.0; size * size * 3], depth: vec![0.0; size * size] }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.size + col
    }

    pub fn pixel_rgb(&self, row: usize, col: usize) -> [f32; 3] {
        let i = self.index(row, col) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Pixels whose rgb or depth differ from `other`.
    pub fn diff_pixels(&self, other: &Heightmap) -> Vec<usize> {
        (0..self.size * self.size)
            .filter(|&i| {
                self.depth[i] != other.depth[i] || self.rgb[3 * i..3 * i + 3] != other.rgb[3 * i..3 * i + 3]
            })
            .collect()
    }
}

/// Background mask: `true` where the depth is below the background threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub size: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.size + col]
    }
}

pub fn background_mask(hm: &Heightmap, threshold: f64) -> Mask {
    Mask { size: hm.size, data: hm.depth.iter().map(|&d| (d as f64) < threshold).collect() }
}

#[inline]
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic value in `[-1, 1)` keyed by seed and coordinates.
#[inline]
fn hash_unit(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let h = splitmix(seed ^ splitmix(a.wrapping_mul(0x1000_0000_01B3) ^ splitmix(b ^ (c << 48))));
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

fn texture_value(scene: &Scene, row: usize, col: usize) -> f64 {
    let cell = scene.texture.cell.max(1) as f64;
    let (fy, fx) = (row as f64 / cell, col as f64 / cell);
    let (iy, ix) = (fy.floor(), fx.floor());
    let (ty, tx) = (fy - iy, fx - ix);
    let corner = |dy: f64, dx: f64| hash_unit(scene.rng_seed, (iy + dy) as u64, (ix + dx) as u64, 7);
    let top = corner(0.0, 0.0) * (1.0 - tx) + corner(0.0, 1.0) * tx;
    let bottom = corner(1.0, 0.0) * (1.0 - tx) + corner(1.0, 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Orthographic RGB-D projection of the scene.
pub fn render(scene: &Scene, cfg: &SimConfig) -> Heightmap {
    let n = cfg.image_size();
    let mut hm = Heightmap::new(n, cfg.resolution);
    let noise = cfg.domain.pixel_noise;
    for r in 0..n {
        for c in 0..n {
            let t = texture_value(scene, r, c);
            let i = hm.index(r, c);
            for ch in 0..3 {
                let fine = hash_unit(scene.rng_seed, i as u64, ch as u64, 1) * noise * 0.5;
                hm.rgb[3 * i + ch] = (scene.texture.base[ch] + scene.texture.amplitude * t + fine).clamp(0.0, 1.0) as f32;
            }
        }
    }
    for obj in &scene.objects {
        let parts = obj.parts();
        let reach = obj.bounding_radius();
        let lo = |v: f64| (((v - reach) / cfg.resolution).floor().max(0.0)) as usize;
        let hi = |v: f64| (((v + reach) / cfg.resolution).ceil() as usize).min(n);
        for r in lo(obj.pose.y)..hi(obj.pose.y) {
            for c in lo(obj.pose.x)..hi(obj.pose.x) {
                let p = cfg.pixel_center(r, c);
                let top = parts
                    .iter()
                    .filter_map(|part| part.top_height(p).map(|h| (h, part.color)))
                    .fold(None::<(f64, [f64; 3])>, |best, cur| match best {
                        Some(b) if b.0 >= cur.0 => Some(b),
                        _ => Some(cur),
                    });
                let Some((h, color)) = top else { continue };
                let i = hm.index(r, c);
                if (h as f32) <= hm.depth[i] {
                    continue;
                }
                hm.depth[i] = h as f32;
                for ch in 0..3 {
                    let jitter = hash_unit(scene.rng_seed, i as u64, ch as u64, 2 + obj.id as u64) * noise;
                    hm.rgb[3 * i + ch] = (color[ch] + jitter).clamp(0.0, 1.0) as f32;
                }
            }
        }
    }
    hm
}
