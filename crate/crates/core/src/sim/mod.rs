//! Procedural top-down grasping world.

pub mod catalogue;
pub mod geometry;
pub mod grasp;
pub mod io;
pub mod render;
pub mod scene;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grasp::{execute_grasp, target_hit, GraspAction, GraspOutcome};
pub use render::{background_mask, render, Heightmap, Mask};
pub use scene::{randomize_domain, sample_scene, BackgroundTexture, ObjectParams, ObjectPool, ObjectSpec, Pose, Scene, SceneParams};

pub const SHAPE_CUBE: u32 = 1;
pub const SHAPE_CUBOID: u32 = 2;
pub const SHAPE_CYLINDER: u32 = 3;
pub const SHAPE_SPHERE: u32 = 4;

/// Canonical RGB for color ids 1..=5 (red, green, blue, yellow, black).
pub const CANONICAL_RGB: [[f64; 3]; 5] = [
    [0.85, 0.15, 0.12],
    [0.15, 0.65, 0.20],
    [0.15, 0.25, 0.85],
    [0.90, 0.82, 0.15],
    [0.10, 0.10, 0.10],
];

pub fn canonical_rgb(color: u32) -> [f64; 3] {
    CANONICAL_RGB[(color as usize).clamp(1, CANONICAL_RGB.len()) - 1]
}

/// Smallest pairwise Euclidean distance between canonical colors.
pub fn min_color_distance() -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in CANONICAL_RGB.iter().enumerate() {
        for b in &CANONICAL_RGB[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperConfig {
    pub w_min: f64,
    pub w_max: f64,
    /// Finger thickness along the closing direction.
    pub finger_width: f64,
    /// Finger extent across the closing direction.
    pub finger_length: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self { w_min: 0.0, w_max: 0.08, finger_width: 0.01, finger_length: 0.02 }
    }
}

pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainConfig {
    /// Componentwise RGB jitter bound around the canonical color.
    pub color_jitter: f64,
    pub cube_side: Range,
    pub cuboid_long: Range,
    pub cuboid_short: Range,
    /// Diameter of cylinders and spheres.
    pub round_diameter: Range,
    /// Height of boxes and cylinders; spheres are as tall as they are wide.
    pub height: Range,
    pub texture_base: Range,
    /// Red/blue offset from the gray texture base.
    pub texture_tint: Range,
    pub texture_amplitude: Range,
    pub texture_cell: [usize; 2],
    /// Per-pixel RGB perturbation amplitude.
    pub pixel_noise: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            color_jitter: 0.08,
            cube_side: [0.04, 0.055],
            cuboid_long: [0.05, 0.06],
            cuboid_short: [0.025, 0.035],
            round_diameter: [0.04, 0.055],
            height: [0.02, 0.05],
            texture_base: [0.35, 0.6],
            texture_tint: [-0.04, 0.04],
            texture_amplitude: [0.02, 0.08],
            texture_cell: [4, 16],
            pixel_noise: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Side of the square workspace in meters.
    pub workspace: f64,
    /// Meters per pixel.
    pub resolution: f64,
    pub orientations: usize,
    pub gripper: GripperConfig,
    /// Depth threshold separating background from objects.
    pub bg_threshold: f64,
    pub domain: DomainConfig,
    /// Clearance kept between object footprints and the workspace border.
    pub border_margin: f64,
    pub placement_attempts: usize,
    /// Color/shape pairs never produced by the basic-object sampler.
    pub held_out_combos: Vec<(String, String)>,
    /// Object count range for training scenes.
    pub train_objects: [usize; 2],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workspace: 0.48,
            resolution: 0.005,
            orientations: 6,
            gripper: GripperConfig::default(),
            bg_threshold: 0.002,
            domain: DomainConfig::default(),
            border_margin: 0.01,
            placement_attempts: 2000,
            held_out_combos: vec![
                ("yellow".into(), "cylinder".into()),
                ("blue".into(), "cube".into()),
                ("green".into(), "sphere".into()),
                ("black".into(), "cuboid".into()),
            ],
            train_objects: [3, 6],
        }
    }
}

impl SimConfig {
    /// Image side in pixels.
    pub fn image_size(&self) -> usize {
        (self.workspace / self.resolution).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.bg_threshold <= 0.0 {
            return bad("bg_threshold must be positive");
        }
        if self.orientations == 0 {
            return bad("orientations must be positive");
        }
        if (self.image_size() as f64 * self.resolution - self.workspace).abs() > 1e-9 {
            return bad("workspace must be a whole number of pixels");
        }
        if self.gripper.w_max <= self.gripper.w_min || self.gripper.w_min < 0.0 {
            return bad("gripper widths must satisfy 0 <= w_min < w_max");
        }
        // jitter vector length must stay under half the closest canonical pair
        if self.domain.color_jitter * 3f64.sqrt() >= 0.5 * min_color_distance() {
            return bad("color_jitter too large to keep jittered colors nearest their canonical color");
        }
        let d = &self.domain;
        for (name, r) in [
            ("cube_side", d.cube_side),
            ("cuboid_long", d.cuboid_long),
            ("cuboid_short", d.cuboid_short),
            ("round_diameter", d.round_diameter),
            ("height", d.height),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} must be a positive, ordered range")));
            }
        }
        if self.train_objects[0] == 0 || self.train_objects[0] > self.train_objects[1] {
            return bad("train_objects must be a positive, ordered range");
        }
        Ok(())
    }

    /// Pixel-center coordinates in meters.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(col as f64 + 0.5) * self.resolution, (row as f64 + 0.5) * self.resolution]
    }

    /// Pixel containing a world point, if inside the workspace.
    pub fn world_to_pixel(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let n = self.image_size() as f64;
        let c = (p[0] / self.resolution).floor();
        let r = (p[1] / self.resolution).floor();
        (c >= 0.0 && r >= 0.0 && c < n && r < n).then_some((r as usize, c as usize))
    }

    /// Closing direction of the gripper for orientation index `k`.
    pub fn closing_direction(&self, k: usize) -> [f64; 2] {
        let (c, s) = geometry::cos_sin_deg(self.orientation_deg(k) + 90.0);
        [c, s]
    }

    pub fn orientation_deg(&self, k: usize) -> f64 {
        k as f64 * 180.0 / self.orientations as f64
    }
}
