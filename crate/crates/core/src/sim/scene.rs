use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalogue::{self, NovelObject};
use super::geometry::{cos_sin_deg, Part, Primitive};
use super::{canonical_rgb, DomainConfig, Range, SimConfig, SHAPE_CUBE, SHAPE_CUBOID, SHAPE_CYLINDER, SHAPE_SPHERE};
use crate::attributes::{AttributeLabel, AttributeVocabulary, COLOR_SLOT, SHAPE_SLOT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, measured from +x towards +y.
    pub yaw: f64,
}

/// Extra primitive fused to an object, in the object's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub primitive: Primitive,
    pub offset: [f64; 2],
    pub size: [f64; 2],
    pub yaw: f64,
    pub height: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    /// Shape id of the main body.
    pub shape: u32,
    pub color: [f64; 3],
    /// (length, width) in meters; round shapes use the length as diameter.
    pub size: [f64; 2],
    pub height: f64,
    pub pose: Pose,
    pub label: AttributeLabel,
    #[serde(default)]
    pub name: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<Attachment>,
}

pub fn primitive_for_shape(shape: u32) -> Primitive {
    match shape {
        SHAPE_CYLINDER => Primitive::Cylinder,
        SHAPE_SPHERE => Primitive::Sphere,
        _ => Primitive::Box,
    }
}

impl ObjectSpec {
    /// World-frame primitives making up the footprint, main body first.
    pub fn parts(&self) -> Vec<Part> {
        let (c, s) = (self.pose.yaw.cos(), self.pose.yaw.sin());
        let main = Part {
            primitive: primitive_for_shape(self.shape),
            center: [self.pose.x, self.pose.y],
            half: [self.size[0] / 2.0, self.size[1] / 2.0],
            cos: c,
            sin: s,
            height: self.height,
            color: self.color,
        };
        let mut parts = vec![main];
        for a in &self.attachments {
            let yaw = self.pose.yaw + a.yaw;
            parts.push(Part {
                primitive: a.primitive,
                center: [
                    self.pose.x + a.offset[0] * c - a.offset[1] * s,
                    self.pose.y + a.offset[0] * s + a.offset[1] * c,
                ],
                half: [a.size[0] / 2.0, a.size[1] / 2.0],
                cos: yaw.cos(),
                sin: yaw.sin(),
                height: a.height,
                color: a.color,
            });
        }
        parts
    }

    /// Radius about the pose of a circle containing the whole footprint.
    pub fn bounding_radius(&self) -> f64 {
        self.parts()
            .iter()
            .map(|p| {
                let d = (p.center[0] - self.pose.x).hypot(p.center[1] - self.pose.y);
                d + p.bounding_radius()
            })
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.parts().iter().any(|part| part.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTexture {
    pub base: [f64; 3],
    pub amplitude: f64,
    /// Value-noise cell size in pixels.
    pub cell: usize,
}

impl Default for BackgroundTexture {
    fn default() -> Self {
        Self { base: [0.5, 0.47, 0.44], amplitude: 0.04, cell: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<ObjectSpec>,
    pub workspace: f64,
    pub texture: BackgroundTexture,
    /// Seeds the per-pixel texture and color noise.
    pub rng_seed: u64,
}

impl Scene {
    pub fn empty(workspace: f64, texture: BackgroundTexture, rng_seed: u64) -> Self {
        Self { objects: Vec::new(), workspace, texture, rng_seed }
    }

    pub fn object(&self, id: u32) -> Result<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id).ok_or(Error::UnknownObject(id))
    }

    pub fn without(&self, id: u32) -> Scene {
        let mut s = self.clone();
        s.objects.retain(|o| o.id != id);
        s
    }

    /// Rotates every object about the workspace center by `deg` degrees.
    pub fn rotated(&self, deg: f64) -> Scene {
        let (c, s) = cos_sin_deg(deg);
        let mid = self.workspace / 2.0;
        let mut out = self.clone();
        for o in &mut out.objects {
            let (dx, dy) = (o.pose.x - mid, o.pose.y - mid);
            o.pose.x = mid + dx * c - dy * s;
            o.pose.y = mid + dx * s + dy * c;
            o.pose.yaw += deg.to_radians();
        }
        out
    }

    /// Whether all footprints lie inside the workspace and none overlap.
    pub fn is_valid(&self) -> bool {
        let inside = self.objects.iter().all(|o| {
            let r = o.bounding_radius();
            o.pose.x - r >= 0.0 && o.pose.y - r >= 0.0 && o.pose.x + r <= self.workspace && o.pose.y + r <= self.workspace
        });
        let disjoint = self.objects.iter().enumerate().all(|(i, a)| {
            self.objects[i + 1..].iter().all(|b| {
                let d = (a.pose.x - b.pose.x).hypot(a.pose.y - b.pose.y);
                d > a.bounding_radius() + b.bounding_radius()
            })
        });
        inside && disjoint
    }
}

/// Concrete appearance of one object before placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    pub label: AttributeLabel,
    pub rgb: [f64; 3],
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl ObjectParams {
    /// Canonical color and mid-range size for a full label.
    pub fn canonical(label: &AttributeLabel, cfg: &DomainConfig) -> Self {
        let color = label.slot(COLOR_SLOT).unwrap_or(1);
        let shape = label.slot(SHAPE_SLOT).unwrap_or(SHAPE_CUBE);
        let mid = |r: Range| 0.5 * (r[0] + r[1]);
        let (length, width, height) = match shape {
            SHAPE_CUBE => (mid(cfg.cube_side), mid(cfg.cube_side), mid(cfg.height)),
            SHAPE_CUBOID => (mid(cfg.cuboid_long), mid(cfg.cuboid_short), mid(cfg.height)),
            SHAPE_CYLINDER => (mid(cfg.round_diameter), mid(cfg.round_diameter), mid(cfg.height)),
            _ => (mid(cfg.round_diameter), mid(cfg.round_diameter), mid(cfg.round_diameter)),
        };
        Self { label: label.clone(), rgb: canonical_rgb(color), length, width, height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub objects: Vec<ObjectParams>,
    pub texture: BackgroundTexture,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Redraws colors, sizes, heights and background texture.
pub fn randomize_domain<R: Rng + ?Sized>(params: &SceneParams, cfg: &DomainConfig, rng: &mut R) -> SceneParams {
    let objects = params
        .objects
        .iter()
        .map(|p| {
            let color = p.label.slot(COLOR_SLOT).unwrap_or(1);
            let base = canonical_rgb(color);
            let mut rgb = [0.0; 3];
            for (i, v) in rgb.iter_mut().enumerate() {
                let j = if cfg.color_jitter > 0.0 { rng.random_range(-cfg.color_jitter..cfg.color_jitter) } else { 0.0 };
                *v = (base[i] + j).clamp(0.0, 1.0);
            }
            let (length, width, height) = match p.label.slot(SHAPE_SLOT).unwrap_or(SHAPE_CUBE) {
                SHAPE_CUBE => {
                    let s = uniform(rng, cfg.cube_side);
                    (s, s, uniform(rng, cfg.height))
                }
                SHAPE_CUBOID => {
                    let l = uniform(rng, cfg.cuboid_long);
                    let w = uniform(rng, cfg.cuboid_short);
                    (l, w, uniform(rng, cfg.height))
                }
                SHAPE_CYLINDER => {
                    let d = uniform(rng, cfg.round_diameter);
                    (d, d, uniform(rng, cfg.height))
                }
                _ => {
                    let d = uniform(rng, cfg.round_diameter);
                    (d, d, d)
                }
            };
            ObjectParams { label: p.label.clone(), rgb, length, width, height }
        })
        .collect();
    let b = uniform(rng, cfg.texture_base);
    let texture = BackgroundTexture {
        base: [b + uniform(rng, cfg.texture_tint), b, b + uniform(rng, cfg.texture_tint)],
        amplitude: uniform(rng, cfg.texture_amplitude),
        cell: rng.random_range(cfg.texture_cell[0]..=cfg.texture_cell[1]),
    };
    SceneParams { objects, texture }
}

/// Which object family a scene is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectPool {
    /// Primitive objects over the training color/shape pairs.
    Basic,
    /// Composite catalogue objects and held-out color/shape pairs.
    HeldOut,
}

/// Color/shape pairs available to the basic-object sampler.
pub fn training_combos(cfg: &SimConfig, vocab: &AttributeVocabulary) -> Vec<AttributeLabel> {
    let held: Vec<AttributeLabel> = cfg
        .held_out_combos
        .iter()
        .filter_map(|(c, s)| Some(AttributeLabel::full(vocab.color_id(c)?, vocab.shape_id(s)?)))
        .collect();
    let mut out = Vec::new();
    for c in 1..=vocab.colors.len() as u32 {
        for s in 1..=vocab.shapes.len() as u32 {
            let l = AttributeLabel::full(c, s);
            if !held.contains(&l) {
                out.push(l);
            }
        }
    }
    out
}

/// Salt separating the held-out generator's random stream from training.
pub const HELD_OUT_STREAM: u64 = 0x5EED_0F_0DD_0B1E;

/// Samples a scene of `count` objects with non-overlapping footprints.
pub fn sample_scene(
    seed: u64,
    count: usize,
    unique_attributes: bool,
    pool: ObjectPool,
    cfg: &SimConfig,
    vocab: &AttributeVocabulary,
) -> Result<Scene> {
    let stream = match pool {
        ObjectPool::Basic => seed,
        ObjectPool::HeldOut => seed ^ HELD_OUT_STREAM,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut objects = match pool {
        ObjectPool::Basic => basic_objects(&mut rng, count, unique_attributes, cfg, vocab)?,
        ObjectPool::HeldOut => held_out_objects(&mut rng, count, unique_attributes)?,
    };
    let texture = randomize_domain(&SceneParams { objects: vec![], texture: BackgroundTexture::default() }, &cfg.domain, &mut rng).texture;
    place(&mut objects, cfg, &mut rng)?;
    Ok(Scene { objects, workspace: cfg.workspace, texture, rng_seed: rng.random() })
}

fn basic_objects(
    rng: &mut ChaCha8Rng,
    count: usize,
    unique: bool,
    cfg: &SimConfig,
    vocab: &AttributeVocabulary,
) -> Result<Vec<ObjectSpec>> {
    if count == 0 {
        return Err(Error::Config("scene needs at least one object".into()));
    }
    let combos = training_combos(cfg, vocab);
    let labels: Vec<AttributeLabel> = if unique {
        if count > combos.len() {
            return Err(Error::NotEnoughCombinations { requested: count, available: combos.len() });
        }
        combos.choose_multiple(rng, count).cloned().collect()
    } else {
        (0..count).map(|_| combos[rng.random_range(0..combos.len())].clone()).collect()
    };
    let params = SceneParams {
        objects: labels.iter().map(|l| ObjectParams::canonical(l, &cfg.domain)).collect(),
        texture: BackgroundTexture::default(),
    };
    let drawn = randomize_domain(&params, &cfg.domain, rng);
    Ok(drawn
        .objects
        .into_iter()
        .enumerate()
        .map(|(i, p)| ObjectSpec {
            id: i as u32 + 1,
            shape: p.label.slot(SHAPE_SLOT).unwrap_or(SHAPE_CUBE),
            color: p.rgb,
            size: [p.length, p.width],
            height: p.height,
            pose: Pose { x: 0.0, y: 0.0, yaw: 0.0 },
            label: p.label,
            name: None,
            attachments: Vec::new(),
        })
        .collect())
}

fn held_out_objects(rng: &mut ChaCha8Rng, count: usize, unique: bool) -> Result<Vec<ObjectSpec>> {
    let items = catalogue::novel_objects();
    let mut chosen: Vec<&NovelObject> = Vec::new();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    for i in order {
        if chosen.len() == count {
            break;
        }
        let item = &items[i];
        if unique && chosen.iter().any(|c| c.label() == item.label()) {
            continue;
        }
        chosen.push(item);
    }
    if chosen.len() < count {
        return Err(Error::NotEnoughCombinations { requested: count, available: chosen.len() });
    }
    Ok(chosen.iter().enumerate().map(|(i, item)| item.spec(i as u32 + 1, rng)).collect())
}

/// Rejection-samples poses with disjoint bounding circles inside the margins.
pub fn place<R: Rng + ?Sized>(objects: &mut [ObjectSpec], cfg: &SimConfig, rng: &mut R) -> Result<()> {
    let radii: Vec<f64> = objects.iter().map(ObjectSpec::bounding_radius).collect();
    for restart in 0..cfg.placement_attempts {
        let mut placed: Vec<(f64, f64, f64)> = Vec::with_capacity(objects.len());
        let mut ok = true;
        for &r in &radii {
            let lo = cfg.border_margin + r;
            let hi = cfg.workspace - cfg.border_margin - r;
            if hi <= lo {
                return Err(Error::Placement { count: objects.len(), attempts: restart });
            }
            let mut found = None;
            for _ in 0..100 {
                let x = rng.random_range(lo..hi);
                let y = rng.random_range(lo..hi);
                if placed.iter().all(|&(px, py, pr)| (px - x).hypot(py - y) > pr + r) {
                    found = Some((x, y));
                    break;
                }
            }
            match found {
                Some((x, y)) => placed.push((x, y, r)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            for (o, (x, y, _)) in objects.iter_mut().zip(placed) {
                o.pose = Pose { x, y, yaw: rng.random_range(0.0..std::f64::consts::PI) };
            }
            return Ok(());
        }
    }
    Err(Error::Placement { count: objects.len(), attempts: cfg.placement_attempts })
}
