//! Held-out object catalogue: composite shapes built from fused primitives
//! plus primitives over color/shape pairs the training sampler never draws.

use rand::Rng;

use super::geometry::Primitive;
use super::scene::{Attachment, ObjectSpec, Pose};
use super::{SHAPE_CUBE, SHAPE_CUBOID, SHAPE_CYLINDER, SHAPE_SPHERE};
use crate::attributes::AttributeLabel;

const RED: u32 = 1;
const GREEN: u32 = 2;
const BLUE: u32 = 3;
const YELLOW: u32 = 4;
const BLACK: u32 = 5;

#[derive(Debug, Clone)]
pub struct NovelObject {
    pub name: &'static str,
    pub color: u32,
    pub shape: u32,
    pub rgb: [f64; 3],
    pub size: [f64; 2],
    pub height: f64,
    pub attachments: Vec<Attachment>,
}

impl NovelObject {
    pub fn label(&self) -> AttributeLabel {
        AttributeLabel::full(self.color, self.shape)
    }

    pub fn is_composite(&self) -> bool {
        !self.attachments.is_empty()
    }

    /// Object instance with a small color perturbation; pose is left for placement.
    pub fn spec<R: Rng + ?Sized>(&self, id: u32, rng: &mut R) -> ObjectSpec {
        let mut color = self.rgb;
        for c in &mut color {
            *c = (*c + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0);
        }
        let mut attachments = self.attachments.clone();
        for a in attachments.iter_mut().filter(|a| a.color == self.rgb) {
            a.color = color;
        }
        ObjectSpec {
            id,
            shape: self.shape,
            color,
            size: self.size,
            height: self.height,
            pose: Pose { x: 0.0, y: 0.0, yaw: 0.0 },
            label: self.label(),
            name: None,
            attachments,
        }
    }
}

/// Footprint scale applied to every catalogue length in the table below.
const SCALE: f64 = 1.15;

fn scaled(v: [f64; 2]) -> [f64; 2] {
    [v[0] * SCALE, v[1] * SCALE]
}

fn att(primitive: Primitive, offset: [f64; 2], size: [f64; 2], yaw_deg: f64, height: f64, color: [f64; 3]) -> Attachment {
    Attachment { primitive, offset: scaled(offset), size: scaled(size), yaw: yaw_deg.to_radians(), height, color }
}

fn obj(name: &'static str, color: u32, shape: u32, rgb: [f64; 3], size: [f64; 2], height: f64, attachments: Vec<Attachment>) -> NovelObject {
    NovelObject { name, color, shape, rgb, size: scaled(size), height, attachments }
}

/// The twenty held-out objects.
pub fn novel_objects() -> Vec<NovelObject> {
    use Primitive::{Box as B, Cylinder as C, Sphere as S};
    let stem = [0.30, 0.55, 0.15];
    let dark = [0.12, 0.1, 0.08];
    vec![
        obj("apple", RED, SHAPE_SPHERE, [0.78, 0.12, 0.15], [0.05, 0.05], 0.05, vec![att(C, [0.0, 0.0], [0.012, 0.012], 0.0, 0.055, stem)]),
        obj("lemon", YELLOW, SHAPE_SPHERE, [0.93, 0.88, 0.25], [0.042, 0.042], 0.042, vec![
            att(S, [0.022, 0.0], [0.018, 0.018], 0.0, 0.018, [0.93, 0.88, 0.25]),
        ]),
        obj("tennisball", GREEN, SHAPE_SPHERE, [0.35, 0.75, 0.20], [0.045, 0.045], 0.045, vec![]),
        obj("banana", YELLOW, SHAPE_CUBOID, [0.95, 0.85, 0.20], [0.045, 0.022], 0.025, vec![
            att(B, [0.032, 0.006], [0.03, 0.018], 25.0, 0.024, [0.95, 0.85, 0.20]),
        ]),
        obj("sugarbox", YELLOW, SHAPE_CUBOID, [0.88, 0.80, 0.25], [0.06, 0.035], 0.05, vec![att(B, [0.0, 0.012], [0.06, 0.008], 0.0, 0.051, [0.8, 0.15, 0.1])]),
        obj("mustard", YELLOW, SHAPE_CYLINDER, [0.92, 0.78, 0.10], [0.045, 0.045], 0.05, vec![att(C, [0.0, 0.0], [0.015, 0.015], 0.0, 0.056, [0.85, 0.2, 0.1])]),
        obj("fishcan", BLUE, SHAPE_CYLINDER, [0.20, 0.30, 0.75], [0.052, 0.052], 0.03, vec![att(B, [0.03, 0.0], [0.014, 0.012], 0.0, 0.028, [0.9, 0.85, 0.2])]),
        obj("meatcan", BLUE, SHAPE_CUBOID, [0.18, 0.22, 0.70], [0.055, 0.035], 0.035, vec![att(B, [0.0, 0.0], [0.03, 0.02], 0.0, 0.037, [0.9, 0.8, 0.2])]),
        obj("block", BLUE, SHAPE_CUBE, [0.10, 0.35, 0.90], [0.04, 0.04], 0.04, vec![]),
        obj("dice", BLACK, SHAPE_CUBE, [0.15, 0.12, 0.12], [0.035, 0.035], 0.035, vec![
            att(C, [0.0, 0.0], [0.008, 0.008], 0.0, 0.037, [0.9, 0.9, 0.2]),
        ]),
        obj("marker", BLACK, SHAPE_CUBOID, [0.08, 0.08, 0.10], [0.06, 0.02], 0.02, vec![att(B, [0.036, 0.0], [0.014, 0.02], 0.0, 0.022, [0.2, 0.3, 0.85])]),
        obj("eraser", GREEN, SHAPE_CUBOID, [0.20, 0.60, 0.30], [0.05, 0.026], 0.02, vec![att(B, [0.0, 0.0], [0.016, 0.027], 0.0, 0.022, [0.2, 0.3, 0.85])]),
        obj("sponge", YELLOW, SHAPE_CUBOID, [0.90, 0.85, 0.30], [0.06, 0.04], 0.02, vec![att(B, [0.0, -0.012], [0.06, 0.014], 0.0, 0.03, [0.15, 0.55, 0.2])]),
        obj("mug", RED, SHAPE_CYLINDER, [0.80, 0.20, 0.20], [0.048, 0.048], 0.05, vec![att(B, [0.03, 0.0], [0.016, 0.008], 0.0, 0.04, [0.80, 0.20, 0.20])]),
        obj("cup", GREEN, SHAPE_CYLINDER, [0.25, 0.70, 0.25], [0.045, 0.045], 0.045, vec![att(C, [0.008, 0.0], [0.01, 0.01], 0.0, 0.06, [0.9, 0.9, 0.25])]),
        obj("roller", RED, SHAPE_CUBOID, [0.85, 0.10, 0.20], [0.055, 0.025], 0.025, vec![att(B, [0.035, 0.0], [0.02, 0.008], 0.0, 0.015, dark)]),
        obj("softball", YELLOW, SHAPE_SPHERE, [0.85, 0.90, 0.30], [0.052, 0.052], 0.052, vec![att(B, [0.0, 0.0], [0.03, 0.004], 30.0, 0.054, [0.85, 0.15, 0.1])]),
        obj("plum", BLUE, SHAPE_SPHERE, [0.30, 0.20, 0.70], [0.04, 0.04], 0.04, vec![att(C, [0.0, 0.0], [0.008, 0.008], 0.0, 0.045, stem)]),
        obj("pear", GREEN, SHAPE_SPHERE, [0.45, 0.70, 0.20], [0.045, 0.045], 0.045, vec![att(S, [0.026, 0.0], [0.028, 0.028], 0.0, 0.028, [0.45, 0.70, 0.20])]),
        obj("brick", RED, SHAPE_CUBE, [0.75, 0.25, 0.15], [0.045, 0.045], 0.035, vec![att(B, [0.0, 0.018], [0.045, 0.008], 0.0, 0.036, dark)]),
    ]
}

pub fn by_name(name: &str) -> Option<NovelObject> {
    novel_objects().into_iter().find(|o| o.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::canonical_rgb;
    use rand::SeedableRng;

    /// Fraction of the footprint whose visible (topmost) part carries the main color.
    fn dominant_share(o: &NovelObject) -> f64 {
        let spec = ObjectSpec { pose: Pose { x: 0.0, y: 0.0, yaw: 0.0 }, ..o.spec(1, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)) };
        let parts = spec.parts();
        let (mut total, mut main) = (0usize, 0usize);
        let step = 0.0005;
        let n = (0.1 / step) as i64;
        for i in -n..=n {
            for j in -n..=n {
                let p = [i as f64 * step, j as f64 * step];
                let top = parts
                    .iter()
                    .filter_map(|part| part.top_height(p).map(|h| (h, part.color)))
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((_, c)) = top {
                    total += 1;
                    if c == spec.color {
                        main += 1;
                    }
                }
            }
        }
        main as f64 / total as f64
    }

    #[test]
    fn composites_fuse_exactly_two_primitives() {
        for o in novel_objects().iter().filter(|o| o.is_composite()) {
            assert_eq!(o.attachments.len(), 1, "{}", o.name);
        }
    }

    #[test]
    fn twenty_uniquely_named_objects() {
        let items = novel_objects();
        assert_eq!(items.len(), 20);
        let mut names: Vec<_> = items.iter().map(|o| o.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 20);
    }

    #[test]
    fn dominant_color_covers_sixty_percent() {
        for o in novel_objects().iter().filter(|o| o.is_composite()) {
            let share = dominant_share(o);
            assert!(share >= 0.6, "{} dominant share {share}", o.name);
        }
    }

    #[test]
    fn base_color_nearest_to_labeled_canonical() {
        for o in novel_objects() {
            let dist = |c: u32| {
                let b = canonical_rgb(c);
                (0..3).map(|i| (o.rgb[i] - b[i]).powi(2)).sum::<f64>()
            };
            let nearest = (1..=5).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
            assert_eq!(nearest, o.color, "{}", o.name);
        }
    }

    #[test]
    fn footprints_fit_the_gripper_somewhere() {
        for o in novel_objects() {
            let spec = o.spec(1, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
            assert!(spec.bounding_radius() < 0.06, "{} too large", o.name);
        }
    }
}
