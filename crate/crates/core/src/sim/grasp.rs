use serde::{Deserialize, Serialize};

use super::geometry::{OrientedRect, Vec2};
use super::scene::{ObjectSpec, Scene};
use super::SimConfig;
use crate::error::{Error, Result};

/// Top-down grasp at a pixel with orientation index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraspAction {
    pub row: usize,
    pub col: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub grasped: Option<u32>,
    pub post_scene: Scene,
}

impl GraspOutcome {
    pub fn success(&self) -> bool {
        self.grasped.is_some()
    }
}

fn check_action(action: &GraspAction, cfg: &SimConfig) -> Result<()> {
    let n = cfg.image_size();
    if action.row >= n || action.col >= n || action.k >= cfg.orientations {
        return Err(Error::ActionOutOfRange { row: action.row, col: action.col, k: action.k, size: n });
    }
    Ok(())
}

/// Object under a world point. Footprints never overlap, so at most one matches.
pub fn object_at(scene: &Scene, p: Vec2) -> Option<&ObjectSpec> {
    scene.objects.iter().find(|o| o.contains(p))
}

/// Extent of `obj` along the line `p + t u`, as `(t_min, t_max)`.
pub fn caliper(obj: &ObjectSpec, p: Vec2, u: Vec2) -> Option<(f64, f64)> {
    obj.parts().iter().filter_map(|part| part.chord(p, u)).fold(None, |acc, (a, b)| match acc {
        None => Some((a, b)),
        Some((lo, hi)) => Some((lo.min(a), hi.max(b))),
    })
}

/// The two finger rectangles at full opening, centered on `p`.
pub fn finger_rects(p: Vec2, u: Vec2, cfg: &SimConfig) -> [OrientedRect; 2] {
    let g = &cfg.gripper;
    let offset = g.w_max / 2.0 + g.finger_width / 2.0;
    let half = [g.finger_width / 2.0, g.finger_length / 2.0];
    let at = |s: f64| OrientedRect { center: [p[0] + s * offset * u[0], p[1] + s * offset * u[1]], axis: u, half };
    [at(-1.0), at(1.0)]
}

/// Decides whether the grasp lifts an object.
///
/// Success requires the grasp point to lie on an object, the object's extent
/// along the closing direction through that point to be within the gripper
/// width limits, and both open fingers to clear every footprint in the scene.
pub fn execute_grasp(scene: &Scene, action: &GraspAction, cfg: &SimConfig) -> Result<GraspOutcome> {
    check_action(action, cfg)?;
    let fail = || Ok(GraspOutcome { grasped: None, post_scene: scene.clone() });
    let p = cfg.pixel_center(action.row, action.col);
    let Some(obj) = object_at(scene, p) else { return fail() };
    let u = cfg.closing_direction(action.k);
    let Some((t0, t1)) = caliper(obj, p, u) else { return fail() };
    let width = t1 - t0;
    if width > cfg.gripper.w_max || width < cfg.gripper.w_min {
        return fail();
    }
    let fingers = finger_rects(p, u, cfg);
    let blocked = scene
        .objects
        .iter()
        .flat_map(|o| o.parts())
        .any(|part| fingers.iter().any(|f| part.intersects_rect(f)));
    if blocked {
        return fail();
    }
    Ok(GraspOutcome { grasped: Some(obj.id), post_scene: scene.without(obj.id) })
}

/// Whether a pixel center lies on the target's footprint.
pub fn target_hit(scene: &Scene, row: usize, col: usize, target_id: u32, cfg: &SimConfig) -> Result<bool> {
    let target = scene.object(target_id)?;
    Ok(target.contains(cfg.pixel_center(row, col)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::AttributeLabel;
    use crate::sim::scene::{BackgroundTexture, Pose};
    use crate::sim::{SHAPE_CUBE, SHAPE_CUBOID};

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    fn boxed(id: u32, x: f64, y: f64, size: [f64; 2], yaw: f64) -> ObjectSpec {
        ObjectSpec {
            id,
            shape: if size[0] == size[1] { SHAPE_CUBE } else { SHAPE_CUBOID },
            color: [0.2, 0.2, 0.8],
            size,
            height: 0.03,
            pose: Pose { x, y, yaw },
            label: AttributeLabel::full(3, 2),
            name: None,
            attachments: vec![],
        }
    }

    fn scene(objects: Vec<ObjectSpec>) -> Scene {
        let mut s = Scene::empty(0.48, BackgroundTexture::default(), 1);
        s.objects = objects;
        s
    }

    #[test]
    fn background_grasp_fails() {
        let cfg = cfg();
        let s = scene(vec![boxed(1, 0.1, 0.1, [0.03, 0.03], 0.0)]);
        let out = execute_grasp(&s, &GraspAction { row: 80, col: 80, k: 0 }, &cfg).unwrap();
        assert_eq!(out.grasped, None);
        assert_eq!(out.post_scene, s);
    }

    #[test]
    fn long_cuboid_only_across_short_axis() {
        let cfg = cfg();
        // 12 cm along x, 3 cm along y, centered on a pixel corner grid point
        let s = scene(vec![boxed(7, 0.2425, 0.2425, [0.12, 0.03], 0.0)]);
        // k = 0 closes along rows (y): across the 3 cm side
        let ok = execute_grasp(&s, &GraspAction { row: 48, col: 48, k: 0 }, &cfg).unwrap();
        assert_eq!(ok.grasped, Some(7));
        assert!(ok.post_scene.objects.is_empty());
        // k = 3 closes along columns (x): across the 12 cm side
        let bad = execute_grasp(&s, &GraspAction { row: 48, col: 48, k: 3 }, &cfg).unwrap();
        assert_eq!(bad.grasped, None);
    }

    #[test]
    fn finger_collision_with_neighbor_fails() {
        let cfg = cfg();
        let a = boxed(1, 0.2425, 0.2425, [0.03, 0.03], 0.0);
        // neighbor 6 cm below: clear of the jaws but under the lower finger
        let b = boxed(2, 0.2425, 0.2425 + 0.06, [0.03, 0.03], 0.0);
        let s = scene(vec![a.clone(), b]);
        let action = GraspAction { row: 48, col: 48, k: 0 };
        assert!(object_at(&s, cfg.pixel_center(48, 48)).is_some());
        let (t0, t1) = caliper(&a, cfg.pixel_center(48, 48), cfg.closing_direction(0)).unwrap();
        assert!(t1 - t0 <= cfg.gripper.w_max);
        assert_eq!(execute_grasp(&s, &action, &cfg).unwrap().grasped, None);
        // closing along x misses the neighbor
        let out = execute_grasp(&s, &GraspAction { k: 3, ..action }, &cfg).unwrap();
        assert_eq!(out.grasped, Some(1));
    }

    #[test]
    fn out_of_image_action_is_an_error() {
        let cfg = cfg();
        let s = scene(vec![]);
        assert!(execute_grasp(&s, &GraspAction { row: 96, col: 0, k: 0 }, &cfg).is_err());
        assert!(execute_grasp(&s, &GraspAction { row: 0, col: 0, k: 6 }, &cfg).is_err());
    }

    #[test]
    fn target_hit_membership() {
        let cfg = cfg();
        let s = scene(vec![boxed(1, 0.1025, 0.1025, [0.03, 0.03], 0.3), boxed(2, 0.3025, 0.3025, [0.03, 0.03], 0.0)]);
        assert!(target_hit(&s, 20, 20, 1, &cfg).unwrap());
        assert!(!target_hit(&s, 60, 60, 1, &cfg).unwrap());
        assert!(target_hit(&s, 60, 60, 2, &cfg).unwrap());
        assert!(!target_hit(&s, 20, 20, 2, &cfg).unwrap());
        assert!(matches!(target_hit(&s, 0, 0, 9, &cfg), Err(Error::UnknownObject(9))));
    }
}
