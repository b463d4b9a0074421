//! Planar footprint geometry in workspace coordinates.
//!
//! World `x` runs along image columns and `y` along image rows, both in
//! meters from the top-left corner. Angles are measured from +x towards +y,
//! which is clockwise on screen.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    /// Rectangular footprint with a flat top.
    Box,
    /// Disk footprint with a flat top.
    Cylinder,
    /// Disk footprint with a spherical top surface.
    Sphere,
}

pub type Vec2 = [f64; 2];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn direction(angle: f64) -> Vec2 {
    [angle.cos(), angle.sin()]
}

/// `(cos, sin)` of an angle given in degrees, exact at multiples of 90°.
pub fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (1.0, 0.0)
    } else if r == 90.0 {
        (0.0, 1.0)
    } else if r == 180.0 {
        (-1.0, 0.0)
    } else if r == 270.0 {
        (0.0, -1.0)
    } else {
        let rad = r.to_radians();
        (rad.cos(), rad.sin())
    }
}

/// One primitive footprint placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Part {
    pub primitive: Primitive,
    pub center: Vec2,
    /// Half extents along the local axes; disks use `half[0]` as radius.
    pub half: Vec2,
    pub cos: f64,
    pub sin: f64,
    pub height: f64,
    pub color: [f64; 3],
}

impl Part {
    #[inline]
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [dx * self.cos + dy * self.sin, -dx * self.sin + dy * self.cos]
    }

    #[inline]
    fn dir_to_local(&self, u: Vec2) -> Vec2 {
        [u[0] * self.cos + u[1] * self.sin, -u[0] * self.sin + u[1] * self.cos]
    }

    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        match self.primitive {
            Primitive::Box => l[0].abs() <= self.half[0] && l[1].abs() <= self.half[1],
            Primitive::Cylinder | Primitive::Sphere => dot(l, l) <= self.half[0] * self.half[0],
        }
    }

    /// Height of the top surface at `p`, if `p` is on the footprint.
    pub fn top_height(&self, p: Vec2) -> Option<f64> {
        let l = self.to_local(p);
        match self.primitive {
            Primitive::Box => (l[0].abs() <= self.half[0] && l[1].abs() <= self.half[1]).then_some(self.height),
            Primitive::Cylinder => {
                (dot(l, l) <= self.half[0] * self.half[0]).then_some(self.height)
            }
            Primitive::Sphere => {
                let r = self.half[0];
                let d2 = dot(l, l);
                (d2 <= r * r).then(|| {
                    let scale = self.height / (2.0 * r);
                    scale * (r + (r * r - d2).max(0.0).sqrt())
                })
            }
        }
    }

    /// Radius of the smallest circle about `center` containing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        match self.primitive {
            Primitive::Box => self.half[0].hypot(self.half[1]),
            _ => self.half[0],
        }
    }

    /// Parameter interval `[t0, t1]` where `p + t u` is on the footprint.
    pub fn chord(&self, p: Vec2, u: Vec2) -> Option<(f64, f64)> {
        let pl = self.to_local(p);
        let ul = self.dir_to_local(u);
        match self.primitive {
            Primitive::Box => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for axis in 0..2 {
                    let h = self.half[axis];
                    if ul[axis].abs() < 1e-12 {
                        if pl[axis].abs() > h {
                            return None;
                        }
                    } else {
                        let a = (-h - pl[axis]) / ul[axis];
                        let b = (h - pl[axis]) / ul[axis];
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                (lo <= hi).then_some((lo, hi))
            }
            Primitive::Cylinder | Primitive::Sphere => {
                let r = self.half[0];
                let b = dot(pl, ul);
                let c = dot(pl, pl) - r * r;
                let disc = b * b - c;
                (disc >= 0.0).then(|| {
                    let s = disc.sqrt();
                    (-b - s, -b + s)
                })
            }
        }
    }

    /// Whether the footprint intersects (or touches) an oriented rectangle.
    pub fn intersects_rect(&self, rect: &OrientedRect) -> bool {
        match self.primitive {
            Primitive::Box => {
                let own = OrientedRect {
                    center: self.center,
                    axis: [self.cos, self.sin],
                    half: self.half,
                };
                own.overlaps(rect)
            }
            Primitive::Cylinder | Primitive::Sphere => {
                let l = rect.to_local(self.center);
                let cx = l[0].clamp(-rect.half[0], rect.half[0]);
                let cy = l[1].clamp(-rect.half[1], rect.half[1]);
                let (dx, dy) = (l[0] - cx, l[1] - cy);
                dx * dx + dy * dy <= self.half[0] * self.half[0]
            }
        }
    }
}

/// Rectangle with unit `axis` along its first half extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub axis: Vec2,
    pub half: Vec2,
}

impl OrientedRect {
    #[inline]
    fn normal(&self) -> Vec2 {
        [-self.axis[1], self.axis[0]]
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        [dot(d, self.axis), dot(d, self.normal())]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l[0].abs() <= self.half[0] && l[1].abs() <= self.half[1]
    }

    fn projected_radius(&self, axis: Vec2) -> f64 {
        self.half[0] * dot(self.axis, axis).abs() + self.half[1] * dot(self.normal(), axis).abs()
    }

    /// Separating-axis overlap test; touching counts as overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let d = [other.center[0] - self.center[0], other.center[1] - self.center[1]];
        [self.axis, self.normal(), other.axis, other.normal()].iter().all(|&axis| {
            dot(d, axis).abs() <= self.projected_radius(axis) + other.projected_radius(axis)
        })
    }
}
