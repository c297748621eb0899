//! Collision primitives: spheres and yaw-aligned boxes.
//!
//! Boxes are oriented only about +Z (yaw); the separating-axis test then
//! needs just five axes. Everything returns deterministic, symmetric
//! contacts.

use dexgen_core::math::{Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { half: Vec3 },
    Sphere { radius: f64 },
}

impl Shape {
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Box { half } => half.norm(),
            Shape::Sphere { radius } => *radius,
        }
    }

    pub fn half_extents(&self) -> Vec3 {
        match self {
            Shape::Box { half } => *half,
            Shape::Sphere { radius } => Vec3::new(*radius, *radius, *radius),
        }
    }
}

/// A positioned collider: yaw is extracted from the full orientation.
#[derive(Debug, Clone, Copy)]
pub struct Collider {
    pub center: Vec3,
    pub yaw: f64,
    pub shape: Shape,
}

impl Collider {
    pub fn new(center: Vec3, q: &Quat, shape: Shape) -> Collider {
        Collider {
            center,
            yaw: q.yaw(),
            shape,
        }
    }

    pub fn aabb_bottom(&self) -> f64 {
        self.center.z() - self.shape.half_extents().z()
    }

    pub fn aabb_top(&self) -> f64 {
        self.center.z() + self.shape.half_extents().z()
    }
}

/// Contact between two colliders: `normal` points from `a` into `b`, `depth`
/// is the penetration (> 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub depth: f64,
    pub normal: Vec3,
    pub point: Vec3,
}

pub fn sphere_sphere(ca: &Vec3, ra: f64, cb: &Vec3, rb: f64) -> Option<ContactPoint> {
    let d = *cb - *ca;
    let dist = d.norm();
    let depth = ra + rb - dist;
    if depth <= 0.0 {
        return None;
    }
    let normal = if dist > 1e-12 {
        d * (1.0 / dist)
    } else {
        Vec3::Z
    };
    Some(ContactPoint {
        depth,
        normal,
        point: *ca + normal * ra,
    })
}

/// Closest point on a yaw-rotated box to a sphere center.
pub fn sphere_box(center: &Vec3, radius: f64, b: &Collider) -> Option<ContactPoint> {
    let half = match b.shape {
        Shape::Box { half } => half,
        Shape::Sphere { radius: rb } => return sphere_sphere(center, radius, &b.center, rb),
    };
    // Into the box's yaw frame.
    let rel = *center - b.center;
    let cos = b.yaw.cos();
    let sin = b.yaw.sin();
    let local = Vec3::new(
        cos * rel.x() + sin * rel.y(),
        -sin * rel.x() + cos * rel.y(),
        rel.z(),
    );
    let clamped = Vec3::new(
        local.x().clamp(-half.x(), half.x()),
        local.y().clamp(-half.y(), half.y()),
        local.z().clamp(-half.z(), half.z()),
    );
    let delta = local - clamped;
    let dist = delta.norm();
    if dist > 1e-12 {
        let depth = radius - dist;
        if depth <= 0.0 {
            return None;
        }
        let normal_local = delta * (-1.0 / dist);
        let normal = Vec3::new(
            cos * normal_local.x() - sin * normal_local.y(),
            sin * normal_local.x() + cos * normal_local.y(),
            normal_local.z(),
        );
        let point_local = clamped;
        let point = b.center
            + Vec3::new(
                cos * point_local.x() - sin * point_local.y(),
                sin * point_local.x() + cos * point_local.y(),
                point_local.z(),
            );
        Some(ContactPoint {
            depth,
            normal,
            point,
        })
    } else {
        // Center inside the box: push out along the shallowest face.
        let mut best_axis = 0;
        let mut best_pen = f64::MAX;
        let mut sign = 1.0;
        for axis in 0..3 {
            let pen_pos = half[axis] - local[axis];
            let pen_neg = half[axis] + local[axis];
            if pen_pos < best_pen {
                best_pen = pen_pos;
                best_axis = axis;
                sign = -1.0;
            }
            if pen_neg < best_pen {
                best_pen = pen_neg;
                best_axis = axis;
                sign = 1.0;
            }
        }
        let mut normal_local = Vec3::ZERO;
        normal_local[best_axis] = sign;
        let normal = Vec3::new(
            cos * normal_local.x() - sin * normal_local.y(),
            sin * normal_local.x() + cos * normal_local.y(),
            normal_local.z(),
        );
        Some(ContactPoint {
            depth: best_pen + radius,
            normal,
            point: *center,
        })
    }
}

/// Separating-axis test for two yaw-aligned boxes: both boxes' in-plane axes
/// plus Z. Returns the minimum-overlap contact when intersecting.
pub fn box_box(a: &Collider, b: &Collider) -> Option<ContactPoint> {
    let (ha, hb) = match (a.shape, b.shape) {
        (Shape::Box { half: ha }, Shape::Box { half: hb }) => (ha, hb),
        (Shape::Sphere { radius }, _) => {
            return sphere_box(&a.center, radius, b);
        }
        (_, Shape::Sphere { radius }) => {
            return sphere_box(&b.center, radius, a).map(|c| ContactPoint {
                depth: c.depth,
                normal: c.normal * -1.0,
                point: c.point,
            });
        }
    };

    let axes_a = yaw_axes(a.yaw);
    let axes_b = yaw_axes(b.yaw);
    let d = b.center - a.center;

    // Candidate axes: a.x, a.y, b.x, b.y, z.
    let candidates = [axes_a.0, axes_a.1, axes_b.0, axes_b.1, Vec3::Z];
    let mut min_overlap = f64::MAX;
    let mut min_axis = Vec3::Z;
    for axis in candidates {
        let ra = project_radius(&ha, &axes_a, axis);
        let rb = project_radius(&hb, &axes_b, axis);
        let dist = d.dot(&axis);
        let overlap = ra + rb - dist.abs();
        if overlap <= 0.0 {
            return None;
        }
        if overlap < min_overlap {
            min_overlap = overlap;
            min_axis = if dist >= 0.0 { axis } else { axis * -1.0 };
        }
    }
    Some(ContactPoint {
        depth: min_overlap,
        normal: min_axis,
        point: a.center + d * 0.5,
    })
}

fn yaw_axes(yaw: f64) -> (Vec3, Vec3) {
    let (s, c) = yaw.sin_cos();
    (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
}

fn project_radius(half: &Vec3, axes: &(Vec3, Vec3), onto: Vec3) -> f64 {
    half.x() * axes.0.dot(&onto).abs()
        + half.y() * axes.1.dot(&onto).abs()
        + half.z() * Vec3::Z.dot(&onto).abs()
}

pub fn collide(a: &Collider, b: &Collider) -> Option<ContactPoint> {
    match (a.shape, b.shape) {
        (Shape::Sphere { radius: ra }, Shape::Sphere { radius: rb }) => {
            sphere_sphere(&a.center, ra, &b.center, rb)
        }
        (Shape::Sphere { radius }, Shape::Box { .. }) => sphere_box(&a.center, radius, b),
        (Shape::Box { .. }, Shape::Sphere { radius }) => {
            sphere_box(&b.center, radius, a).map(|c| ContactPoint {
                depth: c.depth,
                normal: c.normal * -1.0,
                point: c.point,
            })
        }
        (Shape::Box { .. }, Shape::Box { .. }) => box_box(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_boxes_do_not_contact() {
        let a = Collider {
            center: Vec3::ZERO,
            yaw: 0.0,
            shape: Shape::Box {
                half: Vec3::new(0.5, 0.5, 0.5),
            },
        };
        let b = Collider {
            center: Vec3::new(3.0, 0.0, 0.0),
            ..a
        };
        assert!(box_box(&a, &b).is_none());
    }

    #[test]
    fn sphere_pair_depth_is_analytic() {
        let c = sphere_sphere(&Vec3::ZERO, 0.1, &Vec3::new(0.15, 0.0, 0.0), 0.1).unwrap();
        assert!((c.depth - 0.05).abs() < 1e-12);
        assert!((c.normal - Vec3::X).norm() < 1e-12);
    }

    #[test]
    fn contact_is_symmetric_under_swap() {
        let a = Collider {
            center: Vec3::ZERO,
            yaw: 0.3,
            shape: Shape::Box {
                half: Vec3::new(0.3, 0.2, 0.1),
            },
        };
        let b = Collider {
            center: Vec3::new(0.35, 0.1, 0.05),
            yaw: -0.2,
            shape: Shape::Box {
                half: Vec3::new(0.2, 0.2, 0.2),
            },
        };
        let ab = box_box(&a, &b).unwrap();
        let ba = box_box(&b, &a).unwrap();
        assert!((ab.depth - ba.depth).abs() < 1e-12);
        assert!((ab.normal + ba.normal).norm() < 1e-12);
    }

    #[test]
    fn sphere_box_face_contact() {
        let b = Collider {
            center: Vec3::ZERO,
            yaw: 0.0,
            shape: Shape::Box {
                half: Vec3::new(0.5, 0.5, 0.5),
            },
        };
        let c = sphere_box(&Vec3::new(0.0, 0.0, 0.55), 0.1, &b).unwrap();
        assert!((c.depth - 0.05).abs() < 1e-12);
        assert!((c.normal - (Vec3::Z * -1.0)).norm() < 1e-12);
    }

    #[test]
    fn rotated_box_respects_yaw() {
        // Box rotated 45 degrees: a sphere on the diagonal is closer.
        let b = Collider {
            center: Vec3::ZERO,
            yaw: std::f64::consts::FRAC_PI_4,
            shape: Shape::Box {
                half: Vec3::new(0.4, 0.1, 0.1),
            },
        };
        let along_rot_x = Vec3::new(0.3, 0.3, 0.0);
        assert!(sphere_box(&along_rot_x, 0.03, &b).is_some());
        let along_world_x = Vec3::new(0.42, 0.0, 0.0);
        assert!(sphere_box(&along_world_x, 0.03, &b).is_none());
    }
}
