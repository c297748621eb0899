//! Small fixed-size vector/quaternion math used throughout the pipeline.
//!
//! Hand-rolled rather than pulling in a linear-algebra crate: everything here
//! is 3- or 6-dimensional, and keeping the operations local makes the
//! determinism story easy to audit.

use serde::{Deserialize, Serialize};

/// 3-vector, meters (positions/extents) or radians (axes scaled by angle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0, 0.0, 0.0]);
    pub const X: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const Y: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const Z: Vec3 = Vec3([0.0, 0.0, 1.0]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, o: &Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_xy(&self) -> f64 {
        (self.0[0] * self.0[0] + self.0[1] * self.0[1]).sqrt()
    }

    pub fn dist(&self, o: &Vec3) -> f64 {
        (*self - *o).norm()
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn normalized(&self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            Vec3::ZERO
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn min_elem(&self, o: &Vec3) -> Vec3 {
        Vec3([
            self.0[0].min(o.0[0]),
            self.0[1].min(o.0[1]),
            self.0[2].min(o.0[2]),
        ])
    }

    pub fn max_elem(&self, o: &Vec3) -> Vec3 {
        Vec3([
            self.0[0].max(o.0[0]),
            self.0[1].max(o.0[1]),
            self.0[2].max(o.0[2]),
        ])
    }

    pub fn all_positive(&self) -> bool {
        self.0.iter().all(|v| *v > 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl std::ops::Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Unit quaternion serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat(pub [f64; 4]);

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat([w, x, y, z])
    }

    pub fn w(&self) -> f64 {
        self.0[0]
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Quat {
        let a = axis.normalized();
        let half = angle_rad * 0.5;
        let s = half.sin();
        Quat([half.cos(), a.x() * s, a.y() * s, a.z() * s]).canonical()
    }

    /// Yaw-only rotation about +Z.
    pub fn from_yaw(yaw_rad: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Z, yaw_rad)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.0
            .iter()
            .zip(o.0.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    pub fn conj(&self) -> Quat {
        Quat([self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }

    /// Hamilton product `self * o`.
    pub fn mul(&self, o: &Quat) -> Quat {
        let [w1, x1, y1, z1] = self.0;
        let [w2, x2, y2, z2] = o.0;
        Quat([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ])
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // q v q* expanded via the cross-product form.
        let u = Vec3([self.0[1], self.0[2], self.0[3]]);
        let w = self.0[0];
        let uv = u.cross(v);
        let uuv = u.cross(&uv);
        *v + uv.scale(2.0 * w) + uuv.scale(2.0)
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        Quat([self.0[0] / n, self.0[1] / n, self.0[2] / n, self.0[3] / n])
    }

    /// Flip sign so that w >= 0 (ties broken by the first nonzero component).
    pub fn canonical(&self) -> Quat {
        let flip = if self.0[0] != 0.0 {
            self.0[0] < 0.0
        } else if self.0[1] != 0.0 {
            self.0[1] < 0.0
        } else if self.0[2] != 0.0 {
            self.0[2] < 0.0
        } else {
            self.0[3] < 0.0
        };
        if flip {
            Quat([-self.0[0], -self.0[1], -self.0[2], -self.0[3]])
        } else {
            *self
        }
    }

    /// Angle of the relative rotation between two unit quaternions, radians.
    pub fn angle_to(&self, o: &Quat) -> f64 {
        let d = self.dot(o).abs().min(1.0);
        2.0 * d.acos()
    }

    /// Yaw (rotation about +Z) extracted from the quaternion.
    pub fn yaw(&self) -> f64 {
        let [w, x, y, z] = self.0;
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Axis-aligned box given by min/max corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_center_half(center: Vec3, half: Vec3) -> Aabb {
        Aabb {
            min: center - half,
            max: center + half,
        }
    }

    /// Per-axis separation: negative on every axis means overlap.
    pub fn axis_separation(&self, o: &Aabb) -> [f64; 3] {
        let mut sep = [0.0; 3];
        for a in 0..3 {
            sep[a] = (self.min[a] - o.max[a]).max(o.min[a] - self.max[a]);
        }
        sep
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.axis_separation(o).iter().all(|s| *s < 0.0)
    }

    /// Euclidean surface gap; 0 when touching or overlapping.
    pub fn surface_gap(&self, o: &Aabb) -> f64 {
        let sep = self.axis_separation(o);
        let mut acc = 0.0;
        for s in sep {
            if s > 0.0 {
                acc += s * s;
            }
        }
        acc.sqrt()
    }

    pub fn overlaps_xy(&self, o: &Aabb) -> bool {
        let sep = self.axis_separation(o);
        sep[0] < 0.0 && sep[1] < 0.0
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        p.x() >= self.min.x() && p.x() <= self.max.x() && p.y() >= self.min.y() && p.y() <= self.max.y()
    }
}

/// Solve `A x = b` for small dense systems by Gaussian elimination with
/// partial pivoting. Returns None when the matrix is singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Quantize a length in meters to integer micrometers.
///
/// Positional edits go through this grid so that applying a move and its exact
/// inverse restores the original component bit-for-bit.
pub fn quantize_um(v: f64) -> i64 {
    (v * 1e6).round() as i64
}

pub fn um_to_m(um: i64) -> f64 {
    um as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quat_rotate_matches_axis_angle() {
        let q = Quat::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2);
        let v = q.rotate(&Vec3::X);
        assert!((v.x()).abs() < 1e-12);
        assert!((v.y() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quat_canonical_flips_negative_w() {
        let q = Quat::new(-0.5, 0.5, 0.5, 0.5).canonical();
        assert!(q.w() > 0.0);
    }

    #[test]
    fn solve_dense_recovers_solution() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn micrometer_grid_round_trips() {
        for v in [-0.3, 0.1, 0.123456, 2.0, -1.999999] {
            let um = quantize_um(v);
            assert_eq!(quantize_um(um_to_m(um)), um);
        }
    }

    #[test]
    fn aabb_gap_matches_analytic() {
        let a = Aabb::from_center_half(Vec3::ZERO, Vec3::new(0.5, 0.5, 0.5));
        let b = Aabb::from_center_half(Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.5));
        assert!((a.surface_gap(&b) - 1.0).abs() < 1e-12);
        assert!(!a.overlaps(&b));
    }
}
