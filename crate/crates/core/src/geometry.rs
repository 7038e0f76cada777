//! Geometric primitives, frames and angle handling shared by every module.
//!
//! Conventions: the world frame is fixed at the start of the track. The
//! vehicle (body) frame has its origin at the rear axle, +x forward and
//! +y to the left. The heading `psi` is measured counterclockwise from
//! world +x, stored wrapped to `(-pi, pi]`.

use core::f64::consts::{PI, TAU};
use core::fmt;

use nalgebra::{Matrix3, Vector3};

#[allow(unused_imports)]
use num_traits::Float;

/// Orthonormality tolerance accepted by [`RigidTransform3::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Errors from geometric constructors and operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryError {
    /// An input coordinate or angle was NaN or infinite.
    NonFinite,
    /// The rotation matrix is not orthonormal; carries `max|R'R - I|`.
    NotOrthonormal(f64),
    /// The rotation matrix has negative determinant (a reflection).
    NotProperRotation(f64),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::NonFinite => write!(f, "non-finite input"),
            GeometryError::NotOrthonormal(d) => {
                write!(f, "rotation not orthonormal (max |R'R - I| = {d:e})")
            }
            GeometryError::NotProperRotation(det) => {
                write!(f, "rotation has det = {det}, expected +1")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// A 3D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    /// Drops the z coordinate.
    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// A 2D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Euclidean norm, i.e. the distance to the origin (rear axle).
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// Planar vehicle pose: position plus heading `psi` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose2D {
    /// Builds a pose, wrapping the heading into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            psi: wrap_radians(psi),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Proper rigid transform in 3D: `p -> R p + t`.
///
/// Construction validates `R'R = I` to [`ROTATION_TOL`] and `det R = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let gram = rotation.transpose() * rotation;
        let defect = (gram - Matrix3::identity()).abs().max();
        if defect > ROTATION_TOL {
            return Err(GeometryError::NotOrthonormal(defect));
        }
        let det = rotation.determinant();
        if det < 0.0 {
            return Err(GeometryError::NotProperRotation(det));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle` about the z axis followed by `translation`.
    pub fn from_z_rotation(angle: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = angle.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }
}

/// Wraps an angle into `(-pi, pi]`, preserving it modulo `2*pi`.
///
/// Errors on non-finite input; hot paths that already guarantee finiteness
/// can call [`wrap_radians`] directly.
pub fn wrap_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    Ok(wrap_radians(theta))
}

/// Unchecked variant of [`wrap_angle`]; the caller guarantees a finite input.
pub fn wrap_radians(theta: f64) -> f64 {
    debug_assert!(theta.is_finite());
    let mut r = theta - TAU * (theta / TAU).round();
    if r <= -PI {
        r += TAU;
    }
    // round() can leave r marginally above pi for inputs like pi + eps
    if r > PI {
        r -= TAU;
    }
    r
}

/// Transforms every point of a cloud by `tf`, preserving order.
pub fn transform_points(points: &[Point3], tf: &RigidTransform3) -> alloc::vec::Vec<Point3> {
    points.iter().map(|p| tf.apply(p)).collect()
}

/// Expresses a world-frame point in the body frame of `pose`:
/// `R(psi)^-1 (p - position)`.
pub fn world_to_body(pose: &Pose2D, p: Point2) -> Point2 {
    let (s, c) = pose.psi.sin_cos();
    let dx = p.x - pose.x;
    let dy = p.y - pose.y;
    Point2::new(c * dx + s * dy, -s * dx + c * dy)
}

/// Inverse of [`world_to_body`].
pub fn body_to_world(pose: &Pose2D, p: Point2) -> Point2 {
    let (s, c) = pose.psi.sin_cos();
    Point2::new(pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_angle_identity_and_boundaries() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_relative_eq!(wrap_angle(3.0 * PI).unwrap(), PI);
        // -pi maps to the closed end of the interval
        assert_relative_eq!(wrap_angle(-PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_angle_idempotent() {
        for i in -50..50 {
            let theta = 0.37 * i as f64;
            let w = wrap_radians(theta);
            assert!(w > -PI && w <= PI, "theta={theta} wrapped to {w}");
            assert_eq!(wrap_radians(w), w);
            // congruent modulo 2*pi
            let k = ((theta - w) / TAU).round();
            assert_relative_eq!(theta - w, k * TAU, epsilon = 1e-9);
        }
    }

    #[test]
    fn transform_identity_translation_rotation() {
        let cloud = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let id = RigidTransform3::identity();
        assert_eq!(transform_points(&cloud, &id), cloud.to_vec());

        let t = RigidTransform3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(
            transform_points(&cloud[..1], &t),
            alloc::vec![Point3::new(1.0, 0.0, 0.0)]
        );

        let r = RigidTransform3::from_z_rotation(PI / 2.0, Vector3::zeros());
        let out = transform_points(&[Point3::new(1.0, 0.0, 0.0)], &r);
        assert_relative_eq!(out[0].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[0].y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_improper_rotation() {
        let reflection = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            RigidTransform3::new(reflection, Vector3::zeros()),
            Err(GeometryError::NotProperRotation(_))
        ));
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            RigidTransform3::new(skewed, Vector3::zeros()),
            Err(GeometryError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn world_to_body_examples() {
        let p = world_to_body(&Pose2D::new(0.0, 0.0, 0.0), Point2::new(5.0, 0.0));
        assert_relative_eq!(p.x, 5.0);
        assert_relative_eq!(p.y, 0.0);

        let p = world_to_body(&Pose2D::new(0.0, 0.0, PI / 2.0), Point2::new(0.0, 5.0));
        assert_relative_eq!(p.x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);

        let p = world_to_body(&Pose2D::new(1.0, 1.0, 0.0), Point2::new(1.0, 1.0));
        assert_relative_eq!(p.x, 0.0);
        assert_relative_eq!(p.y, 0.0);
    }

    #[test]
    fn body_world_round_trip() {
        let mut seed = 0x2545f4914f6cdd1du64;
        let mut next = || {
            // xorshift; plenty for test point generation
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 40.0 - 20.0
        };
        for _ in 0..200 {
            let pose = Pose2D::new(next(), next(), next());
            let p = Point2::new(next(), next());
            let q = world_to_body(&pose, body_to_world(&pose, p));
            assert_relative_eq!(q.x, p.x, epsilon = 1e-9);
            assert_relative_eq!(q.y, p.y, epsilon = 1e-9);
        }
    }
}
