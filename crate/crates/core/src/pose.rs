//! Rigid transforms and the twist used for pose increments.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::geometry::Point3;

/// Pose increment `(ω_x, ω_y, ω_z, v_x, v_y, v_z)`: rotation in radians first,
/// then translation in meters.
pub type Twist = Vector6<f64>;

/// A rigid transform mapping sensor-frame points into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Renormalizes the rotation: chained compositions (constant-velocity
    /// prediction in particular) otherwise let roundoff grow geometrically.
    pub fn new(mut rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        rotation.renormalize_fast();
        Self {
            rotation,
            translation,
        }
    }

    /// Planar pose at height `z` with heading `yaw`.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            Vector3::new(x, y, z),
        )
    }

    /// From TUM-ordered quaternion components; the quaternion is renormalized.
    pub fn from_parts(t: [f64; 3], q_xyzw: [f64; 4]) -> Self {
        let q = Quaternion::new(q_xyzw[3], q_xyzw[0], q_xyzw[1], q_xyzw[2]);
        Self::new(UnitQuaternion::from_quaternion(q), Vector3::new(t[0], t[1], t[2]))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(r, -(r * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Left-multiplicative update `Exp(δ)·T` where `Exp(δ)` rotates by `ω` and then
    /// translates by `v`.
    pub fn left_update(&self, delta: &Twist) -> Self {
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let v = Vector3::new(delta[3], delta[4], delta[5]);
        let dr = UnitQuaternion::from_scaled_axis(omega);
        Self::new(dr * self.rotation, dr * self.translation + v)
    }

    pub fn yaw(&self) -> f64 {
        self.rotation.euler_angles().2
    }

    /// Geodesic rotation angle between two poses, radians.
    pub fn rotation_angle_to(&self, other: &PoseSE3) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.quaternion().coords.iter().all(|v| v.is_finite())
    }
}

/// Skew-symmetric cross-product matrix.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
