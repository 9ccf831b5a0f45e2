//! Quaternion and rotation algebra.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and parameterize rotations
//! from the earth-aligned frame {E} to the body frame {B}. The rotation
//! matrix convention is `R(q) v = q * v * q⁻¹`, so `R(q)` maps body-frame
//! vectors into {E} and `R(q)ᵀ` maps earth-frame references into {B}.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;

/// Unit quaternion, scalar first.
///
/// Operations that return a `Quat` do not renormalize unless documented;
/// integration steps renormalize explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const IDENTITY: Quat = Quat {
    w: 1.0,
    x: 0.0,
    y: 0.0,
    z: 0.0,
};

impl Default for Quat {
    fn default() -> Self {
        IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = IDENTITY;

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn from_vector(v: Vec3) -> Self {
        Quat::new(0.0, v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Hamilton product.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let (a1, b1, c1, d1) = (self.w, self.x, self.y, self.z);
        let (a2, b2, c2, d2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Quat {
            w: a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            x: a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            y: a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            z: a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        }
    }

    /// Conjugate; the group inverse for unit quaternions.
    pub fn conjugate(&self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(&self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, rhs: &Quat) -> Quat {
        Quat::new(
            self.w + rhs.w,
            self.x + rhs.x,
            self.y + rhs.y,
            self.z + rhs.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates `v` from {B} into {E}: computes the vector part of `q * v * q⁻¹`.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // q*(0,v)*q⁻¹ expanded: v + 2w (u × v) + 2 u × (u × v), u = vector part.
        let u = self.vector();
        let t = u.cross(&v);
        v + 2.0 * (self.w * t + u.cross(&t))
    }

    /// Rotates `v` from {E} into {B} (`R(q)ᵀ v`).
    pub fn rotate_inv(&self, v: Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    /// Rotation matrix `R(q)` with `R(q) v = q * v * q⁻¹`.
    pub fn to_rotation_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        )
    }

    /// Quaternion recovered from a rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(r: &Mat3) -> Quat {
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            Quat::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = axis.norm();
        if n == 0.0 {
            return IDENTITY;
        }
        let half = 0.5 * angle;
        let u = axis / n * half.sin();
        Quat::new(half.cos(), u.x, u.y, u.z)
    }

    /// Intrinsic Z-Y-X (yaw, pitch, roll) composition.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Quat {
        let qz = Quat::from_axis_angle(Vec3::z(), yaw);
        let qy = Quat::from_axis_angle(Vec3::y(), pitch);
        let qx = Quat::from_axis_angle(Vec3::x(), roll);
        qz.mul(&qy).mul(&qx)
    }

    /// Intrinsic Z-Y-X Euler angles; pitch is clamped to [-π/2, π/2].
    ///
    /// Near the pitch singularity only yaw + roll is observable; the split is
    /// fixed by `roll = 0` and `gimbal_lock` is set.
    pub fn to_euler(&self) -> EulerAngles {
        let r = self.to_rotation_matrix();
        // r31 = -sin(pitch)
        let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let pitch = sp.asin();
        if 1.0 - sp.abs() < GIMBAL_EPS {
            // r12 = -cos(p)sin(yaw-roll)-ish degenerate: recover yaw with roll = 0.
            let yaw = f64::atan2(-r[(0, 1)], r[(1, 1)]);
            EulerAngles {
                roll: 0.0,
                pitch,
                yaw,
                gimbal_lock: true,
            }
        } else {
            EulerAngles {
                roll: f64::atan2(r[(2, 1)], r[(2, 2)]),
                pitch,
                yaw: f64::atan2(r[(1, 0)], r[(0, 0)]),
                gimbal_lock: false,
            }
        }
    }

    /// Euler step `q + q̇·dt`, renormalized.
    pub fn integrate(&self, qdot: &Quat, dt: f64) -> Result<Quat, SimError> {
        let stepped = self.add(&qdot.scale(dt));
        let n = stepped.norm();
        if !stepped.is_finite() || !n.is_finite() || n == 0.0 {
            return Err(SimError::NonFiniteState { t: f64::NAN });
        }
        Ok(stepped.normalized())
    }

    /// Total rotation angle in [0, π]; insensitive to the q/-q double cover.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().clamp(0.0, 1.0).acos()
    }
}

/// Effective gimbal-lock window: |pitch| within ~1e-6 rad of π/2
/// (1 - |sin p| ≈ (π/2 - |p|)²/2).
const GIMBAL_EPS: f64 = 5e-13;

/// Z-Y-X intrinsic Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when pitch is within ~1e-6 rad of ±π/2 and roll was pinned to 0.
    pub gimbal_lock: bool,
}

/// Skew-symmetric matrix `[v]×` with `[v]× w = v × w`.
pub fn skew(v: Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Quaternion kinematics `q̇ = ½ q * (0, ω)` for a body rate ω.
pub fn quat_rate(q: &Quat, omega: Vec3) -> Quat {
    q.mul(&Quat::from_vector(omega)).scale(0.5)
}
