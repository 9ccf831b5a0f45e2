//! System and measurement models for the gyro/accelerometer/magnetometer
//! estimation problem, the noise configuration, and the left/right invariant
//! output-error maps together with the group actions they are invariant under.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::so3::{Mat6, Quat, Vec3, Vec6};

/// Filter state: attitude {E}→{B} plus 3-axis gyro bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttState {
    pub q: Quat,
    pub gyro_bias: Vec3,
}

impl AttState {
    pub fn identity() -> Self {
        AttState {
            q: Quat::IDENTITY,
            gyro_bias: Vec3::zeros(),
        }
    }

    pub fn new(q: Quat, gyro_bias: Vec3) -> Self {
        AttState { q, gyro_bias }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.gyro_bias.iter().all(|v| v.is_finite())
    }
}

/// One timestamped gyro/accelerometer/magnetometer record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Time in seconds; strictly increasing within a log.
    pub t: f64,
    /// Gyro rate, rad/s, body frame.
    pub gyro: Vec3,
    /// Accelerometer, m/s², body frame.
    pub accel: Vec3,
    /// Magnetometer, normalized flux, body frame.
    pub mag: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vec3, accel: Vec3, mag: Vec3) -> Self {
        ImuSample {
            t,
            gyro,
            accel,
            mag,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.gyro.iter().all(|v| v.is_finite())
            && self.accel.iter().all(|v| v.is_finite())
            && self.mag.iter().all(|v| v.is_finite())
    }
}

/// Noise and reference configuration shared by the simulator, the gain
/// synthesis and every filter.
///
/// `process_cov` is E(wwᵀ) for w = (w_ωm, w_ωb); `measurement_cov` is E(ννᵀ)
/// for ν = (ν_a, ν_b). Immutable after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub process_cov: Mat6,
    pub measurement_cov: Mat6,
    /// Gravity reference in {E}, m/s².
    pub gravity_ref: Vec3,
    /// Magnetic reference in {E}, normalized flux.
    pub mag_ref: Vec3,
    /// Nominal sample step, s.
    pub dt: f64,
}

impl Default for NoiseConfig {
    /// Q = 0.1·I₆, R = diag(0.3·I₃, 0.5·I₃), g_e = (0,0,9.81), b_e = (1,0,0),
    /// dt = 0.005 s (200 Hz).
    fn default() -> Self {
        let mut r = Mat6::identity() * 0.3;
        for i in 3..6 {
            r[(i, i)] = 0.5;
        }
        NoiseConfig {
            process_cov: Mat6::identity() * 0.1,
            measurement_cov: r,
            gravity_ref: Vec3::new(0.0, 0.0, 9.81),
            mag_ref: Vec3::new(1.0, 0.0, 0.0),
            dt: 0.005,
        }
    }
}

/// Eigenvalue slack when checking positive semi-definiteness.
pub const PSD_TOL: f64 = 1e-12;

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(ModelError::InvalidStep(self.dt));
        }
        if self.process_cov.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("process covariance"));
        }
        if self.measurement_cov.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("measurement covariance"));
        }
        check_symmetric_psd(&self.process_cov, PSD_TOL)
            .map_err(ModelError::InvalidProcessCovariance)?;
        check_symmetric_psd(&self.measurement_cov, PSD_TOL)
            .map_err(ModelError::InvalidMeasurementCovariance)?;
        if min_eigenvalue(&self.measurement_cov) <= 0.0 {
            return Err(ModelError::InvalidMeasurementCovariance(
                "R has a non-positive eigenvalue".into(),
            ));
        }
        if self.gravity_ref.norm() == 0.0 {
            return Err(ModelError::ZeroReference { name: "g_e" });
        }
        if self.mag_ref.norm() == 0.0 {
            return Err(ModelError::ZeroReference { name: "b_e" });
        }
        Ok(())
    }

    pub fn gyro_noise_cov(&self) -> nalgebra::Matrix3<f64> {
        self.process_cov.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn bias_walk_cov(&self) -> nalgebra::Matrix3<f64> {
        self.process_cov.fixed_view::<3, 3>(3, 3).into_owned()
    }

    pub fn accel_noise_cov(&self) -> nalgebra::Matrix3<f64> {
        self.measurement_cov.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn mag_noise_cov(&self) -> nalgebra::Matrix3<f64> {
        self.measurement_cov.fixed_view::<3, 3>(3, 3).into_owned()
    }
}

fn min_eigenvalue(m: &Mat6) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

fn check_symmetric_psd(m: &Mat6, tol: f64) -> Result<(), String> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-9 * (1.0 + m.norm()) {
        return Err(format!("asymmetry norm {asym:.3e}"));
    }
    let min = min_eigenvalue(m);
    if min < -tol {
        return Err(format!("minimum eigenvalue {min:.3e}"));
    }
    Ok(())
}

/// Stacked cross-product output error: gravity block and magnetometer block.
///
/// The canonical component order throughout the crate is `ŷ × y`
/// (predicted × measured); gains are produced with the matching sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputError {
    pub grav: Vec3,
    pub mag: Vec3,
}

impl OutputError {
    pub fn zeros() -> Self {
        OutputError {
            grav: Vec3::zeros(),
            mag: Vec3::zeros(),
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(
            self.grav.x,
            self.grav.y,
            self.grav.z,
            self.mag.x,
            self.mag.y,
            self.mag.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

/// Group element of SU(2) × ℝ³ acting on states, inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub q0: Quat,
    pub bias0: Vec3,
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement {
            q0: Quat::IDENTITY,
            bias0: Vec3::zeros(),
        }
    }

    /// Composition for the left action family: `(q₀, ω₀) ∘ (q₁, ω₁)`.
    pub fn compose_left(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            q0: self.q0.mul(&other.q0),
            bias0: other.bias0 + self.bias0,
        }
    }

    /// Composition for the right action family, chosen so that
    /// `apply_right(g1, apply_right(g2, ·)) = apply_right(g1 ∘ g2, ·)`.
    pub fn compose_right(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            q0: other.q0.mul(&self.q0),
            bias0: self.q0.rotate_inv(other.bias0) + self.bias0,
        }
    }
}

/// Predicted accelerometer and magnetometer directions for an attitude
/// estimate: `ŷ_a = -R̂ᵀ g_e`, `ŷ_b = R̂ᵀ b_e`.
pub fn predict_measurements(q_hat: &Quat, cfg: &NoiseConfig) -> (Vec3, Vec3) {
    (
        -q_hat.rotate_inv(cfg.gravity_ref),
        q_hat.rotate_inv(cfg.mag_ref),
    )
}

/// Left-invariant output error, body frame: `(ŷ_a × y_a, ŷ_b × y_b)`.
pub fn output_error_left(y: &ImuSample, y_hat: (Vec3, Vec3)) -> OutputError {
    OutputError {
        grav: y_hat.0.cross(&y.accel),
        mag: y_hat.1.cross(&y.mag),
    }
}

/// Right-invariant output error, earth frame:
/// `(R̂(ŷ_a × y_a), R̂(ŷ_b × y_b))`.
pub fn output_error_right(q_hat: &Quat, y: &ImuSample, y_hat: (Vec3, Vec3)) -> OutputError {
    OutputError {
        grav: q_hat.rotate(y_hat.0.cross(&y.accel)),
        mag: q_hat.rotate(y_hat.1.cross(&y.mag)),
    }
}

/// Full system tuple moved by a group action.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTuple {
    pub state: AttState,
    pub input: Vec3,
    pub cfg: NoiseConfig,
    pub sample: ImuSample,
}

/// Left action: states are left-multiplied, the gyro input and references are
/// transformed, measurements are untouched.
///
/// `φ_g(q, ω_b) = (q₀*q, ω_b + ω_b0)`, `ψ_g(ω_m, g_e, b_e) =
/// (ω_m + ω_b0, R_{q0} g_e, R_{q0} b_e)`, `ρ_g(y) = y`.
pub fn apply_left_action(g: &GroupElement, sys: &SystemTuple) -> SystemTuple {
    let mut cfg = sys.cfg.clone();
    cfg.gravity_ref = g.q0.rotate(sys.cfg.gravity_ref);
    cfg.mag_ref = g.q0.rotate(sys.cfg.mag_ref);
    SystemTuple {
        state: AttState {
            q: g.q0.mul(&sys.state.q),
            gyro_bias: sys.state.gyro_bias + g.bias0,
        },
        input: sys.input + g.bias0,
        cfg,
        sample: ImuSample {
            gyro: sys.sample.gyro + g.bias0,
            ..sys.sample
        },
    }
}

/// Right action: states are right-multiplied, measurements and the gyro input
/// rotate into the displaced body frame, references are untouched.
///
/// `φ_g(q, ω_b) = (q*q₀, R_{q0}ᵀ ω_b + ω_b0)`, `ψ_g(ω_m) = R_{q0}ᵀ ω_m + ω_b0`,
/// `ρ_g(y_a, y_b) = (R_{q0}ᵀ y_a, R_{q0}ᵀ y_b)`.
pub fn apply_right_action(g: &GroupElement, sys: &SystemTuple) -> SystemTuple {
    SystemTuple {
        state: AttState {
            q: sys.state.q.mul(&g.q0),
            gyro_bias: g.q0.rotate_inv(sys.state.gyro_bias) + g.bias0,
        },
        input: g.q0.rotate_inv(sys.input) + g.bias0,
        cfg: sys.cfg.clone(),
        sample: ImuSample {
            gyro: g.q0.rotate_inv(sys.sample.gyro) + g.bias0,
            accel: g.q0.rotate_inv(sys.sample.accel),
            mag: g.q0.rotate_inv(sys.sample.mag),
            ..sys.sample
        },
    }
}

/// Noiseless system dynamics `q̇ = ½ q*(ω_m - ω_b)`, `ω̇_b = 0`.
pub fn dynamics(state: &AttState, gyro: Vec3) -> (Quat, Vec3) {
    (
        crate::so3::quat_rate(&state.q, gyro - state.gyro_bias),
        Vec3::zeros(),
    )
}
