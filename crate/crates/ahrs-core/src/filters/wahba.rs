//! Snapshot attitude from one accelerometer/magnetometer pair by solving the
//! weighted least-squares orientation problem with an SVD.

use crate::error::FilterError;
use crate::filters::{AttitudeFilter, FilterKind, GainSnapshot, StepOutput};
use crate::models::{output_error_right, predict_measurements, AttState, ImuSample, NoiseConfig};
use crate::so3::{Mat3, Mat6, Quat, Vec3};

/// Observation directions closer than this (in sin of the angle) are
/// rejected as degenerate.
const PARALLEL_TOL: f64 = 1e-6;

/// Solves for the rotation minimizing `w_a|y_a - Rᵀr_a|² + w_b|y_b - Rᵀr_b|²`
/// over rotations, with `r_a = -g_e`, `r_b = b_e`.
///
/// The optimal body-from-earth matrix comes from the SVD of the attitude
/// profile `B = w_a y_a r_aᵀ + w_b y_b r_bᵀ` with the determinant-sign
/// correction that keeps the result a proper rotation.
pub fn wahba_svd(
    y_a: Vec3,
    y_b: Vec3,
    cfg: &NoiseConfig,
    w_a: f64,
    w_b: f64,
) -> Result<Quat, FilterError> {
    let na = y_a.norm();
    let nb = y_b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(FilterError::DegenerateGeometry { angle: 0.0 });
    }
    let sin_obs = y_a.cross(&y_b).norm() / (na * nb);
    if sin_obs < PARALLEL_TOL {
        return Err(FilterError::DegenerateGeometry { angle: sin_obs });
    }
    let r_a = -cfg.gravity_ref;
    let r_b = cfg.mag_ref;
    let sin_ref = r_a.cross(&r_b).norm() / (r_a.norm() * r_b.norm());
    if sin_ref < PARALLEL_TOL {
        return Err(FilterError::DegenerateGeometry { angle: sin_ref });
    }

    let profile: Mat3 = w_a * y_a * r_a.transpose() + w_b * y_b * r_b.transpose();
    let svd = profile.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sign = (u.determinant() * v_t.determinant()).signum();
    let correction = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, sign));
    // Body-from-earth; transpose back to this crate's earth-from-body R(q).
    let body_from_earth = u * correction * v_t;
    Ok(Quat::from_rotation_matrix(&body_from_earth.transpose()))
}

/// Default weights: inverse trace of the corresponding measurement noise
/// block.
pub fn default_weights(cfg: &NoiseConfig) -> (f64, f64) {
    (
        1.0 / cfg.accel_noise_cov().trace(),
        1.0 / cfg.mag_noise_cov().trace(),
    )
}

/// The snapshot solver behind the common filter interface: each step replaces
/// the attitude with the closed-form solution; the gyro is ignored and the
/// bias estimate stays zero.
pub struct WahbaSolver {
    cfg: NoiseConfig,
    state: AttState,
    w_a: f64,
    w_b: f64,
}

impl WahbaSolver {
    pub fn new(cfg: NoiseConfig) -> Self {
        let (w_a, w_b) = default_weights(&cfg);
        WahbaSolver {
            cfg,
            state: AttState::identity(),
            w_a,
            w_b,
        }
    }
}

impl AttitudeFilter for WahbaSolver {
    fn kind(&self) -> FilterKind {
        FilterKind::Wahba
    }

    fn state(&self) -> &AttState {
        &self.state
    }

    fn set_state(&mut self, state: AttState) {
        self.state = state;
    }

    fn gain(&self) -> Option<Mat6> {
        None
    }

    fn step(&mut self, sample: &ImuSample) -> Result<StepOutput, FilterError> {
        let q = wahba_svd(sample.accel, sample.mag, &self.cfg, self.w_a, self.w_b)?;
        self.state = AttState::new(q, Vec3::zeros());
        let y_hat = predict_measurements(&q, &self.cfg);
        Ok(StepOutput {
            state: self.state,
            error: output_error_right(&q, sample, y_hat),
            gain: GainSnapshot::None,
            euler: q.to_euler(),
        })
    }
}
