//! Left- and right-invariant error-state Kalman filters with the
//! cross-product output error (LIEKF*, RIEKF*).
//!
//! Both run the same discrete predict/update cycle per sample; they differ in
//! which frame the filtering matrices live in and where the corrections
//! compose. The left filter's matrices track the estimated body-frame
//! references, so its gains stay coupled to the trajectory; the right
//! filter's matrices are constant apart from the angular-rate block, which is
//! why its gains settle to the steady-state DARE solution.

use crate::error::FilterError;
use crate::filters::{
    apply_correction, propagate, AttitudeFilter, FilterKind, GainSnapshot, StepOutput,
};
use crate::models::{
    output_error_left, output_error_right, predict_measurements, AttState, ImuSample, NoiseConfig,
};
use crate::riccati::{error_state_a, measurement_c, measurement_noise_n, process_noise_m};
use crate::so3::{skew, Mat3, Mat6};

/// Gain and posterior covariance from the a-priori covariance `p`:
/// `K = P Cᵀ (C P Cᵀ + R_d)⁻¹`, `P⁺ = (I - KC)P` symmetrized.
pub(crate) fn kalman_update(p: &Mat6, c: &Mat6, r_d: &Mat6) -> Result<(Mat6, Mat6), FilterError> {
    let s = c * p * c.transpose() + r_d;
    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation)?;
    let k = p * c.transpose() * s_inv;
    let p_post = (Mat6::identity() - k * c) * p;
    let p_post = (p_post + p_post.transpose()) * 0.5;
    Ok((k, p_post))
}

fn split_gain(k: &Mat6) -> (nalgebra::Matrix3x6<f64>, nalgebra::Matrix3x6<f64>) {
    (
        k.fixed_view::<3, 6>(0, 0).into_owned(),
        k.fixed_view::<3, 6>(3, 0).into_owned(),
    )
}

/// Left-invariant filter: matrices built from body-frame reference
/// directions, corrections composed on the body side.
pub struct LiekfStar {
    cfg: NoiseConfig,
    state: AttState,
    p: Mat6,
    last_gain: Mat6,
    m: Mat6,
}

impl LiekfStar {
    pub fn new(cfg: NoiseConfig) -> Self {
        LiekfStar {
            cfg,
            state: AttState::identity(),
            p: Mat6::identity(),
            last_gain: Mat6::zeros(),
            m: process_noise_m(),
        }
    }

    pub fn covariance(&self) -> &Mat6 {
        &self.p
    }
}

impl AttitudeFilter for LiekfStar {
    fn kind(&self) -> FilterKind {
        FilterKind::LiekfStar
    }

    fn state(&self) -> &AttState {
        &self.state
    }

    fn set_state(&mut self, state: AttState) {
        self.state = state;
    }

    fn gain(&self) -> Option<Mat6> {
        Some(self.last_gain)
    }

    fn step(&mut self, sample: &ImuSample) -> Result<StepOutput, FilterError> {
        let dt = self.cfg.dt;
        let q_hat = self.state.q;

        // Body-frame references: R̂ᵀ g_e and R̂ᵀ b_e.
        let g_body = q_hat.rotate_inv(self.cfg.gravity_ref);
        let b_body = q_hat.rotate_inv(self.cfg.mag_ref);
        let c = measurement_c(g_body, b_body);
        let n = measurement_noise_n(g_body, b_body);
        let r_d = n * self.cfg.measurement_cov * n.transpose();

        let (k, p_post) = kalman_update(&self.p, &c, &r_d)?;
        self.last_gain = k;

        let y_hat = predict_measurements(&q_hat, &self.cfg);
        let error = output_error_left(sample, y_hat);
        let e = error.to_vector();
        let (k_att, k_bias) = split_gain(&k);
        let corrected = apply_correction(&self.state, k_att * e, k_bias * e, false, sample.t)?;
        self.state = propagate(&corrected, sample.gyro, dt, sample.t)?;

        // Covariance time update for the next sample.
        let mut a = Mat6::zeros();
        a.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&skew(self.state.gyro_bias - sample.gyro));
        a.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(Mat3::identity() * -0.5));
        let a_d = Mat6::identity() + a * dt;
        let q_d = self.m * self.cfg.process_cov * self.m.transpose() * dt * dt;
        self.p = a_d * p_post * a_d.transpose() + q_d;

        Ok(StepOutput {
            state: corrected,
            error,
            gain: GainSnapshot::Matrix(k),
            euler: corrected.q.to_euler(),
        })
    }
}

/// Right-invariant filter: earth-frame matrices, corrections composed on the
/// earth side, bias correction rotated back into the body frame.
pub struct RiekfStar {
    cfg: NoiseConfig,
    state: AttState,
    p: Mat6,
    last_gain: Mat6,
    c: Mat6,
    r_d: Mat6,
    q_d: Mat6,
}

impl RiekfStar {
    pub fn new(cfg: NoiseConfig) -> Self {
        let m = process_noise_m();
        let c = measurement_c(cfg.gravity_ref, cfg.mag_ref);
        let n = measurement_noise_n(cfg.gravity_ref, cfg.mag_ref);
        let q_d = m * cfg.process_cov * m.transpose() * cfg.dt * cfg.dt;
        let r_d = n * cfg.measurement_cov * n.transpose();
        RiekfStar {
            cfg,
            state: AttState::identity(),
            p: Mat6::identity(),
            last_gain: Mat6::zeros(),
            c,
            r_d,
            q_d,
        }
    }

    pub fn covariance(&self) -> &Mat6 {
        &self.p
    }
}

impl AttitudeFilter for RiekfStar {
    fn kind(&self) -> FilterKind {
        FilterKind::RiekfStar
    }

    fn state(&self) -> &AttState {
        &self.state
    }

    fn set_state(&mut self, state: AttState) {
        self.state = state;
    }

    fn gain(&self) -> Option<Mat6> {
        Some(self.last_gain)
    }

    fn step(&mut self, sample: &ImuSample) -> Result<StepOutput, FilterError> {
        let dt = self.cfg.dt;
        let q_hat = self.state.q;

        let (k, p_post) = kalman_update(&self.p, &self.c, &self.r_d)?;
        self.last_gain = k;

        let y_hat = predict_measurements(&q_hat, &self.cfg);
        let error = output_error_right(&q_hat, sample, y_hat);
        let e = error.to_vector();
        let (k_att, k_bias) = split_gain(&k);
        let corrected = apply_correction(
            &self.state,
            k_att * e,
            q_hat.rotate_inv(k_bias * e),
            true,
            sample.t,
        )?;
        self.state = propagate(&corrected, sample.gyro, dt, sample.t)?;

        // Invariant rate estimate Î_ω = R̂ (ω_m - ω̂_b) feeds the bias block
        // of the covariance time update.
        let i_omega = self.state.q.rotate(sample.gyro - self.state.gyro_bias);
        let a_d = Mat6::identity() + error_state_a(i_omega) * dt;
        self.p = a_d * p_post * a_d.transpose() + self.q_d;

        Ok(StepOutput {
            state: corrected,
            error,
            gain: GainSnapshot::Matrix(k),
            euler: corrected.q.to_euler(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::GainSpec;
    use crate::models::NoiseConfig;
    use crate::riccati::{synthesize_gains, GainMask};
    use crate::sim::{integrate_truth, synthesize_measurements, SimRun, TrajectoryCase};
    use crate::so3::{Quat, Vec3};
    use nalgebra::SymmetricEigen;

    fn noiseless_sample(q: &Quat, gyro: Vec3, cfg: &NoiseConfig, t: f64) -> ImuSample {
        ImuSample::new(
            t,
            gyro,
            -q.rotate_inv(cfg.gravity_ref),
            q.rotate_inv(cfg.mag_ref),
        )
    }

    #[test]
    fn perfect_init_zero_process_noise_is_fixed_point() {
        // With zeroed noise matrices the gains exist but E = 0, so the
        // filters propagate by gyro alone.
        let cfg = NoiseConfig {
            process_cov: Mat6::zeros(),
            measurement_cov: Mat6::identity() * 1e-9,
            ..NoiseConfig::default()
        };
        for kind in [FilterKind::LiekfStar, FilterKind::RiekfStar] {
            let mut f = crate::filters::init(kind, &cfg, GainSpec::None).unwrap();
            let q = Quat::from_euler(0.1, 0.2, -0.3);
            f.set_state(AttState::new(q, Vec3::zeros()));
            let out = f
                .step(&noiseless_sample(&q, Vec3::zeros(), &cfg, 0.0))
                .unwrap();
            assert!(out.error.to_vector().norm() < 1e-12);
            assert!(out.state.q.mul(&q.conjugate()).vector().norm() < 1e-12);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd_under_noise() {
        let cfg = NoiseConfig::default();
        let run = SimRun::new(50.0, 31, cfg.clone());
        let truth = integrate_truth(&TrajectoryCase::Case2, &run).unwrap();
        let samples = synthesize_measurements(&truth, &run);
        let mut f = RiekfStar::new(cfg.clone());
        let mut l = LiekfStar::new(cfg);
        for s in samples.iter().take(10_000) {
            f.step(s).unwrap();
            l.step(s).unwrap();
            for p in [f.covariance(), l.covariance()] {
                assert!((p - p.transpose()).norm() < 1e-9);
                assert!(SymmetricEigen::new(*p).eigenvalues.min() > -1e-10);
            }
        }
    }

    /// Gain-trace experiments run on a noiseless log (the filters keep their
    /// noise configuration): the gain dynamics are driven by the trajectory,
    /// not by sensor noise leaking into the rate estimate. Balanced
    /// reference magnitudes keep the yaw entries from being dominated by the
    /// rate coupling.
    fn gain_trace_config() -> NoiseConfig {
        NoiseConfig {
            gravity_ref: Vec3::new(0.0, 0.0, 9.81),
            mag_ref: Vec3::new(9.81, 0.0, 0.0),
            ..NoiseConfig::default()
        }
    }

    fn noiseless_case1_log(cfg: &NoiseConfig, duration: f64) -> Vec<ImuSample> {
        let clean = NoiseConfig {
            process_cov: Mat6::zeros(),
            ..cfg.clone()
        };
        let run = SimRun::new(duration, 5, clean);
        let truth = integrate_truth(&TrajectoryCase::Case1, &run).unwrap();
        truth
            .iter()
            .map(|r| {
                ImuSample::new(
                    r.t,
                    r.omega_true,
                    -r.q_true.rotate_inv(cfg.gravity_ref),
                    r.q_true.rotate_inv(cfg.mag_ref),
                )
            })
            .collect()
    }

    #[test]
    fn riekf_gains_settle_to_dare_solution() {
        let cfg = gain_trace_config();
        let samples = noiseless_case1_log(&cfg, 30.0);
        let mut f = RiekfStar::new(cfg.clone());
        let mut tail = Vec::new();
        let half = samples.len() / 2;
        for (i, s) in samples.iter().enumerate() {
            f.step(s).unwrap();
            if i >= half {
                tail.push(f.gain().unwrap());
            }
        }
        let mut mean = Mat6::zeros();
        for k in &tail {
            mean += k;
        }
        mean /= tail.len() as f64;

        let tune = synthesize_gains(&cfg, &GainMask::empty()).unwrap();
        let k_dare = tune.gain.matrix();
        for r in 0..6 {
            for c in 0..6 {
                let expect = k_dare[(r, c)];
                if expect.abs() > 1e-6 {
                    let rel = (mean[(r, c)] - expect).abs() / expect.abs();
                    assert!(
                        rel < 0.10,
                        "gain ({r},{c}) off by {rel:.3}: {} vs {}",
                        mean[(r, c)],
                        expect
                    );
                }
            }
        }

        // Stationarity of the dominant entries over the tail: std/|mean|
        // at most 5%.
        let mut trace = crate::metrics::GainTrace::default();
        for (i, k) in tail.iter().enumerate() {
            trace.push(i as f64, *k);
        }
        let stat = trace.stationarity(1.0);
        for r in 0..6 {
            for c in 0..6 {
                if mean[(r, c)].abs() > 1e-4 {
                    assert!(
                        stat[(r, c)] <= 0.05,
                        "dominant entry ({r},{c}) not stationary: {}",
                        stat[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn liekf_gains_stay_trajectory_coupled() {
        // Entry variance over the last half of a run: the left filter's
        // dominant entries swing with the trajectory, the right filter's
        // stay put.
        let cfg = gain_trace_config();
        let samples = noiseless_case1_log(&cfg, 30.0);
        let mut right = RiekfStar::new(cfg.clone());
        let mut left = LiekfStar::new(cfg);
        let half = samples.len() / 2;
        let mut right_tail = Vec::new();
        let mut left_tail = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            right.step(s).unwrap();
            left.step(s).unwrap();
            if i >= half {
                right_tail.push(right.gain().unwrap());
                left_tail.push(left.gain().unwrap());
            }
        }
        let var_sum = |ks: &[Mat6]| -> f64 {
            let mut mean = Mat6::zeros();
            for k in ks {
                mean += k;
            }
            mean /= ks.len() as f64;
            ks.iter().map(|k| (k - mean).norm_squared()).sum::<f64>() / ks.len() as f64
        };
        let vr = var_sum(&right_tail);
        let vl = var_sum(&left_tail);
        assert!(
            vl > 5.0 * vr,
            "left gain variance {vl:.3e} should exceed right {vr:.3e} by 5x"
        );
    }
}
