//! Right-invariant nonlinear complementary filter: the right-invariant
//! Kalman structure frozen at its steady-state DARE gains (RINCF), plus the
//! velocity-scheduled variant that adds two angular-rate terms to the bias
//! blocks (RINCF2).

use crate::error::FilterError;
use crate::filters::{
    apply_correction, propagate, AttitudeFilter, FilterKind, GainSnapshot, StepOutput,
};
use crate::models::{output_error_right, predict_measurements, AttState, ImuSample, NoiseConfig};
use crate::riccati::{GainMatrix, Rincf2Params};
use crate::so3::{skew, Mat6, Vec3};

/// Constant-gain right-invariant complementary filter.
///
/// Per sample: `E = R̂(ŷ × y)` stacked, attitude correction `(K_att E)*q̂`,
/// bias correction `R̂ᵀ(K_bias E)`; no covariance is propagated.
pub struct Rincf {
    cfg: NoiseConfig,
    state: AttState,
    gain: GainMatrix,
}

impl Rincf {
    pub fn new(cfg: NoiseConfig, gain: GainMatrix) -> Result<Self, FilterError> {
        if !gain.is_finite() {
            return Err(FilterError::InvalidGains("non-finite gain matrix".into()));
        }
        Ok(Rincf {
            cfg,
            state: AttState::identity(),
            gain,
        })
    }

    pub fn gain_matrix(&self) -> &GainMatrix {
        &self.gain
    }
}

/// Shared core of RINCF and RINCF2; `k` is the effective gain for this step.
/// Returns the corrected output and the propagated internal state.
fn rincf_step(
    cfg: &NoiseConfig,
    state: &AttState,
    k: &Mat6,
    sample: &ImuSample,
) -> Result<(StepOutput, AttState), FilterError> {
    let q_hat = state.q;
    let y_hat = predict_measurements(&q_hat, cfg);
    let error = output_error_right(&q_hat, sample, y_hat);
    let e = error.to_vector();
    let k_att = k.fixed_view::<3, 6>(0, 0);
    let k_bias = k.fixed_view::<3, 6>(3, 0);

    let corrected = apply_correction(
        state,
        k_att * e,
        q_hat.rotate_inv(k_bias * e),
        true,
        sample.t,
    )?;
    let next = propagate(&corrected, sample.gyro, cfg.dt, sample.t)?;

    let out = StepOutput {
        state: corrected,
        error,
        gain: GainSnapshot::Matrix(*k),
        euler: corrected.q.to_euler(),
    };
    Ok((out, next))
}

impl AttitudeFilter for Rincf {
    fn kind(&self) -> FilterKind {
        FilterKind::Rincf
    }

    fn state(&self) -> &AttState {
        &self.state
    }

    fn set_state(&mut self, state: AttState) {
        self.state = state;
    }

    fn gain(&self) -> Option<Mat6> {
        Some(*self.gain.matrix())
    }

    fn step(&mut self, sample: &ImuSample) -> Result<StepOutput, FilterError> {
        let (out, next) = rincf_step(&self.cfg, &self.state, self.gain.matrix(), sample)?;
        self.state = next;
        Ok(out)
    }
}

/// RINCF with velocity-scheduled bias gains:
///
/// ```text
/// K_bias = [I_c + p₁[Î_ω]×  |  I_d + p₂[Î_ω]×],   Î_ω = R̂(ω_m - ω̂_b)
/// ```
///
/// The attitude block stays constant; masked entries stay zero after the
/// scheduled term is added.
pub struct Rincf2 {
    cfg: NoiseConfig,
    state: AttState,
    base: GainMatrix,
    params: Rincf2Params,
    last_gain: Mat6,
}

impl Rincf2 {
    pub fn new(
        cfg: NoiseConfig,
        base: GainMatrix,
        params: Rincf2Params,
    ) -> Result<Self, FilterError> {
        if !base.is_finite() {
            return Err(FilterError::InvalidGains("non-finite gain matrix".into()));
        }
        if !(params.p1.is_finite() && params.p2.is_finite()) {
            return Err(FilterError::InvalidGains(
                "non-finite scheduled parameters".into(),
            ));
        }
        let last_gain = *base.matrix();
        Ok(Rincf2 {
            cfg,
            state: AttState::identity(),
            base,
            params,
            last_gain,
        })
    }

    fn effective_gain(&self, i_omega: Vec3) -> Mat6 {
        let mut k = *self.base.matrix();
        let s = skew(i_omega);
        let mut bl = k.fixed_view_mut::<3, 3>(3, 0);
        bl += self.params.p1 * s;
        let mut br = k.fixed_view_mut::<3, 3>(3, 3);
        br += self.params.p2 * s;
        self.base.mask().apply(&k)
    }
}

impl AttitudeFilter for Rincf2 {
    fn kind(&self) -> FilterKind {
        FilterKind::Rincf2
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
        let i_omega = self.state.q.rotate(sample.gyro - self.state.gyro_bias);
        let k = self.effective_gain(i_omega);
        self.last_gain = k;
        let (out, next) = rincf_step(&self.cfg, &self.state, &k, sample)?;
        self.state = next;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{synthesize_gains, GainMask};
    use crate::so3::Quat;

    fn noiseless_sample(q: &Quat, gyro: Vec3, cfg: &NoiseConfig, t: f64) -> ImuSample {
        ImuSample::new(
            t,
            gyro,
            -q.rotate_inv(cfg.gravity_ref),
            q.rotate_inv(cfg.mag_ref),
        )
    }

    fn tuned(cfg: &NoiseConfig) -> GainMatrix {
        synthesize_gains(cfg, &GainMask::empty()).unwrap().gain
    }

    #[test]
    fn zero_gain_is_dead_reckoning() {
        let cfg = NoiseConfig::default();
        let mut f = Rincf::new(cfg.clone(), GainMatrix::zeros()).unwrap();
        // Wrong initial attitude, constant gyro rate: the error never shrinks.
        let q_true = Quat::from_euler(0.3, 0.0, 0.0);
        let initial_err = f.state().q.mul(&q_true.conjugate()).angle();
        for i in 0..1000 {
            let s = noiseless_sample(&q_true, Vec3::zeros(), &cfg, i as f64 * cfg.dt);
            f.step(&s).unwrap();
        }
        let final_err = f.state().q.mul(&q_true.conjugate()).angle();
        assert!((final_err - initial_err).abs() < 1e-9);
    }

    #[test]
    fn converges_from_attitude_and_bias_error() {
        let cfg = NoiseConfig::default();
        let mut f = Rincf::new(cfg.clone(), tuned(&cfg)).unwrap();
        f.set_state(AttState::new(
            Quat::from_euler(0.2, -0.15, 0.25),
            Vec3::new(0.02, -0.01, 0.03),
        ));
        let q_true = Quat::IDENTITY;
        let mut t = 0.0;
        while t < 30.0 {
            f.step(&noiseless_sample(&q_true, Vec3::zeros(), &cfg, t))
                .unwrap();
            t += cfg.dt;
        }
        assert!(f.state().q.mul(&q_true.conjugate()).angle() < 1e-5);
        assert!(f.state().gyro_bias.norm() < 1e-5);
    }

    #[test]
    fn rincf2_reduces_to_rincf_at_zero_rate() {
        let cfg = NoiseConfig::default();
        let k = tuned(&cfg);

        // A single step from a state whose rate estimate is exactly zero is
        // bit-identical to the RINCF step, scheduled terms notwithstanding.
        let params = Rincf2Params {
            p1: 0.04,
            p2: 0.02,
            omega_max: 1.0,
        };
        let mut a = Rincf::new(cfg.clone(), k.clone()).unwrap();
        let mut b = Rincf2::new(cfg.clone(), k.clone(), params).unwrap();
        let q_true = Quat::from_euler(0.1, 0.05, -0.2);
        let s = noiseless_sample(&q_true, Vec3::zeros(), &cfg, 0.0);
        assert_eq!(a.step(&s).unwrap().state, b.step(&s).unwrap().state);

        // With p1 = p2 = 0 the reduction holds over a whole run even while
        // the bias estimate moves.
        let mut a = Rincf::new(cfg.clone(), k.clone()).unwrap();
        let mut b = Rincf2::new(cfg.clone(), k, Rincf2Params::zero(1.0)).unwrap();
        for i in 0..500 {
            let s = noiseless_sample(&q_true, Vec3::zeros(), &cfg, i as f64 * cfg.dt);
            assert_eq!(a.step(&s).unwrap().state, b.step(&s).unwrap().state);
        }
    }

    #[test]
    fn rincf2_masked_entries_stay_zero_under_scheduling() {
        let cfg = NoiseConfig::default();
        let mask = GainMask::selective_yaw();
        let tune = synthesize_gains(&cfg, &mask).unwrap();
        let params = Rincf2Params {
            p1: 0.05,
            p2: 0.03,
            omega_max: 2.0,
        };
        let f = Rincf2::new(cfg, tune.gain, params).unwrap();
        let k = f.effective_gain(Vec3::new(1.5, -0.7, 0.9));
        for (row, col) in mask.entries() {
            assert_eq!(
                k[(row - 1, col - 1)],
                0.0,
                "masked entry ({row},{col}) reappeared"
            );
        }
        // Unmasked scheduled entries did move.
        assert!(k[(5, 1)] != 0.0 || k[(4, 2)] != 0.0);
    }

    #[test]
    fn filter_map_is_right_invariant() {
        // Transforming the input stream by a fixed right group action and the
        // initial estimate correspondingly yields the correspondingly
        // transformed estimate trajectory.
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let cfg = NoiseConfig::default();
        let k = tuned(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let q0 = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalized();
        let bias0 = Vec3::new(0.03, -0.02, 0.05);

        let mut a = Rincf::new(cfg.clone(), k.clone()).unwrap();
        let mut b = Rincf::new(cfg.clone(), k).unwrap();
        let init_q = Quat::from_euler(0.2, -0.1, 0.4);
        let init_bias = Vec3::new(0.01, 0.02, -0.01);
        a.set_state(AttState::new(init_q, init_bias));
        b.set_state(AttState::new(
            init_q.mul(&q0),
            q0.rotate_inv(init_bias) + bias0,
        ));

        for i in 0..500 {
            let t = i as f64 * cfg.dt;
            let gyro = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let accel = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let mag = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let sample = ImuSample::new(t, gyro, accel, mag);
            let moved = ImuSample::new(
                t,
                q0.rotate_inv(gyro) + bias0,
                q0.rotate_inv(accel),
                q0.rotate_inv(mag),
            );
            let oa = a.step(&sample).unwrap();
            let ob = b.step(&moved).unwrap();

            let expect_q = oa.state.q.mul(&q0);
            let dq = ob
                .state
                .q
                .add(&expect_q.scale(-1.0))
                .norm()
                .min(ob.state.q.add(&expect_q).norm());
            assert!(dq < 1e-8, "attitude not equivariant at step {i}: {dq:.2e}");
            let expect_bias = q0.rotate_inv(oa.state.gyro_bias) + bias0;
            assert!(
                (ob.state.gyro_bias - expect_bias).norm() < 1e-8,
                "bias not equivariant at step {i}"
            );
        }
    }

    #[test]
    fn rincf2_attitude_block_is_untouched() {
        let cfg = NoiseConfig::default();
        let base = tuned(&cfg);
        let params = Rincf2Params {
            p1: 0.05,
            p2: 0.03,
            omega_max: 2.0,
        };
        let f = Rincf2::new(cfg, base.clone(), params).unwrap();
        let k = f.effective_gain(Vec3::new(2.0, 1.0, -0.5));
        assert_eq!(
            k.fixed_view::<3, 6>(0, 0).into_owned(),
            base.matrix().fixed_view::<3, 6>(0, 0).into_owned()
        );
    }
}
