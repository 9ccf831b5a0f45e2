//! Nonlinear complementary filter with constant hand-tuned gains.

use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::filters::{
    apply_correction, propagate, AttitudeFilter, FilterKind, GainSnapshot, StepOutput,
};
use crate::models::{predict_measurements, AttState, ImuSample, NoiseConfig, OutputError};
use crate::so3::Mat6;

/// NCF gains; all four must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcfGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_1: f64,
    pub k_2: f64,
}

impl Default for NcfGains {
    /// This crate's documented defaults for comparison runs; the filter is
    /// classically tuned by trial and error.
    fn default() -> Self {
        NcfGains {
            k_p: 1.0,
            k_i: 0.1,
            k_1: 0.5,
            k_2: 0.5,
        }
    }
}

impl NcfGains {
    pub fn validate(&self) -> Result<(), FilterError> {
        for (name, v) in [
            ("k_p", self.k_p),
            ("k_i", self.k_i),
            ("k_1", self.k_1),
            ("k_2", self.k_2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FilterError::InvalidGains(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic complementary observer:
///
/// ```text
/// E    = k₁(ŷ_a × y_a) + k₂(ŷ_b × y_b)
/// q̂̇   = ½ q̂*(ω_m - ω̂_b) - q̂*(k_p E)
/// ω̂̇_b = k_i E
/// ```
///
/// discretized by an Euler step and renormalization. With the `ŷ × y` error
/// orientation the attitude injection carries the minus sign; this is the
/// classic passive complementary filter and converges for positive gains.
pub struct Ncf {
    cfg: NoiseConfig,
    gains: NcfGains,
    state: AttState,
}

impl Ncf {
    pub fn new(cfg: NoiseConfig, gains: NcfGains) -> Result<Self, FilterError> {
        gains.validate()?;
        Ok(Ncf {
            cfg,
            gains,
            state: AttState::identity(),
        })
    }

    pub fn gains(&self) -> NcfGains {
        self.gains
    }
}

impl AttitudeFilter for Ncf {
    fn kind(&self) -> FilterKind {
        FilterKind::Ncf
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
        let dt = self.cfg.dt;
        let y_hat = predict_measurements(&self.state.q, &self.cfg);
        let weighted = OutputError {
            grav: self.gains.k_1 * y_hat.0.cross(&sample.accel),
            mag: self.gains.k_2 * y_hat.1.cross(&sample.mag),
        };
        let e = weighted.grav + weighted.mag;

        // Continuous observer: both injection terms scale with dt.
        let corrected = apply_correction(
            &self.state,
            -self.gains.k_p * e * dt,
            self.gains.k_i * e * dt,
            false,
            sample.t,
        )?;
        self.state = propagate(&corrected, sample.gyro, dt, sample.t)?;

        Ok(StepOutput {
            state: corrected,
            error: weighted,
            gain: GainSnapshot::Scalars(self.gains),
            euler: corrected.q.to_euler(),
        })
    }
}
