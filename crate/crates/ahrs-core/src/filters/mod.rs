//! The filter bank behind one step interface.
//!
//! Sign conventions, fixed once for the whole crate: the output error is
//! `ŷ × y` (predicted × measured) and corrections apply the raw steady-state
//! or per-step Kalman gain `K` directly. This is the same filter as the
//! textbook formulation that pairs the opposite error order with negated
//! gains; committing to one orientation keeps gain tables, masks and reports
//! unambiguous. The nonlinear complementary filter keeps its classic signs:
//! positive `(k_p, k_i, k_1, k_2)` converge.
//!
//! The Kalman-family filters (LIEKF*, RIEKF*, RINCF, RINCF2) are discrete:
//! the gyro propagation term is scaled by `dt`, the measurement correction
//! `K·E` is applied once per sample, matching the discrete Riccati design
//! `K = Dare(I + A·dt, C, M·Q·Mᵀ·dt², N·R·Nᵀ)`. The NCF is a continuous
//! observer discretized by Euler, so its corrections scale with `dt`.

mod ekf;
mod invariant;
mod ncf;
mod rincf;
mod wahba;

pub use ekf::AdditiveEkf;
pub use invariant::{LiekfStar, RiekfStar};
pub use ncf::{Ncf, NcfGains};
pub use rincf::{Rincf, Rincf2};
pub use wahba::{wahba_svd, WahbaSolver};

use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::models::{AttState, ImuSample, NoiseConfig, OutputError};
use crate::riccati::{GainMatrix, Rincf2Params};
use crate::so3::{EulerAngles, Mat6, Quat, Vec3};

/// The supported filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    Ncf,
    LiekfStar,
    RiekfStar,
    Rincf,
    Rincf2,
    Ekf,
    Wahba,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::Ncf,
        FilterKind::LiekfStar,
        FilterKind::RiekfStar,
        FilterKind::Rincf,
        FilterKind::Rincf2,
        FilterKind::Ekf,
        FilterKind::Wahba,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Ncf => "ncf",
            FilterKind::LiekfStar => "liekf-star",
            FilterKind::RiekfStar => "riekf-star",
            FilterKind::Rincf => "rincf",
            FilterKind::Rincf2 => "rincf2",
            FilterKind::Ekf => "ekf",
            FilterKind::Wahba => "wab",
        }
    }

    pub fn parse(s: &str) -> Option<FilterKind> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "ncf" => Some(FilterKind::Ncf),
            "liekf-star" | "liekf*" | "liekf" => Some(FilterKind::LiekfStar),
            "riekf-star" | "riekf*" | "riekf" => Some(FilterKind::RiekfStar),
            "rincf" => Some(FilterKind::Rincf),
            "rincf2" => Some(FilterKind::Rincf2),
            "ekf" => Some(FilterKind::Ekf),
            "wab" | "wahba" => Some(FilterKind::Wahba),
            _ => None,
        }
    }

    /// Whether the filter exposes a 6×6 gain trace.
    pub fn has_gain_trace(&self) -> bool {
        !matches!(self, FilterKind::Ncf | FilterKind::Ekf | FilterKind::Wahba)
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gains handed to [`init`]; which variant is required depends on the filter.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSpec {
    /// For the filters that compute their own gains (LIEKF*, RIEKF*, EKF)
    /// and the snapshot solver.
    None,
    Ncf(NcfGains),
    Fixed(GainMatrix),
    Scheduled {
        base: GainMatrix,
        params: Rincf2Params,
    },
}

/// Gain actually used in a step, for logging.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSnapshot {
    None,
    Scalars(NcfGains),
    Matrix(Mat6),
}

/// Per-step result shared by every filter.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: AttState,
    pub error: OutputError,
    pub gain: GainSnapshot,
    pub euler: EulerAngles,
}

/// Common step interface; a filter is a single-owner value that mutates in
/// place and returns the per-step output.
pub trait AttitudeFilter: Send {
    fn kind(&self) -> FilterKind;
    fn state(&self) -> &AttState;
    /// Replaces the state; used by perfect-init runs.
    fn set_state(&mut self, state: AttState);
    /// Current 6×6 correction gain, when the filter has one.
    fn gain(&self) -> Option<Mat6>;
    fn step(&mut self, sample: &ImuSample) -> Result<StepOutput, FilterError>;
}

/// Builds a filter with identity attitude, zero bias and unit covariance
/// where applicable.
pub fn init(
    kind: FilterKind,
    cfg: &NoiseConfig,
    gains: GainSpec,
) -> Result<Box<dyn AttitudeFilter>, FilterError> {
    cfg.validate()?;
    match (kind, gains) {
        (FilterKind::Ncf, GainSpec::Ncf(g)) => Ok(Box::new(Ncf::new(cfg.clone(), g)?)),
        (FilterKind::Ncf, _) => Err(FilterError::MissingGains("ncf")),
        (FilterKind::LiekfStar, GainSpec::None) => Ok(Box::new(LiekfStar::new(cfg.clone()))),
        (FilterKind::RiekfStar, GainSpec::None) => Ok(Box::new(RiekfStar::new(cfg.clone()))),
        (FilterKind::Rincf, GainSpec::Fixed(k)) => Ok(Box::new(Rincf::new(cfg.clone(), k)?)),
        (FilterKind::Rincf, _) => Err(FilterError::MissingGains("rincf")),
        (FilterKind::Rincf2, GainSpec::Scheduled { base, params }) => {
            Ok(Box::new(Rincf2::new(cfg.clone(), base, params)?))
        }
        (FilterKind::Rincf2, _) => Err(FilterError::MissingGains("rincf2")),
        (FilterKind::Ekf, GainSpec::None) => Ok(Box::new(AdditiveEkf::new(cfg.clone()))),
        (FilterKind::Wahba, GainSpec::None) => Ok(Box::new(WahbaSolver::new(cfg.clone()))),
        (kind, _) => Err(FilterError::InvalidGains(format!(
            "{kind} does not take the supplied gain kind"
        ))),
    }
}

/// Every filter runs the same two-phase step: the measurement correction is
/// applied to the current estimate (valid at the sample time and returned in
/// the step output), then the gyro propagates the state to the next sample
/// time.
///
/// `att_corr` is the 3-vector `K_att·E`; `bias_corr` is already rotated into
/// the body frame where needed.
pub(crate) fn apply_correction(
    state: &AttState,
    att_corr: Vec3,
    bias_corr: Vec3,
    left_compose: bool,
    t: f64,
) -> Result<AttState, FilterError> {
    let corr = Quat::from_vector(att_corr);
    let corr_term = if left_compose {
        corr.mul(&state.q)
    } else {
        state.q.mul(&corr)
    };
    let next = state.q.add(&corr_term);
    if !quat_norm_usable(&next) {
        return Err(FilterError::NonFiniteState { t });
    }
    let gyro_bias = state.gyro_bias + bias_corr;
    if !gyro_bias.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFiniteState { t });
    }
    Ok(AttState {
        q: next.normalized(),
        gyro_bias,
    })
}

/// Components finite and the norm itself finite and non-zero, so
/// normalization cannot silently produce zeros or NaNs. The norm check
/// matters: components near 1e308 are finite while their squared sum is not.
pub(crate) fn quat_norm_usable(q: &Quat) -> bool {
    let n = q.norm();
    q.is_finite() && n.is_finite() && n > 0.0
}

/// Euler step of `q̇ = ½ q*(ω_m - ω̂_b)` with renormalization.
pub(crate) fn propagate(
    state: &AttState,
    gyro: Vec3,
    dt: f64,
    t: f64,
) -> Result<AttState, FilterError> {
    let qdot = crate::so3::quat_rate(&state.q, gyro - state.gyro_bias);
    let next = state.q.add(&qdot.scale(dt));
    if !quat_norm_usable(&next) {
        return Err(FilterError::NonFiniteState { t });
    }
    Ok(AttState {
        q: next.normalized(),
        gyro_bias: state.gyro_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{synthesize_gains, GainMask};

    #[test]
    fn init_contract() {
        let cfg = NoiseConfig::default();
        // Table-style initialization: identity attitude, zero bias.
        let tune = synthesize_gains(&cfg, &GainMask::empty()).unwrap();
        let f = init(FilterKind::Rincf, &cfg, GainSpec::Fixed(tune.gain.clone())).unwrap();
        assert_eq!(f.state().q, Quat::IDENTITY);
        assert_eq!(f.state().gyro_bias, Vec3::zeros());

        let f = init(FilterKind::RiekfStar, &cfg, GainSpec::None).unwrap();
        assert_eq!(f.state().q, Quat::IDENTITY);

        assert!(matches!(
            init(FilterKind::Rincf, &cfg, GainSpec::None),
            Err(FilterError::MissingGains("rincf"))
        ));
        assert!(matches!(
            init(FilterKind::Ncf, &cfg, GainSpec::None),
            Err(FilterError::MissingGains("ncf"))
        ));
        let bad = NcfGains {
            k_p: -1.0,
            ..NcfGains::default()
        };
        assert!(matches!(
            init(FilterKind::Ncf, &cfg, GainSpec::Ncf(bad)),
            Err(FilterError::InvalidGains(_))
        ));
    }

    #[test]
    fn init_validates_config_before_filters() {
        let mut cfg = NoiseConfig::default();
        cfg.measurement_cov[(0, 0)] = -1.0;
        match init(FilterKind::RiekfStar, &cfg, GainSpec::None) {
            Err(FilterError::Model(_)) => {}
            other => panic!("expected config validation error, got {:?}", other.err()),
        }
    }

    #[test]
    fn kind_parsing_round_trip() {
        for kind in FilterKind::ALL {
            assert_eq!(FilterKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(FilterKind::parse("RIEKF*"), Some(FilterKind::RiekfStar));
        assert_eq!(FilterKind::parse("nope"), None);
    }
}
