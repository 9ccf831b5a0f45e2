//! Wire types for the estimation service, plus conversions into the core
//! domain types. Everything is plain serde JSON; measurement logs travel as
//! CSV strings in the canonical log schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ahrs_core::filters::{FilterKind, NcfGains};
use ahrs_core::models::NoiseConfig;
use ahrs_core::riccati::{GainMask, IndexConvention};
use ahrs_core::sim::{AxisSinusoid, TrajectoryCase};
use ahrs_core::so3::{Mat6, Quat, Vec3};

/// Validation failure while converting a request into domain types.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct InvalidRequest(pub String);

/// 6×6 covariance specification: a scalar multiple of the identity, a
/// diagonal, or a full row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal([f64; 6]),
    Full(Vec<f64>),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<Mat6, InvalidRequest> {
        match self {
            MatrixSpec::Scalar(s) => Ok(Mat6::identity() * *s),
            MatrixSpec::Diagonal(d) => Ok(Mat6::from_diagonal(
                &ahrs_core::so3::Vec6::from_row_slice(d),
            )),
            MatrixSpec::Full(v) => {
                if v.len() != 36 {
                    return Err(InvalidRequest(format!(
                        "matrix needs 1, 6 or 36 values, got {}",
                        v.len()
                    )));
                }
                Ok(Mat6::from_row_slice(v))
            }
        }
    }

    pub fn from_matrix(m: &Mat6) -> MatrixSpec {
        let mut v = Vec::with_capacity(36);
        for r in 0..6 {
            for c in 0..6 {
                v.push(m[(r, c)]);
            }
        }
        MatrixSpec::Full(v)
    }
}

/// Noise and reference configuration on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfigDto {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    pub g_e: [f64; 3],
    pub b_e: [f64; 3],
    pub dt: f64,
}

impl Default for NoiseConfigDto {
    fn default() -> Self {
        NoiseConfigDto::from_config(&NoiseConfig::default())
    }
}

impl NoiseConfigDto {
    pub fn to_config(&self) -> Result<NoiseConfig, InvalidRequest> {
        let cfg = NoiseConfig {
            process_cov: self.q.to_matrix()?,
            measurement_cov: self.r.to_matrix()?,
            gravity_ref: Vec3::new(self.g_e[0], self.g_e[1], self.g_e[2]),
            mag_ref: Vec3::new(self.b_e[0], self.b_e[1], self.b_e[2]),
            dt: self.dt,
        };
        cfg.validate().map_err(|e| InvalidRequest(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &NoiseConfig) -> Self {
        NoiseConfigDto {
            q: MatrixSpec::from_matrix(&cfg.process_cov),
            r: MatrixSpec::from_matrix(&cfg.measurement_cov),
            g_e: [cfg.gravity_ref.x, cfg.gravity_ref.y, cfg.gravity_ref.z],
            b_e: [cfg.mag_ref.x, cfg.mag_ref.y, cfg.mag_ref.z],
            dt: cfg.dt,
        }
    }
}

pub fn parse_filter(name: &str) -> Result<FilterKind, InvalidRequest> {
    FilterKind::parse(name).ok_or_else(|| InvalidRequest(format!("unknown filter {name:?}")))
}

pub fn parse_mask(
    entries: &[[usize; 2]],
    preset: Option<&str>,
) -> Result<GainMask, InvalidRequest> {
    if let Some(p) = preset {
        if !entries.is_empty() {
            return Err(InvalidRequest(
                "give either mask entries or a preset, not both".into(),
            ));
        }
        return match p {
            "selective-yaw" => Ok(GainMask::selective_yaw()),
            other => Err(InvalidRequest(format!("unknown mask preset {other:?}"))),
        };
    }
    GainMask::from_entries(entries.iter().map(|e| (e[0], e[1])))
        .map_err(|e| InvalidRequest(e.to_string()))
}

pub fn parse_index_convention(s: Option<&str>) -> Result<IndexConvention, InvalidRequest> {
    match s {
        None | Some("row-col") => Ok(IndexConvention::RowCol),
        Some("col-row") => Ok(IndexConvention::ColRow),
        Some(other) => Err(InvalidRequest(format!(
            "unknown index convention {other:?}"
        ))),
    }
}

/// Gain synthesis request.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TuneRequest {
    #[serde(default)]
    pub noise: NoiseConfigDto,
    /// 1-based (row, col) entries pinned to zero.
    #[serde(default)]
    pub mask: Vec<[usize; 2]>,
    #[serde(default)]
    pub mask_preset: Option<String>,
    /// Velocity points for the scheduled parameters.
    #[serde(default)]
    pub omega_max: Vec<f64>,
    #[serde(default)]
    pub index_convention: Option<String>,
}

/// Structured diagonal parameters of the four gain blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledParams {
    pub omega_max: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Gain report. `k` is the 6×6 gain, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneReport {
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub params: GainParams,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    #[serde(default)]
    pub p_by_omega: Vec<ScheduledParams>,
    pub residual: f64,
    pub iters: usize,
}

impl TuneReport {
    pub fn gain_matrix(&self) -> Result<Mat6, InvalidRequest> {
        if self.k.len() != 36 {
            return Err(InvalidRequest(format!(
                "gain needs 36 values, got {}",
                self.k.len()
            )));
        }
        Ok(Mat6::from_row_slice(&self.k))
    }

    /// Flat `key = value` text block mirroring the JSON report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..6 {
            let row: Vec<String> = (0..6).map(|c| format!("{}", self.k[r * 6 + c])).collect();
            out.push_str(&format!("k_row{} = {}\n", r + 1, row.join(", ")));
        }
        let p = &self.params;
        for (name, v) in [
            ("a1", p.a1),
            ("a2", p.a2),
            ("a3", p.a3),
            ("b1", p.b1),
            ("b2", p.b2),
            ("b3", p.b3),
            ("c1", p.c1),
            ("c2", p.c2),
            ("c3", p.c3),
            ("d1", p.d1),
            ("d2", p.d2),
            ("d3", p.d3),
        ] {
            out.push_str(&format!("{name} = {v}\n"));
        }
        for e in &self.p_by_omega {
            out.push_str(&format!(
                "p1(omega_max={}) = {}\np2(omega_max={}) = {}\n",
                e.omega_max, e.p1, e.omega_max, e.p2
            ));
        }
        out.push_str(&format!(
            "residual = {}\niters = {}\n",
            self.residual, self.iters
        ));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSinusoidDto {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

/// Simulation request; exactly one of `case` or `custom`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default)]
    pub case: Option<u8>,
    #[serde(default)]
    pub custom: Option<[AxisSinusoidDto; 3]>,
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfigDto,
    /// Initial attitude as intrinsic Z-Y-X Euler angles, radians.
    #[serde(default)]
    pub initial_euler: Option<[f64; 3]>,
    #[serde(default)]
    pub initial_bias: Option<[f64; 3]>,
    #[serde(default = "default_true")]
    pub include_truth: bool,
}

fn default_true() -> bool {
    true
}

impl SimulateRequest {
    pub fn trajectory(&self) -> Result<TrajectoryCase, InvalidRequest> {
        match (self.case, &self.custom) {
            (Some(id), None) => {
                TrajectoryCase::from_id(id).map_err(|e| InvalidRequest(e.to_string()))
            }
            (None, Some(axes)) => Ok(TrajectoryCase::Custom([
                AxisSinusoid::new(axes[0].amplitude, axes[0].frequency_hz, axes[0].phase),
                AxisSinusoid::new(axes[1].amplitude, axes[1].frequency_hz, axes[1].phase),
                AxisSinusoid::new(axes[2].amplitude, axes[2].frequency_hz, axes[2].phase),
            ])),
            _ => Err(InvalidRequest(
                "give exactly one of `case` or `custom`".into(),
            )),
        }
    }

    pub fn initial_attitude(&self) -> Quat {
        match self.initial_euler {
            Some([roll, pitch, yaw]) => Quat::from_euler(roll, pitch, yaw),
            None => Quat::IDENTITY,
        }
    }
}

/// Gains for a run or session; omitted gains mean "tune from the noise
/// config" for the fixed-gain filters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainsDto {
    /// 6×6 row-major gain matrix.
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    #[serde(default)]
    pub ncf: Option<NcfGainsDto>,
    /// Scheduled parameters for rincf2; recomputed from `omega_max` when
    /// absent.
    #[serde(default)]
    pub p1: Option<f64>,
    #[serde(default)]
    pub p2: Option<f64>,
    #[serde(default)]
    pub omega_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcfGainsDto {
    pub k_p: f64,
    pub k_i: f64,
    pub k_1: f64,
    pub k_2: f64,
}

impl From<NcfGainsDto> for NcfGains {
    fn from(g: NcfGainsDto) -> Self {
        NcfGains {
            k_p: g.k_p,
            k_i: g.k_i,
            k_1: g.k_1,
            k_2: g.k_2,
        }
    }
}

impl Default for NcfGainsDto {
    fn default() -> Self {
        let g = NcfGains::default();
        NcfGainsDto {
            k_p: g.k_p,
            k_i: g.k_i,
            k_1: g.k_1,
            k_2: g.k_2,
        }
    }
}

/// Run a filter over a log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRequest {
    pub filter: String,
    #[serde(default)]
    pub noise: NoiseConfigDto,
    #[serde(default)]
    pub gains: GainsDto,
    #[serde(default)]
    pub mask: Vec<[usize; 2]>,
    #[serde(default)]
    pub mask_preset: Option<String>,
    #[serde(default)]
    pub index_convention: Option<String>,
    #[serde(default)]
    pub perfect_init: bool,
    /// Keep every n-th gain sample in the trace (default 5); 0 disables the
    /// trace.
    #[serde(default)]
    pub trace_every: Option<usize>,
    pub log_csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResponse {
    pub estimates_csv: String,
    pub gain_trace_csv: Option<String>,
    pub steps: usize,
    /// The gain that was synthesized when none was supplied.
    pub tuned_k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRequest {
    pub filters: Vec<String>,
    #[serde(default)]
    pub noise: NoiseConfigDto,
    #[serde(default)]
    pub gains: GainsDto,
    #[serde(default)]
    pub mask: Vec<[usize; 2]>,
    #[serde(default)]
    pub mask_preset: Option<String>,
    /// Post-convergence window start, seconds (default 2.5).
    #[serde(default)]
    pub window: Option<f64>,
    /// Measure per-step wall time per filter.
    #[serde(default = "default_true")]
    pub timing: bool,
    pub log_csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareResponse {
    pub csv: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckDto {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelftestResponse {
    pub passed: bool,
    pub checks: Vec<CheckDto>,
}

/// Streaming session creation; same gain semantics as a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    pub filter: String,
    #[serde(default)]
    pub noise: NoiseConfigDto,
    #[serde(default)]
    pub gains: GainsDto,
    #[serde(default)]
    pub mask: Vec<[usize; 2]>,
    #[serde(default)]
    pub mask_preset: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub filter: String,
    pub steps: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRequest {
    pub t: f64,
    pub gyro: [f64; 3],
    pub accel: [f64; 3],
    pub mag: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResponse {
    pub t: f64,
    /// Scalar-first unit quaternion.
    pub q: [f64; 4],
    /// Roll, pitch, yaw in radians (Z-Y-X intrinsic).
    pub euler: [f64; 3],
    pub gimbal_lock: bool,
    pub gyro_bias: [f64; 3],
    /// Stacked output error (gravity block then magnetometer block).
    pub output_error: [f64; 6],
}

/// Error payload: stable `code` plus a human-readable message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

/// Error codes exposed by the service; the CLI maps them onto exit codes.
pub mod error_code {
    /// Invalid configuration or request (CLI exit 2).
    pub const CONFIG: &str = "config";
    /// Malformed input data such as a CSV log (CLI exit 2).
    pub const PARSE: &str = "parse";
    /// Numerical failure at runtime (CLI exit 3).
    pub const NUMERICAL: &str = "numerical";
    pub const NOT_FOUND: &str = "not-found";
    pub const INTERNAL: &str = "internal";
}
