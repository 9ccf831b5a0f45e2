//! Endpoint handlers; request validation happens here, computation in
//! `ahrs-core` on the blocking pool.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use uuid::Uuid;

use ahrs_api as api;
use ahrs_core::filters::{init, FilterKind, GainSpec};
use ahrs_core::logcsv::{read_log, write_gain_trace, write_log};
use ahrs_core::metrics::{DEFAULT_TRACE_DECIMATION, DEFAULT_WINDOW_START};
use ahrs_core::models::{AttState, ImuSample, NoiseConfig};
use ahrs_core::riccati::{
    compute_rincf2_params, synthesize_gains, GainMask, GainMatrix, Rincf2Params,
};
use ahrs_core::runner::{compare_filters, run_filter};
use ahrs_core::so3::{Mat6, Vec3};

use crate::error::ApiError;
use crate::AppState;

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn mat_to_row_major(m: &Mat6) -> Vec<f64> {
    let mut v = Vec::with_capacity(36);
    for r in 0..6 {
        for c in 0..6 {
            v.push(m[(r, c)]);
        }
    }
    v
}

fn gain_params(s: &ahrs_core::riccati::StructuredGains) -> api::GainParams {
    api::GainParams {
        a1: s.a.x,
        a2: s.a.y,
        a3: s.a.z,
        b1: s.b.x,
        b2: s.b.y,
        b3: s.b.z,
        c1: s.c.x,
        c2: s.c.y,
        c3: s.c.z,
        d1: s.d.x,
        d2: s.d.y,
        d3: s.d.z,
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

pub async fn tune(Json(req): Json<api::TuneRequest>) -> Result<Json<api::TuneReport>, ApiError> {
    blocking(move || {
        let cfg = req.noise.to_config()?;
        let mask = api::parse_mask(&req.mask, req.mask_preset.as_deref())?;
        let convention = api::parse_index_convention(req.index_convention.as_deref())?;
        let result = synthesize_gains(&cfg, &mask)?;

        let mut p_by_omega = Vec::new();
        for &omega in &req.omega_max {
            if !(omega.is_finite() && omega > 0.0) {
                return Err(ApiError::Config(format!(
                    "omega_max must be positive, got {omega}"
                )));
            }
            let p = compute_rincf2_params(&cfg, omega, convention)?;
            p_by_omega.push(api::ScheduledParams {
                omega_max: omega,
                p1: p.p1,
                p2: p.p2,
            });
        }

        Ok(Json(api::TuneReport {
            k: mat_to_row_major(result.gain.matrix()),
            params: gain_params(&result.structured),
            p1: p_by_omega.first().map(|p| p.p1),
            p2: p_by_omega.first().map(|p| p.p2),
            p_by_omega,
            residual: result.residual,
            iters: result.iterations,
        }))
    })
    .await
}

pub async fn simulate(
    Json(req): Json<api::SimulateRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let csv = blocking(move || {
        let cfg = req.noise.to_config()?;
        let case = req.trajectory()?;
        let mut run = ahrs_core::sim::SimRun::new(req.duration, req.seed, cfg);
        run.initial_q = req.initial_attitude();
        if let Some(b) = req.initial_bias {
            run.initial_bias = Vec3::new(b[0], b[1], b[2]);
        }
        run.validate()?;
        let (truth, samples) = ahrs_core::sim::simulate(&case, &run)?;
        Ok(if req.include_truth {
            write_log(&samples, Some(&truth))
        } else {
            write_log(&samples, None)
        })
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv))
}

/// Resolves the gain specification for one filter, tuning from the noise
/// config where gains were omitted. Returns the spec plus the synthesized
/// gain when one was produced.
pub(crate) fn resolve_gains(
    kind: FilterKind,
    gains: &api::GainsDto,
    mask: &GainMask,
    cfg: &NoiseConfig,
    convention: ahrs_core::riccati::IndexConvention,
) -> Result<(GainSpec, Option<Mat6>), ApiError> {
    let fixed_gain = |tuned: &mut Option<Mat6>| -> Result<GainMatrix, ApiError> {
        match &gains.k {
            Some(values) => {
                if values.len() != 36 {
                    return Err(ApiError::Config(format!(
                        "gain matrix needs 36 values, got {}",
                        values.len()
                    )));
                }
                Ok(GainMatrix::with_mask(
                    Mat6::from_row_slice(values),
                    mask.clone(),
                ))
            }
            None => {
                let result = synthesize_gains(cfg, mask)?;
                *tuned = Some(*result.gain.matrix());
                Ok(result.gain)
            }
        }
    };

    let mut tuned = None;
    let spec = match kind {
        FilterKind::Ncf => GainSpec::Ncf(gains.ncf.unwrap_or_default().into()),
        FilterKind::LiekfStar | FilterKind::RiekfStar | FilterKind::Ekf | FilterKind::Wahba => {
            GainSpec::None
        }
        FilterKind::Rincf => GainSpec::Fixed(fixed_gain(&mut tuned)?),
        FilterKind::Rincf2 => {
            let base = fixed_gain(&mut tuned)?;
            let params = match (gains.p1, gains.p2, gains.omega_max) {
                (Some(p1), Some(p2), omega) => Rincf2Params {
                    p1,
                    p2,
                    omega_max: omega.unwrap_or(1.0),
                },
                (None, None, Some(omega)) if omega > 0.0 => {
                    compute_rincf2_params(cfg, omega, convention)?
                }
                _ => {
                    return Err(ApiError::Config(
                        "rincf2 needs either p1 and p2, or a positive omega_max".into(),
                    ))
                }
            };
            GainSpec::Scheduled { base, params }
        }
    };
    Ok((spec, tuned))
}

pub async fn run(Json(req): Json<api::RunRequest>) -> Result<Json<api::RunResponse>, ApiError> {
    blocking(move || {
        let kind = api::parse_filter(&req.filter)?;
        let cfg = req.noise.to_config()?;
        let mask = api::parse_mask(&req.mask, req.mask_preset.as_deref())?;
        let convention = api::parse_index_convention(req.index_convention.as_deref())?;
        let (spec, tuned) = resolve_gains(kind, &req.gains, &mask, &cfg, convention)?;

        let log = read_log(&req.log_csv)?;
        let trace_every = req.trace_every.unwrap_or(DEFAULT_TRACE_DECIMATION);

        let mut filter = init(kind, &cfg, spec)?;
        let result = run_filter(
            filter.as_mut(),
            &log,
            req.perfect_init,
            if trace_every == 0 {
                usize::MAX
            } else {
                trace_every
            },
        )?;

        let gain_trace_csv = if trace_every > 0 {
            result
                .gain_trace
                .as_ref()
                .map(|t| write_gain_trace(&t.t, &t.k))
        } else {
            None
        };

        Ok(Json(api::RunResponse {
            estimates_csv: result.estimates_csv,
            gain_trace_csv,
            steps: result.steps,
            tuned_k: tuned.map(|m| mat_to_row_major(&m)),
        }))
    })
    .await
}

pub async fn compare(
    Json(req): Json<api::CompareRequest>,
) -> Result<Json<api::CompareResponse>, ApiError> {
    blocking(move || {
        let cfg = req.noise.to_config()?;
        let mask = api::parse_mask(&req.mask, req.mask_preset.as_deref())?;
        if req.filters.len() < 2 {
            return Err(ApiError::Config(format!(
                "compare needs at least two filters, got {}",
                req.filters.len()
            )));
        }
        let mut specs = Vec::new();
        for name in &req.filters {
            let kind = api::parse_filter(name)?;
            let gains_dto = if kind == FilterKind::Rincf2 && req.gains.omega_max.is_none() {
                // Scheduled gains need a velocity point; default to the
                // highest built-in profile amplitude.
                api::GainsDto {
                    omega_max: Some(5.0 * std::f64::consts::PI / 3.0),
                    ..req.gains.clone()
                }
            } else {
                req.gains.clone()
            };
            let (spec, _) = resolve_gains(kind, &gains_dto, &mask, &cfg, Default::default())?;
            specs.push((kind, spec));
        }
        let log = read_log(&req.log_csv)?;
        let window = req.window.unwrap_or(DEFAULT_WINDOW_START);
        let table = compare_filters(&specs, &cfg, &log, window, req.timing)?;
        Ok(Json(api::CompareResponse {
            csv: table.to_csv(),
            text: table.to_text(),
        }))
    })
    .await
}

pub async fn selftest() -> Result<Json<api::SelftestResponse>, ApiError> {
    blocking(move || {
        let report = ahrs_core::selftest::run_selftest();
        Ok(Json(api::SelftestResponse {
            passed: report.passed(),
            checks: report
                .checks
                .into_iter()
                .map(|c| api::CheckDto {
                    name: c.name,
                    passed: c.passed,
                    detail: c.detail,
                })
                .collect(),
        }))
    })
    .await
}

pub async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<api::SessionRequest>,
) -> Result<(StatusCode, Json<api::SessionCreated>), ApiError> {
    let kind = api::parse_filter(&req.filter)?;
    let cfg = req.noise.to_config()?;
    let mask = api::parse_mask(&req.mask, req.mask_preset.as_deref())?;
    let (spec, _) = resolve_gains(kind, &req.gains, &mask, &cfg, Default::default())?;
    let filter = init(kind, &cfg, spec)?;
    let id = state.sessions.create(filter);
    Ok((
        StatusCode::CREATED,
        Json(api::SessionCreated { id: id.to_string() }),
    ))
}

fn parse_session_id(id: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(id).map_err(|_| ApiError::NotFound(format!("unknown session {id:?}")))
}

pub async fn session_info(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<api::SessionInfo>, ApiError> {
    let uuid = parse_session_id(&id)?;
    state
        .sessions
        .with_session(&uuid, |s| api::SessionInfo {
            id: id.clone(),
            filter: s.filter_name.to_string(),
            steps: s.steps,
        })
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))
}

pub async fn delete_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let uuid = parse_session_id(&id)?;
    if state.sessions.remove(&uuid) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound(format!("unknown session {id:?}")))
    }
}

pub async fn step_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<api::StepRequest>,
) -> Result<Json<api::StepResponse>, ApiError> {
    let uuid = parse_session_id(&id)?;
    let result = state
        .sessions
        .with_session(&uuid, |session| {
            if let Some(last) = session.last_t {
                if req.t <= last {
                    return Err(ApiError::Parse(format!(
                        "sample time {} is not strictly increasing (previous {})",
                        req.t, last
                    )));
                }
            }
            let sample = ImuSample::new(
                req.t,
                Vec3::new(req.gyro[0], req.gyro[1], req.gyro[2]),
                Vec3::new(req.accel[0], req.accel[1], req.accel[2]),
                Vec3::new(req.mag[0], req.mag[1], req.mag[2]),
            );
            if !sample.is_finite() {
                return Err(ApiError::Parse("non-finite sample component".into()));
            }
            let out = session.filter.step(&sample).map_err(ApiError::from)?;
            session.steps += 1;
            session.last_t = Some(req.t);
            let AttState { q, gyro_bias } = out.state;
            let e = out.error.to_vector();
            Ok(api::StepResponse {
                t: req.t,
                q: [q.w, q.x, q.y, q.z],
                euler: [out.euler.roll, out.euler.pitch, out.euler.yaw],
                gimbal_lock: out.euler.gimbal_lock,
                gyro_bias: [gyro_bias.x, gyro_bias.y, gyro_bias.z],
                output_error: [e[0], e[1], e[2], e[3], e[4], e[5]],
            })
        })
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))?;
    result.map(Json)
}
