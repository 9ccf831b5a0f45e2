//! Ground-truth comparison, convergence-window statistics, gain-trace
//! stationarity and the linearized stability diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::riccati::StructuredGains;
use crate::so3::{EulerAngles, Mat3, Mat6, Quat, Vec3};

/// Right-invariant attitude error `μ = q̂ * q⁻¹`: per-axis Euler split under
/// the Z-Y-X convention plus the convention-free total rotation angle.
pub fn attitude_error(q_true: &Quat, q_hat: &Quat) -> (EulerAngles, f64) {
    let mu = q_hat.mul(&q_true.conjugate());
    (mu.to_euler(), mu.angle())
}

/// Error time series per channel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    pub roll: Vec<f64>,
    pub pitch: Vec<f64>,
    pub yaw: Vec<f64>,
    /// Total rotation angle of μ, always ≥ 0.
    pub angle: Vec<f64>,
}

impl ErrorSeries {
    pub fn push(&mut self, t: f64, q_true: &Quat, q_hat: &Quat) {
        let (euler, angle) = attitude_error(q_true, q_hat);
        self.t.push(t);
        self.roll.push(euler.roll);
        self.pitch.push(euler.pitch);
        self.yaw.push(euler.yaw);
        self.angle.push(angle);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Channel statistics over the post-convergence window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
    pub rms: f64,
}

fn channel_stats(values: &[f64]) -> ChannelStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    ChannelStats {
        mean,
        std: var.sqrt(),
        rms,
    }
}

/// Mean/σ/RMS per channel over `t ≥ window_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub window_start: f64,
    pub samples: usize,
    pub roll: ChannelStats,
    pub pitch: ChannelStats,
    pub yaw: ChannelStats,
    pub angle: ChannelStats,
}

/// Default post-convergence cutoff in seconds.
pub const DEFAULT_WINDOW_START: f64 = 2.5;

pub fn summarize(series: &ErrorSeries, window_start: f64) -> Result<SummaryStats, MetricsError> {
    let start = series.t.partition_point(|t| *t < window_start);
    if start >= series.len() {
        return Err(MetricsError::EmptyWindow {
            window_start,
            end: series.t.last().copied().unwrap_or(0.0),
        });
    }
    Ok(SummaryStats {
        window_start,
        samples: series.len() - start,
        roll: channel_stats(&series.roll[start..]),
        pitch: channel_stats(&series.pitch[start..]),
        yaw: channel_stats(&series.yaw[start..]),
        angle: channel_stats(&series.angle[start..]),
    })
}

/// Decimated gain trace K(t).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainTrace {
    pub t: Vec<f64>,
    pub k: Vec<Mat6>,
}

/// Default decimation: keep every 5th step.
pub const DEFAULT_TRACE_DECIMATION: usize = 5;

impl GainTrace {
    pub fn push(&mut self, t: f64, k: Mat6) {
        self.t.push(t);
        self.k.push(k);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Per-entry `std / max(|mean|, 1e-9)` over the trailing fraction of the
    /// trace; zero for a constant trace.
    pub fn stationarity(&self, tail_fraction: f64) -> Mat6 {
        assert!(
            tail_fraction > 0.0 && tail_fraction <= 1.0,
            "tail fraction must be in (0, 1]"
        );
        let n = self.k.len();
        let start = n - ((n as f64 * tail_fraction).ceil() as usize).min(n);
        let tail = &self.k[start..];
        let m = tail.len() as f64;
        let mut mean = Mat6::zeros();
        for k in tail {
            mean += k;
        }
        mean /= m;
        let mut var = Mat6::zeros();
        for k in tail {
            let d = k - mean;
            var += d.component_mul(&d);
        }
        if tail.len() > 1 {
            var /= m - 1.0;
        }
        let mut out = Mat6::zeros();
        for r in 0..6 {
            for c in 0..6 {
                out[(r, c)] = var[(r, c)].sqrt() / mean[(r, c)].abs().max(1e-9);
            }
        }
        out
    }
}

/// Linearized attitude error-state matrix `A_μ` for aligned references
/// (gravity along +z with magnitude `g`, magnetic reference along +x with
/// magnitude `b`).
pub fn a_mu_from_structured(s: &StructuredGains, g: f64, b: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(
        -2.0 * g * g * s.a.x,
        -2.0 * g * g * s.a.y - 2.0 * b * b * s.b.y,
        -2.0 * b * b * s.b.z,
    ))
}

/// Linearized bias error-state matrix `A_β` for aligned references.
pub fn a_beta_from_structured(s: &StructuredGains, g: f64, b: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(
        2.0 * g * g * s.c.x,
        2.0 * g * g * s.c.y + 2.0 * b * b * s.d.y,
        2.0 * b * b * s.d.z,
    ))
}

/// Candidate Lyapunov function `V = δβᵀδβ + (2A_β δμ)ᵀδμ` evaluated along a
/// logged small-error trajectory.
pub fn lyapunov_series(err_mu: &[Vec3], err_beta: &[Vec3], a_beta: &Mat3) -> Vec<f64> {
    assert_eq!(err_mu.len(), err_beta.len(), "series lengths differ");
    err_mu
        .iter()
        .zip(err_beta)
        .map(|(mu, beta)| beta.dot(beta) + (2.0 * a_beta * mu).dot(mu))
        .collect()
}
