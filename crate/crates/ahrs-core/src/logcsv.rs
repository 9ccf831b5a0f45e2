//! Canonical CSV schemas: the measurement log (optionally with truth
//! columns), the per-step estimate output, and the decimated gain trace.
//!
//! Floats are written with Rust's shortest round-trip formatting and parsed
//! with `str::parse::<f64>`, so write→read is lossless and byte-stable.
//! External capture formats are expected to be converted to this log schema
//! first.

use std::fmt::Write as _;

use thiserror::Error;

use crate::filters::StepOutput;
use crate::models::ImuSample;
use crate::sim::TruthRecord;
use crate::so3::{Mat6, Quat, Vec3};

/// Measurement-only header.
pub const LOG_HEADER: &str = "t,wx,wy,wz,ax,ay,az,mx,my,mz";
/// Header including ground-truth attitude and bias columns.
pub const LOG_HEADER_WITH_TRUTH: &str = "t,wx,wy,wz,ax,ay,az,mx,my,mz,qw,qx,qy,qz,bwx,bwy,bwz";
/// Estimate output header.
pub const ESTIMATE_HEADER: &str =
    "t,qw,qx,qy,qz,roll,pitch,yaw,bwx,bwy,bwz,egx,egy,egz,ebx,eby,ebz";

#[derive(Debug, Clone, Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: time {t} is not strictly increasing (previous {prev})")]
    NonMonotonicTime { line: usize, t: f64, prev: f64 },
    #[error("unrecognized header: {0:?}")]
    BadHeader(String),
    #[error("log has no data rows")]
    Empty,
}

/// A parsed log: samples plus truth columns when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImuLog {
    pub samples: Vec<ImuSample>,
    pub truth: Option<Vec<TruthRecord>>,
}

impl ImuLog {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn fmt_row(fields: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in fields.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

/// Serializes truth + measurements into the log schema.
pub fn write_log(samples: &[ImuSample], truth: Option<&[TruthRecord]>) -> String {
    let mut out = String::new();
    match truth {
        Some(truth) => {
            out.push_str(LOG_HEADER_WITH_TRUTH);
            out.push('\n');
            for (s, r) in samples.iter().zip(truth) {
                let row = fmt_row(&[
                    s.t,
                    s.gyro.x,
                    s.gyro.y,
                    s.gyro.z,
                    s.accel.x,
                    s.accel.y,
                    s.accel.z,
                    s.mag.x,
                    s.mag.y,
                    s.mag.z,
                    r.q_true.w,
                    r.q_true.x,
                    r.q_true.y,
                    r.q_true.z,
                    r.bias_true.x,
                    r.bias_true.y,
                    r.bias_true.z,
                ]);
                out.push_str(&row);
                out.push('\n');
            }
        }
        None => {
            out.push_str(LOG_HEADER);
            out.push('\n');
            for s in samples {
                let row = fmt_row(&[
                    s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z, s.mag.x,
                    s.mag.y, s.mag.z,
                ]);
                out.push_str(&row);
                out.push('\n');
            }
        }
    }
    out
}

fn parse_fields(line: &str, lineno: usize, expect: usize) -> Result<Vec<f64>, LogError> {
    let mut vals = Vec::with_capacity(expect);
    for raw in line.split(',') {
        let v: f64 = raw.trim().parse().map_err(|_| LogError::Malformed {
            line: lineno,
            reason: format!("cannot parse {raw:?} as a number"),
        })?;
        if !v.is_finite() {
            return Err(LogError::Malformed {
                line: lineno,
                reason: format!("non-finite value {raw:?}"),
            });
        }
        vals.push(v);
    }
    if vals.len() != expect {
        return Err(LogError::Malformed {
            line: lineno,
            reason: format!("expected {expect} columns, found {}", vals.len()),
        });
    }
    Ok(vals)
}

/// Parses the log schema; errors carry 1-based line numbers.
pub fn read_log(text: &str) -> Result<ImuLog, LogError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(LogError::Empty)?;
    let header = header.trim_end();
    let with_truth = match header {
        LOG_HEADER => false,
        LOG_HEADER_WITH_TRUTH => true,
        other => return Err(LogError::BadHeader(other.to_string())),
    };
    let expect = if with_truth { 17 } else { 10 };

    let mut log = ImuLog {
        samples: Vec::new(),
        truth: with_truth.then(Vec::new),
    };
    let mut prev_t = f64::NEG_INFINITY;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_fields(line, lineno, expect)?;
        if v[0] <= prev_t {
            return Err(LogError::NonMonotonicTime {
                line: lineno,
                t: v[0],
                prev: prev_t,
            });
        }
        prev_t = v[0];
        log.samples.push(ImuSample::new(
            v[0],
            Vec3::new(v[1], v[2], v[3]),
            Vec3::new(v[4], v[5], v[6]),
            Vec3::new(v[7], v[8], v[9]),
        ));
        if let Some(truth) = log.truth.as_mut() {
            // The schema stores attitude and bias truth only; the rate slot
            // is backfilled from the gyro column and carries its noise.
            truth.push(TruthRecord {
                t: v[0],
                q_true: Quat::new(v[10], v[11], v[12], v[13]),
                omega_true: Vec3::new(v[1], v[2], v[3]) - Vec3::new(v[14], v[15], v[16]),
                bias_true: Vec3::new(v[14], v[15], v[16]),
            });
        }
    }
    if log.samples.is_empty() {
        return Err(LogError::Empty);
    }
    Ok(log)
}

/// Streaming writer for per-step estimates.
pub struct EstimateWriter {
    buf: String,
}

impl Default for EstimateWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl EstimateWriter {
    pub fn new() -> Self {
        let mut buf = String::new();
        buf.push_str(ESTIMATE_HEADER);
        buf.push('\n');
        EstimateWriter { buf }
    }

    pub fn push(&mut self, t: f64, out: &StepOutput) {
        let q = out.state.q;
        let b = out.state.gyro_bias;
        let e = &out.error;
        let row = fmt_row(&[
            t,
            q.w,
            q.x,
            q.y,
            q.z,
            out.euler.roll,
            out.euler.pitch,
            out.euler.yaw,
            b.x,
            b.y,
            b.z,
            e.grav.x,
            e.grav.y,
            e.grav.z,
            e.mag.x,
            e.mag.y,
            e.mag.z,
        ]);
        self.buf.push_str(&row);
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Gain trace CSV: `t` plus the 36 gain entries in row-major order.
pub fn write_gain_trace(t: &[f64], traces: &[Mat6]) -> String {
    let mut out = String::with_capacity(64 * (traces.len() + 1));
    out.push_str("t");
    for r in 1..=6 {
        for c in 1..=6 {
            let _ = write!(out, ",k{r}{c}");
        }
    }
    out.push('\n');
    for (t, k) in t.iter().zip(traces) {
        let _ = write!(out, "{t}");
        for r in 0..6 {
            for c in 0..6 {
                let _ = write!(out, ",{}", k[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}
