//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`, `#` starts a comment. Matrices are comma lists
//! of 1 (scalar·I), 6 (diagonal) or 36 (row-major) values; vectors are
//! comma lists of 3; masks are `row:col` pairs separated by commas.

use ahrs_api::{AxisSinusoidDto, MatrixSpec, NoiseConfigDto};

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    pub q: Option<MatrixSpec>,
    pub r: Option<MatrixSpec>,
    pub g_e: Option<[f64; 3]>,
    pub b_e: Option<[f64; 3]>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub case: Option<u8>,
    pub custom_omega: Option<[AxisSinusoidDto; 3]>,
    pub filter: Option<String>,
    pub filters: Option<Vec<String>>,
    pub mask: Option<Vec<[usize; 2]>>,
    pub mask_preset: Option<String>,
    pub window: Option<f64>,
    pub omega_max: Option<Vec<f64>>,
    pub index_convention: Option<String>,
    pub trace_every: Option<usize>,
    pub k_p: Option<f64>,
    pub k_i: Option<f64>,
    pub k_1: Option<f64>,
    pub k_2: Option<f64>,
}

fn parse_floats(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse {v:?} as a number"))
        })
        .collect()
}

pub fn parse_matrix(value: &str) -> Result<MatrixSpec, String> {
    let vals = parse_floats(value)?;
    match vals.len() {
        1 => Ok(MatrixSpec::Scalar(vals[0])),
        6 => Ok(MatrixSpec::Diagonal(vals.try_into().unwrap())),
        36 => Ok(MatrixSpec::Full(vals)),
        n => Err(format!("matrix needs 1, 6 or 36 values, got {n}")),
    }
}

fn parse_vec3(value: &str) -> Result<[f64; 3], String> {
    let vals = parse_floats(value)?;
    vals.try_into()
        .map_err(|v: Vec<f64>| format!("vector needs 3 values, got {}", v.len()))
}

/// `row:col` pairs, e.g. `3:3, 1:4`.
pub fn parse_mask_entries(value: &str) -> Result<Vec<[usize; 2]>, String> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (r, c) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("mask entry {pair:?} is not row:col"))?;
            let row = r
                .trim()
                .parse()
                .map_err(|_| format!("bad mask row {r:?}"))?;
            let col = c
                .trim()
                .parse()
                .map_err(|_| format!("bad mask column {c:?}"))?;
            Ok([row, col])
        })
        .collect()
}

fn parse_custom_omega(value: &str) -> Result<[AxisSinusoidDto; 3], String> {
    let vals = parse_floats(value)?;
    if vals.len() != 9 {
        return Err(format!(
            "custom_omega needs 9 values (amp,freq,phase per axis), got {}",
            vals.len()
        ));
    }
    let axis = |i: usize| AxisSinusoidDto {
        amplitude: vals[3 * i],
        frequency_hz: vals[3 * i + 1],
        phase: vals[3 * i + 2],
    };
    Ok([axis(0), axis(1), axis(2)])
}

pub fn parse_config(text: &str) -> Result<FileConfig, String> {
    let mut cfg = FileConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        let err = |e: String| format!("line {lineno} ({key}): {e}");
        match key {
            "q" => cfg.q = Some(parse_matrix(value).map_err(err)?),
            "r" => cfg.r = Some(parse_matrix(value).map_err(err)?),
            "g_e" => cfg.g_e = Some(parse_vec3(value).map_err(err)?),
            "b_e" => cfg.b_e = Some(parse_vec3(value).map_err(err)?),
            "dt" => cfg.dt = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "duration" => cfg.duration = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "seed" => cfg.seed = Some(value.parse().map_err(|_| err("bad integer".into()))?),
            "case" => cfg.case = Some(value.parse().map_err(|_| err("bad case id".into()))?),
            "custom_omega" => cfg.custom_omega = Some(parse_custom_omega(value).map_err(err)?),
            "filter" => cfg.filter = Some(value.to_string()),
            "filters" => {
                cfg.filters = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "mask" => cfg.mask = Some(parse_mask_entries(value).map_err(err)?),
            "mask_preset" => cfg.mask_preset = Some(value.to_string()),
            "window" => cfg.window = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "omega_max" => cfg.omega_max = Some(parse_floats(value).map_err(err)?),
            "index_convention" => cfg.index_convention = Some(value.to_string()),
            "trace_every" => {
                cfg.trace_every = Some(value.parse().map_err(|_| err("bad integer".into()))?)
            }
            "k_p" => cfg.k_p = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "k_i" => cfg.k_i = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "k_1" => cfg.k_1 = Some(value.parse().map_err(|_| err("bad number".into()))?),
            "k_2" => cfg.k_2 = Some(value.parse().map_err(|_| err("bad number".into()))?),
            other => return Err(format!("line {lineno}: unknown key {other:?}")),
        }
    }
    Ok(cfg)
}

impl FileConfig {
    /// Noise configuration with file overrides applied on top of defaults.
    pub fn noise(&self) -> NoiseConfigDto {
        let mut dto = NoiseConfigDto::default();
        if let Some(q) = &self.q {
            dto.q = q.clone();
        }
        if let Some(r) = &self.r {
            dto.r = r.clone();
        }
        if let Some(g) = self.g_e {
            dto.g_e = g;
        }
        if let Some(b) = self.b_e {
            dto.b_e = b;
        }
        if let Some(dt) = self.dt {
            dto.dt = dt;
        }
        dto
    }
}
