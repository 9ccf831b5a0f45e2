//! Discrete algebraic Riccati solver and noise-driven gain synthesis.
//!
//! The constant correction gains of the fixed-gain filters are the
//! steady-state Kalman gains of the right-invariant error model:
//!
//! ```text
//! K = Dare(I + A·dt,  C,  M·Q·Mᵀ·dt²,  N·R·Nᵀ)
//! ```
//!
//! with `A = [[0, -½I], [0, [Î_ω]×]]`, `C = [[2[g_e]×², 0], [2[b_e]×², 0]]`,
//! `M = [[½I, 0], [0, -I]]`, `N = [[I + [g_e]×, 0], [0, I - [b_e]×]]` and
//! `Î_ω = 0` for the steady-state solve. `N` carries the `I +` rank fix so
//! the shaped measurement covariance stays positive definite.
//!
//! The solver is a plain fixed-point iteration of the covariance recursion
//! `P ← A P Aᵀ - A P Cᵀ (C P Cᵀ + R_d)⁻¹ C P Aᵀ + Q_d`: at 6×6 this is
//! robust, allocation-light and doubles as its own convergence diagnostic.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::RiccatiError;
use crate::models::NoiseConfig;
use crate::so3::{skew, Mat3, Mat6, Vec3};

/// Default Frobenius residual tolerance for the steady-state solve.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration cap for the steady-state solve.
pub const DEFAULT_MAX_ITER: usize = 200_000;
/// Gain entries below this magnitude are treated as exact zeros when divided
/// by ω_max (small-over-small guard).
pub const GAIN_ZERO_TOL: f64 = 1e-12;

/// Discretized filter system fed to the DARE.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    /// `I + A·dt`.
    pub a_d: Mat6,
    /// Measurement matrix (not discretized).
    pub c: Mat6,
    /// `M·Q·Mᵀ·dt²`.
    pub q_d: Mat6,
    /// `N·R·Nᵀ`.
    pub r_d: Mat6,
}

fn from_blocks(tl: Mat3, tr: Mat3, bl: Mat3, br: Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&tl);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&bl);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&br);
    m
}

/// Continuous error-state matrix `A` with the angular-rate coupling term.
pub fn error_state_a(i_omega: Vec3) -> Mat6 {
    from_blocks(
        Mat3::zeros(),
        Mat3::identity() * -0.5,
        Mat3::zeros(),
        skew(i_omega),
    )
}

/// Measurement matrix `C` for earth-frame references.
pub fn measurement_c(gravity_ref: Vec3, mag_ref: Vec3) -> Mat6 {
    let sg = skew(gravity_ref);
    let sb = skew(mag_ref);
    from_blocks(2.0 * sg * sg, Mat3::zeros(), 2.0 * sb * sb, Mat3::zeros())
}

/// Process-noise Jacobian `M`.
pub fn process_noise_m() -> Mat6 {
    from_blocks(
        Mat3::identity() * 0.5,
        Mat3::zeros(),
        Mat3::zeros(),
        -Mat3::identity(),
    )
}

/// Measurement-noise Jacobian `N` including the rank fix.
pub fn measurement_noise_n(gravity_ref: Vec3, mag_ref: Vec3) -> Mat6 {
    from_blocks(
        Mat3::identity() + skew(gravity_ref),
        Mat3::zeros(),
        Mat3::zeros(),
        Mat3::identity() - skew(mag_ref),
    )
}

/// Builds the steady-state discrete system (`Î_ω = 0`).
pub fn build_discrete_system(cfg: &NoiseConfig) -> Result<DiscreteSystem, RiccatiError> {
    build_discrete_system_with_rate(cfg, Vec3::zeros())
}

/// Builds the discrete system with an explicit invariant angular rate in the
/// bias block of `A`; used for the velocity-scheduled gain parameters.
pub fn build_discrete_system_with_rate(
    cfg: &NoiseConfig,
    i_omega: Vec3,
) -> Result<DiscreteSystem, RiccatiError> {
    cfg.validate()?;
    let dt = cfg.dt;
    let a_d = Mat6::identity() + error_state_a(i_omega) * dt;
    let c = measurement_c(cfg.gravity_ref, cfg.mag_ref);
    let m = process_noise_m();
    let n = measurement_noise_n(cfg.gravity_ref, cfg.mag_ref);
    let q_d = m * cfg.process_cov * m.transpose() * dt * dt;
    let r_d = n * cfg.measurement_cov * n.transpose();
    if nalgebra::Cholesky::new(r_d).is_none() {
        return Err(RiccatiError::SingularN);
    }
    Ok(DiscreteSystem { a_d, c, q_d, r_d })
}

/// Steady-state solution: a priori covariance, gain, and solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub covariance: Mat6,
    pub gain: Mat6,
    pub residual: f64,
    pub iterations: usize,
}

/// One step of the covariance recursion plus the associated gain.
/// Shared by the steady-state solver, its long-recursion oracle, and the
/// per-step Kalman filters.
pub fn riccati_step(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q_d: &DMatrix<f64>,
    r_d: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), RiccatiError> {
    let cp = c * p;
    let s = &cp * c.transpose() + r_d;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or(RiccatiError::SingularInnovation)?;
    let k = p * c.transpose() * &s_inv;
    let ap = a * p;
    let next = &ap * a.transpose() - &ap * c.transpose() * s_inv * c * p * a.transpose() + q_d;
    // Symmetrize to keep rounding from accumulating.
    let next = (&next + next.transpose()) * 0.5;
    Ok((next, k))
}

/// Fixed-point iteration of the covariance recursion on dynamically sized
/// matrices. Returns `(P, K, residual, iterations)` where `residual` is the
/// Frobenius norm of `recursion(P) - P`.
pub fn solve_dare_dyn(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q_d: &DMatrix<f64>,
    r_d: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, usize), RiccatiError> {
    let n = a.nrows();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let (next, _) = riccati_step(a, c, q_d, r_d, &p)?;
        residual = (&next - &p).norm();
        p = next;
        if residual <= tol {
            let (_, k) = riccati_step(a, c, q_d, r_d, &p)?;
            return Ok((p, k, residual, iter));
        }
    }
    Err(RiccatiError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solves the 6×6 steady-state problem.
pub fn solve_dare(
    sys: &DiscreteSystem,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution, RiccatiError> {
    let to_dyn = |m: &Mat6| DMatrix::from_iterator(6, 6, m.iter().cloned());
    let (p, k, residual, iterations) = solve_dare_dyn(
        &to_dyn(&sys.a_d),
        &to_dyn(&sys.c),
        &to_dyn(&sys.q_d),
        &to_dyn(&sys.r_d),
        tol,
        max_iter,
    )?;
    let from_dyn = |m: &DMatrix<f64>| Mat6::from_iterator(m.iter().cloned());
    Ok(DareSolution {
        covariance: from_dyn(&p),
        gain: from_dyn(&k),
        residual,
        iterations,
    })
}

/// Set of (row, col) gain entries pinned to zero, 1-based as printed in gain
/// tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainMask {
    entries: BTreeSet<(usize, usize)>,
}

impl GainMask {
    pub fn empty() -> Self {
        GainMask::default()
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, RiccatiError> {
        let mut set = BTreeSet::new();
        for (row, col) in entries {
            if !(1..=6).contains(&row) || !(1..=6).contains(&col) {
                return Err(RiccatiError::IndexOutOfRange { row, col });
            }
            set.insert((row, col));
        }
        Ok(GainMask { entries: set })
    }

    /// The experimentally used selective-update pattern: the magnetometer
    /// corrects yaw and z-bias only, gravity corrects roll/pitch and x/y-bias
    /// only.
    pub fn selective_yaw() -> Self {
        GainMask::from_entries([(1, 4), (2, 5), (3, 3), (4, 4), (5, 5), (6, 3)]).unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().copied()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.contains(&(row, col))
    }

    /// Zeroes the masked entries of `k`.
    pub fn apply(&self, k: &Mat6) -> Mat6 {
        let mut out = *k;
        for &(row, col) in &self.entries {
            out[(row - 1, col - 1)] = 0.0;
        }
        out
    }
}

/// Constant 6×6 correction gain in the DARE convention (the gain returned by
/// the solver; attitude rows come out with negative diagonals for stable
/// configurations), with an optional zero mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    k: Mat6,
    mask: GainMask,
}

impl GainMatrix {
    pub fn new(k: Mat6) -> Self {
        GainMatrix {
            k,
            mask: GainMask::empty(),
        }
    }

    pub fn with_mask(k: Mat6, mask: GainMask) -> Self {
        GainMatrix {
            k: mask.apply(&k),
            mask,
        }
    }

    pub fn zeros() -> Self {
        GainMatrix::new(Mat6::zeros())
    }

    pub fn matrix(&self) -> &Mat6 {
        &self.k
    }

    pub fn mask(&self) -> &GainMask {
        &self.mask
    }

    /// Attitude rows 1–3.
    pub fn attitude_block(&self) -> nalgebra::Matrix3x6<f64> {
        self.k.fixed_view::<3, 6>(0, 0).into_owned()
    }

    /// Bias rows 4–6.
    pub fn bias_block(&self) -> nalgebra::Matrix3x6<f64> {
        self.k.fixed_view::<3, 6>(3, 0).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.k.iter().all(|v| v.is_finite())
    }

    /// Structured diagonal parameters; see [`StructuredGains::from_dare_gain`].
    pub fn structured(&self) -> StructuredGains {
        StructuredGains::from_dare_gain(&self.k)
    }
}

/// Diagonal parameters (a, b, c, d) of the four 3×3 blocks of a correction
/// gain, plus the relative off-diagonal residual of the blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredGains {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
    pub d: Vec3,
    /// ‖off-diagonal part‖_F / max(‖diagonal part‖_F, tiny).
    pub off_diagonal_residual: f64,
}

impl StructuredGains {
    /// Reads a gain in the correction convention
    /// `L = [[Iₐ, I_b], [-I_c, -I_d]]` (identity input gives a = (1,1,1),
    /// d = (-1,-1,-1)).
    pub fn from_correction_gain(l: &Mat6) -> Self {
        let diag = |r: usize, c: usize, sign: f64| {
            Vec3::new(
                sign * l[(r, c)],
                sign * l[(r + 1, c + 1)],
                sign * l[(r + 2, c + 2)],
            )
        };
        let a = diag(0, 0, 1.0);
        let b = diag(0, 3, 1.0);
        let c = diag(3, 0, -1.0);
        let d = diag(3, 3, -1.0);

        let mut diag_sq = 0.0;
        let mut off_sq = 0.0;
        for row in 0..6 {
            for col in 0..6 {
                let v = l[(row, col)] * l[(row, col)];
                if row % 3 == col % 3 {
                    diag_sq += v;
                } else {
                    off_sq += v;
                }
            }
        }
        StructuredGains {
            a,
            b,
            c,
            d,
            off_diagonal_residual: off_sq.sqrt() / diag_sq.sqrt().max(1e-300),
        }
    }

    /// Reads a raw DARE gain `K = [[-Iₐ, -I_b], [I_c, I_d]]`; for a stable
    /// configuration all eight observable parameters come out positive.
    pub fn from_dare_gain(k: &Mat6) -> Self {
        StructuredGains::from_correction_gain(&(-k))
    }

    pub fn as_list(&self) -> [(&'static str, f64); 12] {
        [
            ("a1", self.a.x),
            ("a2", self.a.y),
            ("a3", self.a.z),
            ("b1", self.b.x),
            ("b2", self.b.y),
            ("b3", self.b.z),
            ("c1", self.c.x),
            ("c2", self.c.y),
            ("c3", self.c.z),
            ("d1", self.d.x),
            ("d2", self.d.y),
            ("d3", self.d.z),
        ]
    }

    /// The eight parameters observable with aligned references, in the order
    /// (a1, a2, b2, b3, c1, c2, d2, d3).
    pub fn observable_eight(&self) -> [f64; 8] {
        [
            self.a.x, self.a.y, self.b.y, self.b.z, self.c.x, self.c.y, self.d.y, self.d.z,
        ]
    }
}

/// Reading order for the printed gain-entry indices that define the
/// velocity-scheduled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum IndexConvention {
    /// `K_{i,j}` means row i, column j (the default; self-consistent with the
    /// skew structure of the scheduled bias blocks).
    #[default]
    RowCol,
    /// `K_{i,j}` means column i, row j.
    ColRow,
}

/// Velocity-scheduled gain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rincf2Params {
    pub p1: f64,
    pub p2: f64,
    pub omega_max: f64,
}

impl Rincf2Params {
    pub fn zero(omega_max: f64) -> Self {
        Rincf2Params {
            p1: 0.0,
            p2: 0.0,
            omega_max,
        }
    }
}

fn guarded_ratio(entry: f64, omega_max: f64) -> f64 {
    if entry.abs() < GAIN_ZERO_TOL {
        0.0
    } else {
        entry / omega_max
    }
}

/// Re-solves the DARE with `Î_ω = (ω_max, 0, 0)` and extracts the two
/// velocity-scheduled parameters: p₁ from the entry coupling bias row 6 with
/// error column 2, p₂ from minus the entry at bias row 5, error column 6
/// (row/col per `convention`).
pub fn compute_rincf2_params(
    cfg: &NoiseConfig,
    omega_max: f64,
    convention: IndexConvention,
) -> Result<Rincf2Params, RiccatiError> {
    assert!(omega_max > 0.0, "omega_max must be positive");
    let sys = build_discrete_system_with_rate(cfg, Vec3::new(omega_max, 0.0, 0.0))?;
    let sol = solve_dare(&sys, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let k = sol.gain;
    let (e62, e56) = match convention {
        IndexConvention::RowCol => (k[(5, 1)], k[(4, 5)]),
        IndexConvention::ColRow => (k[(1, 5)], k[(5, 4)]),
    };
    Ok(Rincf2Params {
        p1: guarded_ratio(e62, omega_max),
        p2: -guarded_ratio(e56, omega_max),
        omega_max,
    })
}

/// Full tuning result for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub gain: GainMatrix,
    pub structured: StructuredGains,
    pub residual: f64,
    pub iterations: usize,
}

/// Runs the whole pipeline: build the steady-state system, solve, apply the
/// mask, extract structured parameters.
pub fn synthesize_gains(cfg: &NoiseConfig, mask: &GainMask) -> Result<TuneResult, RiccatiError> {
    let sys = build_discrete_system(cfg)?;
    let sol = solve_dare(&sys, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let gain = GainMatrix::with_mask(sol.gain, mask.clone());
    let structured = gain.structured();
    Ok(TuneResult {
        gain,
        structured,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}
