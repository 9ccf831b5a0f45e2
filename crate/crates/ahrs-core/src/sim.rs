//! Trajectory and sensor simulation.
//!
//! Ground-truth attitude is integrated with RK4 on `q̇ = ½ q*(0, ω(t))` so the
//! truth is far more accurate than the Euler-discretized filters under test.
//! Sensor synthesis uses the sample-and-hold convention that matches the
//! discrete gain design `Q_d = M·Q·Mᵀ·dt²`: every noise draw has per-sample
//! covariance taken directly from the configured Q and R blocks, and the
//! bias random walk integrates its draw over one step
//! (`b ← b + n·dt`, `n ~ N(0, Q_b)`). A filter tuned from the same config is
//! therefore tuned for exactly the noise the simulator injects.
//!
//! All randomness comes from ChaCha8 streams seeded by `SimRun::seed`, so a
//! run is reproducible bit-for-bit.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::models::{ImuSample, NoiseConfig};
use crate::so3::{quat_rate, Quat, Vec3};

/// Per-axis sinusoid `amplitude · sin(2π·frequency·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSinusoid {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

impl AxisSinusoid {
    pub fn new(amplitude: f64, frequency_hz: f64, phase: f64) -> Self {
        AxisSinusoid {
            amplitude,
            frequency_hz,
            phase,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * self.frequency_hz * t + self.phase).sin()
    }
}

/// Angular-velocity profile: the three built-in low/medium/high velocity
/// cases, or a custom sinusoid triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryCase {
    Case1,
    Case2,
    Case3,
    Custom([AxisSinusoid; 3]),
}

impl TrajectoryCase {
    pub fn from_id(id: u8) -> Result<Self, SimError> {
        match id {
            1 => Ok(TrajectoryCase::Case1),
            2 => Ok(TrajectoryCase::Case2),
            3 => Ok(TrajectoryCase::Case3),
            other => Err(SimError::InvalidRun(format!(
                "unknown trajectory case {other}"
            ))),
        }
    }

    fn sinusoids(&self) -> [AxisSinusoid; 3] {
        use std::f64::consts::PI;
        match self {
            TrajectoryCase::Case1 => [
                AxisSinusoid::new(PI / 3.0, 0.7, PI / 3.0),
                AxisSinusoid::new(PI / 3.0, 0.2, PI),
                AxisSinusoid::new(PI / 3.0, 0.4, 0.0),
            ],
            TrajectoryCase::Case2 => [
                AxisSinusoid::new(PI, 0.7, 0.0),
                AxisSinusoid::new(PI, 0.02, PI),
                AxisSinusoid::new(PI, 0.04, PI / 3.0),
            ],
            TrajectoryCase::Case3 => [
                AxisSinusoid::new(5.0 * PI / 3.0, 0.07, PI / 3.0),
                AxisSinusoid::new(5.0 * PI / 3.0, 0.02, PI),
                AxisSinusoid::new(5.0 * PI / 3.0, 0.04, 0.0),
            ],
            TrajectoryCase::Custom(s) => *s,
        }
    }

    /// Angular rate ω(t), rad/s.
    pub fn angular_rate(&self, t: f64) -> Vec3 {
        let s = self.sinusoids();
        Vec3::new(s[0].eval(t), s[1].eval(t), s[2].eval(t))
    }

    /// Largest per-axis amplitude; used as ω_max for velocity-scheduled gains.
    pub fn peak_rate(&self) -> f64 {
        self.sinusoids()
            .iter()
            .map(|s| s.amplitude.abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.sinusoids().iter().any(|s| s.frequency_hz < 0.0) {
            return Err(SimError::InvalidRun("negative sinusoid frequency".into()));
        }
        Ok(())
    }
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub initial_q: Quat,
    pub initial_bias: Vec3,
    pub cfg: NoiseConfig,
}

impl SimRun {
    pub fn new(duration: f64, seed: u64, cfg: NoiseConfig) -> Self {
        SimRun {
            duration,
            dt: cfg.dt,
            seed,
            initial_q: Quat::IDENTITY,
            initial_bias: Vec3::zeros(),
            cfg,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.duration > self.dt) {
            return Err(SimError::InvalidRun(format!(
                "need duration > dt > 0, got duration {} dt {}",
                self.duration, self.dt
            )));
        }
        Ok(())
    }

    /// Number of records including t = 0.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).floor() as usize + 1
    }
}

/// Ground truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub q_true: Quat,
    pub omega_true: Vec3,
    pub bias_true: Vec3,
}

// Distinct ChaCha streams keep bias-walk and measurement noise independent of
// call order while staying tied to one seed.
const STREAM_BIAS_WALK: u64 = 0;
const STREAM_MEASUREMENT: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws from N(0, cov) via symmetric eigendecomposition, which also covers
/// singular PSD covariances.
struct GaussianSampler {
    transform: Matrix3<f64>,
}

impl GaussianSampler {
    fn new(cov: &Matrix3<f64>) -> Self {
        let eig = SymmetricEigen::new(*cov);
        let mut scaled = eig.eigenvectors;
        for (i, val) in eig.eigenvalues.iter().enumerate() {
            let s = val.max(0.0).sqrt();
            scaled.column_mut(i).scale_mut(s);
        }
        GaussianSampler { transform: scaled }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        let z = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        self.transform * z
    }
}

/// Integrates the noiseless attitude kinematics with RK4 and advances the
/// gyro bias by its random walk.
pub fn integrate_truth(case: &TrajectoryCase, run: &SimRun) -> Result<Vec<TruthRecord>, SimError> {
    run.validate()?;
    case.validate()?;

    let mut rng = stream_rng(run.seed, STREAM_BIAS_WALK);
    let walk = GaussianSampler::new(&run.cfg.bias_walk_cov());

    let dt = run.dt;
    let mut q = run.initial_q.normalized();
    let mut bias = run.initial_bias;
    let steps = run.steps();
    let mut out = Vec::with_capacity(steps);

    for k in 0..steps {
        let t = k as f64 * dt;
        out.push(TruthRecord {
            t,
            q_true: q,
            omega_true: case.angular_rate(t),
            bias_true: bias,
        });

        // RK4 on q̇ = ½ q*(0, ω(t)).
        let k1 = quat_rate(&q, case.angular_rate(t));
        let k2 = quat_rate(&q.add(&k1.scale(dt / 2.0)), case.angular_rate(t + dt / 2.0));
        let k3 = quat_rate(&q.add(&k2.scale(dt / 2.0)), case.angular_rate(t + dt / 2.0));
        let k4 = quat_rate(&q.add(&k3.scale(dt)), case.angular_rate(t + dt));
        let incr = k1
            .add(&k2.scale(2.0))
            .add(&k3.scale(2.0))
            .add(&k4)
            .scale(dt / 6.0);
        q = q.add(&incr);
        if !q.is_finite() || q.norm() == 0.0 {
            return Err(SimError::NonFiniteState { t });
        }
        q = q.normalized();

        // Random walk: b(t+dt) = b(t) + n·dt with n ~ N(0, Q_b) per sample.
        bias += walk.sample(&mut rng) * dt;
    }
    Ok(out)
}

/// Synthesizes noisy gyro/accelerometer/magnetometer measurements for a
/// truth sequence.
pub fn synthesize_measurements(truth: &[TruthRecord], run: &SimRun) -> Vec<ImuSample> {
    let mut rng = stream_rng(run.seed, STREAM_MEASUREMENT);
    let gyro_noise = GaussianSampler::new(&run.cfg.gyro_noise_cov());
    let accel_noise = GaussianSampler::new(&run.cfg.accel_noise_cov());
    let mag_noise = GaussianSampler::new(&run.cfg.mag_noise_cov());

    truth
        .iter()
        .map(|rec| {
            let gyro = rec.omega_true + rec.bias_true + gyro_noise.sample(&mut rng);
            let accel = -rec.q_true.rotate_inv(run.cfg.gravity_ref) + accel_noise.sample(&mut rng);
            let mag = rec.q_true.rotate_inv(run.cfg.mag_ref) + mag_noise.sample(&mut rng);
            ImuSample::new(rec.t, gyro, accel, mag)
        })
        .collect()
}

/// Convenience wrapper: truth plus measurements in one call.
pub fn simulate(
    case: &TrajectoryCase,
    run: &SimRun,
) -> Result<(Vec<TruthRecord>, Vec<ImuSample>), SimError> {
    let truth = integrate_truth(case, run)?;
    let samples = synthesize_measurements(&truth, run);
    Ok((truth, samples))
}

/// A noise-free configuration (zero Q and R) with the same references.
pub fn noiseless_config(base: &NoiseConfig) -> NoiseConfig {
    NoiseConfig {
        process_cov: crate::so3::Mat6::zeros(),
        measurement_cov: crate::so3::Mat6::identity() * 1e-12,
        ..base.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn zero_noise_run(duration: f64, dt: f64) -> SimRun {
        let cfg = NoiseConfig {
            process_cov: crate::so3::Mat6::zeros(),
            dt,
            ..Default::default()
        };
        let mut run = SimRun::new(duration, 7, cfg);
        run.dt = dt;
        run
    }

    #[test]
    fn case1_profile_at_zero() {
        let w = TrajectoryCase::Case1.angular_rate(0.0);
        assert_relative_eq!(w.x, PI / 3.0 * (PI / 3.0).sin(), epsilon = 1e-12);
        assert_relative_eq!(w.x, 0.90690, epsilon = 1e-5);
        assert!(w.y.abs() < 1e-12);
        assert_eq!(w.z, 0.0);
    }

    #[test]
    fn case2_profile_at_zero() {
        let w = TrajectoryCase::Case2.angular_rate(0.0);
        assert_eq!(w.x, 0.0);
        assert!(w.y.abs() < 1e-12);
        assert_relative_eq!(w.z, PI * (PI / 3.0).sin(), epsilon = 1e-12);
        assert_relative_eq!(w.z, 2.7207, epsilon = 1e-4);
    }

    #[test]
    fn case3_peak_rate() {
        assert_relative_eq!(
            TrajectoryCase::Case3.peak_rate(),
            5.0 * PI / 3.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(TrajectoryCase::Case3.peak_rate(), 5.236, epsilon = 1e-3);
    }

    #[test]
    fn zero_rate_keeps_attitude_constant() {
        let profile = TrajectoryCase::Custom([AxisSinusoid::new(0.0, 0.0, 0.0); 3]);
        let run = zero_noise_run(1.0, 0.005);
        let truth = integrate_truth(&profile, &run).unwrap();
        for rec in &truth {
            assert!(rec.q_true.mul(&run.initial_q.conjugate()).angle() < 1e-15);
        }
    }

    #[test]
    fn constant_rate_matches_axis_angle_oracle() {
        // ω = (0,0,1) rad/s for π seconds is a π yaw.
        let profile = TrajectoryCase::Custom([
            AxisSinusoid::new(0.0, 0.0, 0.0),
            AxisSinusoid::new(0.0, 0.0, 0.0),
            AxisSinusoid::new(1.0, 0.0, PI / 2.0), // sin(x + π/2) = cos ≡ 1 at f = 0
        ]);
        let run = zero_noise_run(PI, 0.001);
        let truth = integrate_truth(&profile, &run).unwrap();
        let last = truth.last().unwrap();
        let expected = Quat::from_axis_angle(Vec3::z(), last.t);
        assert!(last.q_true.mul(&expected.conjugate()).angle() < 1e-6);
    }

    #[test]
    fn rk4_truth_converges_at_fourth_order() {
        let case = TrajectoryCase::Case1;
        let reference = {
            let run = zero_noise_run(2.0, 0.000125);
            integrate_truth(&case, &run).unwrap().last().unwrap().q_true
        };
        let err_at = |dt: f64| {
            let run = zero_noise_run(2.0, dt);
            let q = integrate_truth(&case, &run).unwrap().last().unwrap().q_true;
            2.0 * q.mul(&reference.conjugate()).vector().norm()
        };
        let e1 = err_at(0.02);
        let e2 = err_at(0.01);
        let ratio = e1 / e2;
        assert!(
            (8.0..32.0).contains(&ratio),
            "halving dt should shrink error ~16x, got {ratio} ({e1} -> {e2})"
        );
    }

    #[test]
    fn noiseless_synthesis_matches_models_exactly() {
        let run = zero_noise_run(0.5, 0.005);
        let mut cfg = run.cfg.clone();
        cfg.measurement_cov = crate::so3::Mat6::zeros();
        let run = SimRun { cfg, ..run };
        let (truth, samples) = simulate(&TrajectoryCase::Case1, &run).unwrap();
        for (rec, s) in truth.iter().zip(&samples) {
            assert_eq!(s.gyro, rec.omega_true + rec.bias_true);
            assert!((s.accel + rec.q_true.rotate_inv(run.cfg.gravity_ref)).norm() < 1e-15);
            assert!((s.mag - rec.q_true.rotate_inv(run.cfg.mag_ref)).norm() < 1e-15);
        }
        // Identity attitude at t = 0.
        assert!((samples[0].accel - Vec3::new(0.0, 0.0, -9.81)).norm() < 1e-15);
        assert!((samples[0].mag - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = NoiseConfig::default();
        let run = SimRun::new(1.0, 12345, cfg);
        let (t1, s1) = simulate(&TrajectoryCase::Case2, &run).unwrap();
        let (t2, s2) = simulate(&TrajectoryCase::Case2, &run).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1, s2);

        let run3 = SimRun { seed: 54321, ..run };
        let (_, s3) = simulate(&TrajectoryCase::Case2, &run3).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn measurement_noise_variance_matches_config() {
        // Sample variance over 1e5 draws matches the accelerometer block of R
        // within 5%.
        let cfg = NoiseConfig::default();
        let mut run = SimRun::new(500.0, 99, cfg);
        run.dt = 0.005;
        let profile = TrajectoryCase::Custom([AxisSinusoid::new(0.0, 0.0, 0.0); 3]);
        let truth = integrate_truth(&profile, &run).unwrap();
        let samples = synthesize_measurements(&truth, &run);
        assert!(samples.len() >= 100_000);

        let expected = Vec3::new(0.0, 0.0, -9.81);
        for axis in 0..3 {
            let vals: Vec<f64> = samples
                .iter()
                .map(|s| s.accel[axis] - expected[axis])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
            assert_relative_eq!(var, 0.3, max_relative = 0.05);
        }
    }

    #[test]
    fn random_walk_variance_matches_discrete_model() {
        // Under the sample-and-hold convention the bias walk accumulates
        // variance Q_b·dt²·N = Q_b·dt·T over a run of length T.
        let spread = |dt: f64| {
            let mut acc = 0.0;
            for seed in 0..300 {
                let cfg = NoiseConfig::default();
                let mut run = SimRun::new(4.0, seed, cfg);
                run.dt = dt;
                let profile = TrajectoryCase::Custom([AxisSinusoid::new(0.0, 0.0, 0.0); 3]);
                let truth = integrate_truth(&profile, &run).unwrap();
                let b = truth.last().unwrap().bias_true;
                acc += b.x * b.x;
            }
            acc / 300.0
        };
        for dt in [0.01, 0.005] {
            let expected = 0.1 * dt * 4.0;
            assert_relative_eq!(spread(dt), expected, max_relative = 0.25);
        }
    }

    #[test]
    fn gyro_noise_variance_matches_config() {
        // Per-sample gyro noise variance equals the Q block directly.
        let cfg = NoiseConfig {
            process_cov: {
                let mut q = crate::so3::Mat6::identity() * 0.1;
                // Keep the walk out of the measurement to isolate the white
                // part.
                for i in 3..6 {
                    q[(i, i)] = 0.0;
                }
                q
            },
            ..NoiseConfig::default()
        };
        let mut run = SimRun::new(500.0, 17, cfg);
        run.dt = 0.005;
        let profile = TrajectoryCase::Custom([AxisSinusoid::new(0.0, 0.0, 0.0); 3]);
        let truth = integrate_truth(&profile, &run).unwrap();
        let samples = synthesize_measurements(&truth, &run);
        let vals: Vec<f64> = samples.iter().map(|s| s.gyro.x).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        assert_relative_eq!(var, 0.1, max_relative = 0.05);
    }

    #[test]
    fn run_validation() {
        let cfg = NoiseConfig::default();
        let mut run = SimRun::new(1.0, 0, cfg);
        run.dt = 0.0;
        assert!(run.validate().is_err());
        assert!(TrajectoryCase::from_id(4).is_err());
        assert!(TrajectoryCase::from_id(2).is_ok());
    }

    #[test]
    fn row_count_arithmetic() {
        let cfg = NoiseConfig::default();
        let run = SimRun::new(30.0, 7, cfg);
        assert_eq!(run.steps(), 6001);
    }
}
