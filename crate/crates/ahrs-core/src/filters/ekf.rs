//! Additive-error EKF baseline on the raw quaternion/bias state.
//!
//! Deliberately textbook: 7 states (4 quaternion + 3 bias) with a linear
//! additive state error, analytic Jacobians, additive output error
//! `y - ŷ`, and the quaternion norm constraint handled only by
//! renormalization after the update.

use nalgebra::{SMatrix, SVector};

use crate::error::FilterError;
use crate::filters::{AttitudeFilter, FilterKind, GainSnapshot, StepOutput};
use crate::models::{AttState, ImuSample, NoiseConfig, OutputError};
use crate::so3::{skew, Mat3, Mat6, Quat, Vec3};

type Mat7 = SMatrix<f64, 7, 7>;
type Mat7x6 = SMatrix<f64, 7, 6>;
type Mat6x7 = SMatrix<f64, 6, 7>;
type Mat4x3 = SMatrix<f64, 4, 3>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat3x4 = SMatrix<f64, 3, 4>;
type Vec7 = SVector<f64, 7>;

/// Right-multiplication matrix: `q*(0,w) = R_right(w) · q` for q as the
/// column (w-scalar, x, y, z).
fn right_mul_matrix(w: Vec3) -> Mat4 {
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<1, 3>(0, 1).copy_from(&(-w.transpose()));
    m.fixed_view_mut::<3, 1>(1, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(&(-skew(w)));
    m
}

/// Derivative of `q*(0,w)` with respect to w: rows (-vᵀ; aI + [v]×).
fn pure_mul_jacobian(q: &Quat) -> Mat4x3 {
    let v = q.vector();
    let mut m = Mat4x3::zeros();
    m.fixed_view_mut::<1, 3>(0, 0).copy_from(&(-v.transpose()));
    m.fixed_view_mut::<3, 3>(1, 0)
        .copy_from(&(Mat3::identity() * q.w + skew(v)));
    m
}

/// Derivative of `R(q)ᵀ u` with respect to the quaternion components, using
/// `R(q)ᵀu = (w² - |v|²)u + 2(v·u)v - 2w(v × u)`.
fn jac_rot_inv(q: &Quat, u: Vec3) -> Mat3x4 {
    let v = q.vector();
    let w = q.w;
    let mut m = Mat3x4::zeros();
    m.column_mut(0)
        .copy_from(&(2.0 * w * u - 2.0 * v.cross(&u)));
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        let col = -2.0 * v[i] * u + 2.0 * (u[i] * v + v.dot(&u) * e) - 2.0 * w * e.cross(&u);
        m.column_mut(i + 1).copy_from(&col);
    }
    m
}

pub struct AdditiveEkf {
    cfg: NoiseConfig,
    state: AttState,
    p: Mat7,
}

impl AdditiveEkf {
    pub fn new(cfg: NoiseConfig) -> Self {
        AdditiveEkf {
            cfg,
            state: AttState::identity(),
            p: Mat7::identity(),
        }
    }

    pub fn covariance(&self) -> &Mat7 {
        &self.p
    }

    fn measurement(&self, q: &Quat) -> (Vec3, Vec3) {
        // Evaluated with the raw (possibly slightly non-unit) quaternion via
        // the quadratic rotation formula, matching the Jacobian.
        let v = q.vector();
        let w = q.w;
        let rot_inv =
            |u: Vec3| (w * w - v.norm_squared()) * u + 2.0 * v.dot(&u) * v - 2.0 * w * v.cross(&u);
        (-rot_inv(self.cfg.gravity_ref), rot_inv(self.cfg.mag_ref))
    }
}

impl AttitudeFilter for AdditiveEkf {
    fn kind(&self) -> FilterKind {
        FilterKind::Ekf
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

        // Measurement update at the sample time with the additive residual.
        let q_prior = self.state.q;
        let (ya_hat, yb_hat) = self.measurement(&q_prior);
        let mut h = Mat6x7::zeros();
        h.fixed_view_mut::<3, 4>(0, 0)
            .copy_from(&(-jac_rot_inv(&q_prior, self.cfg.gravity_ref)));
        h.fixed_view_mut::<3, 4>(3, 0)
            .copy_from(&jac_rot_inv(&q_prior, self.cfg.mag_ref));

        let nu_a = sample.accel - ya_hat;
        let nu_b = sample.mag - yb_hat;
        let nu = crate::so3::Vec6::new(nu_a.x, nu_a.y, nu_a.z, nu_b.x, nu_b.y, nu_b.z);

        let s = h * self.p * h.transpose() + self.cfg.measurement_cov;
        let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation)?;
        let k = self.p * h.transpose() * s_inv;
        let dx: Vec7 = k * nu;

        let q_corr = Quat::new(
            q_prior.w + dx[0],
            q_prior.x + dx[1],
            q_prior.y + dx[2],
            q_prior.z + dx[3],
        );
        if !crate::filters::quat_norm_usable(&q_corr) {
            return Err(FilterError::NonFiniteState { t: sample.t });
        }
        let corrected = AttState {
            q: q_corr.normalized(),
            gyro_bias: self.state.gyro_bias + Vec3::new(dx[4], dx[5], dx[6]),
        };
        if !corrected.is_finite() {
            return Err(FilterError::NonFiniteState { t: sample.t });
        }
        let p_post = (Mat7::identity() - k * h) * self.p;
        let p_post = (p_post + p_post.transpose()) * 0.5;

        // Time update to the next sample.
        let q = corrected.q;
        let w_eff = sample.gyro - corrected.gyro_bias;
        let qdot = q.mul(&Quat::from_vector(w_eff)).scale(0.5);
        let q_next = q.add(&qdot.scale(dt));
        if !q_next.is_finite() || !q_next.norm().is_finite() {
            return Err(FilterError::NonFiniteState { t: sample.t });
        }
        self.state = AttState {
            q: q_next,
            gyro_bias: corrected.gyro_bias,
        };

        let mut f_c = Mat7::zeros();
        f_c.fixed_view_mut::<4, 4>(0, 0)
            .copy_from(&(right_mul_matrix(w_eff) * 0.5));
        f_c.fixed_view_mut::<4, 3>(0, 4)
            .copy_from(&(pure_mul_jacobian(&q) * -0.5));
        let f_d = Mat7::identity() + f_c * dt;

        let mut g = Mat7x6::zeros();
        g.fixed_view_mut::<4, 3>(0, 0)
            .copy_from(&(pure_mul_jacobian(&q) * 0.5));
        g.fixed_view_mut::<3, 3>(4, 3).copy_from(&Mat3::identity());
        let q_d = g * self.cfg.process_cov * g.transpose() * dt * dt;
        self.p = f_d * p_post * f_d.transpose() + q_d;

        Ok(StepOutput {
            state: corrected,
            // For the additive filter the output error is the raw residual.
            error: OutputError {
                grav: nu_a,
                mag: nu_b,
            },
            gain: GainSnapshot::None,
            euler: corrected.q.to_euler(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_quat(rng: &mut impl Rng) -> Quat {
        Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalized()
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        for _ in 0..50 {
            let q = random_unit_quat(&mut rng);
            let u = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let jac = jac_rot_inv(&q, u);
            let f = |q: &Quat| {
                let v = q.vector();
                let w = q.w;
                (w * w - v.norm_squared()) * u + 2.0 * v.dot(&u) * v - 2.0 * w * v.cross(&u)
            };
            for i in 0..4 {
                let mut plus = [q.w, q.x, q.y, q.z];
                let mut minus = plus;
                plus[i] += h;
                minus[i] -= h;
                let qp = Quat::new(plus[0], plus[1], plus[2], plus[3]);
                let qm = Quat::new(minus[0], minus[1], minus[2], minus[3]);
                let fd = (f(&qp) - f(&qm)) / (2.0 * h);
                let col = jac.column(i).into_owned();
                assert!(
                    (fd - col).norm() <= 1e-6 * (1.0 + col.norm()),
                    "column {i}: fd {fd:?} vs analytic {col:?}"
                );
            }
        }
    }

    #[test]
    fn dynamics_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = 1e-6;
        for _ in 0..50 {
            let q = random_unit_quat(&mut rng);
            let w = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            // d(q*(0,w))/dq against right_mul_matrix.
            let rm = right_mul_matrix(w);
            for i in 0..4 {
                let mut plus = [q.w, q.x, q.y, q.z];
                let mut minus = plus;
                plus[i] += h;
                minus[i] -= h;
                let qp = Quat::new(plus[0], plus[1], plus[2], plus[3]);
                let qm = Quat::new(minus[0], minus[1], minus[2], minus[3]);
                let pd = qp.mul(&Quat::from_vector(w));
                let md = qm.mul(&Quat::from_vector(w));
                let fd = pd.add(&md.scale(-1.0)).scale(1.0 / (2.0 * h));
                let col = rm.column(i);
                assert_relative_eq!(fd.w, col[0], epsilon = 1e-6);
                assert_relative_eq!(fd.x, col[1], epsilon = 1e-6);
                assert_relative_eq!(fd.y, col[2], epsilon = 1e-6);
                assert_relative_eq!(fd.z, col[3], epsilon = 1e-6);
            }
            // d(q*(0,w))/dw against pure_mul_jacobian.
            let pj = pure_mul_jacobian(&q);
            for i in 0..3 {
                let mut wp = w;
                let mut wm = w;
                wp[i] += h;
                wm[i] -= h;
                let pd = q.mul(&Quat::from_vector(wp));
                let md = q.mul(&Quat::from_vector(wm));
                let fd = pd.add(&md.scale(-1.0)).scale(1.0 / (2.0 * h));
                let col = pj.column(i);
                assert_relative_eq!(fd.w, col[0], epsilon = 1e-6);
                assert_relative_eq!(fd.x, col[1], epsilon = 1e-6);
                assert_relative_eq!(fd.y, col[2], epsilon = 1e-6);
                assert_relative_eq!(fd.z, col[3], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn perfect_init_zero_noise_gives_zero_innovation() {
        let cfg = NoiseConfig {
            process_cov: Mat6::zeros(),
            measurement_cov: Mat6::identity() * 1e-9,
            ..NoiseConfig::default()
        };
        let mut f = AdditiveEkf::new(cfg.clone());
        let q = Quat::from_euler(0.4, -0.2, 1.0);
        f.set_state(AttState::new(q, Vec3::zeros()));
        let s = ImuSample::new(
            0.0,
            Vec3::zeros(),
            -q.rotate_inv(cfg.gravity_ref),
            q.rotate_inv(cfg.mag_ref),
        );
        let out = f.step(&s).unwrap();
        assert!(out.error.grav.norm() < 1e-9);
        assert!(out.error.mag.norm() < 1e-9);
        assert!(out.state.q.mul(&q.conjugate()).vector().norm() < 1e-9);
    }

    #[test]
    fn converges_from_moderate_error_under_noise_free_measurements() {
        let cfg = NoiseConfig::default();
        let mut f = AdditiveEkf::new(cfg.clone());
        let q_true = Quat::from_euler(0.1, 0.2, -0.4);
        f.set_state(AttState::new(Quat::IDENTITY, Vec3::zeros()));
        let mut t = 0.0;
        while t < 20.0 {
            let s = ImuSample::new(
                t,
                Vec3::zeros(),
                -q_true.rotate_inv(cfg.gravity_ref),
                q_true.rotate_inv(cfg.mag_ref),
            );
            f.step(&s).unwrap();
            t += cfg.dt;
        }
        let err = f.state().q.mul(&q_true.conjugate()).angle();
        assert!(err < 1e-3, "EKF did not converge: {err} rad");
    }
}
