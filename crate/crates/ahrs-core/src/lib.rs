//! Attitude and heading estimation toolkit built around invariant filtering
//! on the rotation group.
//!
//! The crate provides:
//!
//! - [`so3`]: quaternion and rotation-matrix algebra (Hamilton products,
//!   vector rotation, skew operators, Euler extraction),
//! - [`models`]: the gyro/accelerometer/magnetometer system model, noise
//!   configuration and the left/right invariant output errors,
//! - [`sim`]: a trajectory and sensor simulator with gyro bias random walk,
//! - [`riccati`]: a discrete algebraic Riccati solver and the noise-driven
//!   gain synthesis used to tune the constant-gain filters,
//! - [`filters`]: the filter bank (NCF, LIEKF*, RIEKF*, RINCF, RINCF2,
//!   additive EKF, SVD snapshot solver) behind one step interface,
//! - [`metrics`]: ground-truth comparison, gain-trace and stability analysis,
//! - [`logcsv`]: the canonical CSV log and estimate schemas,
//! - [`selftest`]: the named property-check suite behind `selftest`.

pub mod error;
pub mod filters;
pub mod logcsv;
pub mod metrics;
pub mod models;
pub mod riccati;
pub mod runner;
pub mod selftest;
pub mod sim;
pub mod so3;

pub use error::{FilterError, MetricsError, ModelError, RiccatiError, SimError};
pub use so3::{skew, EulerAngles, Mat3, Mat6, Quat, Vec3, Vec6};
