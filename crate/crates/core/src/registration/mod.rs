//! Rigid registration by mutual-information maximization.
//!
//! MI comes from a hard-binned joint histogram of the fixed image against
//! the trilinearly resampled moving image. The six rigid parameters are
//! searched with Nelder-Mead, restarted until it stops improving, over a
//! two-level pyramid of lightly smoothed images, then polished at full
//! resolution with half the smoothing.

mod mi;
mod motion;
mod transform;

pub use mi::{joint_histogram, mutual_information, register_rigid, JointHistogram, MiConfig, Registration, MIN_OVERLAP};
pub use motion::{motion_correct, MotionCorrection, MIN_REGISTERED_DURATION_MIN};
pub use transform::RigidTransform;
