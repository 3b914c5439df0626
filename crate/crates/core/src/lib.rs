//! Screw-theory kinematics and singularity-robust inverse kinematics for
//! serial manipulators.
//!
//! The crate provides:
//!
//! - [`liegroup`]: exact SE(3)/se(3) numerics (hat/vee, exp/log, adjoint,
//!   Lie bracket, pose differences),
//! - [`kinematics`]: product-of-exponentials robot models, forward
//!   kinematics and the geometric Jacobian in the end-effector frame,
//! - [`pinv`]: SVD-backed pseudoinverse machinery (Moore–Penrose, damped,
//!   weighted) with kernel diagnostics,
//! - [`tangent`]: singular-motion bases, transversal projectors,
//!   Lie-bracket Jacobian differentials and the bracket closure order,
//! - [`solver`]: the iterative velocity-IK solver, including the variant
//!   that escapes singular start configurations by a regularizing joint
//!   perturbation transversal to all singular motions,
//! - [`model`]: a plain-text robot model file format plus the built-in
//!   `planar3r` and `iiwa14` models,
//! - [`experiments`]: scenario definitions, a deterministic seeded
//!   perturbation sweep and CSV convergence-trace output.
//!
//! All core math is generic over the scalar type through [`Real`];
//! concrete `f64` aliases are exported at the crate root.
//!
//! # Example
//!
//! Escaping a lock-up at the stretched singularity of the built-in 7R arm:
//!
//! ```
//! use aiik::kinematics::{forward_kinematics, JointConfig};
//! use aiik::liegroup::Pose;
//! use aiik::model::builtin;
//! use aiik::solver::{solve, solve_ai_ik, SolveStatus, SolverConfig};
//! use nalgebra::{DVector, Matrix3, Vector3};
//!
//! let arm = builtin::iiwa14::<f64>();
//! let q0 = JointConfig::zeros(7);
//!
//! // target displaced in the x-z plane of the end-effector frame: the
//! // commanded error lies in the left kernel of the Jacobian at q0
//! let c0 = forward_kinematics(&arm.model, &q0)?;
//! let c_d = c0 * Pose::from_parts_unchecked(
//!     Matrix3::identity(),
//!     Vector3::new(0.01, 0.0, -0.01),
//! );
//!
//! let config = SolverConfig::default();
//! let stuck = solve(&arm.model, &q0, &c_d, &config)?;
//! assert_eq!(stuck.status, SolveStatus::LockedUp);
//!
//! // the regularizing perturbation transversal to the singular motions
//! // escapes the lock-up
//! let basis = arm.singular_basis("stretch").unwrap();
//! let epsilon = DVector::from_element(7, 1e-3);
//! let solved = solve_ai_ik(&arm.model, &q0, &c_d, basis, &epsilon, &config)?;
//! assert_eq!(solved.status, SolveStatus::Converged);
//! # Ok::<(), aiik::solver::SolverError>(())
//! ```

pub mod experiments;
pub mod kinematics;
pub mod liegroup;
pub mod model;
pub mod pinv;
pub mod solver;
pub mod tangent;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar for all kinematics numerics: `f32` or `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy {}
impl<T: RealField + FromPrimitive + ToPrimitive + Copy> Real for T {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics only if the target type cannot represent finite `f64` values at
/// all, which none of the supported scalars do.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant must be representable")
}

/// Serializes a float with 17 significant digits, enough for bit-exact
/// round-trips through text.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub use kinematics::{JointConfig, RobotModel};
pub use liegroup::{ErrorMode, Pose, Twist};
pub use pinv::{InverseKind, SvdFactors};
pub use solver::{ConvergenceTrace, SolveOutcome, SolveStatus, SolverConfig};
pub use tangent::{Perturbation, SingularBasis};

/// `f64` twist.
pub type Twist64 = Twist<f64>;
/// `f64` pose.
pub type Pose64 = Pose<f64>;
/// `f64` joint configuration.
pub type JointConfig64 = JointConfig<f64>;
/// `f64` robot model.
pub type RobotModel64 = RobotModel<f64>;
/// `f64` singular-motion basis.
pub type SingularBasis64 = SingularBasis<f64>;
/// `f64` solver configuration.
pub type SolverConfig64 = SolverConfig<f64>;
