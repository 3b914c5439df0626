//! Iterative velocity-IK solver with pluggable generalized inverse,
//! lock-up detection, an optional null-space task, and full per-iteration
//! tracing.
//!
//! One iteration maps the pose error `ΔC = C⁻¹C_d` to a twist, restricts it
//! to the task rows, and applies the configured inverse of the task
//! Jacobian: `Δq = J⁺(q) · e`. The solver that escapes singular start
//! configurations replaces the first iteration step by a regularizing joint
//! increment transversal to the catalogued singular motions.

use crate::kinematics::{
    forward_kinematics, geometric_jacobian, JointConfig, KinematicsError, RobotModel,
    DEFAULT_RANK_TOL,
};
use crate::liegroup::{pose_error, ErrorMode, LieGroupError, Pose, Twist};
use crate::pinv::{pseudoinverse, InverseKind, PinvError, SvdFactors};
use crate::tangent::{prolonged_jacobian, regularizing_perturbation, SingularBasis, TangentError};
use crate::{real, Real};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("start configuration differs from the catalogued singular configuration")]
    StartNotSingular,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Lie(#[from] LieGroupError),
    #[error(transparent)]
    Pinv(#[from] PinvError),
    #[error(transparent)]
    Tangent(#[from] TangentError),
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T: Real> {
    /// Generalized inverse applied to the task Jacobian.
    pub inverse: InverseKind<T>,
    /// How the pose difference is mapped to an error twist.
    pub error_mode: ErrorMode,
    /// Stop threshold on the task error norm.
    pub tol: T,
    /// Iteration budget (number of steps).
    pub max_iters: usize,
    /// Fraction of the computed step that is applied, in (0, 1].
    pub step_scale: T,
    /// Step norm below which an unconverged iteration counts as locked.
    pub lockup_step_tol: T,
    /// Optional secondary-objective gradient, applied through the null-space
    /// projector `(I − J⁺J)`.
    pub nullspace_gradient: Option<DVector<T>>,
    /// When set, iteration continues to the full budget even after
    /// convergence or lock-up, so traces cover the whole horizon. The
    /// status is classified from the completed trace.
    pub trace_full_horizon: bool,
    /// When set, the first step of the regularized solve uses the
    /// bracket-prolonged Jacobian of this order instead of the exact
    /// Jacobian at the perturbed configuration.
    pub prolonged_first_order: Option<usize>,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(inverse: InverseKind<T>) -> Self {
        Self {
            inverse,
            error_mode: ErrorMode::Log,
            tol: real(1e-10),
            max_iters: 100,
            step_scale: T::one(),
            lockup_step_tol: real(1e-14),
            nullspace_gradient: None,
            trace_full_horizon: false,
            prolonged_first_order: None,
        }
    }
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self::new(InverseKind::pseudo_inverse_default())
    }
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Final task error at or below the configured tolerance.
    Converged,
    /// Budget exhausted while still making progress.
    MaxIters,
    /// Steps vanished while the error stayed above tolerance: the commanded
    /// error lies in the left kernel of the Jacobian.
    LockedUp,
    /// Non-finite values, a pose-error logarithm at angle π, or a
    /// state-dependent inverse failure.
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::LockedUp => "locked-up",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// One row of a convergence trace. `step_norm` is the norm of the step
/// applied to leave this state; the terminal record carries zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub iter: usize,
    pub error_norm: T,
    pub step_norm: T,
    pub jacobian_rank: usize,
    pub sigma_min: T,
    pub q: DVector<T>,
}

/// Per-iteration records, contiguous from iteration 0 (the initial state).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace<T: Real> {
    pub records: Vec<IterationRecord<T>>,
}

impl<T: Real> ConvergenceTrace<T> {
    pub fn final_error(&self) -> T {
        self.records.last().map_or_else(T::zero, |r| r.error_norm)
    }

    /// First iteration index whose error is at or below `threshold`.
    pub fn first_iteration_at_or_below(&self, threshold: T) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.error_norm <= threshold)
            .map(|r| r.iter)
    }

    /// Number of steps taken (records minus the initial state).
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Result of a solve: status, final configuration, and the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T: Real> {
    pub status: SolveStatus,
    pub q_final: JointConfig<T>,
    pub trace: ConvergenceTrace<T>,
}

/// A single IK update at `q`: the scaled inverse-Jacobian step and the full
/// 6-component error twist it was computed from.
pub fn ik_step<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    c_d: &Pose<T>,
    config: &SolverConfig<T>,
) -> Result<(DVector<T>, Twist<T>), SolverError> {
    let c = forward_kinematics(model, q)?;
    let e6 = pose_error(&c, c_d, config.error_mode)?;
    let j = geometric_jacobian(model, q)?;
    let dq = step_from(model, &j, &e6, config)?;
    Ok((dq, e6))
}

fn step_from<T: Real>(
    model: &RobotModel<T>,
    j_task: &DMatrix<T>,
    e6: &Twist<T>,
    config: &SolverConfig<T>,
) -> Result<DVector<T>, SolverError> {
    let e_task = model.select_task_rows(e6);
    let inv = config.inverse.apply(j_task)?;
    let mut dq = inv * e_task * config.step_scale;
    if let Some(g) = &config.nullspace_gradient {
        // null-space complement through the Moore–Penrose inverse, so the
        // task-space update is untouched: J(I − J⁺J)g = 0
        let jp = pseudoinverse(j_task, real(crate::pinv::DEFAULT_SVD_TOL));
        let n = j_task.ncols();
        let proj = DMatrix::identity(n, n) - &jp * j_task;
        dq += proj * g;
    }
    Ok(dq)
}

/// Iterates [`ik_step`] from `q0` until the error tolerance, the iteration
/// budget, or lock-up is reached. The trace is always populated.
pub fn solve<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    c_d: &Pose<T>,
    config: &SolverConfig<T>,
) -> Result<SolveOutcome<T>, SolverError> {
    solve_with(model, q0, c_d, config, None, 0)
}

fn solve_with<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    c_d: &Pose<T>,
    config: &SolverConfig<T>,
    first_jacobian: Option<DMatrix<T>>,
    iter_offset: usize,
) -> Result<SolveOutcome<T>, SolverError> {
    assert!(config.tol > T::zero(), "tolerance must be positive");
    assert!(config.max_iters >= 1, "need at least one iteration");
    assert!(
        config.step_scale > T::zero() && config.step_scale <= T::one(),
        "step scale must lie in (0, 1]"
    );
    let mut q = q0.clone();
    let mut records: Vec<IterationRecord<T>> = Vec::with_capacity(config.max_iters + 1);
    let mut locked_streak = 0usize;
    let mut locked_ever = false;
    let mut status: Option<SolveStatus> = None;

    for k in 0..=config.max_iters {
        let c = forward_kinematics(model, &q)?;
        let e6 = match pose_error(&c, c_d, config.error_mode) {
            Ok(e) => e,
            Err(LieGroupError::AngleAtPi) => {
                status = Some(SolveStatus::NumericalFailure);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let error_norm = model.select_task_rows(&e6).norm();

        let j_task = match (&first_jacobian, k) {
            (Some(j_full), 0) => j_full.select_rows(model.task_selector()),
            _ => geometric_jacobian(model, &q)?,
        };
        let factors = SvdFactors::factorize(&j_task, real(DEFAULT_RANK_TOL));
        let sigma_min = factors.sigma_min();
        let rank = factors.rank();

        let mut record = IterationRecord {
            iter: iter_offset + k,
            error_norm,
            step_norm: T::zero(),
            jacobian_rank: rank,
            sigma_min,
            q: q.as_vector().clone(),
        };

        if !error_norm.is_finite() {
            records.push(record);
            status = Some(SolveStatus::NumericalFailure);
            break;
        }
        let converged_now = error_norm <= config.tol;
        if converged_now && !config.trace_full_horizon {
            records.push(record);
            status = Some(SolveStatus::Converged);
            break;
        }
        if k == config.max_iters {
            records.push(record);
            break;
        }

        let dq = match step_from(model, &j_task, &e6, config) {
            Ok(dq) => dq,
            Err(SolverError::Pinv(PinvError::NotSpd)) => {
                return Err(SolverError::Pinv(PinvError::NotSpd));
            }
            Err(SolverError::Pinv(_)) => {
                records.push(record);
                status = Some(SolveStatus::NumericalFailure);
                break;
            }
            Err(e) => return Err(e),
        };
        let step_norm = dq.norm();
        record.step_norm = step_norm;
        records.push(record);
        if !step_norm.is_finite() {
            status = Some(SolveStatus::NumericalFailure);
            break;
        }

        if step_norm < config.lockup_step_tol && error_norm > config.tol {
            locked_streak += 1;
        } else {
            locked_streak = 0;
        }
        if locked_streak >= 2 {
            locked_ever = true;
            if !config.trace_full_horizon {
                status = Some(SolveStatus::LockedUp);
                break;
            }
        }

        q = JointConfig::new(q.as_vector() + dq);
    }

    let status = status.unwrap_or_else(|| {
        let final_error = records.last().map_or_else(T::zero, |r| r.error_norm);
        if final_error <= config.tol {
            SolveStatus::Converged
        } else if locked_ever {
            SolveStatus::LockedUp
        } else {
            SolveStatus::MaxIters
        }
    });

    Ok(SolveOutcome {
        status,
        q_final: q,
        trace: ConvergenceTrace { records },
    })
}

/// Regularized solve from a catalogued singular configuration: the first
/// iteration step is the transversal perturbation `x = Pε`, after which the
/// standard iteration continues from `q₀ + x`.
///
/// The trace records iteration 0 at `q₀` (with the perturbation as its
/// step) and iteration 1 at `q₀ + x`; `config.max_iters` counts the
/// perturbation as the first of the budgeted steps.
pub fn solve_ai_ik<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    c_d: &Pose<T>,
    basis: &SingularBasis<T>,
    epsilon: &DVector<T>,
    config: &SolverConfig<T>,
) -> Result<SolveOutcome<T>, SolverError> {
    if (basis.config().as_vector() - q0.as_vector()).abs().max() > real(1e-9) {
        return Err(SolverError::StartNotSingular);
    }
    let x = if epsilon.norm() == T::zero() {
        return Err(TangentError::DegeneratePerturbation.into());
    } else {
        regularizing_perturbation(basis, epsilon)?.x
    };
    if x.norm() < real(1e-12) {
        return Err(TangentError::DegeneratePerturbation.into());
    }

    // iteration 0: the singular start, with the perturbation as its step
    let c = forward_kinematics(model, q0)?;
    let e6 = pose_error(&c, c_d, config.error_mode)?;
    let j_task = geometric_jacobian(model, q0)?;
    let factors = SvdFactors::factorize(&j_task, real(DEFAULT_RANK_TOL));
    let record0 = IterationRecord {
        iter: 0,
        error_norm: model.select_task_rows(&e6).norm(),
        step_norm: x.norm(),
        jacobian_rank: factors.rank(),
        sigma_min: factors.sigma_min(),
        q: q0.as_vector().clone(),
    };

    let first_jacobian = match config.prolonged_first_order {
        Some(order) => Some(prolonged_jacobian(model, q0, &x, order)?),
        None => None,
    };
    let mut inner_config = config.clone();
    inner_config.max_iters = config.max_iters.saturating_sub(1).max(1);
    let start = JointConfig::new(q0.as_vector() + &x);
    let inner = solve_with(model, &start, c_d, &inner_config, first_jacobian, 1)?;

    let mut records = Vec::with_capacity(inner.trace.records.len() + 1);
    records.push(record0);
    records.extend(inner.trace.records);
    Ok(SolveOutcome {
        status: inner.status,
        q_final: inner.q_final,
        trace: ConvergenceTrace { records },
    })
}

/// Baseline comparison: solve after displacing the start configuration by
/// the raw (un-projected) perturbation `ε`.
pub fn solve_perturbed<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    c_d: &Pose<T>,
    epsilon: &DVector<T>,
    config: &SolverConfig<T>,
) -> Result<SolveOutcome<T>, SolverError> {
    let start = JointConfig::new(q0.as_vector() + epsilon);
    solve(model, &start, c_d, config)
}
