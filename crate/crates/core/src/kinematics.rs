//! Serial-robot models, product-of-exponentials forward kinematics, and the
//! geometric Jacobian expressed in the end-effector frame.
//!
//! A robot is described by its joint screw axes in the reference
//! configuration (`q = 0`, base frame) together with the end-effector pose
//! at the reference configuration. The forward kinematics is the product of
//! per-joint exponentials composed with the home pose, and the Jacobian
//! columns are the instantaneous joint screws transformed into the current
//! end-effector frame.

use crate::liegroup::{self, Pose, Twist};
use crate::{real, Real};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default relative singular-value threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has length {got}, model has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model must have at least one joint")]
    NoJoints,
    #[error("task selector must hold 1..=6 unique ascending row indices below 6")]
    InvalidTaskSelector,
    #[error("joint {index} screw is neither a unit-axis revolute nor a unit-axis prismatic screw")]
    InvalidJointScrew { index: usize },
    #[error("model has {joints} joints but {names} joint names")]
    JointNameCount { joints: usize, names: usize },
}

/// Joint coordinate vector (rad for revolute joints, m for prismatic).
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig<T: Real> {
    q: DVector<T>,
}

impl<T: Real> JointConfig<T> {
    pub fn new(q: DVector<T>) -> Self {
        Self { q }
    }

    pub fn from_slice(q: &[T]) -> Self {
        Self {
            q: DVector::from_row_slice(q),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.q
    }

    pub fn into_vector(self) -> DVector<T> {
        self.q
    }
}

impl<T: Real> From<DVector<T>> for JointConfig<T> {
    fn from(q: DVector<T>) -> Self {
        Self { q }
    }
}

/// Serial-chain robot model driven by reference-configuration joint screws.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel<T: Real> {
    name: String,
    joint_screws_ref: Vec<Twist<T>>,
    home_pose: Pose<T>,
    task_selector: Vec<usize>,
    joint_names: Vec<String>,
}

impl<T: Real> RobotModel<T> {
    /// Builds and validates a model.
    ///
    /// Each joint screw must be either revolute (unit angular part within
    /// 1e-10) or prismatic (zero angular part, unit linear part). The task
    /// selector picks the rows of the 6×n end-effector-frame Jacobian that
    /// span the task space; indices are 0-based, unique and ascending.
    pub fn new(
        name: impl Into<String>,
        joint_screws_ref: Vec<Twist<T>>,
        home_pose: Pose<T>,
        task_selector: Vec<usize>,
        joint_names: Vec<String>,
    ) -> Result<Self, KinematicsError> {
        let n = joint_screws_ref.len();
        if n == 0 {
            return Err(KinematicsError::NoJoints);
        }
        if joint_names.len() != n {
            return Err(KinematicsError::JointNameCount {
                joints: n,
                names: joint_names.len(),
            });
        }
        let m = task_selector.len();
        let ascending = task_selector.windows(2).all(|w| w[0] < w[1]);
        if m == 0 || m > 6 || !ascending || task_selector.iter().any(|&i| i >= 6) {
            return Err(KinematicsError::InvalidTaskSelector);
        }
        let unit_tol = real::<T>(1e-10);
        for (i, s) in joint_screws_ref.iter().enumerate() {
            let wn = s.angular().norm();
            let revolute = (wn - T::one()).abs() <= unit_tol;
            let prismatic = wn <= unit_tol && (s.linear().norm() - T::one()).abs() <= unit_tol;
            if !revolute && !prismatic {
                return Err(KinematicsError::InvalidJointScrew { index: i });
            }
        }
        Ok(Self {
            name: name.into(),
            joint_screws_ref,
            home_pose,
            task_selector,
            joint_names,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of joints.
    pub fn dof(&self) -> usize {
        self.joint_screws_ref.len()
    }

    /// Task-space dimension (number of selected twist rows).
    pub fn task_dim(&self) -> usize {
        self.task_selector.len()
    }

    pub fn joint_screws_ref(&self) -> &[Twist<T>] {
        &self.joint_screws_ref
    }

    pub fn home_pose(&self) -> &Pose<T> {
        &self.home_pose
    }

    pub fn task_selector(&self) -> &[usize] {
        &self.task_selector
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    fn check_len(&self, q: &JointConfig<T>) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Restricts a full 6-row twist vector to the task rows.
    pub fn select_task_rows(&self, twist: &Twist<T>) -> DVector<T> {
        let v = twist.as_vector();
        DVector::from_iterator(self.task_dim(), self.task_selector.iter().map(|&i| v[i]))
    }
}

/// Product-of-exponentials forward kinematics:
/// `C(q) = exp(q₁ S₁) ⋯ exp(qₙ Sₙ) · M`.
pub fn forward_kinematics<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<Pose<T>, KinematicsError> {
    model.check_len(q)?;
    let mut c = Pose::identity();
    for (qi, screw) in q.as_vector().iter().zip(model.joint_screws_ref()) {
        c = c * liegroup::exp(&screw.scaled(*qi));
    }
    Ok(c * *model.home_pose())
}

/// Full 6×n base-frame (space) Jacobian: column i is the instantaneous
/// screw of joint i in the base frame, `Ad_{E₁⋯E_{i−1}} Sᵢ`.
pub fn space_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<DMatrix<T>, KinematicsError> {
    model.check_len(q)?;
    let n = model.dof();
    let mut prefix = Pose::identity();
    let mut j = DMatrix::zeros(6, n);
    for (i, (qi, screw)) in q
        .as_vector()
        .iter()
        .zip(model.joint_screws_ref())
        .enumerate()
    {
        let s = liegroup::adjoint_apply(&prefix, screw);
        j.column_mut(i).copy_from(s.as_vector());
        prefix = prefix * liegroup::exp(&screw.scaled(*qi));
    }
    Ok(j)
}

/// Full 6×n geometric Jacobian in the end-effector frame.
///
/// Column i is the instantaneous screw of joint i transformed into the
/// current end-effector frame: `Ad_{C(q)⁻¹} Ad_{E₁⋯E_{i−1}} Sᵢ`.
pub fn geometric_jacobian_full<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<DMatrix<T>, KinematicsError> {
    let j_space = space_jacobian(model, q)?;
    let c_inv = forward_kinematics(model, q)?.inverse();
    let ad = liegroup::adjoint(&c_inv);
    let ad = DMatrix::from_iterator(6, 6, ad.iter().copied());
    Ok(ad * j_space)
}

/// Task Jacobian: the rows of [`geometric_jacobian_full`] selected by the
/// model's task selector.
pub fn geometric_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
) -> Result<DMatrix<T>, KinematicsError> {
    let full = geometric_jacobian_full(model, q)?;
    Ok(full.select_rows(model.task_selector()))
}

/// Numerical rank of the task Jacobian: the number of singular values
/// exceeding `tol` times the largest one.
pub fn rank_at<T: Real>(
    model: &RobotModel<T>,
    q: &JointConfig<T>,
    tol: T,
) -> Result<usize, KinematicsError> {
    assert!(tol > T::zero(), "rank tolerance must be positive");
    let j = geometric_jacobian(model, q)?;
    Ok(matrix_rank(&j, tol))
}

/// Relative-threshold numerical rank of an arbitrary matrix.
pub fn matrix_rank<T: Real>(m: &DMatrix<T>, tol: T) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn single_joint_model() -> RobotModel<f64> {
        // one revolute joint about z through the origin, EE 1 m up the axis
        RobotModel::new(
            "one",
            vec![Twist::new(Vector3::z(), Vector3::zeros())],
            Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)),
            vec![0, 1, 2, 3, 4, 5],
            vec!["q1".into()],
        )
        .unwrap()
    }

    #[test]
    fn fk_at_zero_is_home_pose() {
        let m = single_joint_model();
        let c = forward_kinematics(&m, &JointConfig::zeros(1)).unwrap();
        assert_eq!(c, *m.home_pose());

        let iiwa = builtin::iiwa14::<f64>().model;
        let c = forward_kinematics(&iiwa, &JointConfig::zeros(7)).unwrap();
        assert_eq!(c, *iiwa.home_pose());
    }

    #[test]
    fn fk_rejects_wrong_joint_count() {
        let m = single_joint_model();
        assert!(matches!(
            forward_kinematics(&m, &JointConfig::zeros(3)),
            Err(KinematicsError::DimensionMismatch {
                expected: 1,
                got: 3
            })
        ));
    }

    #[test]
    fn single_joint_jacobian_is_constant_screw_about_own_axis() {
        // rotation about the axis the EE sits on: the EE-frame column stays
        // (0,0,1,0,0,0) for every joint angle
        let m = single_joint_model();
        for q in [0.0, 0.3, -1.2, 2.9] {
            let j = geometric_jacobian_full(&m, &JointConfig::from_slice(&[q])).unwrap();
            let col: Vec<f64> = j.column(0).iter().copied().collect();
            assert_relative_eq!(
                DVector::from_vec(col),
                DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn iiwa_stretched_ee_height_above_shoulder() {
        // straight-up reference pose: the flange sits a+b+c above the
        // shoulder pivot
        let iiwa = builtin::iiwa14::<f64>();
        let c = forward_kinematics(&iiwa.model, &JointConfig::zeros(7)).unwrap();
        let shoulder_z = builtin::IIWA_BASE_TO_SHOULDER;
        assert_relative_eq!(c.translation().z - shoulder_z, 0.946, epsilon = 1e-12);
        assert_relative_eq!(c.translation().x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.translation().y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_tolerance_must_be_positive() {
        let m = single_joint_model();
        let r = std::panic::catch_unwind(|| rank_at(&m, &JointConfig::zeros(1), 0.0));
        assert!(r.is_err());
    }

    #[test]
    fn invalid_screws_are_rejected() {
        let bad = RobotModel::new(
            "bad",
            vec![Twist::new(Vector3::new(0.0, 0.0, 0.5), Vector3::zeros())],
            Pose::identity(),
            vec![0],
            vec!["q1".into()],
        );
        assert!(matches!(
            bad,
            Err(KinematicsError::InvalidJointScrew { index: 0 })
        ));
    }

    #[test]
    fn task_selector_validation() {
        let screw = Twist::<f64>::new(Vector3::z(), Vector3::zeros());
        for bad in [vec![], vec![6], vec![2, 1], vec![1, 1]] {
            assert!(matches!(
                RobotModel::new("m", vec![screw], Pose::identity(), bad, vec!["j".into()]),
                Err(KinematicsError::InvalidTaskSelector)
            ));
        }
    }

    #[test]
    fn prismatic_screws_are_accepted() {
        let m = RobotModel::new(
            "slider",
            vec![Twist::new(Vector3::zeros(), Vector3::z())],
            Pose::identity(),
            vec![3, 4, 5],
            vec!["d1".into()],
        )
        .unwrap();
        let c = forward_kinematics(&m, &JointConfig::from_slice(&[0.7])).unwrap();
        assert_relative_eq!(c.translation().z, 0.7, epsilon = 1e-15);
        let j = geometric_jacobian(&m, &JointConfig::from_slice(&[0.7])).unwrap();
        assert_relative_eq!(j[(2, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_columns_transform_covariantly_under_ee_frame_shift() {
        // moving the EE frame by a fixed offset D conjugates every column
        // by Ad_{D⁻¹}
        let iiwa = builtin::iiwa14::<f64>().model;
        let d = liegroup::exp(&Twist::new(
            Vector3::new(0.3, -0.1, 0.2),
            Vector3::new(0.05, 0.02, -0.04),
        ));
        let shifted = RobotModel::new(
            "iiwa-shifted",
            iiwa.joint_screws_ref().to_vec(),
            *iiwa.home_pose() * d,
            iiwa.task_selector().to_vec(),
            iiwa.joint_names().to_vec(),
        )
        .unwrap();
        let q = JointConfig::from_slice(&[0.3, -0.2, 0.5, 0.8, -0.4, 0.2, 0.6]);
        let j = geometric_jacobian_full(&iiwa, &q).unwrap();
        let js = geometric_jacobian_full(&shifted, &q).unwrap();
        let ad = liegroup::adjoint(&d.inverse());
        for i in 0..7 {
            let expected = ad * j.column(i);
            let got: DVector<f64> = js.column(i).into_owned();
            assert_relative_eq!(
                got,
                DVector::from_iterator(6, expected.iter().copied()),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn rank_invariant_under_consistent_joint_permutation() {
        // reversing the chain order with consistently permuted screws is a
        // different robot, so permute only the *labels* here: swapping two
        // identical z-screws of the iiwa leaves the Jacobian rank unchanged
        let iiwa = builtin::iiwa14::<f64>().model;
        let mut screws = iiwa.joint_screws_ref().to_vec();
        screws.swap(0, 2); // both are (z; 0) screws in the reference config
        let permuted = RobotModel::new(
            "iiwa-permuted",
            screws,
            *iiwa.home_pose(),
            iiwa.task_selector().to_vec(),
            iiwa.joint_names().to_vec(),
        )
        .unwrap();
        let q = JointConfig::zeros(7);
        assert_eq!(
            rank_at(&iiwa, &q, DEFAULT_RANK_TOL).unwrap(),
            rank_at(&permuted, &q, DEFAULT_RANK_TOL).unwrap()
        );
    }
}
