//! SE(3)/se(3) numerics: hat/vee maps, exponential and logarithm, adjoint,
//! Lie bracket, and the pose-difference primitives used by the IK iteration.
//!
//! Twists are stored as 6-vectors ordered (angular; linear). This ordering
//! is the single wire convention of the whole crate: components 1–3 are the
//! rotational part, components 4–6 the translational part, matching the row
//! layout of the geometric Jacobian (rotation rows above translation rows).

use crate::{real, Real};
use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use thiserror::Error;

/// Angle below which exp/log switch to 4th-order series to avoid
/// catastrophic cancellation in the sinc-like coefficients.
const SMALL_ANGLE: f64 = 1e-4;

/// Absolute tolerance on the skew-symmetry defect accepted by [`vee`].
const SKEW_TOL: f64 = 1e-8;

/// Margin on `trace(R) + 1` below which the rotation logarithm is rejected
/// as being at (or numerically indistinguishable from) angle π.
const TRACE_PI_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieGroupError {
    /// The 3×3 block handed to [`vee`] is not skew-symmetric.
    #[error("matrix is not skew-symmetric: asymmetry {defect:e} exceeds {tol:e}")]
    NotSkew { defect: f64, tol: f64 },
    /// The rotation angle is within numerical reach of π, where the
    /// logarithm is not uniquely defined.
    #[error("rotation angle at \u{3c0}: the SE(3) logarithm is not unique here")]
    AngleAtPi,
    /// A pose constructor received a rotation block that is not a proper
    /// rotation matrix.
    #[error("rotation block is not orthonormal with determinant +1 (defect {defect:e})")]
    NotRotation { defect: f64 },
}

/// Selects how a pose difference is mapped to an error twist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// First-order twist: the skew-projected rotation block and the raw
    /// translation of `ΔC − I`.
    FirstOrder,
    /// Exact twist: the SE(3) logarithm of `ΔC`.
    Log,
}

/// Element of se(3): a 6-vector (angular; linear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist<T: Real> {
    vec: Vector6<T>,
}

impl<T: Real> Twist<T> {
    pub fn new(angular: Vector3<T>, linear: Vector3<T>) -> Self {
        Self {
            vec: Vector6::new(
                angular.x, angular.y, angular.z, linear.x, linear.y, linear.z,
            ),
        }
    }

    pub fn from_vector(vec: Vector6<T>) -> Self {
        Self { vec }
    }

    pub fn zero() -> Self {
        Self {
            vec: Vector6::zeros(),
        }
    }

    pub fn angular(&self) -> Vector3<T> {
        self.vec.fixed_rows::<3>(0).into()
    }

    pub fn linear(&self) -> Vector3<T> {
        self.vec.fixed_rows::<3>(3).into()
    }

    pub fn as_vector(&self) -> &Vector6<T> {
        &self.vec
    }

    pub fn into_vector(self) -> Vector6<T> {
        self.vec
    }

    pub fn norm(&self) -> T {
        self.vec.norm()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { vec: self.vec * s }
    }
}

impl<T: Real> std::ops::Add for Twist<T> {
    type Output = Twist<T>;
    fn add(self, rhs: Twist<T>) -> Twist<T> {
        Twist {
            vec: self.vec + rhs.vec,
        }
    }
}

impl<T: Real> std::ops::Sub for Twist<T> {
    type Output = Twist<T>;
    fn sub(self, rhs: Twist<T>) -> Twist<T> {
        Twist {
            vec: self.vec - rhs.vec,
        }
    }
}

impl<T: Real> std::ops::Neg for Twist<T> {
    type Output = Twist<T>;
    fn neg(self) -> Twist<T> {
        Twist { vec: -self.vec }
    }
}

/// Element of SE(3): rotation matrix plus translation vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, checking that `rotation` is orthonormal with
    /// determinant +1 within 1e-10.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, LieGroupError> {
        let gram_defect = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        let det_defect = (rotation.determinant() - T::one()).abs();
        let defect = gram_defect.max(det_defect);
        if defect > real(1e-10) {
            return Err(LieGroupError::NotRotation {
                defect: defect.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose without validating the rotation block. Reserved for
    /// callers that construct the rotation from a closed form that is
    /// orthonormal by construction.
    pub fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Homogeneous 4×4 matrix form.
    pub fn matrix(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl<T: Real> std::ops::Mul for Pose<T> {
    type Output = Pose<T>;
    fn mul(self, rhs: Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

/// Skew matrix of a 3-vector.
pub fn hat3<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -w.z, w.y, w.z, z, -w.x, -w.y, w.x, z)
}

/// se(3) matrix form of a twist: skew(angular) in the top-left block,
/// linear in the top-right column, zero bottom row.
pub fn hat<T: Real>(t: &Twist<T>) -> Matrix4<T> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&hat3(&t.angular()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.linear());
    m
}

/// Inverse of [`hat`]. Rejects inputs whose 3×3 block deviates from skew
/// symmetry by more than 1e-8 (absolute, on the entries of `M + Mᵀ`).
pub fn vee<T: Real>(m: &Matrix4<T>) -> Result<Twist<T>, LieGroupError> {
    let r = m.fixed_view::<3, 3>(0, 0);
    let defect = (r + r.transpose()).abs().max();
    if defect > real(SKEW_TOL) {
        return Err(LieGroupError::NotSkew {
            defect: defect.to_f64().unwrap_or(f64::NAN),
            tol: SKEW_TOL,
        });
    }
    let half = real::<T>(0.5);
    let angular = Vector3::new(
        (r[(2, 1)] - r[(1, 2)]) * half,
        (r[(0, 2)] - r[(2, 0)]) * half,
        (r[(1, 0)] - r[(0, 1)]) * half,
    );
    let linear = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    Ok(Twist::new(angular, linear))
}

/// Coefficients `sin θ/θ`, `(1 − cos θ)/θ²`, `(θ − sin θ)/θ³` with
/// series fallbacks below [`SMALL_ANGLE`].
fn exp_coefficients<T: Real>(theta: T) -> (T, T, T) {
    if theta < real(SMALL_ANGLE) {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            T::one() - t2 * real(1.0 / 6.0) + t4 * real(1.0 / 120.0),
            real::<T>(0.5) - t2 * real(1.0 / 24.0) + t4 * real(1.0 / 720.0),
            real::<T>(1.0 / 6.0) - t2 * real(1.0 / 120.0) + t4 * real(1.0 / 5040.0),
        )
    } else {
        let t2 = theta * theta;
        let s = theta.sin();
        let c = theta.cos();
        (s / theta, (T::one() - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Closed-form SE(3) exponential (Rodrigues rotation plus the coupled
/// translation term). `exp(0)` is the identity pose.
pub fn exp<T: Real>(t: &Twist<T>) -> Pose<T> {
    let w = t.angular();
    let v = t.linear();
    let theta = w.norm();
    let (a, b, c) = exp_coefficients(theta);
    let wh = hat3(&w);
    let wh2 = wh * wh;
    let rotation = Matrix3::identity() + wh * a + wh2 * b;
    let v_mat = Matrix3::identity() + wh * b + wh2 * c;
    Pose::from_parts_unchecked(rotation, v_mat * v)
}

/// SE(3) logarithm, the inverse of [`exp`] on its injectivity domain.
///
/// Errors with [`LieGroupError::AngleAtPi`] when `trace(R) ≤ −1 + 1e-9`,
/// i.e. the rotation angle is numerically at π where the axis (and hence
/// the logarithm) is not unique.
pub fn log<T: Real>(c: &Pose<T>) -> Result<Twist<T>, LieGroupError> {
    let r = c.rotation();
    let trace = r.trace();
    if trace <= real::<T>(-1.0 + TRACE_PI_MARGIN) {
        return Err(LieGroupError::AngleAtPi);
    }
    // sin θ comes from the skew part and cos θ from the trace; atan2 of the
    // pair is well conditioned all the way to the angle gate, unlike
    // acos(cos θ) whose θ error gets amplified by 1/sin θ twice
    let skew = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin_theta = skew.norm() * real(0.5);
    let cos_theta = ((trace - T::one()) * real(0.5)).clamp(-T::one(), T::one());
    let theta = sin_theta.atan2(cos_theta);

    // angular part: g(θ) · vee(R − Rᵀ) with g = θ / (2 sin θ)
    let g = if theta < real(SMALL_ANGLE) {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        real::<T>(0.5) + t2 * real(1.0 / 12.0) + t4 * real(7.0 / 720.0)
    } else {
        theta / (sin_theta * real(2.0))
    };
    let w = skew * g;

    // linear part: V(θ)⁻¹ p with V⁻¹ = I − ½ŵ + κ ŵ²,
    // κ = (1 − (θ/2)·cot(θ/2)) / θ²
    let kappa = if theta < real(SMALL_ANGLE) {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        real::<T>(1.0 / 12.0) + t2 * real(1.0 / 720.0) + t4 * real(1.0 / 30240.0)
    } else {
        let half = theta * real(0.5);
        (T::one() - half * half.cos() / half.sin()) / (theta * theta)
    };
    let wh = hat3(&w);
    let v_inv = Matrix3::<T>::identity() - wh * real::<T>(0.5) + wh * wh * kappa;
    Ok(Twist::new(w, v_inv * c.translation()))
}

/// se(3) Lie bracket of two twists:
/// angular `ω_a × ω_b`, linear `ω_a × v_b − ω_b × v_a`.
pub fn lie_bracket<T: Real>(a: &Twist<T>, b: &Twist<T>) -> Twist<T> {
    let (wa, va) = (a.angular(), a.linear());
    let (wb, vb) = (b.angular(), b.linear());
    Twist::new(wa.cross(&wb), wa.cross(&vb) - wb.cross(&va))
}

/// Frame difference `C⁻¹ · C_d`: the transformation from the desired to
/// the current configuration, expressed in the current frame.
pub fn delta_pose<T: Real>(c: &Pose<T>, c_d: &Pose<T>) -> Pose<T> {
    c.inverse() * *c_d
}

/// Maps the pose difference `ΔC = C⁻¹ C_d` to an error twist.
///
/// `FirstOrder` returns `vee(ΔC − I)` with the rotation block skew-projected
/// to `(R − Rᵀ)/2` first; `Log` returns the exact `log(ΔC)`. The two agree
/// to first order in the displacement.
pub fn pose_error<T: Real>(
    c: &Pose<T>,
    c_d: &Pose<T>,
    mode: ErrorMode,
) -> Result<Twist<T>, LieGroupError> {
    let delta = delta_pose(c, c_d);
    match mode {
        ErrorMode::FirstOrder => {
            let r = delta.rotation();
            let half = real::<T>(0.5);
            let angular = Vector3::new(
                (r[(2, 1)] - r[(1, 2)]) * half,
                (r[(0, 2)] - r[(2, 0)]) * half,
                (r[(1, 0)] - r[(0, 1)]) * half,
            );
            Ok(Twist::new(angular, *delta.translation()))
        }
        ErrorMode::Log => log(&delta),
    }
}

/// Adjoint matrix of a pose, mapping twists between frames:
/// `Ad_{(R,p)} (ω; v) = (Rω; p̂Rω + Rv)`.
pub fn adjoint<T: Real>(pose: &Pose<T>) -> Matrix6<T> {
    let r = pose.rotation();
    let ph = hat3(pose.translation());
    let mut ad = Matrix6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ph * r));
    ad
}

/// Applies the adjoint of `pose` to a twist.
pub fn adjoint_apply<T: Real>(pose: &Pose<T>, t: &Twist<T>) -> Twist<T> {
    let r = pose.rotation();
    let w = r * t.angular();
    let v = pose.translation().cross(&w) + r * t.linear();
    Twist::new(w, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn twist(a: [f64; 3], l: [f64; 3]) -> Twist<f64> {
        Twist::new(Vector3::from(a), Vector3::from(l))
    }

    #[test]
    fn hat_of_zero_twist_is_zero() {
        assert_eq!(hat(&Twist::<f64>::zero()), Matrix4::zeros());
    }

    #[test]
    fn hat_of_unit_z_rotation() {
        let m = hat(&twist([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]));
        assert_eq!(m[(0, 1)], -1.0);
        assert_eq!(m[(1, 0)], 1.0);
        let mut rest = m;
        rest[(0, 1)] = 0.0;
        rest[(1, 0)] = 0.0;
        assert_eq!(rest, Matrix4::zeros());
    }

    #[test]
    fn vee_of_zero_matrix_is_zero_twist() {
        assert_eq!(vee(&Matrix4::<f64>::zeros()).unwrap(), Twist::zero());
    }

    #[test]
    fn vee_rejects_symmetric_contamination() {
        let mut m = hat(&twist([0.1, -0.2, 0.3], [1.0, 2.0, 3.0]));
        m[(0, 1)] += 1e-6;
        assert!(matches!(vee(&m), Err(LieGroupError::NotSkew { .. })));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = exp(&Twist::<f64>::zero());
        assert_eq!(*p.rotation(), Matrix3::identity());
        assert_eq!(*p.translation(), Vector3::zeros());
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let p = exp(&twist([0.0, 0.0, std::f64::consts::FRAC_PI_2], [0.0; 3]));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*p.rotation(), expected, epsilon = 1e-15);
        assert_relative_eq!(*p.translation(), Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(log(&Pose::<f64>::identity()).unwrap(), Twist::zero());
    }

    #[test]
    fn log_rejects_angle_pi() {
        let p = exp(&twist([std::f64::consts::PI, 0.0, 0.0], [0.0; 3]));
        assert_eq!(log(&p), Err(LieGroupError::AngleAtPi));
    }

    #[test]
    fn log_exp_roundtrip_near_small_angle_branch() {
        for theta in [1e-7, 1e-5, 9.9e-5, 1.01e-4, 1e-3] {
            let t = twist([theta, theta * 0.3, -theta * 0.2], [0.4, -0.1, 0.7]);
            let back = log(&exp(&t)).unwrap();
            assert_relative_eq!(back.into_vector(), t.into_vector(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_exp_roundtrip_close_to_the_angle_gate() {
        // just above the trace gate the axis information lives in
        // O(sin θ)-sized entries; the atan2 formulation keeps the roundtrip
        // inside 1e-10 there
        for gap in [5e-5, 1e-4, 1e-3, 1e-2] {
            let angle = std::f64::consts::PI - gap;
            let axis = Vector3::new(0.48, -0.6, 0.64).normalize();
            let t = Twist::new(axis * angle, Vector3::new(0.3, -0.2, 0.5));
            let back = log(&exp(&t)).unwrap();
            let defect = (back.into_vector() - t.into_vector()).abs().max();
            assert!(defect <= 1e-10, "gap {gap:e}: defect {defect:e}");
        }
    }

    #[test]
    fn bracket_with_itself_vanishes() {
        let t = twist([0.3, -1.0, 0.2], [0.5, 0.1, -0.7]);
        assert_eq!(lie_bracket(&t, &t), Twist::zero());
    }

    #[test]
    fn bracket_so3_basis_relation() {
        let a = twist([0.0, 0.0, 1.0], [0.0; 3]);
        let b = twist([1.0, 0.0, 0.0], [0.0; 3]);
        assert_eq!(lie_bracket(&a, &b), twist([0.0, 1.0, 0.0], [0.0; 3]));
    }

    #[test]
    fn delta_pose_of_equal_poses_is_identity() {
        let c = exp(&twist([0.2, -0.4, 0.1], [1.0, 0.0, -2.0]));
        let d = delta_pose(&c, &c);
        assert_relative_eq!(*d.rotation(), Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(*d.translation(), Vector3::zeros(), epsilon = 1e-14);
    }

    #[test]
    fn delta_pose_from_identity_returns_target() {
        let c_d = exp(&twist([0.2, -0.4, 0.1], [1.0, 0.0, -2.0]));
        let d = delta_pose(&Pose::identity(), &c_d);
        assert_eq!(d, c_d);
    }

    #[test]
    fn pose_error_modes_agree_to_first_order() {
        let c = exp(&twist([0.3, 0.1, -0.2], [0.5, -0.4, 0.8]));
        let small = twist(
            [1e-4 * 0.4, -1e-4 * 0.5, 1e-4 * 0.1],
            [1e-4, 0.0, -1e-4 * 0.6],
        );
        let c_d = c * exp(&small);
        let fo = pose_error(&c, &c_d, ErrorMode::FirstOrder).unwrap();
        let lg = pose_error(&c, &c_d, ErrorMode::Log).unwrap();
        assert!((fo.into_vector() - lg.into_vector()).norm() < 1e-7);
        assert_relative_eq!(lg.into_vector(), small.into_vector(), epsilon = 1e-10);
    }

    #[test]
    fn pose_error_zero_at_target_both_modes() {
        let c = exp(&twist([0.3, 0.1, -0.2], [0.5, -0.4, 0.8]));
        for mode in [ErrorMode::FirstOrder, ErrorMode::Log] {
            let e = pose_error(&c, &c, mode).unwrap();
            assert!(e.norm() < 1e-14);
        }
    }

    #[test]
    fn adjoint_matches_matrix_conjugation() {
        let p = exp(&twist([0.4, -0.2, 0.9], [1.0, -0.5, 0.3]));
        let t = twist([0.1, 0.7, -0.3], [0.2, 0.0, -1.0]);
        let lhs = adjoint(&p) * t.into_vector();
        let conj = p.matrix() * hat(&t) * p.inverse().matrix();
        let rhs = vee(&conj).unwrap();
        assert_relative_eq!(lhs, rhs.into_vector(), epsilon = 1e-12);
        assert_relative_eq!(
            adjoint_apply(&p, &t).into_vector(),
            rhs.into_vector(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_output_satisfies_pose_invariants() {
        let t = twist([2.0, -1.5, 2.5], [3.0, -4.0, 5.0]);
        let p = exp(&t);
        assert!(Pose::new(*p.rotation(), *p.translation()).is_ok());
    }
}
