//! Singular-motion bases, transversal projectors, regularizing joint
//! perturbations, and Lie-bracket differentials of the geometric Jacobian.
//!
//! At a singular configuration the set of joint directions that *stay*
//! singular is described by component subspaces of the kinematic tangent
//! cone. A [`SingularBasis`] stores an orthonormal basis `S` of the
//! intersection of those components for one named configuration; motions
//! along `S` keep the robot singular, so a regularizing perturbation is
//! taken from the orthogonal complement of `S`. Bases are validated input
//! data attached to robot models; this module verifies them numerically
//! rather than computing tangent cones from scratch.

use crate::kinematics::{
    geometric_jacobian_full, matrix_rank, rank_at, JointConfig, KinematicsError, RobotModel,
};
use crate::liegroup::{lie_bracket, Twist};
use crate::{real, Real};
use nalgebra::{DMatrix, DVector, Vector6};
use thiserror::Error;

/// Relative rank tolerance used for twist-span dimensions (widened for
/// scalars whose epsilon cannot resolve it, like the validation tolerance).
fn span_rank_tol<T: Real>() -> T {
    validation_tol::<T>()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TangentError {
    #[error("basis columns are not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },
    #[error("perturbation is degenerate: projection onto the transversal complement vanishes")]
    DegeneratePerturbation,
    #[error("prolongation order {order} is not supported (0, 1 or 2)")]
    UnsupportedOrder { order: usize },
    #[error("bracket span still growing at level {max_order}: dims {dims:?}")]
    NotConverged { max_order: usize, dims: Vec<usize> },
    #[error("basis has {basis_rows} rows but the configuration has {config_len} joints")]
    ShapeMismatch {
        basis_rows: usize,
        config_len: usize,
    },
    #[error("basis must have fewer columns than joints (got {cols} of {rows})")]
    BasisTooLarge { cols: usize, rows: usize },
    #[error("basis column {column} is outside component space {component} (defect {defect:e})")]
    BasisOutsideComponent {
        column: usize,
        component: usize,
        defect: f64,
    },
    #[error("basis spans {basis} directions but the component intersection has dimension {intersection}")]
    IntersectionDimension { basis: usize, intersection: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Orthonormal basis of the common singular-motion directions at a named
/// singular configuration, with the optional tangent-cone component spaces
/// it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularBasis<T: Real> {
    name: String,
    config: JointConfig<T>,
    basis: DMatrix<T>,
    component_spaces: Vec<DMatrix<T>>,
}

impl<T: Real> SingularBasis<T> {
    /// Builds and validates a singular basis.
    ///
    /// Checks: `SᵀS = I` within 1e-10, `s̄ < n`, every basis column lies in
    /// every supplied component space within 1e-10, and (when components are
    /// supplied) the basis dimension equals the dimension of their
    /// intersection.
    pub fn new(
        name: impl Into<String>,
        config: JointConfig<T>,
        basis: DMatrix<T>,
        component_spaces: Vec<DMatrix<T>>,
    ) -> Result<Self, TangentError> {
        let n = config.len();
        if basis.nrows() != n {
            return Err(TangentError::ShapeMismatch {
                basis_rows: basis.nrows(),
                config_len: n,
            });
        }
        if basis.ncols() >= n {
            return Err(TangentError::BasisTooLarge {
                cols: basis.ncols(),
                rows: n,
            });
        }
        check_orthonormal(&basis)?;
        for (ci, k) in component_spaces.iter().enumerate() {
            let p = orthonormal_projector(k);
            for j in 0..basis.ncols() {
                let s = basis.column(j).into_owned();
                let defect = (&s - &p * &s).norm();
                if defect > validation_tol::<T>() {
                    return Err(TangentError::BasisOutsideComponent {
                        column: j,
                        component: ci,
                        defect: defect.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        if !component_spaces.is_empty() {
            let dim = intersection_dimension(n, &component_spaces);
            if dim != basis.ncols() {
                return Err(TangentError::IntersectionDimension {
                    basis: basis.ncols(),
                    intersection: dim,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            config,
            basis,
            component_spaces,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The singular configuration this basis is attached to.
    pub fn config(&self) -> &JointConfig<T> {
        &self.config
    }

    /// The n×s̄ orthonormal basis matrix `S`.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn component_spaces(&self) -> &[DMatrix<T>] {
        &self.component_spaces
    }

    /// Projector onto the orthogonal complement of the basis.
    pub fn projector(&self) -> DMatrix<T> {
        transversal_projector(&self.basis).expect("validated basis is orthonormal")
    }
}

/// A regularizing joint increment: the seed vector and its projection onto
/// the transversal complement of the singular-motion basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T: Real> {
    pub epsilon: DVector<T>,
    pub x: DVector<T>,
}

/// Validation tolerance: 1e-10, widened for scalars whose machine epsilon
/// cannot resolve it (f32).
fn validation_tol<T: Real>() -> T {
    real::<T>(1e-10).max(T::default_epsilon() * real::<T>(1e3))
}

fn check_orthonormal<T: Real>(s: &DMatrix<T>) -> Result<(), TangentError> {
    let k = s.ncols();
    let defect = (s.transpose() * s - DMatrix::identity(k, k)).abs().max();
    if k > 0 && defect > validation_tol::<T>() {
        return Err(TangentError::NotOrthonormal {
            defect: defect.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Orthogonal projector onto the column space of `k` (columns need not be
/// orthonormal).
fn orthonormal_projector<T: Real>(k: &DMatrix<T>) -> DMatrix<T> {
    let n = k.nrows();
    if k.ncols() == 0 {
        return DMatrix::zeros(n, n);
    }
    let q = k.clone().qr().q();
    let rank = matrix_rank(k, span_rank_tol::<T>());
    let qr = q.columns(0, rank);
    let qr = qr.into_owned();
    &qr * qr.transpose()
}

/// Dimension of the intersection of the given subspaces of Rⁿ, computed as
/// the null-space dimension of the stacked complement projectors.
fn intersection_dimension<T: Real>(n: usize, spaces: &[DMatrix<T>]) -> usize {
    let mut stacked = DMatrix::zeros(n * spaces.len(), n);
    for (i, k) in spaces.iter().enumerate() {
        let complement = DMatrix::identity(n, n) - orthonormal_projector(k);
        stacked.view_mut((i * n, 0), (n, n)).copy_from(&complement);
    }
    n - matrix_rank(&stacked, span_rank_tol::<T>())
}

/// Projector `P = I − SSᵀ` onto the orthogonal complement of the
/// orthonormal columns `S`. An empty basis yields the identity.
pub fn transversal_projector<T: Real>(s: &DMatrix<T>) -> Result<DMatrix<T>, TangentError> {
    check_orthonormal(s)?;
    let n = s.nrows();
    Ok(DMatrix::identity(n, n) - s * s.transpose())
}

/// Projects the seed vector `epsilon` onto the transversal complement of
/// the singular-motion basis: `x = P·ε`.
///
/// Errors with [`TangentError::DegeneratePerturbation`] when a nonzero seed
/// projects to (numerically) nothing, i.e. `ε` lies inside the span of the
/// singular-motion basis.
pub fn regularizing_perturbation<T: Real>(
    basis: &SingularBasis<T>,
    epsilon: &DVector<T>,
) -> Result<Perturbation<T>, TangentError> {
    let p = basis.projector();
    let x = &p * epsilon;
    if epsilon.norm() > T::zero() && x.norm() < real(1e-12) {
        return Err(TangentError::DegeneratePerturbation);
    }
    Ok(Perturbation {
        epsilon: epsilon.clone(),
        x,
    })
}

fn column_twist<T: Real>(j: &DMatrix<T>, i: usize) -> Twist<T> {
    Twist::from_vector(Vector6::from_iterator(j.column(i).iter().copied()))
}

/// The Jacobian field expressed in the *fixed* end-effector frame of the
/// anchor configuration: `Ad_{C(q_anchor)⁻¹} · J_space(q)`.
///
/// At `q = q_anchor` this equals the ordinary end-effector-frame Jacobian.
/// The bracket differentials below are the exact derivatives of this field
/// with respect to `q`; ranks agree with the moving-frame Jacobian at every
/// configuration because the two differ by an invertible adjoint factor.
pub fn frozen_frame_jacobian<T: Real>(
    model: &RobotModel<T>,
    q_anchor: &JointConfig<T>,
    q: &JointConfig<T>,
) -> Result<DMatrix<T>, TangentError> {
    let c_anchor = crate::kinematics::forward_kinematics(model, q_anchor)?;
    let j_space = crate::kinematics::space_jacobian(model, q)?;
    let ad = crate::liegroup::adjoint(&c_anchor.inverse());
    let ad = DMatrix::from_iterator(6, 6, ad.iter().copied());
    Ok(ad * j_space)
}

/// First differential of the Jacobian (in the frame frozen at `q0`) along
/// the joint increment `x`: column i is `Σ_{j<i} x_j [Jⱼ, Jᵢ]` over the
/// full 6-row end-effector-frame screw columns at `q0`.
pub fn jacobian_first_differential<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    x: &DVector<T>,
) -> Result<DMatrix<T>, TangentError> {
    let j = geometric_jacobian_full(model, q0)?;
    if x.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: x.len(),
        }
        .into());
    }
    Ok(first_differential_of(&j, x))
}

fn first_differential_of<T: Real>(j: &DMatrix<T>, x: &DVector<T>) -> DMatrix<T> {
    let n = j.ncols();
    let mut d = DMatrix::zeros(6, n);
    for i in 0..n {
        let ji = column_twist(j, i);
        let mut acc = Twist::zero();
        for k in 0..i {
            acc = acc + lie_bracket(&column_twist(j, k), &ji).scaled(x[k]);
        }
        d.column_mut(i).copy_from(acc.as_vector());
    }
    d
}

/// Second differential: differentiating `∂Jᵢ/∂q_j = [Jⱼ, Jᵢ]` (j < i) once
/// more gives, per column i,
/// `Σ_{j<i} x_j ( Σ_{k<j} x_k [[J_k,Jⱼ],Jᵢ] + Σ_{k<i} x_k [Jⱼ,[J_k,Jᵢ]] )`.
fn second_differential_of<T: Real>(j: &DMatrix<T>, x: &DVector<T>) -> DMatrix<T> {
    let n = j.ncols();
    let cols: Vec<Twist<T>> = (0..n).map(|i| column_twist(j, i)).collect();
    let mut d2 = DMatrix::zeros(6, n);
    for i in 0..n {
        let mut acc = Twist::zero();
        for jj in 0..i {
            for k in 0..jj {
                acc = acc
                    + lie_bracket(&lie_bracket(&cols[k], &cols[jj]), &cols[i]).scaled(x[jj] * x[k]);
            }
            for k in 0..i {
                acc = acc
                    + lie_bracket(&cols[jj], &lie_bracket(&cols[k], &cols[i])).scaled(x[jj] * x[k]);
            }
        }
        d2.column_mut(i).copy_from(acc.as_vector());
    }
    d2
}

/// Truncated series for the Jacobian at the perturbed configuration, in the
/// frame frozen at `q0`:
/// `J(q₀+x) ≈ J(q₀) + dJ(q₀,x) + ½ d²J(q₀,x)` up to the requested order.
///
/// The series approximates [`frozen_frame_jacobian`] anchored at `q0`; at
/// order 0 it is the plain end-effector-frame Jacobian at `q0`.
pub fn prolonged_jacobian<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    x: &DVector<T>,
    order: usize,
) -> Result<DMatrix<T>, TangentError> {
    if order > 2 {
        return Err(TangentError::UnsupportedOrder { order });
    }
    let j = geometric_jacobian_full(model, q0)?;
    if x.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: x.len(),
        }
        .into());
    }
    let mut out = j.clone();
    if order >= 1 {
        out += first_differential_of(&j, x);
    }
    if order >= 2 {
        out += second_differential_of(&j, x) * real::<T>(0.5);
    }
    Ok(out)
}

/// Iteratively augments the span of the joint screws with (nested) Lie
/// brackets and reports the span dimension per bracket level.
///
/// Returns the first level at which the dimension stops growing (or
/// reaches 6, the dimension of se(3)) together with the recorded dims.
/// The span is taken over full 6-component screws, independent of the
/// model's task selector.
pub fn closure_order<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    max_order: usize,
) -> Result<(usize, Vec<usize>), TangentError> {
    assert!(max_order >= 1, "max_order must be at least 1");
    let j = geometric_jacobian_full(model, q0)?;
    let n = model.dof();
    let generators: Vec<Twist<T>> = (0..n).map(|i| column_twist(&j, i)).collect();

    let mut all: Vec<Twist<T>> = generators.clone();
    let mut layer: Vec<Twist<T>> = generators.clone();
    let mut dims = vec![span_dimension(&all)];
    if dims[0] == 6 {
        return Ok((0, dims));
    }
    for level in 1..=max_order {
        let mut next = Vec::with_capacity(generators.len() * layer.len());
        for g in &generators {
            for t in &layer {
                next.push(lie_bracket(g, t));
            }
        }
        all.extend(next.iter().copied());
        let dim = span_dimension(&all);
        if dim == dims[level - 1] {
            // stabilized: the previous level already generated the algebra
            return Ok((level - 1, dims));
        }
        dims.push(dim);
        if dim == 6 {
            return Ok((level, dims));
        }
        layer = next;
    }
    Err(TangentError::NotConverged { max_order, dims })
}

fn span_dimension<T: Real>(twists: &[Twist<T>]) -> usize {
    if twists.is_empty() {
        return 0;
    }
    let mut m = DMatrix::zeros(6, twists.len());
    for (i, t) in twists.iter().enumerate() {
        m.column_mut(i).copy_from(t.as_vector());
    }
    matrix_rank(&m, span_rank_tol::<T>())
}

/// Checks that moving from `q0` along `direction` keeps the task Jacobian
/// rank-deficient at every step length in `steps`.
///
/// `direction` must be nonzero.
pub fn verify_singular_direction<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    direction: &DVector<T>,
    steps: &[T],
    tol: T,
) -> Result<bool, TangentError> {
    assert!(
        direction.norm() > T::zero(),
        "direction must be a nonzero vector"
    );
    let m = model.task_dim();
    for &t in steps {
        let q = JointConfig::new(q0.as_vector() + direction * t);
        if rank_at(model, &q, tol)? >= m {
            return Ok(false);
        }
    }
    Ok(true)
}
