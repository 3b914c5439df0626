//! SVD-backed pseudoinverse machinery: Moore–Penrose inverse, damped
//! pseudoinverse, weighted right pseudoinverse, and kernel diagnostics.
//!
//! Every inverse here is computed from one singular value decomposition
//! `J = U Σ Vᵀ` with a *relative* singular-value threshold: singular values
//! at or below `tol · σ₁` are treated as exact zeros. The damped inverse
//! shares that truncation, which makes the lock-up law exact by
//! construction: commanded velocities in the numerical left kernel of `J`
//! are annihilated to machine precision for every damping value.

use crate::{real, Real};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default relative singular-value truncation threshold.
pub const DEFAULT_SVD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PinvError {
    #[error("undamped inverse of a row-rank-deficient matrix (rank {rank} < {rows} rows)")]
    SingularUndamped { rank: usize, rows: usize },
    #[error("matrix is row-rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },
    #[error("weight matrix is not symmetric positive-definite")]
    NotSpd,
}

/// Which generalized inverse the solver applies to the task Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub enum InverseKind<T: Real> {
    /// Moore–Penrose inverse with relative truncation threshold `tol`.
    PseudoInverse { tol: T },
    /// Damped pseudoinverse `Jᵀ(JJᵀ + λ²I)⁻¹` with damping factor `λ ≥ 0`.
    Damped { lambda: T },
    /// Weighted right pseudoinverse `M⁻¹Jᵀ(JM⁻¹Jᵀ)⁻¹` for SPD weight `M`.
    WeightedRight { weight: DMatrix<T> },
}

impl<T: Real> InverseKind<T> {
    /// Moore–Penrose inverse at the default truncation threshold.
    pub fn pseudo_inverse_default() -> Self {
        InverseKind::PseudoInverse {
            tol: real(DEFAULT_SVD_TOL),
        }
    }

    /// Damped inverse specified by the squared damping factor `λ²`.
    pub fn damped_from_lambda_sq(lambda_sq: T) -> Self {
        InverseKind::Damped {
            lambda: lambda_sq.sqrt(),
        }
    }

    /// Applies the configured inverse to a matrix.
    pub fn apply(&self, j: &DMatrix<T>) -> Result<DMatrix<T>, PinvError> {
        match self {
            InverseKind::PseudoInverse { tol } => Ok(pseudoinverse(j, *tol)),
            InverseKind::Damped { lambda } => damped_pseudoinverse(j, *lambda),
            InverseKind::WeightedRight { weight } => weighted_right_pseudoinverse(j, weight),
        }
    }
}

/// Full-size singular value decomposition `J = U Σ Vᵀ`.
///
/// `u` is m×m and `v` is n×n orthogonal; `singular_values` holds the
/// min(m,n) singular values sorted descending. Columns belonging to
/// singular values at or below `tol · σ₁` are an orthonormal completion of
/// the reliable columns (they span the correct null spaces but carry no
/// pairing information, which no consumer of those columns needs).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors<T: Real> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub v: DMatrix<T>,
    rank: usize,
}

impl<T: Real> SvdFactors<T> {
    /// Decomposes `j` with relative truncation threshold `tol`.
    pub fn factorize(j: &DMatrix<T>, tol: T) -> Self {
        assert!(tol > T::zero(), "truncation tolerance must be positive");
        let (m, n) = j.shape();
        let svd = j.clone().svd(true, true);
        let sv = svd.singular_values;
        let u_thin = svd.u.expect("u requested");
        let v_thin = svd.v_t.expect("v_t requested").transpose();
        let max = sv.max();
        let rank = if max > T::zero() {
            sv.iter().filter(|&&s| s > tol * max).count()
        } else {
            0
        };
        let u = complete_orthonormal(&u_thin.columns(0, rank).into_owned(), m);
        let v = complete_orthonormal(&v_thin.columns(0, rank).into_owned(), n);
        Self {
            u,
            singular_values: sv,
            v,
            rank,
        }
    }

    /// Number of singular values above the truncation threshold.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Smallest singular value (the values are sorted descending).
    pub fn sigma_min(&self) -> T {
        self.singular_values[self.singular_values.len() - 1]
    }

    /// Orthonormal basis of the left null space (columns of `u` past the
    /// numerical rank).
    pub fn kernel_columns(&self) -> Vec<DVector<T>> {
        (self.rank..self.u.ncols())
            .map(|i| self.u.column(i).into_owned())
            .collect()
    }

    /// Rebuilds `V diag(f(σᵢ)) Uᵀ` over the reliable singular triplets.
    fn apply_spectrum(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut out = DMatrix::zeros(n, m);
        for i in 0..self.rank {
            let coeff = f(self.singular_values[i]);
            // out += coeff * vᵢ uᵢᵀ
            let vi = self.v.column(i);
            let ui = self.u.column(i);
            for c in 0..m {
                let s = coeff * ui[c];
                for r in 0..n {
                    out[(r, c)] += vi[r] * s;
                }
            }
        }
        out
    }
}

/// Extends orthonormal columns `basis` (k ≤ dim of them) to a full
/// orthonormal dim×dim matrix, keeping the given columns bit-identical.
fn complete_orthonormal<T: Real>(basis: &DMatrix<T>, dim: usize) -> DMatrix<T> {
    let k = basis.ncols();
    if k == dim {
        return basis.clone();
    }
    // QR of [basis | I]: the trailing q-columns are orthonormal and span the
    // complement of the leading block's column space.
    let mut stacked = DMatrix::zeros(dim, k + dim);
    stacked.columns_mut(0, k).copy_from(basis);
    stacked
        .view_mut((0, k), (dim, dim))
        .copy_from(&DMatrix::identity(dim, dim));
    let q = stacked.qr().q();
    let mut out = DMatrix::zeros(dim, dim);
    out.columns_mut(0, k).copy_from(basis);
    out.columns_mut(k, dim - k)
        .copy_from(&q.columns(k, dim - k));
    out
}

/// Moore–Penrose pseudoinverse `J⁺ = V Σ⁺ Uᵀ` with relative truncation
/// threshold `tol`. An all-zero matrix maps to the all-zero inverse.
pub fn pseudoinverse<T: Real>(j: &DMatrix<T>, tol: T) -> DMatrix<T> {
    SvdFactors::factorize(j, tol).apply_spectrum(|s| T::one() / s)
}

/// Damped pseudoinverse `Jᵀ(JJᵀ + λ²I)⁻¹`, computed in the SVD form
/// `V Σ_λ⁺ Uᵀ` with diagonal entries `σᵢ/(σᵢ² + λ²)`.
///
/// With `λ = 0` this is the plain pseudoinverse and requires full row rank;
/// a row-rank-deficient matrix yields [`PinvError::SingularUndamped`].
pub fn damped_pseudoinverse<T: Real>(j: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>, PinvError> {
    assert!(lambda >= T::zero(), "damping factor must be non-negative");
    let factors = SvdFactors::factorize(j, real(DEFAULT_SVD_TOL));
    if lambda == T::zero() && factors.rank() < j.nrows() {
        return Err(PinvError::SingularUndamped {
            rank: factors.rank(),
            rows: j.nrows(),
        });
    }
    let l2 = lambda * lambda;
    Ok(factors.apply_spectrum(|s| s / (s * s + l2)))
}

/// Weighted right pseudoinverse `M⁻¹Jᵀ(JM⁻¹Jᵀ)⁻¹` of a full-row-rank `J`.
///
/// Among all `q̇` with `Jq̇ = V` the product with `V` minimizes `q̇ᵀMq̇`.
pub fn weighted_right_pseudoinverse<T: Real>(
    j: &DMatrix<T>,
    weight: &DMatrix<T>,
) -> Result<DMatrix<T>, PinvError> {
    let n = j.ncols();
    if weight.nrows() != n || weight.ncols() != n {
        return Err(PinvError::NotSpd);
    }
    if (weight - weight.transpose()).abs().max() > real(1e-12) {
        return Err(PinvError::NotSpd);
    }
    let chol = weight.clone().cholesky().ok_or(PinvError::NotSpd)?;
    let rank = SvdFactors::factorize(j, real(DEFAULT_SVD_TOL)).rank();
    if rank < j.nrows() {
        return Err(PinvError::RankDeficient {
            rank,
            rows: j.nrows(),
        });
    }
    let minv_jt = chol.solve(&j.transpose());
    let gram = j * &minv_jt;
    let gram_inv = gram.try_inverse().ok_or(PinvError::RankDeficient {
        rank,
        rows: j.nrows(),
    })?;
    Ok(minv_jt * gram_inv)
}

/// Orthonormal basis of the left null space of `j`: the directions a
/// pseudoinverse (damped or not) maps to zero joint velocity. Empty for
/// full row rank.
pub fn kernel_basis<T: Real>(j: &DMatrix<T>, tol: T) -> Vec<DVector<T>> {
    SvdFactors::factorize(j, tol).kernel_columns()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> f64 {
        DEFAULT_SVD_TOL
    }

    #[test]
    fn pseudoinverse_of_identity_is_identity() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(pseudoinverse(&i, tol()), i, epsilon = 1e-14);
    }

    #[test]
    fn pseudoinverse_of_zero_is_zero() {
        let z = DMatrix::<f64>::zeros(3, 5);
        assert_eq!(pseudoinverse(&z, tol()), DMatrix::zeros(5, 3));
    }

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        // xor-shift style fill; plenty for exercising generic dense paths
        let mut state = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn penrose_conditions_on_random_full_rank_wide_matrix() {
        let j = pseudo_random(6, 7, 0xC0FFEE);
        let jp = pseudoinverse(&j, tol());
        let jjp = &j * &jp;
        assert_relative_eq!(jjp, DMatrix::identity(6, 6), epsilon = 1e-10);
        assert_relative_eq!(&j * &jp * &j, j, epsilon = 1e-10);
        assert_relative_eq!(&jp * &j * &jp, jp, epsilon = 1e-10);
        let pj = &jp * &j;
        assert_relative_eq!(pj.transpose(), pj, epsilon = 1e-10);
    }

    #[test]
    fn damped_scalar_case() {
        let j = DMatrix::from_row_slice(1, 1, &[2.0]);
        let d = damped_pseudoinverse(&j, 1.0).unwrap();
        assert_relative_eq!(d[(0, 0)], 2.0 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn damped_matches_pseudoinverse_at_zero_lambda() {
        let j = DMatrix::<f64>::from_fn(3, 5, |r, c| ((r * 5 + c) as f64).cos() + 0.1);
        let d = damped_pseudoinverse(&j, 0.0).unwrap();
        assert_relative_eq!(d, pseudoinverse(&j, tol()), epsilon = 1e-10);
    }

    #[test]
    fn undamped_rank_deficient_is_an_error() {
        let mut j = DMatrix::<f64>::zeros(3, 3);
        j[(0, 1)] = 2.0;
        j[(0, 2)] = 1.0;
        assert!(matches!(
            damped_pseudoinverse(&j, 0.0),
            Err(PinvError::SingularUndamped { rank: 1, rows: 3 })
        ));
    }

    #[test]
    fn damping_is_monotone_in_lambda() {
        let sigma = 0.7f64;
        let mut prev = f64::INFINITY;
        for l in [1e-4, 1e-2, 0.3, 1.0, 5.0] {
            let gain = sigma / (sigma * sigma + l * l);
            assert!(gain < prev);
            prev = gain;
        }
    }

    #[test]
    fn weighted_reduces_to_pseudoinverse_with_identity_weight() {
        let j = DMatrix::<f64>::from_fn(2, 4, |r, c| ((r + 2 * c) as f64 * 0.71).sin() + 0.2);
        let w = weighted_right_pseudoinverse(&j, &DMatrix::identity(4, 4)).unwrap();
        assert_relative_eq!(w, pseudoinverse(&j, tol()), epsilon = 1e-10);
    }

    #[test]
    fn weighted_two_variable_least_norm_by_hand() {
        // minimize q̇ᵀ diag(1,4) q̇ subject to q̇₁ + q̇₂ = 1 → (0.8, 0.2)
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let w = weighted_right_pseudoinverse(&j, &m).unwrap();
        assert_relative_eq!(w[(0, 0)], 0.8, epsilon = 1e-12);
        assert_relative_eq!(w[(1, 0)], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn weighted_rejects_row_rank_deficient_matrices() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 2.0, 0.0, 4.0]);
        assert!(matches!(
            weighted_right_pseudoinverse(&j, &DMatrix::identity(3, 3)),
            Err(PinvError::RankDeficient { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn weighted_rejects_asymmetric_and_indefinite_weights() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1e-6, 0.0, 1.0]);
        assert_eq!(
            weighted_right_pseudoinverse(&j, &asym),
            Err(PinvError::NotSpd)
        );
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            weighted_right_pseudoinverse(&j, &indef),
            Err(PinvError::NotSpd)
        );
    }

    #[test]
    fn kernel_of_full_row_rank_matrix_is_empty() {
        let j = DMatrix::<f64>::from_fn(2, 4, |r, c| ((r + c) as f64 * 0.3).cos() + 0.4);
        assert!(kernel_basis(&j, tol()).is_empty());
    }

    #[test]
    fn kernel_of_zero_matrix_is_full_standard_basis() {
        let z = DMatrix::<f64>::zeros(4, 3);
        let k = kernel_basis(&z, tol());
        assert_eq!(k.len(), 4);
        let mut stacked = DMatrix::zeros(4, 4);
        for (i, v) in k.iter().enumerate() {
            stacked.column_mut(i).copy_from(v);
        }
        assert_relative_eq!(
            stacked.transpose() * &stacked,
            DMatrix::identity(4, 4),
            epsilon = 1e-14
        );
    }

    #[test]
    fn kernel_annihilation_under_any_damping() {
        // any commanded velocity in the numerical left kernel maps to zero
        // joint velocity regardless of damping
        let mut j = DMatrix::<f64>::zeros(3, 4);
        j[(0, 0)] = 1.0;
        j[(0, 2)] = -2.0;
        let kernel = kernel_basis(&j, tol());
        assert_eq!(kernel.len(), 2);
        for lambda in [0.5, 1e-2, 1e-6] {
            let d = damped_pseudoinverse(&j, lambda).unwrap();
            for v in &kernel {
                assert!((&d * v).norm() <= 1e-15);
            }
        }
    }

    #[test]
    fn full_factors_are_orthogonal_for_tall_matrices() {
        let j = DMatrix::<f64>::from_fn(5, 2, |r, c| ((r * 2 + c) as f64 * 0.9).sin());
        let f = SvdFactors::factorize(&j, tol());
        assert_eq!(f.u.shape(), (5, 5));
        assert_eq!(f.v.shape(), (2, 2));
        assert_relative_eq!(
            f.u.transpose() * &f.u,
            DMatrix::identity(5, 5),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            f.v.transpose() * &f.v,
            DMatrix::identity(2, 2),
            epsilon = 1e-10
        );
        assert_eq!(f.kernel_columns().len(), 3);
        assert!(
            f.singular_values
                .iter()
                .zip(f.singular_values.iter().skip(1))
                .all(|(a, b)| a >= b),
            "singular values must be sorted descending"
        );
    }
}
