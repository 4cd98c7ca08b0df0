//! Minimisation of the generalised Rayleigh quotient `4 a'Aa / a'Ba`.
//!
//! With `B` of full rank the minimiser is `B^{-1/2} V1`, `V1` being the unit
//! eigenvector of the smallest eigenvalue of `C = B^{-1/2} A B^{-1/2}`, and the
//! minimal information is four times that eigenvalue. When experts coincide,
//! `B` loses rank; because `Null(B)` is contained in `Null(A)` the problem is
//! projected onto the retained eigenvectors `O1` of `B` and solved there.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GramPair, Provenance};

/// Relative eigenvalue cut for the rank of `B`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative gap below which the two smallest eigenvalues count as tied.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

/// Smallest admissible `a'Ba` for [`rayleigh`].
pub const MIN_DIRECTION_NORM: f64 = 1e-14;

/// Largest accepted condition number of a basis change.
pub const MAX_TRANSFORM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingSolution {
    /// B-normalised optimal weights.
    pub alpha: Vec<f64>,
    pub lambda_min: f64,
    /// `4 * lambda_min`.
    pub information: f64,
    pub effective_rank: usize,
    pub used_reduction: bool,
    pub multiplicity_warning: bool,
}

/// Retained part of the eigendecomposition of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReduction {
    pub r: usize,
    pub retained_eigenvalues: DVector<f64>,
    /// `m x r`, orthonormal columns.
    pub retained_basis: DMatrix<f64>,
    /// `O1' A O1`.
    pub reduced_a: DMatrix<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs sorted by ascending eigenvalue. The sort is stable, so tied
/// eigenvalues keep the order the decomposition produced them in.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

fn check_rank_tol(rank_tol: f64) -> Result<()> {
    if rank_tol > 0.0 && rank_tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "rank_tol must lie in (0, 1), got {rank_tol}"
        )))
    }
}

fn b_spectrum(g: &GramPair) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (delta, o) = sorted_eigen(&g.b);
    let top = *delta.last().expect("non-empty");
    if !(top.is_finite() && top > f64::MIN_POSITIVE) {
        return Err(Error::DegenerateGram);
    }
    Ok((delta, o))
}

/// Minimises `a'Aa / a'Ba` over all `a` with `a'Ba > 0`.
pub fn min_rayleigh(g: &GramPair, rank_tol: f64) -> Result<PoolingSolution> {
    check_rank_tol(rank_tol)?;
    let m = g.m();
    let (delta, o) = b_spectrum(g)?;
    let top = delta[m - 1];

    let (lambdas, alpha, rank, reduced) = if delta[0] > rank_tol * top {
        // B^{-1/2} = O diag(delta^{-1/2}) O'
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            delta.iter().map(|d| 1.0 / d.sqrt()),
        ));
        let b_inv_sqrt = symmetrize(&(&o * inv_sqrt * o.transpose()));
        let c = &b_inv_sqrt * &g.a * &b_inv_sqrt;
        let (lambdas, v) = sorted_eigen(&c);
        let alpha = &b_inv_sqrt * v.column(0);
        (lambdas, alpha, m, false)
    } else {
        let rr = reduce_rank_from(g, &delta, &o, rank_tol)?;
        let inv_sqrt = DMatrix::from_diagonal(&rr.retained_eigenvalues.map(|d| 1.0 / d.sqrt()));
        let c = &inv_sqrt * &rr.reduced_a * &inv_sqrt;
        let (lambdas, v) = sorted_eigen(&c);
        let alpha = &rr.retained_basis * (&inv_sqrt * v.column(0));
        (lambdas, alpha, rr.r, true)
    };

    let multiplicity_warning = lambdas.len() >= 2 && {
        let gap = lambdas[1] - lambdas[0];
        gap <= MULTIPLICITY_TOL * lambdas[0].abs().max(lambdas[1].abs())
    };

    let mut alpha = alpha;
    let norm = alpha.dot(&(&g.b * &alpha));
    if norm > 0.0 {
        alpha /= norm.sqrt();
    }
    orient(&mut alpha, &g.b);

    let lambda_min = lambdas[0].max(0.0);
    Ok(PoolingSolution {
        alpha: alpha.iter().copied().collect(),
        lambda_min,
        information: 4.0 * lambda_min,
        effective_rank: rank,
        used_reduction: reduced,
        multiplicity_warning,
    })
}

/// Sign rule: positive overlap with the equal-weight direction, else first
/// nonzero component positive.
fn orient(alpha: &mut DVector<f64>, b: &DMatrix<f64>) {
    let overlap: f64 = (b * &*alpha).sum();
    let flip = if overlap != 0.0 {
        overlap < 0.0
    } else {
        alpha.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
    };
    if flip {
        alpha.neg_mut();
    }
}

/// Projects the pencil onto the eigenvectors of `B` whose eigenvalues exceed
/// `rank_tol` times the largest.
pub fn reduce_rank(g: &GramPair, rank_tol: f64) -> Result<RankReduction> {
    check_rank_tol(rank_tol)?;
    let (delta, o) = b_spectrum(g)?;
    reduce_rank_from(g, &delta, &o, rank_tol)
}

fn reduce_rank_from(
    g: &GramPair,
    delta: &[f64],
    o: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<RankReduction> {
    let m = delta.len();
    let cut = rank_tol * delta[m - 1];
    let keep: Vec<usize> = (0..m).filter(|&k| delta[k] > cut).collect();
    if keep.is_empty() {
        return Err(Error::DegenerateGram);
    }
    let r = keep.len();
    let mut basis = DMatrix::zeros(m, r);
    for (col, &k) in keep.iter().enumerate() {
        basis.set_column(col, &o.column(k));
    }
    let reduced_a = symmetrize(&(basis.transpose() * &g.a * &basis));
    Ok(RankReduction {
        r,
        retained_eigenvalues: DVector::from_iterator(r, keep.iter().map(|&k| delta[k])),
        retained_basis: basis,
        reduced_a,
    })
}

/// `4 a'Aa / a'Ba`.
pub fn rayleigh(g: &GramPair, alpha: &[f64]) -> Result<f64> {
    let m = g.m();
    if alpha.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: alpha.len(),
        });
    }
    let v = DVector::from_column_slice(alpha);
    let denom = v.dot(&(&g.b * &v));
    if !(denom > MIN_DIRECTION_NORM) {
        return Err(Error::DegenerateDirection(denom));
    }
    Ok(4.0 * v.dot(&(&g.a * &v)) / denom)
}

/// Gram pair of the basis `R psi`: `(R A R', R B R')`.
///
/// For the transformed pair the optimal weights satisfy `alpha = R' alpha~`.
pub fn basis_transform(g: &GramPair, r: &DMatrix<f64>) -> Result<GramPair> {
    let m = g.m();
    if r.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: r.nrows(),
        });
    }
    let sv = r.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < MAX_TRANSFORM_CONDITION) {
        return Err(Error::SingularTransform(cond));
    }
    let congruence = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = r * x * r.transpose();
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (y[(i, j)] + y[(j, i)]);
                y[(i, j)] = v;
                y[(j, i)] = v;
            }
        }
        y
    };
    GramPair::from_matrices(
        congruence(&g.a),
        congruence(&g.b),
        vec![Provenance::Transformed; m * m],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(a: &[f64], b: &[f64], m: usize) -> GramPair {
        GramPair::from_matrices(
            DMatrix::from_row_slice(m, m, a),
            DMatrix::from_row_slice(m, m, b),
            vec![Provenance::ClosedForm; m * m],
        )
        .unwrap()
    }

    #[test]
    fn singleton_returned_unchanged() {
        let g = pair(&[0.3], &[1.0], 1);
        let s = min_rayleigh(&g, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.alpha, vec![1.0]);
        assert_abs_diff_eq!(s.information, 1.2, epsilon = 1e-15);
        assert_eq!(s.effective_rank, 1);
        assert!(!s.used_reduction && !s.multiplicity_warning);
    }

    #[test]
    fn isotropic_pencil_warns() {
        let g = pair(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0], 2);
        let s1 = min_rayleigh(&g, DEFAULT_RANK_TOL).unwrap();
        let s2 = min_rayleigh(&g, DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(s1.lambda_min, 1.0, epsilon = 1e-14);
        assert!(s1.multiplicity_warning);
        assert_eq!(s1, s2);
        let norm: f64 = s1.alpha.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn duplicated_expert_reduces() {
        let a = 0.25;
        let g = pair(&[a, a, a, a], &[1.0, 1.0, 1.0, 1.0], 2);
        let rr = reduce_rank(&g, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rr.r, 1);
        assert_abs_diff_eq!(rr.retained_eigenvalues[0], 2.0, epsilon = 1e-14);
        let s = min_rayleigh(&g, DEFAULT_RANK_TOL).unwrap();
        assert!(s.used_reduction);
        assert_eq!(s.effective_rank, 1);
        assert_abs_diff_eq!(s.information, 4.0 * a, epsilon = 1e-14);
        // direction (1/2, 1/2) scaled to a'Ba = 1
        assert_abs_diff_eq!(s.alpha[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.alpha[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn sign_convention_holds() {
        let g = pair(&[0.25, 0.003, 0.003, 0.11], &[1.0, 0.59, 0.59, 1.0], 2);
        let s = min_rayleigh(&g, DEFAULT_RANK_TOL).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.59, 0.59, 1.0]);
        let v = DVector::from_column_slice(&s.alpha);
        assert!((&b * &v).sum() > 0.0);
        assert_abs_diff_eq!(v.dot(&(&b * &v)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rayleigh_scale_invariant() {
        let g = pair(&[0.25, 0.003, 0.003, 0.11], &[1.0, 0.59, 0.59, 1.0], 2);
        let alpha = [0.3, -0.7];
        let base = rayleigh(&g, &alpha).unwrap();
        for k in [-3.0, 0.5, 10.0] {
            let scaled: Vec<f64> = alpha.iter().map(|v| v * k).collect();
            assert_abs_diff_eq!(rayleigh(&g, &scaled).unwrap(), base, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(rayleigh(&g, &[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rayleigh_rejects_null_direction() {
        let g = pair(&[0.25, 0.25, 0.25, 0.25], &[1.0, 1.0, 1.0, 1.0], 2);
        assert!(matches!(
            rayleigh(&g, &[1.0, -1.0]),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(matches!(
            rayleigh(&g, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_b_is_degenerate() {
        let g = pair(&[1.0], &[0.0], 1);
        assert_eq!(
            min_rayleigh(&g, DEFAULT_RANK_TOL),
            Err(Error::DegenerateGram)
        );
    }

    #[test]
    fn identity_transform_is_noop() {
        let g = pair(&[0.25, 0.003, 0.003, 0.11], &[1.0, 0.59, 0.59, 1.0], 2);
        let t = basis_transform(&g, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(t.a, g.a);
        assert_eq!(t.b, g.b);
    }

    #[test]
    fn difference_basis_zeroes_first_row() {
        let a = 0.25;
        let g = pair(&[a, a, a, a], &[1.0, 1.0, 1.0, 1.0], 2);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 1.0]);
        let t = basis_transform(&g, &r).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(t.b[(0, k)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(t.a[(0, k)], 0.0, epsilon = 1e-15);
        }
        assert_eq!(t.b[(1, 1)], 1.0);
    }

    #[test]
    fn singular_transform_rejected() {
        let g = pair(&[0.25, 0.0, 0.0, 0.25], &[1.0, 0.0, 0.0, 1.0], 2);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            basis_transform(&g, &r),
            Err(Error::SingularTransform(_))
        ));
    }

    #[test]
    fn bad_rank_tol() {
        let g = pair(&[0.3], &[1.0], 1);
        assert!(min_rayleigh(&g, 0.0).is_err());
        assert!(min_rayleigh(&g, 1.5).is_err());
    }
}
