//! Closed-form factorization of the spatial block (`svd`).
//!
//! The spatial block `X` (rows 1..=n of `X̄`) is replaced by its best rank-r
//! approximation `UUᵀX`; each `zᵢ = Uᵀxᵢ` is then lifted back to H^r. The
//! first row `x₀` plays no role: it is implied by the hyperboloid constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::product::{index_labels, validate_embeddings, FactoredEmbedding};

/// Left singular vectors and singular values of `x`, singular values descending.
///
/// Wide matrices are first reduced with a QR factorization of `xᵀ`, so the
/// SVD itself only ever runs on an n×n triangular factor.
fn left_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = x.shape();
    let svd = if m > 2 * n {
        let r_t = x.transpose().qr().r().transpose();
        r_t.svd(true, false)
    } else {
        x.clone().svd(true, false)
    };
    let mut u = svd.u.expect("left singular vectors requested");
    fix_signs(&mut u);
    (u, svd.singular_values)
}

/// Flips each column so that its largest-magnitude entry is positive
/// (the first such entry on ties).
fn fix_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// The leading `k` left singular vectors of `x` (n×k), `k ≤ min(n, m)`.
pub(crate) fn leading_left_singular_vectors(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (u, _) = left_svd(x);
    u.columns(0, k).into_owned()
}

/// Singular values of the spatial block of `xbar`, descending.
pub fn spatial_singular_values(xbar: &DMatrix<f64>) -> Result<DVector<f64>> {
    if xbar.nrows() < 2 || xbar.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "embedding matrix is {}×{}",
            xbar.nrows(),
            xbar.ncols()
        )));
    }
    let x = xbar.rows(1, xbar.nrows() - 1).into_owned();
    Ok(left_svd(&x).1)
}

/// Best rank-r factorization of the spatial block with orthonormal `U`.
pub fn solve_svd(xbar: &DMatrix<f64>, r: usize) -> Result<FactoredEmbedding> {
    validate_embeddings(xbar)?;
    let (n, m) = (xbar.nrows() - 1, xbar.ncols());
    if r == 0 || r > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "rank must satisfy 1 ≤ r ≤ min(n, m) = {}, got {r}",
            n.min(m)
        )));
    }
    let x = xbar.rows(1, n).into_owned();
    let u = leading_left_singular_vectors(&x, r);
    let z = u.tr_mul(&x);
    let z0 = DVector::from_iterator(m, z.column_iter().map(|c| (1.0 + c.norm_squared()).sqrt()));
    FactoredEmbedding::new(u, z, z0, index_labels(m))
}

/// `Σ_{k>r} σ_k(X)²`, the smallest achievable `‖X − UZ‖_F²` at rank r.
pub fn best_rank_r_error(xbar: &DMatrix<f64>, r: usize) -> Result<f64> {
    let n = xbar.nrows().saturating_sub(1);
    if r > n {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds the spatial dimension {n}"
        )));
    }
    let sigma = spatial_singular_values(xbar)?;
    Ok(sigma.iter().skip(r).map(|s| s * s).sum())
}

/// `max_i |z₀ᵢ − x₀ᵢ|`: how far the implied first row strays from the input's.
pub fn first_row_deviation(f: &FactoredEmbedding, xbar: &DMatrix<f64>) -> Result<f64> {
    if xbar.ncols() != f.m() {
        return Err(Error::Dimension(format!(
            "{} embedding columns for a factorization of {} columns",
            xbar.ncols(),
            f.m()
        )));
    }
    Ok(f
        .z0()
        .iter()
        .zip(xbar.row(0).iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
