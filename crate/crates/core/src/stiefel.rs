//! The Stiefel manifold St(r, n) of n×r matrices with orthonormal columns,
//! with the Euclidean (Frobenius) metric inherited from R^{n×r}.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Frobenius tolerance on `UᵀU − I` and on `symm(Uᵀξ)`.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// `(A + Aᵀ)/2` for a square matrix.
pub fn symm(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `‖UᵀU − I‖_F`.
pub fn orthonormality_residual(u: &DMatrix<f64>) -> f64 {
    let gram = u.tr_mul(u);
    (gram - DMatrix::identity(u.ncols(), u.ncols())).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.ncols() > matrix.nrows() {
            return Err(Error::Dimension(format!(
                "Stiefel point must be n×r with 1 ≤ r ≤ n, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let residual = orthonormality_residual(&matrix);
        if !(residual < ORTHONORMALITY_TOL) {
            return Err(Error::Constraint(format!(
                "columns are not orthonormal (‖UᵀU − I‖_F = {residual:e})"
            )));
        }
        Ok(Self(matrix))
    }

    /// The top n×r block of the identity.
    pub fn identity(n: usize, r: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, r))
    }

    pub(crate) fn new_unchecked(matrix: DMatrix<f64>) -> Self {
        Self(matrix)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn r(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiefelTangent {
    base: StiefelPoint,
    dir: DMatrix<f64>,
}

impl StiefelTangent {
    pub fn new(base: StiefelPoint, dir: DMatrix<f64>) -> Result<Self> {
        if dir.shape() != base.0.shape() {
            return Err(Error::Dimension(format!(
                "tangent shape {:?} differs from point shape {:?}",
                dir.shape(),
                base.0.shape()
            )));
        }
        let residual = symm(&base.0.tr_mul(&dir)).norm();
        if residual > ORTHONORMALITY_TOL * dir.norm().max(1.0) {
            return Err(Error::Tangency(format!(
                "‖symm(Uᵀξ)‖_F = {residual:e} is not zero"
            )));
        }
        Ok(Self { base, dir })
    }

    pub fn zero(base: StiefelPoint) -> Self {
        let dir = DMatrix::zeros(base.n(), base.r());
        Self { base, dir }
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn dir(&self) -> &DMatrix<f64> {
        &self.dir
    }
}

/// `ζ − U·symm(Uᵀζ)`, without shape checks.
pub(crate) fn project_unchecked(u: &DMatrix<f64>, ambient: &DMatrix<f64>) -> DMatrix<f64> {
    ambient - u * symm(&u.tr_mul(ambient))
}

pub fn project_to_stiefel_tangent(
    base: &StiefelPoint,
    ambient: &DMatrix<f64>,
) -> Result<StiefelTangent> {
    if ambient.shape() != base.0.shape() {
        return Err(Error::Dimension(format!(
            "cannot project a {:?} matrix at a {:?} Stiefel point",
            ambient.shape(),
            base.0.shape()
        )));
    }
    Ok(StiefelTangent {
        base: base.clone(),
        dir: project_unchecked(&base.0, ambient),
    })
}

/// Orthogonal polar factor `A(AᵀA)^{-1/2}` computed as `WVᵀ` from the thin
/// SVD `A = WΣVᵀ`. The polar factor of a full-rank matrix is unique, so the
/// result does not depend on the sign choices of the SVD.
pub fn polar_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("polar factor of a non-finite matrix".into()));
    }
    let svd = a.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let max = sigma.max();
    let min = sigma.min();
    if !(min > f64::EPSILON * max.max(1.0) * a.nrows() as f64) {
        return Err(Error::Singular(format!(
            "matrix is rank deficient (singular values in [{min:e}, {max:e}])"
        )));
    }
    let w = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(w * v_t)
}

/// `uf(U + ξ)`.
pub fn stiefel_retract(tangent: &StiefelTangent) -> Result<StiefelPoint> {
    let shifted = &tangent.base.0 + &tangent.dir;
    Ok(StiefelPoint(polar_factor(&shifted)?))
}

/// Thin Q factor of a Householder QR with the sign convention `diag(R) ≥ 0`.
pub(crate) fn q_factor(a: DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal factor of an n×r Gaussian matrix drawn from a seeded ChaCha stream.
pub fn random_stiefel(n: usize, r: usize, seed: u64) -> Result<StiefelPoint> {
    if r == 0 || r > n {
        return Err(Error::Dimension(format!(
            "random_stiefel needs 1 ≤ r ≤ n, got n = {n}, r = {r}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
    Ok(StiefelPoint(q_factor(gaussian)))
}

/// Extends the orthonormal columns of `basis` (n×k) to an orthonormal n×r
/// matrix whose first k columns are exactly `basis`.
pub(crate) fn complete_orthonormal(basis: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (n, k) = basis.shape();
    debug_assert!(k <= r && r <= n);
    if k == r {
        return basis.clone();
    }
    let mut stacked = DMatrix::zeros(n, k + n);
    stacked.columns_mut(0, k).copy_from(basis);
    stacked.columns_mut(k, n).fill_with_identity();
    let q = stacked.qr().q();
    let mut out = DMatrix::zeros(n, r);
    out.columns_mut(0, k).copy_from(basis);
    out.columns_mut(k, r - k).copy_from(&q.columns(k, r - k));
    out
}
