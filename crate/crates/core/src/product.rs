//! The search space St(r, n) × H^r × … × H^r (m hyperbolic factors).
//!
//! A [`ProductPoint`] stores the subspace `U` (n×r) and the low-dimensional
//! hyperboloid points `z̄ᵢ = [z₀ᵢ; zᵢ]` as the columns of an (r+1)×m matrix,
//! so row 0 holds `z₀` and rows 1..=r hold `Z`. Tangent vectors and ambient
//! derivatives share that layout ([`ProductVector`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hyperbolic::{
    self, hyperboloid_residual, lorentz_inner_unchecked, HyperboloidPoint, CONSTRAINT_TOL,
};
use crate::stiefel::{self, orthonormality_residual, StiefelPoint, ORTHONORMALITY_TOL};
use crate::svd;

/// A point `y = (U, z̄₁, …, z̄_m)` of the product manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    u: DMatrix<f64>,
    zbar: DMatrix<f64>,
}

/// An element of R^{n×r} × (R^{r+1})^m: tangent vectors, ambient gradients
/// and Hessian-vector products all use this representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductVector {
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Tangent vector at a [`ProductPoint`] (componentwise tangency is the caller's contract).
pub type ProductTangent = ProductVector;

/// Euclidean derivative of a loss with respect to `(U, z̄₁, …, z̄_m)`.
pub type AmbientGradient = ProductVector;

impl ProductPoint {
    /// Validates both factors.
    pub fn new(u: DMatrix<f64>, zbar: DMatrix<f64>) -> Result<Self> {
        let point = Self::new_unchecked(u, zbar);
        point.validate()?;
        Ok(point)
    }

    /// A point of the ambient space `R^{n×r} × R^{(r+1)×m}`, checked for shape only.
    ///
    /// Loss values and ambient derivatives are defined off the manifold, which
    /// is what finite-difference checks need. Manifold operations and the
    /// solver expect points built with [`ProductPoint::new`].
    pub fn ambient(u: DMatrix<f64>, zbar: DMatrix<f64>) -> Result<Self> {
        let (n, r) = u.shape();
        if r == 0 || r > n || zbar.nrows() != r + 1 {
            return Err(Error::Dimension(format!(
                "U is {n}×{r} and Z̄ has {} rows; need 1 ≤ r ≤ n and r + 1 rows",
                zbar.nrows()
            )));
        }
        Ok(Self::new_unchecked(u, zbar))
    }

    pub(crate) fn new_unchecked(u: DMatrix<f64>, zbar: DMatrix<f64>) -> Self {
        Self { u, zbar }
    }

    pub fn from_parts(u: StiefelPoint, points: &[HyperboloidPoint]) -> Result<Self> {
        let r = u.r();
        let mut zbar = DMatrix::zeros(r + 1, points.len());
        for (i, p) in points.iter().enumerate() {
            if p.dim() != r {
                return Err(Error::Dimension(format!(
                    "hyperbolic factor {i} has dimension {}, expected {r}",
                    p.dim()
                )));
            }
            zbar.column_mut(i).copy_from(p.coords());
        }
        Ok(Self {
            u: u.into_inner(),
            zbar,
        })
    }

    /// Checks `UᵀU = I` and the hyperboloid constraint on every column of `Z̄`.
    pub fn validate(&self) -> Result<()> {
        let (n, r) = self.u.shape();
        if r == 0 || r > n {
            return Err(Error::Dimension(format!("U is {n}×{r}; need 1 ≤ r ≤ n")));
        }
        if self.zbar.nrows() != r + 1 {
            return Err(Error::Dimension(format!(
                "Z̄ has {} rows, expected r + 1 = {}",
                self.zbar.nrows(),
                r + 1
            )));
        }
        let residual = orthonormality_residual(&self.u);
        if !(residual < ORTHONORMALITY_TOL) {
            return Err(Error::Constraint(format!(
                "U is not orthonormal (residual {residual:e})"
            )));
        }
        let bad = invalid_columns(&self.zbar);
        if !bad.is_empty() {
            return Err(Error::Constraint(format!(
                "hyperbolic factors off the hyperboloid at columns {}",
                format_indices(&bad)
            )));
        }
        Ok(())
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// The (r+1)×m matrix `Z̄ = [z₀ᵀ; Z]`.
    pub fn zbar(&self) -> &DMatrix<f64> {
        &self.zbar
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn m(&self) -> usize {
        self.zbar.ncols()
    }

    /// Intrinsic dimension `nr − r(r+1)/2 + mr`.
    pub fn manifold_dim(&self) -> usize {
        let (n, r, m) = (self.n(), self.r(), self.m());
        n * r - r * (r + 1) / 2 + m * r
    }

    pub fn stiefel(&self) -> StiefelPoint {
        StiefelPoint::new_unchecked(self.u.clone())
    }

    pub fn hyperbolic(&self, i: usize) -> HyperboloidPoint {
        HyperboloidPoint::new_unchecked(self.zbar.column(i).into_owned())
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.u, self.zbar)
    }
}

impl ProductVector {
    pub fn zeros(n: usize, r: usize, m: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, r),
            z: DMatrix::zeros(r + 1, m),
        }
    }

    pub fn zeros_like(y: &ProductPoint) -> Self {
        Self::zeros(y.n(), y.r(), y.m())
    }

    pub fn same_shape(&self, y: &ProductPoint) -> bool {
        self.u.shape() == y.u.shape() && self.z.shape() == y.zbar.shape()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            u: &self.u * alpha,
            z: &self.z * alpha,
        }
    }

    /// `self ← self + alpha·other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.u.zip_apply(&other.u, |a, b| *a += alpha * b);
        self.z.zip_apply(&other.z, |a, b| *a += alpha * b);
    }

    /// `alpha·a + beta·b`.
    pub fn lincomb(alpha: f64, a: &Self, beta: f64, b: &Self) -> Self {
        let mut out = a.scale(alpha);
        out.axpy(beta, b);
        out
    }

    /// Plain Euclidean pairing `⟨a_U, b_U⟩_F + Σᵢ a_{z̄ᵢ}ᵀ b_{z̄ᵢ}`.
    pub fn euclidean_dot(&self, other: &Self) -> f64 {
        self.u.dot(&other.u) + self.z.dot(&other.z)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.z.iter()).all(|v| v.is_finite())
    }
}

/// Product metric: Frobenius on the Stiefel factor plus the Lorentz product on
/// each hyperbolic factor.
pub fn product_metric_unchecked(xi: &ProductVector, eta: &ProductVector) -> f64 {
    let lorentz: f64 = xi
        .z
        .column_iter()
        .zip(eta.z.column_iter())
        .map(|(a, b)| lorentz_inner_unchecked(a.as_slice(), b.as_slice()))
        .sum();
    xi.u.dot(&eta.u) + lorentz
}

pub fn product_metric(y: &ProductPoint, xi: &ProductTangent, eta: &ProductTangent) -> Result<f64> {
    if !xi.same_shape(y) || !eta.same_shape(y) {
        return Err(Error::Dimension(
            "tangent vectors do not match the point's shape".into(),
        ));
    }
    Ok(product_metric_unchecked(xi, eta))
}

/// Norm induced by the product metric; round-off below zero is clamped.
pub fn product_norm(xi: &ProductVector) -> f64 {
    product_metric_unchecked(xi, xi).max(0.0).sqrt()
}

pub(crate) fn project_unchecked(y: &ProductPoint, ambient: &ProductVector) -> ProductTangent {
    let u = stiefel::project_unchecked(&y.u, &ambient.u);
    let mut z = ambient.z.clone();
    for (mut col, base) in z.column_iter_mut().zip(y.zbar.column_iter()) {
        hyperbolic::project_hyperbolic_in_place(base.as_slice(), col.as_mut_slice());
    }
    ProductVector { u, z }
}

/// Componentwise orthogonal projection onto `T_y M`.
pub fn product_project(y: &ProductPoint, ambient: &ProductVector) -> Result<ProductTangent> {
    if !ambient.same_shape(y) {
        return Err(Error::Dimension(format!(
            "ambient vector shapes {:?}/{:?} do not match point shapes {:?}/{:?}",
            ambient.u.shape(),
            ambient.z.shape(),
            y.u.shape(),
            y.zbar.shape()
        )));
    }
    Ok(project_unchecked(y, ambient))
}

/// Polar retraction on the Stiefel factor, exponential map on each hyperbolic factor.
pub fn product_retract(y: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
    if !xi.same_shape(y) {
        return Err(Error::Dimension(
            "tangent vector does not match the point's shape".into(),
        ));
    }
    let u = if xi.u.iter().all(|&v| v == 0.0) {
        y.u.clone()
    } else {
        stiefel::polar_factor(&(&y.u + &xi.u))?
    };
    let mut zbar = DMatrix::zeros(y.zbar.nrows(), y.zbar.ncols());
    for ((mut out, base), dir) in zbar
        .column_iter_mut()
        .zip(y.zbar.column_iter())
        .zip(xi.z.column_iter())
    {
        hyperbolic::retract_into(base.as_slice(), dir.as_slice(), out.as_mut_slice())?;
    }
    Ok(ProductPoint { u, zbar })
}

/// Persisted low-rank factorization: `x̄ᵢ ≈ [z₀ᵢ; U zᵢ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredEmbedding {
    u: DMatrix<f64>,
    z: DMatrix<f64>,
    z0: DVector<f64>,
    labels: Vec<String>,
}

impl FactoredEmbedding {
    pub fn new(
        u: DMatrix<f64>,
        z: DMatrix<f64>,
        z0: DVector<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let (n, r) = u.shape();
        if r == 0 || r > n {
            return Err(Error::Dimension(format!("U is {n}×{r}; need 1 ≤ r ≤ n")));
        }
        if z.nrows() != r || z.ncols() != z0.len() || labels.len() != z0.len() {
            return Err(Error::Dimension(format!(
                "Z is {}×{}, z0 has {} entries and there are {} labels (r = {r})",
                z.nrows(),
                z.ncols(),
                z0.len(),
                labels.len()
            )));
        }
        let residual = orthonormality_residual(&u);
        if !(residual < ORTHONORMALITY_TOL) {
            return Err(Error::Constraint(format!(
                "U is not orthonormal (residual {residual:e})"
            )));
        }
        let mut bad = Vec::new();
        let mut column = vec![0.0; r + 1];
        for i in 0..z.ncols() {
            column[0] = z0[i];
            column[1..].copy_from_slice(z.column(i).as_slice());
            if !(column.iter().all(|v| v.is_finite())
                && z0[i] > 0.0
                && hyperboloid_residual(&column) <= CONSTRAINT_TOL)
            {
                bad.push(i);
            }
        }
        if !bad.is_empty() {
            return Err(Error::Constraint(format!(
                "z0 does not match √(1 + ‖zᵢ‖²) at columns {}",
                format_indices(&bad)
            )));
        }
        Ok(Self { u, z, z0, labels })
    }

    /// Builds the factorization from a solver iterate, labelling columns with `labels`.
    pub fn from_point(y: &ProductPoint, labels: Vec<String>) -> Result<Self> {
        let r = y.r();
        let z = y.zbar.rows(1, r).into_owned();
        let z0 = y.zbar.row(0).transpose();
        Self::new(y.u.clone(), z, z0, labels)
    }

    pub fn to_point(&self) -> ProductPoint {
        let r = self.r();
        let mut zbar = DMatrix::zeros(r + 1, self.m());
        zbar.row_mut(0).copy_from(&self.z0.transpose());
        zbar.rows_mut(1, r).copy_from(&self.z);
        ProductPoint {
            u: self.u.clone(),
            zbar,
        }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn z0(&self) -> &DVector<f64> {
        &self.z0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.m() {
            return Err(Error::Dimension(format!(
                "{} labels for {} columns",
                labels.len(),
                self.m()
            )));
        }
        self.labels = labels;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn m(&self) -> usize {
        self.z.ncols()
    }

    /// Number of stored floats: `nr + mr + m`.
    pub fn stored_floats(&self) -> usize {
        self.u.len() + self.z.len() + self.z0.len()
    }
}

/// Default column labels `"0"`, `"1"`, ….
pub fn index_labels(m: usize) -> Vec<String> {
    (0..m).map(|i| i.to_string()).collect()
}

/// `[1 0ᵀ; 0 U]·Z̄`: the (n+1)×m matrix whose column i is `[z₀ᵢ; U zᵢ]`.
pub fn expand(f: &FactoredEmbedding) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(f.n() + 1, f.m());
    out.row_mut(0).copy_from(&f.z0.transpose());
    out.rows_mut(1, f.n()).copy_from(&(&f.u * &f.z));
    out
}

/// Same as [`expand`] for a solver iterate.
pub fn expand_point(y: &ProductPoint) -> DMatrix<f64> {
    let (n, r) = (y.n(), y.r());
    let mut out = DMatrix::zeros(n + 1, y.m());
    out.row_mut(0).copy_from(&y.zbar.row(0));
    out.rows_mut(1, n).copy_from(&(&y.u * y.zbar.rows(1, r)));
    out
}

/// Indices of columns of `m` that are not valid hyperboloid points.
pub fn invalid_columns(m: &DMatrix<f64>) -> Vec<usize> {
    m.column_iter()
        .enumerate()
        .filter(|(_, c)| {
            let s = c.as_slice();
            !(s.len() >= 2
                && s.iter().all(|v| v.is_finite())
                && s[0] > 0.0
                && hyperboloid_residual(s) <= CONSTRAINT_TOL)
        })
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn format_indices(indices: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = indices
        .iter()
        .take(SHOWN)
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if indices.len() > SHOWN {
        s.push_str(&format!(", … ({} total)", indices.len()));
    }
    s
}

/// Checks that every column of `xbar` lies on H^n with n ≥ 1.
pub fn validate_embeddings(xbar: &DMatrix<f64>) -> Result<()> {
    if xbar.nrows() < 2 {
        return Err(Error::Dimension(format!(
            "embeddings need at least 2 rows, got {}",
            xbar.nrows()
        )));
    }
    if xbar.ncols() == 0 {
        return Err(Error::EmptyInput("no embedding columns".into()));
    }
    let bad = invalid_columns(xbar);
    if !bad.is_empty() {
        return Err(Error::Constraint(format!(
            "embedding columns off the hyperboloid: {}",
            format_indices(&bad)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Top-r left singular vectors of the spatial block (the closed-form solution).
    #[default]
    SvdWarm,
    /// A seeded random orthonormal subspace.
    Random,
}

/// Starting point: `zᵢ = Uᵀxᵢ` lifted to H^r, with `U` chosen by `strategy`.
pub fn initialize(
    xbar: &DMatrix<f64>,
    r: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<ProductPoint> {
    validate_embeddings(xbar)?;
    let n = xbar.nrows() - 1;
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!(
            "rank must satisfy 1 ≤ r ≤ n = {n}, got {r}"
        )));
    }
    let x = xbar.rows(1, n);
    let u = match strategy {
        InitStrategy::SvdWarm => {
            let k = r.min(xbar.ncols());
            let leading = svd::leading_left_singular_vectors(&x.into_owned(), k);
            stiefel::complete_orthonormal(&leading, r)
        }
        InitStrategy::Random => stiefel::random_stiefel(n, r, seed)?.into_inner(),
    };
    let z = u.tr_mul(&x);
    Ok(ProductPoint::new_unchecked(u, lift_columns(&z)))
}

/// Stacks `[√(1+‖zᵢ‖²); zᵢ]` for every column of `z`.
pub(crate) fn lift_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let r = z.nrows();
    let mut zbar = DMatrix::zeros(r + 1, z.ncols());
    for (i, col) in z.column_iter().enumerate() {
        zbar[(0, i)] = (1.0 + col.norm_squared()).sqrt();
        zbar.view_mut((1, i), (r, 1)).copy_from(&col);
    }
    zbar
}
