//! Hyperboloid and Poincaré-ball models of hyperbolic space (curvature −1).
//!
//! Hyperboloid points are vectors `[x₀; x]` in R^{n+1} with Lorentz self-product
//! −1 and `x₀ > 0`. Poincaré points are vectors in the open unit ball of R^n.
//! The maps [`hyperboloid_to_poincare`] and [`poincare_to_hyperboloid`] are
//! mutually inverse isometries.
//!
//! Constraint checks are relative to the size of `x₀`: for points far from the
//! base point the absolute Lorentz residual of a correctly rounded vector grows
//! like `ε·x₀²`, so an absolute tolerance would reject valid data.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Tolerance on the hyperboloid constraint, relative to `x₀`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Poincaré points with Euclidean norm at or above `1 - POINCARE_MARGIN` are rejected.
pub const POINCARE_MARGIN: f64 = 1e-12;

/// Below this Lorentz norm a tangent step is treated as zero by the retraction.
pub const RETRACTION_ZERO_NORM: f64 = 1e-14;

/// `−a₀b₀ + Σ_{k≥1} a_k b_k` without length checks.
#[inline]
pub fn lorentz_inner_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let spatial: f64 = a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum();
    spatial - a[0] * b[0]
}

/// Lorentz scalar product `−a₀b₀ + Σ_{k≥1} a_k b_k`.
pub fn lorentz_inner(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "lorentz_inner: lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Dimension(format!(
            "lorentz_inner: vectors of length {} have no spatial part",
            a.len()
        )));
    }
    Ok(lorentz_inner_unchecked(a, b))
}

/// `arccosh(max(arg, 1))`.
#[inline]
pub fn clamped_arccosh(arg: f64) -> f64 {
    arg.max(1.0).acosh()
}

/// Relative residual of the hyperboloid constraint: `|x₀ − √(1+‖x‖²)| / x₀`.
pub fn hyperboloid_residual(coords: &[f64]) -> f64 {
    let spatial_sq: f64 = coords[1..].iter().map(|v| v * v).sum();
    let expected = (1.0 + spatial_sq).sqrt();
    (coords[0] - expected).abs() / expected
}

fn check_hyperboloid(coords: &[f64]) -> Result<()> {
    if coords.len() < 2 {
        return Err(Error::Dimension(format!(
            "hyperboloid point needs at least 2 coordinates, got {}",
            coords.len()
        )));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Constraint("hyperboloid point has non-finite coordinates".into()));
    }
    if coords[0] <= 0.0 {
        return Err(Error::Constraint(format!(
            "first coordinate {} is not positive (lower sheet or degenerate)",
            coords[0]
        )));
    }
    let residual = hyperboloid_residual(coords);
    if residual > CONSTRAINT_TOL {
        return Err(Error::Constraint(format!(
            "point is off the hyperboloid (relative residual {residual:e})"
        )));
    }
    Ok(())
}

/// A point on the upper sheet of the hyperboloid H^n, stored as `[x₀; x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint(DVector<f64>);

impl HyperboloidPoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        check_hyperboloid(coords.as_slice())?;
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    /// The base point `[1; 0_n]`.
    pub fn origin(n: usize) -> Self {
        let mut coords = DVector::zeros(n + 1);
        coords[0] = 1.0;
        Self(coords)
    }

    pub(crate) fn new_unchecked(coords: DVector<f64>) -> Self {
        Self(coords)
    }

    /// Hyperbolic dimension n (the vector has n+1 entries).
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn spatial(&self) -> &[f64] {
        &self.0.as_slice()[1..]
    }
}

/// A point of the open Poincaré ball B^n.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint(DVector<f64>);

impl PoincarePoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Dimension("Poincaré point has no coordinates".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Constraint("Poincaré point has non-finite coordinates".into()));
        }
        let norm = coords.norm();
        if norm >= 1.0 - POINCARE_MARGIN {
            return Err(Error::Constraint(format!(
                "Poincaré point norm {norm} is not below 1 - {POINCARE_MARGIN:e}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// A tangent vector `dir` at `base`, i.e. `⟨base, dir⟩_L = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicTangent {
    base: HyperboloidPoint,
    dir: DVector<f64>,
}

impl HyperbolicTangent {
    pub fn new(base: HyperboloidPoint, dir: DVector<f64>) -> Result<Self> {
        if dir.len() != base.0.len() {
            return Err(Error::Dimension(format!(
                "tangent of length {} at a point of length {}",
                dir.len(),
                base.0.len()
            )));
        }
        let inner = lorentz_inner_unchecked(base.as_slice(), dir.as_slice());
        let scale = (base.0.norm() * dir.norm()).max(1.0);
        if inner.abs() > CONSTRAINT_TOL * scale {
            return Err(Error::Tangency(format!(
                "⟨base, dir⟩_L = {inner:e} is not zero"
            )));
        }
        Ok(Self { base, dir })
    }

    pub fn zero(base: HyperboloidPoint) -> Self {
        let dir = DVector::zeros(base.0.len());
        Self { base, dir }
    }

    pub fn base(&self) -> &HyperboloidPoint {
        &self.base
    }

    pub fn dir(&self) -> &DVector<f64> {
        &self.dir
    }

    /// `√⟨dir, dir⟩_L`; negative round-off is clamped to zero.
    pub fn lorentz_norm(&self) -> f64 {
        lorentz_inner_unchecked(self.dir.as_slice(), self.dir.as_slice())
            .max(0.0)
            .sqrt()
    }
}

/// Geodesic distance on H^n: `arccosh(−⟨u, v⟩_L)`.
///
/// For nearby points (`−⟨u, v⟩_L < 2`) the equivalent form
/// `2·arcsinh(‖u − v‖_L / 2)` is used instead. It avoids the `√ε` error of
/// arccosh near 1 and gives exactly 0 for identical points.
pub fn hyperboloid_distance(u: &HyperboloidPoint, v: &HyperboloidPoint) -> Result<f64> {
    let arg = -lorentz_inner(u.as_slice(), v.as_slice())?;
    if arg < 2.0 {
        let w: Vec<f64> = u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a - b).collect();
        let sq = lorentz_inner_unchecked(&w, &w).max(0.0);
        return Ok(2.0 * (0.5 * sq.sqrt()).asinh());
    }
    Ok(clamped_arccosh(arg))
}

/// Geodesic distance on B^n.
pub fn poincare_distance(u: &PoincarePoint, v: &PoincarePoint) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Dimension(format!(
            "poincare_distance: dimensions {} and {}",
            u.dim(),
            v.dim()
        )));
    }
    let diff_sq = (&u.0 - &v.0).norm_squared();
    let denom = (1.0 - u.0.norm_squared()) * (1.0 - v.0.norm_squared());
    Ok(clamped_arccosh(1.0 + 2.0 * diff_sq / denom))
}

/// `x / (x₀ + 1)`.
pub fn hyperboloid_to_poincare(u: &HyperboloidPoint) -> PoincarePoint {
    let scale = 1.0 / (u.0[0] + 1.0);
    PoincarePoint(DVector::from_iterator(
        u.dim(),
        u.spatial().iter().map(|v| v * scale),
    ))
}

/// `(1/(1−‖w‖²))·[1+‖w‖²; 2w]`.
pub fn poincare_to_hyperboloid(w: &PoincarePoint) -> HyperboloidPoint {
    let sq = w.0.norm_squared();
    let inv = 1.0 / (1.0 - sq);
    let mut coords = DVector::zeros(w.dim() + 1);
    coords[0] = (1.0 + sq) * inv;
    for (dst, src) in coords.iter_mut().skip(1).zip(w.0.iter()) {
        *dst = 2.0 * src * inv;
    }
    HyperboloidPoint(coords)
}

/// `[√(1+‖x‖²); x]`.
pub fn lift_to_hyperboloid(x: &[f64]) -> Result<HyperboloidPoint> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cannot lift a non-finite vector".into()));
    }
    let mut coords = DVector::zeros(x.len() + 1);
    coords[0] = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
    coords.as_mut_slice()[1..].copy_from_slice(x);
    Ok(HyperboloidPoint(coords))
}

/// In-place `ζ ← ζ + z̄·⟨z̄, ζ⟩_L`.
#[inline]
pub(crate) fn project_hyperbolic_in_place(base: &[f64], ambient: &mut [f64]) {
    let coef = lorentz_inner_unchecked(base, ambient);
    for (a, b) in ambient.iter_mut().zip(base) {
        *a += coef * b;
    }
}

/// Orthogonal (Lorentz) projection onto the tangent space at `base`.
pub fn project_to_hyperbolic_tangent(
    base: &HyperboloidPoint,
    ambient: &[f64],
) -> Result<HyperbolicTangent> {
    if ambient.len() != base.0.len() {
        return Err(Error::Dimension(format!(
            "cannot project a vector of length {} at a point of length {}",
            ambient.len(),
            base.0.len()
        )));
    }
    let mut dir = DVector::from_column_slice(ambient);
    project_hyperbolic_in_place(base.as_slice(), dir.as_mut_slice());
    Ok(HyperbolicTangent {
        base: base.clone(),
        dir,
    })
}

/// Recomputes `x₀` from the spatial part when the constraint has drifted.
#[inline]
pub(crate) fn renormalize_in_place(coords: &mut [f64]) {
    if hyperboloid_residual(coords) > CONSTRAINT_TOL {
        let spatial_sq: f64 = coords[1..].iter().map(|v| v * v).sum();
        coords[0] = (1.0 + spatial_sq).sqrt();
    }
}

/// Exponential-map retraction written into `out`. Returns the Lorentz norm of `dir`.
pub(crate) fn retract_into(base: &[f64], dir: &[f64], out: &mut [f64]) -> Result<f64> {
    let sq = lorentz_inner_unchecked(dir, dir);
    let scale = dir.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if sq < -CONSTRAINT_TOL * scale {
        return Err(Error::Tangency(format!(
            "⟨ξ, ξ⟩_L = {sq:e} is negative; direction is not tangent"
        )));
    }
    let norm = sq.max(0.0).sqrt();
    if norm < RETRACTION_ZERO_NORM {
        out.copy_from_slice(base);
        return Ok(norm);
    }
    let (c, s) = (norm.cosh(), norm.sinh() / norm);
    for ((o, b), d) in out.iter_mut().zip(base).zip(dir) {
        *o = c * b + s * d;
    }
    renormalize_in_place(out);
    Ok(norm)
}

/// `z̄·cosh(‖ξ‖_L) + ξ·sinh(‖ξ‖_L)/‖ξ‖_L`.
pub fn hyperbolic_retract(tangent: &HyperbolicTangent) -> Result<HyperboloidPoint> {
    let mut out = DVector::zeros(tangent.dir.len());
    retract_into(
        tangent.base.as_slice(),
        tangent.dir.as_slice(),
        out.as_mut_slice(),
    )?;
    Ok(HyperboloidPoint(out))
}
