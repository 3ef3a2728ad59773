//! The three reconstruction losses with analytic Euclidean derivatives.
//!
//! Derivatives are taken with respect to `U` and every `z̄ᵢ` treated as free
//! ambient variables, with `ẑᵢ = [z₀ᵢ; U zᵢ]` substituted by the chain rule.
//! Gradients and Hessian-vector products come back in the
//! [`ProductVector`] layout, ready for projection onto the product manifold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::clamped_arccosh;
use crate::product::{invalid_columns, format_indices, AmbientGradient, ProductPoint, ProductVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// `‖X − UZ‖_F²` (`svd`, solved in closed form).
    #[serde(rename = "svd", alias = "spatial-euclidean")]
    SpatialEuclidean,
    /// `‖X̄ − Ẑ‖_F²` (`euclid-full`).
    #[serde(rename = "euclid-full", alias = "full-euclidean")]
    FullEuclidean,
    /// `Σᵢ d_H(x̄ᵢ, ẑᵢ)²` (`hyperbolic`).
    #[serde(rename = "hyperbolic", alias = "hyperbolic-distance")]
    HyperbolicDistance,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [
        LossKind::SpatialEuclidean,
        LossKind::FullEuclidean,
        LossKind::HyperbolicDistance,
    ];

    /// Command-line / report name.
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SpatialEuclidean => "svd",
            LossKind::FullEuclidean => "euclid-full",
            LossKind::HyperbolicDistance => "hyperbolic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" | "spatial-euclidean" | "method-1" => Ok(LossKind::SpatialEuclidean),
            "euclid-full" | "full-euclidean" | "method-2" => Ok(LossKind::FullEuclidean),
            "hyperbolic" | "hyperbolic-distance" | "method-3" => Ok(LossKind::HyperbolicDistance),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected svd, euclid-full or hyperbolic)"
            ))),
        }
    }
}

/// Below this `|c − 1|` the derivatives of `arccosh(c)²` use their Taylor series.
const SERIES_THRESHOLD: f64 = 1e-4;

/// First and second derivatives of `φ(c) = arccosh(c)²`.
///
/// Near `c = 1` the closed forms are 0/0; the series
/// `φ' = 2 − 2δ/3 + 4δ²/15 − 4δ³/35`, `φ'' = −2/3 + 8δ/15 − 12δ²/35` (δ = c − 1)
/// is used instead and is accurate to round-off at the threshold.
pub(crate) fn arccosh_sq_derivatives(c: f64) -> (f64, f64) {
    let d = c - 1.0;
    if d < SERIES_THRESHOLD {
        let d1 = 2.0 + d * (-2.0 / 3.0 + d * (4.0 / 15.0 - d * 4.0 / 35.0));
        let d2 = -2.0 / 3.0 + d * (8.0 / 15.0 - d * 12.0 / 35.0);
        return (d1, d2);
    }
    let a = c.acosh();
    let s2 = d * (c + 1.0);
    let s = s2.sqrt();
    let d1 = 2.0 * a / s;
    let d2 = (2.0 / s2) * (1.0 - a * (c / s));
    (d1, d2)
}

fn check_shapes(y: &ProductPoint, xbar: &DMatrix<f64>) -> Result<()> {
    if xbar.nrows() != y.n() + 1 || xbar.ncols() != y.m() {
        return Err(Error::Dimension(format!(
            "embeddings are {}×{} but the point expects {}×{}",
            xbar.nrows(),
            xbar.ncols(),
            y.n() + 1,
            y.m()
        )));
    }
    Ok(())
}

/// Loss value and cached intermediates at one point, reused for the gradient
/// and for any number of Hessian-vector products.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    kind: LossKind,
    xbar: &'a DMatrix<f64>,
    y: ProductPoint,
    value: f64,
    /// `X − UZ` (Euclidean losses).
    residual: DMatrix<f64>,
    /// `ZZᵀ` (Euclidean losses).
    zzt: DMatrix<f64>,
    /// `UᵀX` (hyperbolic loss).
    utx: DMatrix<f64>,
    /// `φ'(cᵢ)`, `φ''(cᵢ)` (hyperbolic loss).
    dphi: DVector<f64>,
    d2phi: DVector<f64>,
}

impl<'a> Evaluation<'a> {
    pub fn new(kind: LossKind, y: ProductPoint, xbar: &'a DMatrix<f64>) -> Result<Self> {
        check_shapes(&y, xbar)?;
        let (n, r, m) = (y.n(), y.r(), y.m());
        let x = xbar.rows(1, n);
        let z = y.zbar().rows(1, r);
        let mut eval = Evaluation {
            kind,
            xbar,
            y: ProductPoint::new_unchecked(DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
            value: 0.0,
            residual: DMatrix::zeros(0, 0),
            zzt: DMatrix::zeros(0, 0),
            utx: DMatrix::zeros(0, 0),
            dphi: DVector::zeros(0),
            d2phi: DVector::zeros(0),
        };
        match kind {
            LossKind::SpatialEuclidean | LossKind::FullEuclidean => {
                let mut residual = x.into_owned();
                residual.gemm(-1.0, y.u(), &z, 1.0);
                let mut value = residual.norm_squared();
                if kind == LossKind::FullEuclidean {
                    value += (xbar.row(0) - y.zbar().row(0)).norm_squared();
                }
                eval.residual = residual;
                let zt = z.transpose();
                eval.zzt = z * zt;
                eval.value = value;
            }
            LossKind::HyperbolicDistance => {
                let bad = invalid_columns(xbar);
                if !bad.is_empty() {
                    return Err(Error::Constraint(format!(
                        "embedding columns off the hyperboloid: {}",
                        format_indices(&bad)
                    )));
                }
                let utx = y.u().tr_mul(&x);
                let mut dphi = DVector::zeros(m);
                let mut d2phi = DVector::zeros(m);
                let mut value = 0.0;
                for i in 0..m {
                    let c = xbar[(0, i)] * y.zbar()[(0, i)] - utx.column(i).dot(&z.column(i));
                    let d = clamped_arccosh(c);
                    value += d * d;
                    let (d1, d2) = arccosh_sq_derivatives(c);
                    dphi[i] = d1;
                    d2phi[i] = d2;
                }
                eval.utx = utx;
                eval.dphi = dphi;
                eval.d2phi = d2phi;
                eval.value = value;
            }
        }
        eval.y = y;
        Ok(eval)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn point(&self) -> &ProductPoint {
        &self.y
    }

    pub fn into_point(self) -> ProductPoint {
        self.y
    }

    pub fn xbar(&self) -> &'a DMatrix<f64> {
        self.xbar
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn gradient(&self) -> AmbientGradient {
        let (n, r) = (self.y.n(), self.y.r());
        let z = self.y.zbar().rows(1, r);
        let mut g = ProductVector::zeros_like(&self.y);
        match self.kind {
            LossKind::SpatialEuclidean | LossKind::FullEuclidean => {
                g.u = &self.residual * z.transpose() * -2.0;
                g.z.rows_mut(1, r)
                    .copy_from(&(self.y.u().tr_mul(&self.residual) * -2.0));
                if self.kind == LossKind::FullEuclidean {
                    let d0 = (self.y.zbar().row(0) - self.xbar.row(0)) * 2.0;
                    g.z.row_mut(0).copy_from(&d0);
                }
            }
            LossKind::HyperbolicDistance => {
                let x = self.xbar.rows(1, n);
                let mut zw = z.into_owned();
                for (mut col, w) in zw.column_iter_mut().zip(self.dphi.iter()) {
                    col *= *w;
                }
                g.u = -(x * zw.transpose());
                for i in 0..self.y.m() {
                    let w = self.dphi[i];
                    g.z[(0, i)] = w * self.xbar[(0, i)];
                    g.z.column_mut(i).rows_mut(1, r)
                        .axpy(-w, &self.utx.column(i), 0.0);
                }
            }
        }
        g
    }

    /// Directional derivative of [`gradient`](Self::gradient) along `dir`.
    pub fn hessian_vec(&self, dir: &ProductVector) -> Result<AmbientGradient> {
        if !dir.same_shape(&self.y) {
            return Err(Error::Dimension(
                "direction does not match the point's shape".into(),
            ));
        }
        let (n, r, m) = (self.y.n(), self.y.r(), self.y.m());
        let u = self.y.u();
        let z = self.y.zbar().rows(1, r);
        let dz = dir.z.rows(1, r);
        let mut h = ProductVector::zeros_like(&self.y);
        match self.kind {
            LossKind::SpatialEuclidean | LossKind::FullEuclidean => {
                // With S = D(UZ)[dir] = dU Z + U dZ, the products S Zᵀ and UᵀS
                // reduce to r×r factors, leaving two passes over the residual.
                let dzzt = dz * z.transpose();
                h.u.gemm(2.0, &dir.u, &self.zzt, 0.0);
                h.u.gemm(2.0, u, &dzzt, 1.0);
                h.u.gemm(-2.0, &self.residual, &dz.transpose(), 1.0);
                let mut hz = h.z.rows_mut(1, r);
                hz.gemm(2.0, &u.tr_mul(&dir.u), &z, 0.0);
                hz.gemm(2.0, &u.tr_mul(u), &dz, 1.0);
                hz.gemm_tr(-2.0, &dir.u, &self.residual, 1.0);
                if self.kind == LossKind::FullEuclidean {
                    h.z.row_mut(0).copy_from(&(dir.z.row(0) * 2.0));
                }
            }
            LossKind::HyperbolicDistance => {
                let x = self.xbar.rows(1, n);
                let w = dir.u.tr_mul(&x);
                let mut mix = DMatrix::zeros(r, m);
                for i in 0..m {
                    let dc = self.xbar[(0, i)] * dir.z[(0, i)]
                        - w.column(i).dot(&z.column(i))
                        - self.utx.column(i).dot(&dz.column(i));
                    let a = self.d2phi[i] * dc;
                    let b = self.dphi[i];
                    let mut col = mix.column_mut(i);
                    col.axpy(a, &z.column(i), 0.0);
                    col.axpy(b, &dz.column(i), 1.0);
                    h.z[(0, i)] = a * self.xbar[(0, i)];
                    let mut col_z = h.z.column_mut(i);
                    let mut out = col_z.rows_mut(1, r);
                    out.axpy(-a, &self.utx.column(i), 0.0);
                    out.axpy(-b, &w.column(i), 1.0);
                }
                h.u = -(x * mix.transpose());
            }
        }
        Ok(h)
    }
}

pub fn loss_value(kind: LossKind, y: &ProductPoint, xbar: &DMatrix<f64>) -> Result<f64> {
    Ok(Evaluation::new(kind, y.clone(), xbar)?.value())
}

pub fn euclidean_gradient(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
) -> Result<AmbientGradient> {
    Ok(Evaluation::new(kind, y.clone(), xbar)?.gradient())
}

pub fn euclidean_hessian_vec(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    dir: &ProductVector,
) -> Result<AmbientGradient> {
    Evaluation::new(kind, y.clone(), xbar)?.hessian_vec(dir)
}
