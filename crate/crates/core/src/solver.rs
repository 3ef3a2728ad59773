//! Riemannian trust-region solver on St(r, n) × (H^r)^m.
//!
//! Each outer iteration minimizes the quadratic model
//! `f + g(grad f, ξ) + ½ g(Hess f[ξ], ξ)` over `‖ξ‖_g ≤ Δ` with truncated
//! conjugate gradients (Steihaug–Toint), retracts, and accepts or rejects the
//! step by the ratio of actual to predicted decrease.
//!
//! The Riemannian gradient is the projection of the Euclidean gradient, after
//! the hyperbolic components have been converted to the Lorentz convention
//! (first coordinate negated). The Hessian is the projection of the
//! directional derivative of that projected gradient field; expanding the
//! derivative of the projector gives the two correction terms used in
//! [`RiemannianModel::hessian_vec`].

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{lorentz_inner_unchecked, project_hyperbolic_in_place};
use crate::losses::{Evaluation, LossKind};
use crate::product::{
    self, index_labels, product_metric_unchecked, product_norm, product_retract,
    validate_embeddings, FactoredEmbedding, InitStrategy, ProductPoint, ProductTangent,
    ProductVector,
};
use crate::stiefel::{self, symm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrConfig {
    pub max_outer_iters: usize,
    /// Stop once the Riemannian gradient norm drops below this.
    pub grad_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Steps with ratio `ρ` at or below this are rejected.
    pub accept_threshold: f64,
    /// Inner iteration cap; `None` means the manifold dimension.
    pub tcg_max_iters: Option<usize>,
    pub tcg_kappa: f64,
    pub tcg_theta: f64,
    pub seed: u64,
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 500,
            grad_tol: 1e-6,
            initial_radius: 1.0,
            max_radius: 100.0,
            accept_threshold: 0.1,
            tcg_max_iters: None,
            tcg_kappa: 0.1,
            tcg_theta: 1.0,
            seed: 0,
        }
    }
}

impl TrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("trust-region config: {what}")));
        if self.max_outer_iters == 0 {
            return bad("max_outer_iters must be positive");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol must be nonnegative");
        }
        if !(self.initial_radius > 0.0 && self.max_radius > 0.0) {
            return bad("radii must be positive");
        }
        if self.initial_radius > self.max_radius {
            return bad("initial_radius exceeds max_radius");
        }
        if !(self.accept_threshold > 0.0 && self.accept_threshold < 0.25) {
            return bad("accept_threshold must lie in (0, 1/4)");
        }
        if self.tcg_max_iters == Some(0) {
            return bad("tcg_max_iters must be positive");
        }
        if !(self.tcg_kappa > 0.0 && self.tcg_kappa < 1.0) {
            return bad("tcg_kappa must lie in (0, 1)");
        }
        if !(self.tcg_theta > 0.0 && self.tcg_theta <= 1.0) {
            return bad("tcg_theta must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// The trust region shrank below round-off; no further progress is possible.
    RadiusCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: LossKind,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    /// Loss of the candidate at each outer iteration.
    pub loss_trace: Vec<f64>,
    pub accepted_flags: Vec<bool>,
    pub stop_reason: StopReason,
    pub wall_time: f64,
}

impl SolveReport {
    /// Losses of the accepted candidates, in order.
    pub fn accepted_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.loss_trace
            .iter()
            .zip(&self.accepted_flags)
            .filter(|(_, &a)| a)
            .map(|(&l, _)| l)
    }

    /// Identical to `other` apart from the measured wall time.
    pub fn same_outcome(&self, other: &SolveReport) -> bool {
        SolveReport {
            wall_time: 0.0,
            ..self.clone()
        } == SolveReport {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// Riemannian gradient and Hessian operator of a loss at one point.
pub struct RiemannianModel<'a> {
    eval: Evaluation<'a>,
    grad: ProductTangent,
    /// `symm(Uᵀ G_U)`.
    stiefel_sym: DMatrix<f64>,
    /// `⟨z̄ᵢ, hᵢ⟩_L` for the Lorentz-converted gradient `hᵢ`.
    normal_coef: DVector<f64>,
}

fn to_lorentz_convention(v: &mut ProductVector) {
    v.z.row_mut(0).neg_mut();
}

impl<'a> RiemannianModel<'a> {
    pub fn new(eval: Evaluation<'a>) -> Self {
        let y = eval.point();
        let mut lorentz_grad = eval.gradient();
        to_lorentz_convention(&mut lorentz_grad);
        let stiefel_sym = symm(&y.u().tr_mul(&lorentz_grad.u));
        let normal_coef = DVector::from_iterator(
            y.m(),
            y.zbar()
                .column_iter()
                .zip(lorentz_grad.z.column_iter())
                .map(|(b, h)| lorentz_inner_unchecked(b.as_slice(), h.as_slice())),
        );
        let mut grad = ProductVector {
            u: &lorentz_grad.u - y.u() * &stiefel_sym,
            z: lorentz_grad.z,
        };
        for (mut col, (base, coef)) in grad
            .z
            .column_iter_mut()
            .zip(y.zbar().column_iter().zip(normal_coef.iter()))
        {
            col.axpy(*coef, &base, 1.0);
        }
        Self {
            eval,
            grad,
            stiefel_sym,
            normal_coef,
        }
    }

    pub fn value(&self) -> f64 {
        self.eval.value()
    }

    pub fn point(&self) -> &ProductPoint {
        self.eval.point()
    }

    pub fn gradient(&self) -> &ProductTangent {
        &self.grad
    }

    pub fn grad_norm(&self) -> f64 {
        product_norm(&self.grad)
    }

    /// `Π_y(D grad f(y)[ξ])` for a tangent `ξ`.
    ///
    /// With `G` the Euclidean gradient and `h = L·G_z̄`:
    /// Stiefel part `Π_U(DG_U[ξ] − ξ_U symm(UᵀG_U))`,
    /// hyperbolic part `Π_z̄(L·DG_z̄[ξ]) + ⟨z̄, h⟩_L ξ_z̄`.
    pub fn hessian_vec(&self, xi: &ProductTangent) -> Result<ProductTangent> {
        let y = self.point();
        let mut d = self.eval.hessian_vec(xi)?;
        to_lorentz_convention(&mut d);
        let u = stiefel::project_unchecked(y.u(), &(&d.u - &xi.u * &self.stiefel_sym));
        let mut z = d.z;
        for (i, mut col) in z.column_iter_mut().enumerate() {
            project_hyperbolic_in_place(y.zbar().column(i).as_slice(), col.as_mut_slice());
            col.axpy(self.normal_coef[i], &xi.z.column(i), 1.0);
        }
        Ok(ProductVector { u, z })
    }

    pub fn into_point(self) -> ProductPoint {
        self.eval.into_point()
    }
}

pub fn riemannian_gradient(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
) -> Result<ProductTangent> {
    let model = RiemannianModel::new(Evaluation::new(kind, y.clone(), xbar)?);
    Ok(model.grad)
}

pub fn riemannian_hessian_vec(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    xi: &ProductTangent,
) -> Result<ProductTangent> {
    RiemannianModel::new(Evaluation::new(kind, y.clone(), xbar)?).hessian_vec(xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TcgExit {
    NegativeCurvature,
    ExceededRadius,
    ModelIncreased,
    ResidualSmall,
    MaxIters,
}

struct TcgResult {
    step: ProductTangent,
    hstep: ProductTangent,
    exit: TcgExit,
}

/// Steihaug–Toint truncated CG on the trust-region subproblem (no preconditioner).
fn truncated_cg(
    model: &RiemannianModel<'_>,
    radius: f64,
    max_iters: usize,
    kappa: f64,
    theta: f64,
) -> Result<TcgResult> {
    let y = model.point();
    let grad = model.gradient();
    let mut eta = ProductVector::zeros_like(y);
    let mut h_eta = ProductVector::zeros_like(y);
    let mut r = grad.clone();
    let mut r_r = product_metric_unchecked(&r, &r);
    let norm_r0 = r_r.sqrt();
    let mut delta = r.scale(-1.0);
    let (mut e_pe, mut e_pd, mut d_pd) = (0.0, 0.0, r_r);
    let mut model_value = 0.0;
    let radius_sq = radius * radius;

    for _ in 0..max_iters {
        let h_delta = model.hessian_vec(&delta)?;
        let d_hd = product_metric_unchecked(&delta, &h_delta);
        let alpha = r_r / d_hd;
        let e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha * alpha * d_pd;

        if !(d_hd > 0.0) || e_pe_new >= radius_sq {
            let tau = (-e_pd + (e_pd * e_pd + d_pd * (radius_sq - e_pe)).max(0.0).sqrt()) / d_pd;
            eta.axpy(tau, &delta);
            h_eta.axpy(tau, &h_delta);
            let exit = if d_hd > 0.0 {
                TcgExit::ExceededRadius
            } else {
                TcgExit::NegativeCurvature
            };
            return Ok(TcgResult {
                step: eta,
                hstep: h_eta,
                exit,
            });
        }

        let mut new_eta = eta.clone();
        new_eta.axpy(alpha, &delta);
        let mut new_h_eta = h_eta.clone();
        new_h_eta.axpy(alpha, &h_delta);
        let new_model_value = product_metric_unchecked(&new_eta, grad)
            + 0.5 * product_metric_unchecked(&new_eta, &new_h_eta);
        if new_model_value >= model_value {
            return Ok(TcgResult {
                step: eta,
                hstep: h_eta,
                exit: TcgExit::ModelIncreased,
            });
        }
        eta = new_eta;
        h_eta = new_h_eta;
        model_value = new_model_value;
        e_pe = e_pe_new;

        r.axpy(alpha, &h_delta);
        let r_r_new = product_metric_unchecked(&r, &r);
        let norm_r = r_r_new.max(0.0).sqrt();
        if norm_r <= norm_r0 * norm_r0.powf(theta).min(kappa) {
            return Ok(TcgResult {
                step: eta,
                hstep: h_eta,
                exit: TcgExit::ResidualSmall,
            });
        }
        let beta = r_r_new / r_r;
        r_r = r_r_new;
        let next = ProductVector::lincomb(-1.0, &r, beta, &delta);
        delta = product::project_unchecked(y, &next);
        e_pd = beta * (e_pd + alpha * d_pd);
        d_pd = r_r + beta * beta * d_pd;
    }
    Ok(TcgResult {
        step: eta,
        hstep: h_eta,
        exit: TcgExit::MaxIters,
    })
}

/// Consecutive non-finite candidates tolerated before the solver gives up.
const MAX_NONFINITE_REJECTIONS: usize = 10;

/// Smallest trust-region radius before the solver stops.
const MIN_RADIUS: f64 = 1e-15;

/// Sink for per-iteration trace lines:
/// `iteration\tloss\tgrad_norm\tradius\trho\taccepted`.
pub type TraceSink<'s> = Option<&'s mut dyn Write>;

/// Runs the trust-region method from `init` and returns the final factorization.
pub fn tr_solve(
    kind: LossKind,
    xbar: &DMatrix<f64>,
    r: usize,
    init: &ProductPoint,
    cfg: &TrConfig,
) -> Result<(FactoredEmbedding, SolveReport)> {
    tr_solve_traced(kind, xbar, r, init, cfg, None)
}

pub fn tr_solve_traced(
    kind: LossKind,
    xbar: &DMatrix<f64>,
    r: usize,
    init: &ProductPoint,
    cfg: &TrConfig,
    trace: TraceSink<'_>,
) -> Result<(FactoredEmbedding, SolveReport)> {
    let (point, report) = tr_minimize(kind, xbar, r, init, cfg, trace)?;
    let f = FactoredEmbedding::from_point(&point, index_labels(point.m()))?;
    Ok((f, report))
}

/// Same as [`tr_solve_traced`] but returns the raw product point.
pub fn tr_minimize(
    kind: LossKind,
    xbar: &DMatrix<f64>,
    r: usize,
    init: &ProductPoint,
    cfg: &TrConfig,
    mut trace: TraceSink<'_>,
) -> Result<(ProductPoint, SolveReport)> {
    let start = Instant::now();
    cfg.validate()?;
    if init.r() != r {
        return Err(Error::InvalidArgument(format!(
            "initial point has rank {}, requested rank {r}",
            init.r()
        )));
    }
    init.validate()?;
    validate_embeddings(xbar)?;

    let tcg_cap = cfg.tcg_max_iters.unwrap_or_else(|| init.manifold_dim().max(1));
    let mut model = RiemannianModel::new(Evaluation::new(kind, init.clone(), xbar)?);
    let initial_loss = model.value();
    if !initial_loss.is_finite() || !model.gradient().is_finite() {
        return Err(Error::Numeric(format!(
            "loss or gradient is not finite at the initial point (loss {initial_loss})"
        )));
    }

    let mut radius = cfg.initial_radius;
    let mut loss_trace = Vec::new();
    let mut accepted_flags = Vec::new();
    let mut nonfinite_streak = 0;
    let mut grad_norm = model.grad_norm();
    let mut stop_reason = StopReason::MaxIterations;

    for iter in 0..cfg.max_outer_iters {
        if grad_norm < cfg.grad_tol {
            stop_reason = StopReason::GradientTolerance;
            break;
        }
        if radius < MIN_RADIUS {
            stop_reason = StopReason::RadiusCollapse;
            break;
        }

        let tcg = truncated_cg(&model, radius, tcg_cap, cfg.tcg_kappa, cfg.tcg_theta)?;
        let f = model.value();
        let predicted = -(product_metric_unchecked(model.gradient(), &tcg.step)
            + 0.5 * product_metric_unchecked(&tcg.step, &tcg.hstep));

        let candidate = product_retract(model.point(), &tcg.step)
            .and_then(|p| Evaluation::new(kind, p, xbar));
        let (candidate, f_new) = match candidate {
            Ok(eval) if eval.value().is_finite() => {
                let v = eval.value();
                (Some(eval), v)
            }
            Ok(_) | Err(Error::Singular(_)) | Err(Error::Tangency(_)) | Err(Error::Numeric(_)) => {
                (None, f64::NAN)
            }
            Err(e) => return Err(e),
        };

        // Round-off guard on ρ near convergence.
        let reg = f.abs().max(1.0) * f64::EPSILON * 1e3;
        let rho = (f - f_new + reg) / (predicted + reg);
        let model_decreased = predicted + reg > 0.0;

        let step_norm = product_norm(&tcg.step);
        let on_boundary = matches!(tcg.exit, TcgExit::ExceededRadius | TcgExit::NegativeCurvature)
            || step_norm >= radius * (1.0 - 1e-10);

        if !rho.is_finite() || rho < 0.25 || !model_decreased {
            radius *= 0.25;
        } else if rho > 0.75 && on_boundary {
            radius = (2.0 * radius).min(cfg.max_radius);
        }

        let accept = candidate.is_some() && model_decreased && rho > cfg.accept_threshold && f_new <= f;
        if candidate.is_none() {
            nonfinite_streak += 1;
            if nonfinite_streak >= MAX_NONFINITE_REJECTIONS {
                return Err(Error::Diverged {
                    iteration: iter,
                    reason: format!(
                        "{MAX_NONFINITE_REJECTIONS} consecutive non-finite candidates"
                    ),
                    loss: f,
                    radius,
                    iterate: Box::new(model.into_point()),
                });
            }
        } else {
            nonfinite_streak = 0;
        }

        loss_trace.push(f_new);
        accepted_flags.push(accept);

        if accept {
            let eval = candidate.expect("accepted candidates are finite");
            model = RiemannianModel::new(eval);
            if !model.gradient().is_finite() {
                return Err(Error::Diverged {
                    iteration: iter,
                    reason: "non-finite Riemannian gradient".into(),
                    loss: model.value(),
                    radius,
                    iterate: Box::new(model.into_point()),
                });
            }
            grad_norm = model.grad_norm();
        }

        if let Some(sink) = trace.as_deref_mut() {
            let _ = writeln!(
                sink,
                "{iter}\t{:e}\t{:e}\t{:e}\t{:e}\t{}",
                model.value(),
                grad_norm,
                radius,
                rho,
                accept
            );
        }
    }
    if stop_reason == StopReason::MaxIterations && grad_norm < cfg.grad_tol {
        stop_reason = StopReason::GradientTolerance;
    }

    let report = SolveReport {
        method: kind,
        iterations: loss_trace.len(),
        initial_loss,
        final_loss: model.value(),
        final_grad_norm: grad_norm,
        loss_trace,
        accepted_flags,
        stop_reason,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((model.into_point(), report))
}

/// Mean wall time in seconds of one outer iteration with exactly `tcg_iters`
/// Hessian-vector products, on seeded random data of the given size.
///
/// An iteration here is: loss and Riemannian gradient at the current point,
/// `tcg_iters` Riemannian Hessian-vector products, a retraction and the
/// candidate's loss.
pub fn per_iteration_cost_probe(
    n: usize,
    m: usize,
    r: usize,
    kind: LossKind,
    tcg_iters: usize,
    reps: usize,
) -> Result<f64> {
    if r == 0 || r > n || m == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "cost probe needs 1 ≤ r ≤ n, m ≥ 1, reps ≥ 1 (n = {n}, m = {m}, r = {r})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let x = DMatrix::from_fn(n, m, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        0.3 * v
    });
    let xbar = product::lift_columns(&x);
    let init = product::initialize(&xbar, r, InitStrategy::Random, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1);
    let ambient = ProductVector {
        u: DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng)),
        z: DMatrix::from_fn(r + 1, m, |_, _| StandardNormal.sample(&mut rng)),
    };
    let one_iteration = |y: &ProductPoint| -> Result<ProductPoint> {
        let model = RiemannianModel::new(Evaluation::new(kind, y.clone(), &xbar)?);
        let mut dir = product::project_unchecked(y, &ambient).scale(1e-3);
        for _ in 0..tcg_iters {
            let h = model.hessian_vec(&dir)?;
            let scale = 1e-3 / product_norm(&h).max(1e-300);
            dir = h.scale(scale);
        }
        let next = product_retract(y, &dir)?;
        let eval = Evaluation::new(kind, next, &xbar)?;
        std::hint::black_box(eval.value());
        Ok(eval.into_point())
    };
    // warm-up
    let mut y = one_iteration(&init)?;
    let start = Instant::now();
    for _ in 0..reps {
        y = one_iteration(&y)?;
    }
    Ok(start.elapsed().as_secs_f64() / reps as f64)
}
