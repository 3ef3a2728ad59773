//! Independent oracles shared by the integration tests.
//!
//! Loss values are recomputed here with plain loops over columns, without
//! going through the library's loss code. Derivatives are checked against
//! finite differences of these oracle values.

#![allow(dead_code)]

use hyperlore::{
    product_metric, product_project, product_retract, riemannian_gradient,
    riemannian_hessian_vec, Evaluation, LossKind, ProductPoint, ProductVector,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `[√(1+‖xᵢ‖²); xᵢ]` for every column.
pub fn lift(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows() + 1, x.ncols());
    for (i, c) in x.column_iter().enumerate() {
        out[(0, i)] = (1.0 + c.norm_squared()).sqrt();
        out.view_mut((1, i), (x.nrows(), 1)).copy_from(&c);
    }
    out
}

/// Orthonormal n×r matrix from the QR factorization of a Gaussian matrix.
pub fn orthonormal(rng: &mut impl Rng, n: usize, r: usize) -> DMatrix<f64> {
    gaussian(rng, n, r).qr().q()
}

/// A random manifold point and random target embeddings.
pub fn random_problem(seed: u64, n: usize, m: usize, r: usize) -> (ProductPoint, DMatrix<f64>) {
    let mut g = rng(seed);
    let u = orthonormal(&mut g, n, r);
    let zbar = lift(&(gaussian(&mut g, r, m) * 0.7));
    let xbar = lift(&(gaussian(&mut g, n, m) * 0.7));
    (ProductPoint::new(u, zbar).unwrap(), xbar)
}

/// Loss recomputed column by column.
pub fn oracle_loss(kind: LossKind, u: &DMatrix<f64>, zbar: &DMatrix<f64>, xbar: &DMatrix<f64>) -> f64 {
    let (n, r) = u.shape();
    let mut total = 0.0;
    for i in 0..xbar.ncols() {
        let z: Vec<f64> = (1..=r).map(|k| zbar[(k, i)]).collect();
        let mut spatial_sq = 0.0;
        let mut x_dot_uz = 0.0;
        for row in 0..n {
            let uz: f64 = (0..r).map(|k| u[(row, k)] * z[k]).sum();
            let x = xbar[(row + 1, i)];
            spatial_sq += (x - uz) * (x - uz);
            x_dot_uz += x * uz;
        }
        total += match kind {
            LossKind::SpatialEuclidean => spatial_sq,
            LossKind::FullEuclidean => {
                let d0 = xbar[(0, i)] - zbar[(0, i)];
                spatial_sq + d0 * d0
            }
            LossKind::HyperbolicDistance => {
                let c = xbar[(0, i)] * zbar[(0, i)] - x_dot_uz;
                let d = c.max(1.0).acosh();
                d * d
            }
        };
    }
    total
}

fn oracle_at(kind: LossKind, y: &ProductPoint, xbar: &DMatrix<f64>) -> f64 {
    oracle_loss(kind, y.u(), y.zbar(), xbar)
}

fn shifted(y: &ProductPoint, h: f64, d: &ProductVector) -> ProductPoint {
    ProductPoint::ambient(y.u() + &d.u * h, y.zbar() + &d.z * h).unwrap()
}

pub fn random_ambient(rng: &mut impl Rng, y: &ProductPoint) -> ProductVector {
    ProductVector {
        u: gaussian(rng, y.n(), y.r()),
        z: gaussian(rng, y.r() + 1, y.m()),
    }
}

/// Random tangent vector at `y`, scaled to unit product norm.
pub fn random_tangent(rng: &mut impl Rng, y: &ProductPoint) -> ProductVector {
    let t = product_project(y, &random_ambient(rng, y)).unwrap();
    let norm = product_metric(y, &t, &t).unwrap().sqrt();
    t.scale(1.0 / norm)
}

fn relative(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1e-12)
}

/// Largest relative error between `⟨∇f, δ⟩` and the central difference of the
/// oracle loss along `δ` at step `h`, over `trials` random ambient directions.
pub fn ambient_gradient_error(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    trials: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let mut g = rng(seed);
    let grad = Evaluation::new(kind, y.clone(), xbar).unwrap().gradient();
    (0..trials)
        .map(|_| {
            let d = random_ambient(&mut g, y);
            let fd = (oracle_at(kind, &shifted(y, h, &d), xbar)
                - oracle_at(kind, &shifted(y, -h, &d), xbar))
                / (2.0 * h);
            relative(fd, grad.euclidean_dot(&d))
        })
        .fold(0.0, f64::max)
}

/// Largest relative error (in Frobenius norm) between the ambient Hessian-vector
/// product and the central difference of the ambient gradient.
pub fn ambient_hessian_error(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    trials: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let mut g = rng(seed);
    let eval = Evaluation::new(kind, y.clone(), xbar).unwrap();
    (0..trials)
        .map(|_| {
            let d = random_ambient(&mut g, y);
            let hv = eval.hessian_vec(&d).unwrap();
            let plus = Evaluation::new(kind, shifted(y, h, &d), xbar).unwrap().gradient();
            let minus = Evaluation::new(kind, shifted(y, -h, &d), xbar).unwrap().gradient();
            let fd = ProductVector::lincomb(0.5 / h, &plus, -0.5 / h, &minus);
            let diff = ProductVector::lincomb(1.0, &fd, -1.0, &hv);
            let scale = (hv.u.norm_squared() + hv.z.norm_squared()).sqrt();
            (diff.u.norm_squared() + diff.z.norm_squared()).sqrt() / scale.max(1e-12)
        })
        .fold(0.0, f64::max)
}

/// Largest relative error between `(f(R_y(tξ)) − f(R_y(−tξ)))/(2t)` and `g(grad f, ξ)`.
pub fn riemannian_gradient_error(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    trials: usize,
    t: f64,
    seed: u64,
) -> f64 {
    let mut g = rng(seed);
    let grad = riemannian_gradient(kind, y, xbar).unwrap();
    (0..trials)
        .map(|_| {
            let xi = random_tangent(&mut g, y);
            let fp = oracle_at(kind, &product_retract(y, &xi.scale(t)).unwrap(), xbar);
            let fm = oracle_at(kind, &product_retract(y, &xi.scale(-t)).unwrap(), xbar);
            let fd = (fp - fm) / (2.0 * t);
            relative(fd, product_metric(y, &grad, &xi).unwrap())
        })
        .fold(0.0, f64::max)
}

/// Largest relative error between the symmetric second difference of
/// `t ↦ f(R_y(tξ))` and `g(Hess f[ξ], ξ)`.
pub fn riemannian_hessian_error(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    trials: usize,
    t: f64,
    seed: u64,
) -> f64 {
    let mut g = rng(seed);
    let f0 = oracle_at(kind, y, xbar);
    (0..trials)
        .map(|_| {
            let xi = random_tangent(&mut g, y);
            let hxi = riemannian_hessian_vec(kind, y, xbar, &xi).unwrap();
            let fp = oracle_at(kind, &product_retract(y, &xi.scale(t)).unwrap(), xbar);
            let fm = oracle_at(kind, &product_retract(y, &xi.scale(-t)).unwrap(), xbar);
            let second = (fp - 2.0 * f0 + fm) / (t * t);
            relative(second, product_metric(y, &hxi, &xi).unwrap())
        })
        .fold(0.0, f64::max)
}

/// Largest `|g(H[ξ], η) − g(ξ, H[η])| / max(|g(H[ξ], η)|, ‖H[ξ]‖‖η‖·1e-3)`.
pub fn hessian_asymmetry(
    kind: LossKind,
    y: &ProductPoint,
    xbar: &DMatrix<f64>,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut g = rng(seed);
    (0..trials)
        .map(|_| {
            let xi = random_tangent(&mut g, y);
            let eta = random_tangent(&mut g, y);
            let hxi = riemannian_hessian_vec(kind, y, xbar, &xi).unwrap();
            let heta = riemannian_hessian_vec(kind, y, xbar, &eta).unwrap();
            let a = product_metric(y, &hxi, &eta).unwrap();
            let b = product_metric(y, &xi, &heta).unwrap();
            (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
        })
        .fold(0.0, f64::max)
}

/// Average precision per node by direct counting: the precision credited to a
/// neighbour `v` of `u` is `|{w ∈ N(u) : d(u,w) ≤ d(u,v)}| / |{w ≠ u : d(u,w) ≤ d(u,v)}|`.
/// Returns `None` for isolated nodes.
pub fn brute_force_ap(dist: &DMatrix<f64>, adjacency: &[Vec<bool>]) -> Vec<Option<f64>> {
    let m = dist.nrows();
    (0..m)
        .map(|u| {
            let neighbours: Vec<usize> = (0..m).filter(|&w| adjacency[u][w]).collect();
            if neighbours.is_empty() {
                return None;
            }
            // Visiting neighbours nearest first makes the floating-point sum
            // order match a ranking-based implementation.
            let mut ordered = neighbours.clone();
            ordered.sort_by(|&a, &b| dist[(u, a)].total_cmp(&dist[(u, b)]));
            let mut sum = 0.0;
            for &v in &ordered {
                let dv = dist[(u, v)];
                let within = (0..m).filter(|&w| w != u && dist[(u, w)] <= dv).count();
                let hits = neighbours.iter().filter(|&&w| dist[(u, w)] <= dv).count();
                sum += hits as f64 / within as f64;
            }
            Some(sum / neighbours.len() as f64)
        })
        .collect()
}

/// Pairwise `arccosh(max(−⟨x̄ᵢ, x̄ⱼ⟩_L, 1))`.
pub fn distance_matrix(xbar: &DMatrix<f64>) -> DMatrix<f64> {
    let m = xbar.ncols();
    DMatrix::from_fn(m, m, |i, j| {
        let mut spatial = 0.0;
        for k in 1..xbar.nrows() {
            spatial += xbar[(k, i)] * xbar[(k, j)];
        }
        (xbar[(0, i)] * xbar[(0, j)] - spatial).max(1.0).acosh()
    })
}
