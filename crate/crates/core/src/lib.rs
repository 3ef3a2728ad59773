//! Low-rank factorization of hyperboloid-model hyperbolic embeddings.
//!
//! Each embedding column `x̄ᵢ = [x₀ᵢ; xᵢ] ∈ Hⁿ` is approximated as
//! `[z₀ᵢ; U zᵢ]` with `U` an n×r matrix with orthonormal columns and
//! `z̄ᵢ = [z₀ᵢ; zᵢ] ∈ Hʳ`. Three objectives are supported (see [`LossKind`]):
//! the closed-form SVD solution of the spatial block ([`solve_svd`]) and a
//! Riemannian trust-region solver on `St(r, n) × Hʳ × … × Hʳ` ([`tr_solve`]).
//! Quality is measured by graph-reconstruction MAP ([`map_score`]).
//!
//! ```
//! use hyperlore::{expand, map_score, solve_svd, synthesize_tree, TreeSpec};
//!
//! let tree = synthesize_tree(&TreeSpec { depth: 3, ..TreeSpec::default() }).unwrap();
//! let f = solve_svd(&tree.embeddings, tree.planted_rank).unwrap();
//! let map = map_score(&expand(&f), &tree.graph).unwrap().map;
//! assert_eq!(map, tree.gold_map);
//! ```

pub mod error;
pub mod evaluation;
pub mod hyperbolic;
pub mod io;
pub mod losses;
pub mod product;
pub mod solver;
pub mod stiefel;
pub mod svd;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use evaluation::{
    map_rank_sweep, map_score, map_score_with, Aggregation, MapResult, ReconstructionGraph,
    SweepRow, SweepTable,
};
pub use hyperbolic::{
    hyperbolic_retract, hyperboloid_distance, hyperboloid_to_poincare, lift_to_hyperboloid,
    lorentz_inner, poincare_distance, poincare_to_hyperboloid, project_to_hyperbolic_tangent,
    HyperbolicTangent, HyperboloidPoint, PoincarePoint,
};
pub use io::{
    read_edges, read_embeddings, read_factorization, read_manifest, synthesize_tree, write_edges,
    write_embeddings, write_factorization, EmbeddingModel, Manifest, SyntheticTree, TreeSpec,
};
pub use losses::{euclidean_gradient, euclidean_hessian_vec, loss_value, Evaluation, LossKind};
pub use product::{
    expand, expand_point, initialize, product_metric, product_project, product_retract,
    validate_embeddings, AmbientGradient, FactoredEmbedding, InitStrategy, ProductPoint,
    ProductTangent, ProductVector,
};
pub use solver::{
    per_iteration_cost_probe, riemannian_gradient, riemannian_hessian_vec, tr_minimize, tr_solve,
    tr_solve_traced, SolveReport, StopReason, TrConfig,
};
pub use stiefel::{
    polar_factor, project_to_stiefel_tangent, random_stiefel, stiefel_retract, StiefelPoint,
    StiefelTangent,
};
pub use svd::{best_rank_r_error, first_row_deviation, solve_svd, spatial_singular_values};
