//! Graph-reconstruction mean average precision.
//!
//! For every node `u` with at least one neighbour, all other nodes are ranked
//! by hyperbolic distance to `u`. The precision credited to a true neighbour
//! `v` is the fraction of neighbours among all nodes at distance `≤ d(u, v)`,
//! so nodes tied with `v` always count as ranked ahead of it. A node's AP is
//! the mean of those precisions over its neighbours; MAP is the mean over
//! nodes (or, with [`Aggregation::Edge`], over neighbour pairs).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{clamped_arccosh, lorentz_inner_unchecked};
use crate::losses::LossKind;
use crate::product::{expand, expand_point, initialize, validate_embeddings, InitStrategy};
use crate::solver::{tr_minimize, TrConfig};
use crate::svd::solve_svd;

/// Node labels plus an undirected, loop-free, duplicate-free edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGraph {
    labels: Vec<String>,
    /// Sorted neighbour indices per node.
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl ReconstructionGraph {
    /// Builds the graph from index pairs; `(a, b)` and `(b, a)` are the same edge.
    pub fn new(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel {
                    label: l.clone(),
                    context: String::new(),
                });
            }
        }
        let m = labels.len();
        let mut adjacency = vec![Vec::new(); m];
        for (a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) refers to a node outside 0..{m}"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!(
                    "self-loop on `{}`",
                    labels[a]
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Self {
            labels,
            adjacency,
            edge_count: edge_count / 2,
        })
    }

    /// Builds the graph from label pairs.
    pub fn from_label_pairs<'s>(
        labels: Vec<String>,
        pairs: impl IntoIterator<Item = (&'s str, &'s str)>,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut edges = Vec::new();
        for (a, b) in pairs {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label `{a}`")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label `{b}`")))?;
            edges.push((ia, ib));
        }
        Self::new(labels, edges)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Unweighted mean of per-node AP.
    #[default]
    Node,
    /// Mean over all (node, neighbour) pairs of the neighbour's precision.
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: f64,
    pub aggregation: Aggregation,
    pub nodes_evaluated: usize,
    pub per_node_ap: BTreeMap<String, f64>,
}

/// Precision at each neighbour of one source node, given distances to every node.
/// `dist[source]` is ignored.
fn neighbour_precisions(dist: &[f64], source: usize, neighbors: &[usize]) -> Vec<f64> {
    let mut order: Vec<(f64, bool)> = dist
        .iter()
        .enumerate()
        .filter(|&(w, _)| w != source)
        .map(|(w, &d)| (d, neighbors.binary_search(&w).is_ok()))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut precisions = Vec::with_capacity(neighbors.len());
    let mut ranked = 0usize;
    let mut hits = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_hits = 0;
        while j < order.len() && order[j].0 == order[i].0 {
            group_hits += order[j].1 as usize;
            j += 1;
        }
        ranked += j - i;
        hits += group_hits;
        let p = hits as f64 / ranked as f64;
        precisions.resize(precisions.len() + group_hits, p);
        i = j;
    }
    precisions
}

/// MAP of `embeddings` (one hyperboloid column per graph node) against `graph`.
pub fn map_score(embeddings: &DMatrix<f64>, graph: &ReconstructionGraph) -> Result<MapResult> {
    map_score_with(embeddings, graph, Aggregation::Node)
}

pub fn map_score_with(
    embeddings: &DMatrix<f64>,
    graph: &ReconstructionGraph,
    aggregation: Aggregation,
) -> Result<MapResult> {
    if embeddings.ncols() != graph.num_nodes() {
        return Err(Error::Dimension(format!(
            "{} embedding columns for {} graph nodes",
            embeddings.ncols(),
            graph.num_nodes()
        )));
    }
    if graph.num_edges() == 0 {
        return Err(Error::EmptyInput("graph has no edges".into()));
    }
    validate_embeddings(embeddings)?;

    let m = graph.num_nodes();
    let per_node: Vec<Option<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|u| {
            let neighbors = graph.neighbors(u);
            if neighbors.is_empty() {
                return None;
            }
            let src = embeddings.column(u);
            let dist: Vec<f64> = embeddings
                .column_iter()
                .map(|w| clamped_arccosh(-lorentz_inner_unchecked(src.as_slice(), w.as_slice())))
                .collect();
            Some(neighbour_precisions(&dist, u, neighbors))
        })
        .collect();

    let mut per_node_ap = BTreeMap::new();
    let (mut ap_sum, mut nodes) = (0.0, 0usize);
    let (mut prec_sum, mut pairs) = (0.0, 0usize);
    for (u, precisions) in per_node.iter().enumerate() {
        let Some(precisions) = precisions else { continue };
        let total: f64 = precisions.iter().sum();
        let ap = total / precisions.len() as f64;
        per_node_ap.insert(graph.labels[u].clone(), ap);
        ap_sum += ap;
        nodes += 1;
        prec_sum += total;
        pairs += precisions.len();
    }
    let map = match aggregation {
        Aggregation::Node => ap_sum / nodes as f64,
        Aggregation::Edge => prec_sum / pairs as f64,
    };
    Ok(MapResult {
        map,
        aggregation,
        nodes_evaluated: nodes,
        per_node_ap,
    })
}

/// One row of a rank sweep. The uncompressed baseline has `method = "baseline"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub rank: usize,
    pub method: String,
    pub map: f64,
    /// Reconstruction loss of the method's own objective (0 for the baseline).
    pub loss: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn baseline(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == "baseline")
    }

    pub fn get(&self, rank: usize, method: LossKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.rank == rank && r.method == method.name())
    }

    /// Tab-separated table with a header line: MAP to 4 decimals, loss to 7
    /// significant digits. The JSON form keeps full precision.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dataset\trank\tmethod\tmap\tloss\twall_time\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.4}\t{:.6e}\t{:.3}",
                r.dataset, r.rank, r.method, r.map, r.loss, r.wall_time
            );
        }
        out
    }

    /// Sets every `wall_time` to zero so that repeated runs produce identical output.
    pub fn clear_timings(&mut self) {
        for r in &mut self.rows {
            r.wall_time = 0.0;
        }
    }
}

/// Compresses `xbar` at every `(rank, kind)` pair and scores each result.
///
/// `svd` uses the closed-form solver; the others run the trust-region
/// solver from the closed-form (svd-warm) starting point. The first row is the
/// uncompressed baseline at rank n.
pub fn map_rank_sweep(
    dataset: &str,
    xbar: &DMatrix<f64>,
    graph: &ReconstructionGraph,
    ranks: &[usize],
    kinds: &[LossKind],
    cfg: &TrConfig,
) -> Result<SweepTable> {
    validate_embeddings(xbar)?;
    let n = xbar.nrows() - 1;
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > n) {
        return Err(Error::InvalidArgument(format!("rank {bad} outside 1..={n}")));
    }
    cfg.validate()?;

    let start = Instant::now();
    let baseline = map_score(xbar, graph)?;
    let mut rows = vec![SweepRow {
        dataset: dataset.to_string(),
        rank: n,
        method: "baseline".into(),
        map: baseline.map,
        loss: 0.0,
        wall_time: start.elapsed().as_secs_f64(),
    }];

    for &rank in ranks {
        for &kind in kinds {
            let start = Instant::now();
            let (expanded, loss) = match kind {
                LossKind::SpatialEuclidean => {
                    let f = solve_svd(xbar, rank)?;
                    let loss = (xbar.rows(1, n) - f.u() * f.z()).norm_squared();
                    (expand(&f), loss)
                }
                _ => {
                    let init = initialize(xbar, rank, InitStrategy::SvdWarm, cfg.seed)?;
                    let (point, report) = tr_minimize(kind, xbar, rank, &init, cfg, None)?;
                    (expand_point(&point), report.final_loss)
                }
            };
            let result = map_score(&expanded, graph)?;
            rows.push(SweepRow {
                dataset: dataset.to_string(),
                rank,
                method: kind.name().into(),
                map: result.map,
                loss,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SweepTable { rows })
}
