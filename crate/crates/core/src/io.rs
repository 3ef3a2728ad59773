//! Text formats for embeddings, edge lists and factorization bundles, plus a
//! synthetic tree generator with exactly low-rank embeddings.
//!
//! All numbers are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces every value bit for bit.
//!
//! * Embedding file: one node per line, `label\tv₁\t…\tv_k`. For the Poincaré
//!   model `k = n`; for the hyperboloid model `k = n + 1` with `v₁ = x₀`.
//! * Edge file: one edge per line, `label\tlabel`. Edges are undirected.
//! * Factorization bundle: a directory holding `U.tsv` (n×r), `Z.tsv` (r×m),
//!   `z0.tsv` (1×m), `labels.txt` (m lines) and `manifest.json`. The manifest
//!   stores the SHA-256 of the three matrix files.
//!
//! Blank lines are ignored everywhere. Labels may not contain tabs or newlines.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{map_score, ReconstructionGraph};
use crate::hyperbolic::{
    hyperboloid_residual, hyperboloid_to_poincare, poincare_to_hyperboloid, HyperboloidPoint,
    PoincarePoint, CONSTRAINT_TOL,
};
use crate::product::FactoredEmbedding;
use crate::stiefel::random_stiefel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingModel {
    Poincare,
    Hyperboloid,
}

impl EmbeddingModel {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingModel::Poincare => "poincare",
            EmbeddingModel::Hyperboloid => "hyperboloid",
        }
    }
}

impl std::fmt::Display for EmbeddingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EmbeddingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poincare" => Ok(EmbeddingModel::Poincare),
            "hyperboloid" | "lorentz" => Ok(EmbeddingModel::Hyperboloid),
            _ => Err(Error::InvalidArgument(format!(
                "unknown embedding model `{s}` (expected poincare or hyperboloid)"
            ))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_values<'a>(
    path: &Path,
    line: usize,
    fields: impl Iterator<Item = &'a str>,
) -> Result<Vec<f64>> {
    fields
        .map(|f| {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_error(path, line, format!("`{f}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_error(path, line, format!("non-finite value `{f}`")))
            }
        })
        .collect()
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "label {label:?} is empty or contains a tab or newline"
        )));
    }
    Ok(())
}

/// Reads an embedding file and returns the hyperboloid columns ((n+1)×m) and labels.
pub fn read_embeddings(
    path: impl AsRef<Path>,
    model: EmbeddingModel,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut width = None;

    for (line, content) in content_lines(&text) {
        let mut fields = content.split('\t');
        let label = fields.next().unwrap_or_default().to_string();
        let values = parse_values(path, line, fields)?;
        let min_width = match model {
            EmbeddingModel::Poincare => 1,
            EmbeddingModel::Hyperboloid => 2,
        };
        if values.len() < min_width {
            return Err(parse_error(
                path,
                line,
                format!("`{label}` has {} coordinates", values.len()),
            ));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected {w} coordinates, found {}", values.len()),
                ));
            }
            Some(_) => {}
        }
        let column = match model {
            EmbeddingModel::Poincare => {
                let p = PoincarePoint::new(DVector::from_vec(values)).map_err(|e| {
                    Error::Constraint(format!("{}:{line}: `{label}`: {e}", path.display()))
                })?;
                poincare_to_hyperboloid(&p).into_inner()
            }
            EmbeddingModel::Hyperboloid => {
                let residual = hyperboloid_residual(&values);
                if !(values[0] > 0.0 && residual <= CONSTRAINT_TOL) {
                    return Err(Error::Constraint(format!(
                        "{}:{line}: `{label}` is not on the hyperboloid (relative residual {residual:e})",
                        path.display()
                    )));
                }
                DVector::from_vec(values)
            }
        };
        if !seen.insert(label.clone()) {
            return Err(Error::DuplicateLabel {
                label,
                context: format!(" at {}:{line}", path.display()),
            });
        }
        labels.push(label);
        columns.push(column);
    }
    if columns.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no embeddings", path.display())));
    }
    Ok((DMatrix::from_columns(&columns), labels))
}

/// Writes hyperboloid columns in the requested model.
pub fn write_embeddings(
    path: impl AsRef<Path>,
    embeddings: &DMatrix<f64>,
    labels: &[String],
    model: EmbeddingModel,
) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != embeddings.ncols() {
        return Err(Error::Dimension(format!(
            "{} labels for {} embedding columns",
            labels.len(),
            embeddings.ncols()
        )));
    }
    let mut out = String::new();
    for (label, col) in labels.iter().zip(embeddings.column_iter()) {
        check_label(label)?;
        out.push_str(label);
        let coords = match model {
            EmbeddingModel::Hyperboloid => col.into_owned(),
            EmbeddingModel::Poincare => {
                let p = HyperboloidPoint::new(col.into_owned()).map_err(|e| {
                    Error::Constraint(format!("`{label}`: {e}"))
                })?;
                hyperboloid_to_poincare(&p).into_inner()
            }
        };
        for v in coords.iter() {
            let _ = write!(out, "\t{v:?}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads an undirected edge list over `labels`.
pub fn read_edges(path: impl AsRef<Path>, labels: &[String]) -> Result<ReconstructionGraph> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let index: std::collections::HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut edges = Vec::new();
    for (line, content) in content_lines(&text) {
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_error(
                path,
                line,
                format!("expected 2 tab-separated labels, found {}", fields.len()),
            ));
        }
        let mut ends = [0usize; 2];
        for (slot, label) in ends.iter_mut().zip(&fields) {
            *slot = *index.get(label).ok_or_else(|| Error::UnknownLabel {
                path: path.to_path_buf(),
                line,
                label: label.to_string(),
            })?;
        }
        if ends[0] == ends[1] {
            return Err(parse_error(path, line, format!("self-loop on `{}`", fields[0])));
        }
        edges.push((ends[0], ends[1]));
    }
    ReconstructionGraph::new(labels.to_vec(), edges)
}

/// Writes each undirected edge once, smaller node index first.
pub fn write_edges(path: impl AsRef<Path>, graph: &ReconstructionGraph) -> Result<()> {
    let labels = graph.labels();
    let mut out = String::new();
    for (a, b) in graph.edges() {
        let _ = writeln!(out, "{}\t{}", labels[a], labels[b]);
    }
    write_text(path.as_ref(), &out)
}

/// Contents of `manifest.json` in a factorization bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub method: String,
    pub loss: f64,
    /// Hex SHA-256 over `U.tsv`, `Z.tsv` and `z0.tsv`.
    pub checksum: String,
}

const MATRIX_FILES: [&str; 3] = ["U.tsv", "Z.tsv", "z0.tsv"];
const LABELS_FILE: &str = "labels.txt";
const MANIFEST_FILE: &str = "manifest.json";

fn matrix_tsv<'a>(rows: impl Iterator<Item = Vec<f64>> + 'a) -> String {
    let mut out = String::new();
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

fn dmatrix_tsv(m: &DMatrix<f64>) -> String {
    matrix_tsv(m.row_iter().map(|r| r.iter().copied().collect()))
}

fn bundle_checksum(contents: &[Vec<u8>; 3]) -> String {
    let mut hasher = Sha256::new();
    for (name, bytes) in MATRIX_FILES.iter().zip(contents) {
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}

/// Writes a factorization bundle into `dir` (created if missing).
pub fn write_factorization(
    f: &FactoredEmbedding,
    dir: impl AsRef<Path>,
    method: &str,
    loss: f64,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    for label in f.labels() {
        check_label(label)?;
    }
    let contents = [
        dmatrix_tsv(f.u()).into_bytes(),
        dmatrix_tsv(f.z()).into_bytes(),
        matrix_tsv(std::iter::once(f.z0().iter().copied().collect())).into_bytes(),
    ];
    let manifest = Manifest {
        n: f.n(),
        m: f.m(),
        r: f.r(),
        method: method.to_string(),
        loss,
        checksum: bundle_checksum(&contents),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in MATRIX_FILES.iter().zip(&contents) {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let mut labels = f.labels().join("\n");
    labels.push('\n');
    write_text(&dir.join(LABELS_FILE), &labels)?;
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Json { path: path.clone(), source: e })?;
    json.push('\n');
    write_text(&path, &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}

fn parse_matrix(path: &Path, text: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (line, content) in content_lines(text) {
        let values = parse_values(path, line, content.split('\t'))?;
        if values.len() != cols {
            return Err(parse_error(
                path,
                line,
                format!("expected {cols} columns, found {}", values.len()),
            ));
        }
        data.extend(values);
        count += 1;
    }
    if count != rows {
        return Err(parse_error(
            path,
            count,
            format!("expected {rows} rows, found {count}"),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Reads a bundle written by [`write_factorization`], verifying the checksum
/// and every invariant of [`FactoredEmbedding`].
pub fn read_factorization(dir: impl AsRef<Path>) -> Result<FactoredEmbedding> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let paths: Vec<PathBuf> = MATRIX_FILES.iter().map(|n| dir.join(n)).collect();
    let mut contents: [Vec<u8>; 3] = Default::default();
    for (slot, path) in contents.iter_mut().zip(&paths) {
        *slot = fs::read(path).map_err(|e| Error::io(path, e))?;
    }
    let actual = bundle_checksum(&contents);
    if actual != manifest.checksum {
        return Err(Error::Checksum {
            dir: dir.to_path_buf(),
            expected: manifest.checksum,
            actual,
        });
    }
    let text = |i: usize| {
        std::str::from_utf8(&contents[i])
            .map_err(|_| parse_error(&paths[i], 0, "file is not UTF-8"))
    };
    let (n, m, r) = (manifest.n, manifest.m, manifest.r);
    let u = parse_matrix(&paths[0], text(0)?, n, r)?;
    let z = parse_matrix(&paths[1], text(1)?, r, m)?;
    let z0 = parse_matrix(&paths[2], text(2)?, 1, m)?.row(0).transpose();
    let labels_path = dir.join(LABELS_FILE);
    let labels: Vec<String> = read_text(&labels_path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if labels.len() != m {
        return Err(parse_error(
            &labels_path,
            labels.len(),
            format!("expected {m} labels, found {}", labels.len()),
        ));
    }
    FactoredEmbedding::new(u, z, z0, labels)
}

/// Default edge length. Every tree with depth ≤ 4 and branching ≤ 3 is
/// reconstructed perfectly from 1.45 upward; 1.5 leaves a small margin while
/// keeping leaf coordinates in the hundreds.
pub const DEFAULT_EDGE_LENGTH: f64 = 1.5;

/// Parameters of [`synthesize_tree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub branching: usize,
    pub depth: usize,
    /// Spatial dimension n of the output embeddings.
    pub ambient_dim: usize,
    pub edge_length: f64,
    /// Number of planar copies; the planted rank is `2 · copies`.
    pub copies: usize,
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            branching: 2,
            depth: 4,
            ambient_dim: 50,
            edge_length: DEFAULT_EDGE_LENGTH,
            copies: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTree {
    pub embeddings: DMatrix<f64>,
    pub graph: ReconstructionGraph,
    pub planted_rank: usize,
    /// MAP of `embeddings` against `graph`.
    pub gold_map: f64,
}

const MAX_TREE_NODES: usize = 1 << 22;

fn rotation(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn boost(len: f64) -> Matrix3<f64> {
    let (ch, sh) = (len.cosh(), len.sinh());
    Matrix3::new(ch, sh, 0.0, sh, ch, 0.0, 0.0, 0.0, 1.0)
}

/// Planar tree in H² with every edge of hyperbolic length `len`, nodes in
/// breadth-first order. Each node carries a Lorentz frame whose first column
/// is its position; children leave along directions equally spaced with the
/// direction back to the parent.
fn planar_tree(branching: usize, depth: usize, len: f64) -> Vec<Vector3<f64>> {
    let b = branching as f64;
    let step = boost(len);
    let root_turns: Vec<Matrix3<f64>> = (0..branching)
        .map(|k| rotation(2.0 * std::f64::consts::PI * k as f64 / b) * step)
        .collect();
    let child_turns: Vec<Matrix3<f64>> = (0..branching)
        .map(|k| {
            let theta = std::f64::consts::PI * (1.0 + 2.0 * (k + 1) as f64 / (b + 1.0));
            rotation(theta) * step
        })
        .collect();

    let mut frames = vec![Matrix3::identity()];
    let mut level = 0..1;
    for d in 0..depth {
        let turns = if d == 0 { &root_turns } else { &child_turns };
        let start = frames.len();
        for parent in level.clone() {
            for t in turns {
                let f = frames[parent] * t;
                frames.push(f);
            }
        }
        level = start..frames.len();
    }
    frames.iter().map(|f| f.column(0).into_owned()).collect()
}

/// Complete b-ary tree embedded with equal edge lengths in a rotated copy of
/// H² inside H^n, with `copies` planar trees of edge lengths ℓ, 1.25ℓ, 1.5ℓ, …
/// stacked in orthogonal planes.
///
/// When `copies = 1`, `edge_length ≥ 2·arccosh(3)`, `depth ≤ 4` and
/// `branching ≤ 3`, the gold MAP must be exactly 1 and an error is returned
/// otherwise.
pub fn synthesize_tree(spec: &TreeSpec) -> Result<SyntheticTree> {
    let TreeSpec {
        branching: b,
        depth,
        ambient_dim: n,
        edge_length: len,
        copies,
        seed,
    } = *spec;
    if b < 2 || depth < 1 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need branching ≥ 2, depth ≥ 1 and ambient dimension ≥ 2 (got {b}, {depth}, {n})"
        )));
    }
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "edge length must be positive and finite, got {len}"
        )));
    }
    if copies < 1 || 2 * copies > n {
        return Err(Error::InvalidArgument(format!(
            "copies must satisfy 1 ≤ copies ≤ n/2 = {}, got {copies}",
            n / 2
        )));
    }
    let mut m = 1usize;
    let mut level = 1usize;
    for _ in 0..depth {
        level = level.saturating_mul(b);
        m = m.saturating_add(level);
    }
    if m > MAX_TREE_NODES {
        return Err(Error::InvalidArgument(format!(
            "tree would have more than {MAX_TREE_NODES} nodes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = DMatrix::zeros(n, m);
    for j in 0..copies {
        let points = planar_tree(b, depth, len * (1.0 + 0.25 * j as f64));
        let (s, c) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
        for (i, p) in points.iter().enumerate() {
            planted[(2 * j, i)] = c * p[1] - s * p[2];
            planted[(2 * j + 1, i)] = s * p[1] + c * p[2];
        }
    }
    let q = random_stiefel(n, n, rng.random())?.into_inner();
    let spatial = q * planted;
    let mut embeddings = DMatrix::zeros(n + 1, m);
    for (i, col) in spatial.column_iter().enumerate() {
        embeddings[(0, i)] = (1.0 + col.norm_squared()).sqrt();
        embeddings.view_mut((1, i), (n, 1)).copy_from(&col);
    }

    let labels: Vec<String> = (0..m).map(|i| format!("n{i}")).collect();
    let edges = (1..m).map(|i| ((i - 1) / b, i));
    let graph = ReconstructionGraph::new(labels, edges)?;
    let gold_map = map_score(&embeddings, &graph)?.map;

    let guaranteed = copies == 1 && len >= 2.0 * 3f64.acosh() && depth <= 4 && b <= 3;
    if guaranteed && gold_map != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "tree (branching {b}, depth {depth}, edge length {len}) reconstructs with MAP {gold_map}, expected 1"
        )));
    }
    Ok(SyntheticTree {
        embeddings,
        graph,
        planted_rank: 2 * copies,
        gold_map,
    })
}
