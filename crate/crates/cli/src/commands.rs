use std::fs;
use std::path::Path;
use std::time::Instant;

use hyperlore::{
    expand, initialize, loss_value, map_rank_sweep, map_score_with, read_edges, read_embeddings,
    read_factorization, solve_svd, synthesize_tree, tr_solve, write_edges, write_embeddings,
    write_factorization, EmbeddingModel, Error, LossKind, MapResult, Result, SolveReport,
    TrConfig, TreeSpec,
};
use serde::Serialize;

use crate::{Cli, Command, CompressArgs, ConvertArgs, EvaluateArgs, SolverArgs, SweepArgs, SynthesizeArgs};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Compress(args) => compress(&args),
        Command::Evaluate(args) => evaluate(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Convert(args) => convert(&args),
        Command::Synthesize(args) => synthesize(&args),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn tr_config(args: &SolverArgs) -> Result<TrConfig> {
    let cfg = TrConfig {
        max_outer_iters: args.max_iters,
        grad_tol: args.grad_tol,
        seed: args.seed,
        ..TrConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Contents of `report.json` in a bundle written by `compress`.
#[derive(Serialize)]
struct CompressReport {
    input: String,
    model: EmbeddingModel,
    method: LossKind,
    n: usize,
    m: usize,
    r: usize,
    init: Option<&'static str>,
    loss: f64,
    stored_floats: usize,
    dense_floats: usize,
    checksum: String,
    wall_time: f64,
    config: Option<TrConfig>,
    solver: Option<SolveReport>,
}

fn compress(args: &CompressArgs) -> Result<()> {
    let start = Instant::now();
    let (xbar, labels) = read_embeddings(&args.input, args.model.into())?;
    let (n, m) = (xbar.nrows() - 1, xbar.ncols());
    let r = args.rank;
    if r > n {
        return Err(Error::InvalidArgument(format!("--rank {r} exceeds n = {n}")));
    }
    let kind = LossKind::from(args.method);
    let cfg = tr_config(&args.solver)?;

    let (mut f, loss, config, mut solver, init) = match kind {
        LossKind::SpatialEuclidean => {
            let f = solve_svd(&xbar, r)?;
            let loss = loss_value(kind, &f.to_point(), &xbar)?;
            (f, loss, None, None, None)
        }
        _ => {
            let init = initialize(&xbar, r, args.init.into(), cfg.seed)?;
            let (f, report) = tr_solve(kind, &xbar, r, &init, &cfg)?;
            let loss = report.final_loss;
            (f, loss, Some(cfg), Some(report), Some(args.init.name()))
        }
    };
    f.set_labels(labels)?;

    let manifest = write_factorization(&f, &args.out, kind.name(), loss)?;
    let mut wall_time = start.elapsed().as_secs_f64();
    if args.reproducible {
        wall_time = 0.0;
        if let Some(report) = solver.as_mut() {
            report.wall_time = 0.0;
        }
    }
    let report = CompressReport {
        input: args.input.display().to_string(),
        model: args.model.into(),
        method: kind,
        n,
        m,
        r,
        init,
        loss,
        stored_floats: f.stored_floats(),
        dense_floats: (n + 1) * m,
        checksum: manifest.checksum,
        wall_time,
        config,
        solver,
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{kind} rank {r}: loss {loss:e}; {} of {} floats stored in {}",
        report.stored_floats,
        report.dense_floats,
        args.out.display()
    );
    Ok(())
}

/// JSON written by `evaluate --out`.
#[derive(Serialize)]
struct EvaluateReport {
    source: String,
    edges: String,
    #[serde(flatten)]
    result: MapResult,
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (xbar, labels, source) = match (&args.embeddings, &args.factorization) {
        (Some(path), _) => {
            let (xbar, labels) = read_embeddings(path, args.model.into())?;
            (xbar, labels, path)
        }
        (None, Some(dir)) => {
            let f = read_factorization(dir)?;
            (expand(&f), f.labels().to_vec(), dir)
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --embeddings or --factorization is required".into(),
            ))
        }
    };
    let graph = read_edges(&args.edges, &labels)?;
    let result = map_score_with(&xbar, &graph, args.aggregation.into())?;
    println!(
        "MAP {:.4} over {} nodes ({} edges)",
        result.map,
        result.nodes_evaluated,
        graph.num_edges()
    );
    if let Some(out) = &args.out {
        let report = EvaluateReport {
            source: source.display().to_string(),
            edges: args.edges.display().to_string(),
            result,
        };
        write_json(out, &report)?;
    }
    Ok(())
}

fn parse_ranks(tokens: &[String], n: usize) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| match t.trim() {
            "n" => Ok(n),
            s => s
                .parse::<usize>()
                .ok()
                .filter(|&r| r >= 1)
                .ok_or_else(|| Error::InvalidArgument(format!("rank `{t}` is not a positive integer or `n`"))),
        })
        .collect()
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let (xbar, labels) = read_embeddings(&args.input, args.model.into())?;
    let graph = read_edges(&args.edges, &labels)?;
    let ranks = parse_ranks(&args.ranks, xbar.nrows() - 1)?;
    let kinds: Vec<LossKind> = args.methods.iter().map(|&m| m.into()).collect();
    let cfg = tr_config(&args.solver)?;
    let dataset = match &args.dataset {
        Some(name) => name.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into()),
    };

    let mut table = map_rank_sweep(&dataset, &xbar, &graph, &ranks, &kinds, &cfg)?;
    if args.reproducible {
        table.clear_timings();
    }
    fs::create_dir_all(&args.out).map_err(|source| Error::Io {
        path: args.out.clone(),
        source,
    })?;
    let tsv = table.to_tsv();
    let tsv_path = args.out.join("sweep.tsv");
    fs::write(&tsv_path, &tsv).map_err(|source| Error::Io {
        path: tsv_path,
        source,
    })?;
    write_json(&args.out.join("sweep.json"), &table)?;
    print!("{tsv}");
    Ok(())
}

fn convert(args: &ConvertArgs) -> Result<()> {
    let (xbar, labels) = read_embeddings(&args.input, args.from.into())?;
    write_embeddings(&args.out, &xbar, &labels, args.to.into())?;
    println!(
        "converted {} embeddings from {} to {}",
        labels.len(),
        EmbeddingModel::from(args.from),
        EmbeddingModel::from(args.to)
    );
    Ok(())
}

fn synthesize(args: &SynthesizeArgs) -> Result<()> {
    if args.out_embeddings == args.out_edges {
        return Err(Error::InvalidArgument(
            "--out-embeddings and --out-edges must be different files".into(),
        ));
    }
    let tree = synthesize_tree(&TreeSpec {
        branching: args.branching,
        depth: args.depth,
        ambient_dim: args.ambient_dim,
        edge_length: args.edge_length,
        copies: args.copies,
        seed: args.seed,
    })?;
    write_embeddings(
        &args.out_embeddings,
        &tree.embeddings,
        tree.graph.labels(),
        args.model.into(),
    )?;
    write_edges(&args.out_edges, &tree.graph)?;
    println!(
        "{} nodes, {} edges; planted rank {}, gold MAP {:.4}",
        tree.graph.num_nodes(),
        tree.graph.num_edges(),
        tree.planted_rank,
        tree.gold_map
    );
    Ok(())
}
