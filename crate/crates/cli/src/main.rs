use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chunkspace::embedding::Backend;
use chunkspace::Method;
use chunkspace_cli::matrix::{run_cells, write_correlations, write_tables};
use chunkspace_cli::{execute, ExperimentConfig, Ordering, Overrides, Stage};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chunkspace", version, about = "Chunking design-space benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory (BEIR dump, GutenQA export or persisted store).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    ordering: Option<Ordering>,
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Embedding sidecar base URL.
    #[arg(long, global = true, value_name = "URL")]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and persist the collection.
    Ingest,
    /// Segment every document.
    Chunk,
    /// Embed chunks and queries.
    Embed,
    /// Full pipeline: retrieval run and evaluation report.
    Run,
    /// Print the evaluation report of a (cached) run.
    Report,
    /// Chunk-size vs effectiveness correlation over the grid.
    Correlate,
    /// Run the grid and write effectiveness and relative-change tables.
    Matrix,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        dataset: common.dataset.clone(),
        method: common.method,
        ordering: common.ordering,
        backend: common.backend,
        endpoint: common.endpoint.clone(),
        k: common.k,
        seed: common.seed,
        out: common.out.clone(),
    })?;
    Ok(cfg)
}

fn single(cfg: &ExperimentConfig, upto: Stage, print_report: bool) -> Result<ExitCode> {
    let out = execute(cfg, upto)?;
    for s in &out.stages {
        eprintln!("{:<7} {} {}", s.stage, if s.cache_hit { "cached" } else { "built " }, s.dir.display());
    }
    match &out.report {
        Some(report) if print_report => println!("{}", serde_json::to_string_pretty(report)?),
        Some(report) => println!(
            "{}\t{}\t{:.4}\t{} evaluated\t{} skipped",
            out.run_tag, report.metric_name, report.aggregate, report.n_evaluated, report.n_skipped
        ),
        None => println!("{}", out.stages.last().map_or(out.run_dir.clone(), |s| s.dir.clone()).display()),
    }
    Ok(ExitCode::SUCCESS)
}

fn grid(cfg: &ExperimentConfig, correlate: bool) -> Result<ExitCode> {
    let results = run_cells(cfg, Stage::Report)?;
    for r in &results {
        if let Err(e) = &r.outcome {
            eprintln!("cell {} failed: {e}", r.cell.config.run_tag());
        }
    }
    let tables = cfg.out.join("tables");
    let summary = write_tables(&results, &tables).context("writing tables")?;
    for t in &summary.tables {
        println!("{}", t.display());
    }
    if correlate {
        for p in write_correlations(&results, &cfg.out.join("correlations")).context("writing correlations")? {
            println!("{}", p.display());
        }
    }
    eprintln!("{} of {} cells succeeded", summary.cells - summary.failed, summary.cells);
    Ok(if summary.failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli.common).and_then(|cfg| match cli.command {
        Command::Ingest => single(&cfg, Stage::Ingest, false),
        Command::Chunk => single(&cfg, Stage::Chunk, false),
        Command::Embed => single(&cfg, Stage::Embed, false),
        Command::Run => single(&cfg, Stage::Report, false),
        Command::Report => single(&cfg, Stage::Report, true),
        Command::Correlate => grid(&cfg, true),
        Command::Matrix => grid(&cfg, false),
    });
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
