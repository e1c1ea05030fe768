//! Grid runs and the tables and correlations computed over them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chunkspace::evaluation::{
    chunk_size_correlation, relative_change_tsv, CellOutcome, CorrelationInput, Grid, Relevance,
};
use chunkspace::tokenizer::BuiltinTokenizer;
use chunkspace::{EmbedderSpec, Task};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Ordering};
use crate::pipeline::{execute, RunOutputs, Stage};

#[derive(Debug, Clone)]
pub struct Cell {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub model: String,
}

/// Expands the grid; any empty list falls back to the base config's value.
pub fn cells(base: &ExperimentConfig) -> Vec<Cell> {
    let grid = base.grid.clone().unwrap_or_default();
    let methods = if grid.methods.is_empty() { vec![base.method] } else { grid.methods.clone() };
    let orderings = if grid.orderings.is_empty() { vec![base.ordering] } else { grid.orderings.clone() };
    let datasets =
        if grid.datasets.is_empty() { base.dataset.clone().into_iter().collect() } else { grid.datasets.clone() };
    let embedders: Vec<EmbedderSpec> =
        if grid.embedders.is_empty() { vec![base.embedder.clone()] } else { grid.embedders.clone() };

    let mut out = Vec::new();
    for embedder in &embedders {
        for dataset in &datasets {
            for &method in &methods {
                for &ordering in &orderings {
                    let mut config = base.clone();
                    config.grid = None;
                    config.dataset = Some(dataset.clone());
                    config.embedder = embedder.clone();
                    config.method = method;
                    config.ordering = ordering;
                    config.run_tag = String::new();
                    config.run_tag = config.run_tag();
                    out.push(Cell { config, dataset: dataset.name().to_owned(), model: embedder.model_name.clone() });
                }
            }
        }
    }
    out
}

pub struct CellResult {
    pub cell: Cell,
    pub outcome: Result<RunOutputs, String>,
}

impl CellResult {
    pub fn succeeded(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Runs every cell through `upto` on a bounded worker pool.
pub fn run_cells(base: &ExperimentConfig, upto: Stage) -> Result<Vec<CellResult>> {
    let workers = base.grid.as_ref().map_or(0, |g| g.workers);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().context("building worker pool")?;
    let cells = cells(base);
    Ok(pool.install(|| {
        cells
            .into_par_iter()
            .map(|cell| {
                let outcome = execute(&cell.config, upto).map_err(|e| e.to_string());
                CellResult { cell, outcome }
            })
            .collect()
    }))
}

#[derive(Serialize)]
struct CellStatus<'a> {
    run_tag: String,
    dataset: &'a str,
    model: &'a str,
    method: &'a str,
    ordering: &'a str,
    aggregate: Option<f64>,
    metric: Option<&'a str>,
    error: Option<&'a str>,
}

pub struct MatrixSummary {
    pub cells: usize,
    pub failed: usize,
    pub tables: Vec<PathBuf>,
}

fn safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes effectiveness tables per (model, ordering), a relative-change
/// table per model where both orderings ran, and `cells.json`.
pub fn write_tables(results: &[CellResult], dir: &Path) -> Result<MatrixSummary> {
    fs::create_dir_all(dir)?;
    let mut grids: BTreeMap<(String, Ordering), Grid> = BTreeMap::new();
    let mut statuses = Vec::new();
    for r in results {
        let c = &r.cell;
        let outcome = match &r.outcome {
            Ok(out) => CellOutcome::Done(out.report.clone().context("cell ran without a report")?),
            Err(e) => CellOutcome::Failed(e.clone()),
        };
        grids.entry((c.model.clone(), c.config.ordering)).or_default().insert(
            c.config.method.as_str(),
            &c.dataset,
            outcome,
        );
        let report = r.outcome.as_ref().ok().and_then(|o| o.report.as_ref());
        statuses.push(CellStatus {
            run_tag: c.config.run_tag(),
            dataset: &c.dataset,
            model: &c.model,
            method: c.config.method.as_str(),
            ordering: c.config.ordering.as_str(),
            aggregate: report.map(|r| r.aggregate),
            metric: report.map(|r| r.metric_name.as_str()),
            error: r.outcome.as_ref().err().map(String::as_str),
        });
    }

    let mut tables = Vec::new();
    for ((model, ordering), grid) in &grids {
        let path = dir.join(format!("effectiveness_{}_{ordering}.tsv", safe(model)));
        fs::write(&path, grid.effectiveness_tsv())?;
        tables.push(path);
    }
    let models: Vec<&String> = grids.keys().map(|(m, _)| m).collect();
    for model in models.into_iter().collect::<std::collections::BTreeSet<_>>() {
        let (Some(pre), Some(con)) =
            (grids.get(&(model.clone(), Ordering::Pre)), grids.get(&(model.clone(), Ordering::Contextualized)))
        else {
            continue;
        };
        let (tsv, _) = relative_change_tsv(pre, con);
        let path = dir.join(format!("relative_change_{}.tsv", safe(model)));
        fs::write(&path, tsv)?;
        tables.push(path);
    }
    let mut body = serde_json::to_vec_pretty(&statuses)?;
    body.push(b'\n');
    fs::write(dir.join("cells.json"), body)?;
    let failed = results.iter().filter(|r| !r.succeeded()).count();
    Ok(MatrixSummary { cells: results.len(), failed, tables })
}

/// Chunk-size vs effectiveness correlation, pooled per (model, ordering,
/// task) across methods and datasets.
pub fn write_correlations(results: &[CellResult], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<(String, Ordering, Task), Vec<&RunOutputs>> = BTreeMap::new();
    for r in results {
        if let Ok(out) = &r.outcome {
            let task = r.cell.config.task()?;
            groups.entry((r.cell.model.clone(), r.cell.config.ordering, task)).or_default().push(out);
        }
    }
    let mut written = Vec::new();
    for ((model, ordering, task), runs) in groups {
        let inputs: Vec<CorrelationInput<'_>> = runs
            .iter()
            .filter_map(|out| {
                let report = out.report.as_ref()?;
                let chunks = out.chunks.as_deref()?;
                let relevance = match task {
                    Task::InCorpus => Relevance::Qrels(&out.collection.qrels),
                    Task::InDocument => Relevance::Spans(&out.collection.gt_spans),
                };
                Some(CorrelationInput { report, chunks, relevance })
            })
            .collect();
        // Sizes are counted with the built-in scheme so remote and reference
        // runs are comparable.
        let corr = chunk_size_correlation(&inputs, &BuiltinTokenizer)?;
        let stem = format!("{}_{ordering}_{}", safe(&model), task.as_str());
        let scatter = dir.join(format!("scatter_{stem}.tsv"));
        fs::write(&scatter, corr.scatter_tsv())?;
        let summary = serde_json::json!({
            "model": model,
            "ordering": ordering,
            "task": task,
            "pooling": "all queries of every method and dataset for this task",
            "n_pairs": corr.pairs.len(),
            "excluded": corr.excluded,
            "correlation": corr.correlation,
            "undefined_reason": corr.undefined_reason,
        });
        let path = dir.join(format!("correlation_{stem}.json"));
        let mut body = serde_json::to_vec_pretty(&summary)?;
        body.push(b'\n');
        fs::write(&path, body)?;
        written.push(scatter);
        written.push(path);
    }
    Ok(written)
}
