//! Content-addressed stages: ingest, chunk, embed, run, report.
//!
//! Each stage writes into `<out>/cache/<stage>/<key>/`, where the key
//! hashes the stage parameters together with the content hash of its
//! upstream artifacts. A stage whose directory exists is a cache hit. A
//! failing stage leaves its work in `<key>.partial/`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use chunkspace::corpus::{ingest_beir, ingest_gutenqa, BeirOptions, Collection, Manifest, MANIFEST_FILE};
use chunkspace::embedding::{read_artifact, write_artifact, ArtifactHeader, Backend};
use chunkspace::evaluation::{evaluate, per_query_jsonl, EvalReport};
use chunkspace::late_chunking::{contextualized_embed_document, WINDOW_RULE};
use chunkspace::llm::{ChatEndpoint, HttpChatModel, LlmGateway, ResponseCache};
use chunkspace::retrieval::{run_task, IndexEntry, QueryVector};
use chunkspace::segmentation::Segmenter;
use chunkspace::segmentation::{prompts, read_chunks, write_chunks};
use chunkspace::{Chunk, ChunkIndex, Embedder, EmbedderSpec, EmbeddingVector, LanguageModel, RunResult};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetRef, ExperimentConfig, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Config,
    Ingest,
    Chunk,
    Embed,
    Run,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Chunk => "chunk",
            Stage::Embed => "embed",
            Stage::Run => "run",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config values serialize"))
}

fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let body = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.update((body.len() as u64).to_le_bytes());
        h.update(&body);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: &'static str,
    pub key: String,
    pub cache_hit: bool,
    pub dir: PathBuf,
}

/// Serializes work on one cache directory across the threads of a process.
static DIR_LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = LazyLock::new(Default::default);

fn dir_lock(dir: &Path) -> Arc<Mutex<()>> {
    DIR_LOCKS.lock().unwrap().entry(dir.to_owned()).or_default().clone()
}

fn materialize(
    cache_root: &Path,
    stage: Stage,
    key: String,
    build: impl FnOnce(&Path) -> Result<()>,
) -> Result<StageRecord> {
    let dir = cache_root.join(stage.as_str()).join(&key);
    let lock = dir_lock(&dir);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if dir.is_dir() {
        return Ok(StageRecord { stage: stage.as_str(), key, cache_hit: true, dir });
    }
    let partial = dir.with_extension("partial");
    if partial.exists() {
        fs::remove_dir_all(&partial).with_context(|| format!("clearing {}", partial.display()))?;
    }
    fs::create_dir_all(&partial).with_context(|| format!("creating {}", partial.display()))?;
    build(&partial)?;
    fs::rename(&partial, &dir).with_context(|| format!("publishing {}", dir.display()))?;
    Ok(StageRecord { stage: stage.as_str(), key, cache_hit: false, dir })
}

/// Everything produced by one configuration.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub run_tag: String,
    pub stages: Vec<StageRecord>,
    pub collection: Collection,
    pub chunks: Option<Vec<Chunk>>,
    pub report: Option<EvalReport>,
    pub run_dir: PathBuf,
}

impl RunOutputs {
    pub fn all_cached(&self) -> bool {
        self.stages.iter().all(|s| s.cache_hit)
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    run_tag: &'a str,
    config_hash: String,
    config: &'a ExperimentConfig,
    versions: BTreeVersions,
    window_rule: &'static str,
    prompt_hashes: Vec<(&'static str, String)>,
    tokenizer: String,
    stages: &'a [StageRecord],
}

#[derive(Serialize)]
struct BTreeVersions {
    chunkspace: &'static str,
}

pub struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    cache: PathBuf,
    embedder: RefCell<Option<Arc<dyn Embedder>>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Pipeline { cfg, cache: cfg.out.join("cache"), embedder: RefCell::new(None) }
    }

    /// Embedder parameters that determine vectors; the endpoint does not.
    fn embedder_spec(&self) -> EmbedderSpec {
        EmbedderSpec { seed: self.cfg.seed, ..self.cfg.embedder.clone() }
    }

    fn embedder_identity(&self) -> EmbedderSpec {
        EmbedderSpec { endpoint: None, ..self.embedder_spec() }
    }

    fn tokenizer_scheme(&self) -> String {
        match self.cfg.embedder.backend {
            Backend::Reference => "builtin".into(),
            Backend::Remote => format!("remote:{}", self.cfg.embedder.model_name),
        }
    }

    fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        if let Some(e) = self.embedder.borrow().as_ref() {
            return Ok(e.clone());
        }
        let e = self.embedder_spec().build()?;
        *self.embedder.borrow_mut() = Some(e.clone());
        Ok(e)
    }

    fn llm(&self) -> Result<LlmGateway> {
        let llm = &self.cfg.llm;
        let Some(url) = &llm.endpoint else {
            return Ok(LlmGateway::stub());
        };
        let mut ep = ChatEndpoint::new(url.clone(), self.cfg.chunker.llm_model.clone());
        ep.api_key_env = llm.api_key_env.clone();
        ep.max_retries = llm.max_retries;
        ep.backoff = Duration::from_millis(llm.backoff_ms);
        let cache = if llm.cache { Some(ResponseCache::new(self.cache.join("llm"))?) } else { None };
        Ok(LlmGateway::new(Box::new(HttpChatModel::new(ep)?), cache, llm.max_in_flight))
    }

    /// Runs every stage up to and including `upto`.
    pub fn execute(&self, upto: Stage) -> Result<RunOutputs, StageError> {
        self.cfg.validate().at(Stage::Config)?;
        let task = self.cfg.task().at(Stage::Config)?;
        let run_tag = self.cfg.run_tag();
        let mut stages = Vec::new();

        let (ingest, collection, corpus_hash) = self.ingest().at(Stage::Ingest)?;
        stages.push(ingest);
        let mut out = RunOutputs {
            run_tag: run_tag.clone(),
            stages,
            collection,
            chunks: None,
            report: None,
            run_dir: self.cfg.out.join("runs").join(&run_tag),
        };
        if upto > Stage::Ingest {
            let (rec, chunks, chunks_hash) = self.chunk(&out.collection, &corpus_hash).at(Stage::Chunk)?;
            out.stages.push(rec);
            if upto > Stage::Chunk {
                let (rec, vectors_hash) = self.embed(&out.collection, &chunks, &chunks_hash).at(Stage::Embed)?;
                let embed_dir = rec.dir.clone();
                out.stages.push(rec);
                if upto > Stage::Embed {
                    let (rec, run, run_hash) =
                        self.run(&out.collection, &chunks, &embed_dir, &vectors_hash, task, &run_tag).at(Stage::Run)?;
                    out.stages.push(rec);
                    if upto > Stage::Run {
                        let (rec, report) =
                            self.report(&out.collection, &chunks, &run, &run_hash, &corpus_hash).at(Stage::Report)?;
                        out.stages.push(rec);
                        out.report = Some(report);
                    }
                }
            }
            out.chunks = Some(chunks);
        }
        self.publish(&out).at(upto)?;
        Ok(out)
    }

    fn ingest(&self) -> Result<(StageRecord, Collection, String)> {
        let dataset = self.cfg.dataset()?;
        let (files, options): (Vec<PathBuf>, serde_json::Value) = match dataset {
            DatasetRef::Beir { path, split, prepend_title, .. } => (
                vec![
                    path.join("corpus.jsonl"),
                    path.join("queries.jsonl"),
                    path.join("qrels").join(format!("{split}.tsv")),
                ],
                serde_json::json!({"kind": "beir", "prepend_title": prepend_title}),
            ),
            DatasetRef::Gutenqa { books, qa, gt_mode, question_id_col, .. } => (
                vec![books.clone(), qa.clone()],
                serde_json::json!({"kind": "gutenqa", "gt_mode": gt_mode, "question_id_col": question_id_col}),
            ),
            DatasetRef::Store { path, .. } => (vec![path.join(MANIFEST_FILE)], serde_json::json!({"kind": "store"})),
        };
        let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
        let key = hash_json(&(Stage::Ingest.as_str(), options, hash_files(&refs)?));
        let rec = materialize(&self.cache, Stage::Ingest, key, |dir| {
            let collection = match dataset {
                DatasetRef::Beir { prepend_title, .. } => {
                    ingest_beir(&files[0], &files[1], &files[2], &BeirOptions { prepend_title: *prepend_title })?
                }
                DatasetRef::Gutenqa { .. } => ingest_gutenqa(&files[0], &files[1], &dataset.gutenqa_options()?)?,
                DatasetRef::Store { path, .. } => Collection::load(path)?,
            };
            collection.persist(dir)?;
            Ok(())
        })?;
        let collection = Collection::load(&rec.dir)?;
        let manifest: Manifest = serde_json::from_slice(&fs::read(rec.dir.join(MANIFEST_FILE))?)?;
        Ok((rec, collection, manifest.content_hash))
    }

    fn chunk(&self, collection: &Collection, corpus_hash: &str) -> Result<(StageRecord, Vec<Chunk>, String)> {
        let method = self.cfg.method;
        let llm_identity = method.uses_llm().then(|| {
            serde_json::json!({
                "backend": if self.cfg.llm.endpoint.is_some() { "http" } else { "stub" },
                "model": self.cfg.chunker.llm_model,
                "prompts": prompts::template_hashes(),
            })
        });
        let key = hash_json(&(
            Stage::Chunk.as_str(),
            corpus_hash,
            method,
            &self.cfg.chunker,
            self.tokenizer_scheme(),
            (method == chunkspace::Method::Semantic).then(|| self.embedder_identity()),
            llm_identity,
        ));
        let rec = materialize(&self.cache, Stage::Chunk, key, |dir| {
            let embedder = self.embedder()?;
            let gateway = if method.uses_llm() { Some(self.llm()?) } else { None };
            let seg = Segmenter {
                config: &self.cfg.chunker,
                tokenizer: embedder.tokenizer(),
                embedder: Some(embedder.as_ref()),
                llm: gateway.as_ref().map(|g| g as &dyn LanguageModel),
            };
            let out = seg.chunk_all(method, &collection.documents)?;
            write_chunks(&dir.join("chunks.jsonl"), &out.chunks)?;
            let stats = serde_json::json!({"chunks": out.chunks.len(), "llm_fallbacks": out.llm_fallbacks});
            fs::write(dir.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
            Ok(())
        })?;
        let path = rec.dir.join("chunks.jsonl");
        let hash = hash_files(&[&path])?;
        Ok((rec, read_chunks(&path)?, hash))
    }

    fn embed(&self, collection: &Collection, chunks: &[Chunk], chunks_hash: &str) -> Result<(StageRecord, String)> {
        let ordering = self.cfg.ordering;
        let query_texts: Vec<&str> = collection.queries.iter().map(|q| q.text.as_str()).collect();
        let key = hash_json(&(
            Stage::Embed.as_str(),
            chunks_hash,
            hash_json(&query_texts),
            ordering,
            self.embedder_identity(),
            (ordering == Ordering::Contextualized).then_some(WINDOW_RULE),
        ));
        let rec = materialize(&self.cache, Stage::Embed, key, |dir| {
            let embedder = self.embedder()?;
            let vectors: Vec<EmbeddingVector> = match ordering {
                Ordering::Pre => {
                    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
                    embedder.embed_chunks(&texts)?
                }
                Ordering::Contextualized => {
                    let mut by_doc: HashMap<&str, Vec<Chunk>> = HashMap::new();
                    for c in chunks {
                        by_doc.entry(c.doc_id.as_str()).or_default().push(c.clone());
                    }
                    let docs: Vec<_> =
                        collection.documents.iter().filter(|d| by_doc.contains_key(d.doc_id.as_str())).collect();
                    let per_doc: Vec<(String, Vec<EmbeddingVector>)> = docs
                        .par_iter()
                        .map(|d| {
                            let own = &by_doc[d.doc_id.as_str()];
                            Ok((d.doc_id.clone(), contextualized_embed_document(d, own, embedder.as_ref())?))
                        })
                        .collect::<Result<_>>()?;
                    let mut by_id: HashMap<String, EmbeddingVector> = HashMap::new();
                    for (doc_id, vecs) in per_doc {
                        for (c, v) in by_doc[doc_id.as_str()].iter().zip(vecs) {
                            by_id.insert(c.chunk_id.clone(), v);
                        }
                    }
                    chunks
                        .iter()
                        .map(|c| by_id.remove(&c.chunk_id).ok_or_else(|| anyhow!("no vector for chunk {}", c.chunk_id)))
                        .collect::<Result<_>>()?
                }
            };
            let desc = embedder.descriptor();
            let header = |ordering: Option<String>, ids: Vec<String>| ArtifactHeader {
                dims: desc.dims,
                count: ids.len(),
                backend: desc.backend,
                model: desc.model.clone(),
                lambda: desc.lambda,
                ordering,
                ids,
            };
            let chunk_ids = chunks.iter().map(|c| c.chunk_id.clone()).collect();
            write_artifact(&dir.join("chunks.f32"), &header(Some(ordering.to_string()), chunk_ids), &vectors)?;
            let queries = embedder.embed_queries(&query_texts)?;
            let query_ids = collection.queries.iter().map(|q| q.query_id.clone()).collect();
            write_artifact(&dir.join("queries.f32"), &header(None, query_ids), &queries)?;
            Ok(())
        })?;
        let hash = hash_files(&[&rec.dir.join("chunks.f32"), &rec.dir.join("queries.f32")])?;
        Ok((rec, hash))
    }

    fn run(
        &self,
        collection: &Collection,
        chunks: &[Chunk],
        embed_dir: &Path,
        vectors_hash: &str,
        task: chunkspace::Task,
        run_tag: &str,
    ) -> Result<(StageRecord, RunResult, String)> {
        let key = hash_json(&(Stage::Run.as_str(), vectors_hash, task, self.cfg.k, run_tag));
        let rec = materialize(&self.cache, Stage::Run, key, |dir| {
            let (chunk_header, chunk_vectors) = read_artifact(&embed_dir.join("chunks.f32"))?;
            let (_, query_vectors) = read_artifact(&embed_dir.join("queries.f32"))?;
            let entries = chunks
                .iter()
                .zip(chunk_vectors)
                .map(|(c, vector)| IndexEntry { chunk_id: c.chunk_id.clone(), doc_id: c.doc_id.clone(), vector })
                .collect();
            let index = ChunkIndex::build(chunk_header.dims, entries)?;
            let queries: Vec<QueryVector> = collection
                .queries
                .iter()
                .zip(query_vectors)
                .map(|(q, vector)| QueryVector {
                    query_id: q.query_id.clone(),
                    scope_doc_id: q.scope_doc_id.clone(),
                    vector,
                })
                .collect();
            let run = run_task(&queries, &index, task, self.cfg.k, run_tag)?;
            fs::write(dir.join("run.trec"), run.to_trec())?;
            fs::write(dir.join("run.json"), serde_json::to_vec(&run)?)?;
            Ok(())
        })?;
        let path = rec.dir.join("run.json");
        let body = fs::read(&path)?;
        let run: RunResult = serde_json::from_slice(&body)?;
        Ok((rec, run, sha256_hex(&body)))
    }

    fn report(
        &self,
        collection: &Collection,
        chunks: &[Chunk],
        run: &RunResult,
        run_hash: &str,
        corpus_hash: &str,
    ) -> Result<(StageRecord, EvalReport)> {
        let key = hash_json(&(Stage::Report.as_str(), run_hash, corpus_hash, self.cfg.k));
        let rec = materialize(&self.cache, Stage::Report, key, |dir| {
            let report =
                evaluate(run, &collection.queries, chunks, &collection.gt_spans, &collection.qrels, self.cfg.k);
            let mut body = serde_json::to_vec_pretty(&report)?;
            body.push(b'\n');
            fs::write(dir.join("report.json"), body)?;
            fs::write(dir.join("per_query.jsonl"), per_query_jsonl(&report))?;
            Ok(())
        })?;
        let report = serde_json::from_slice(&fs::read(rec.dir.join("report.json"))?)?;
        Ok((rec, report))
    }

    /// Copies the final artifacts next to a manifest under `<out>/runs/<tag>/`.
    fn publish(&self, out: &RunOutputs) -> Result<()> {
        fs::create_dir_all(&out.run_dir)?;
        for rec in &out.stages {
            let files: &[&str] = match rec.stage {
                "run" => &["run.trec"],
                "report" => &["report.json", "per_query.jsonl"],
                _ => &[],
            };
            for f in files {
                fs::copy(rec.dir.join(f), out.run_dir.join(f))?;
            }
        }
        let manifest = RunManifest {
            run_tag: &out.run_tag,
            config_hash: self.cfg.hash(),
            config: self.cfg,
            versions: BTreeVersions { chunkspace: env!("CARGO_PKG_VERSION") },
            window_rule: WINDOW_RULE,
            prompt_hashes: prompts::template_hashes(),
            tokenizer: self.tokenizer_scheme(),
            stages: &out.stages,
        };
        let mut body = serde_json::to_vec_pretty(&manifest)?;
        body.push(b'\n');
        fs::write(out.run_dir.join("manifest.json"), body)?;
        Ok(())
    }
}

/// Runs one configuration through `upto`.
pub fn execute(cfg: &ExperimentConfig, upto: Stage) -> Result<RunOutputs, StageError> {
    Pipeline::new(cfg).execute(upto)
}
