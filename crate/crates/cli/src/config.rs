use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use chunkspace::corpus::{GtMode, GutenQaOptions};
use chunkspace::embedding::Backend;
use chunkspace::{ChunkerConfig, EmbedderSpec, Method, Task};
use serde::{Deserialize, Serialize};

pub const SIDECAR_URL_ENV: &str = "CHUNKSPACE_SIDECAR_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Pre,
    #[serde(alias = "con")]
    Contextualized,
}

impl Ordering {
    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::Pre => "pre",
            Ordering::Contextualized => "contextualized",
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(Ordering::Pre),
            "contextualized" | "con" => Ok(Ordering::Contextualized),
            _ => Err(format!("unknown ordering `{s}` (pre | contextualized)")),
        }
    }
}

/// Where the collection comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRef {
    /// Directory holding `corpus.jsonl`, `queries.jsonl` and `qrels/<split>.tsv`.
    Beir {
        name: String,
        path: PathBuf,
        #[serde(default = "default_split")]
        split: String,
        #[serde(default)]
        prepend_title: bool,
    },
    /// Book paragraph table plus question table.
    Gutenqa {
        name: String,
        books: PathBuf,
        qa: PathBuf,
        /// `text` (default) or `index`.
        #[serde(default)]
        gt_mode: Option<String>,
        #[serde(default)]
        question_id_col: Option<String>,
    },
    /// A previously persisted store directory.
    Store { name: String, path: PathBuf },
}

fn default_split() -> String {
    "test".into()
}

impl DatasetRef {
    pub fn name(&self) -> &str {
        match self {
            DatasetRef::Beir { name, .. } | DatasetRef::Gutenqa { name, .. } | DatasetRef::Store { name, .. } => name,
        }
    }

    /// Guesses the layout of a directory: a store has `manifest.json`, a
    /// BEIR dump `corpus.jsonl`, a GutenQA export `books.tsv` and `qa.tsv`.
    pub fn detect(dir: &Path) -> Result<DatasetRef> {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
        if dir.join(chunkspace::corpus::MANIFEST_FILE).is_file() {
            Ok(DatasetRef::Store { name, path: dir.to_owned() })
        } else if dir.join("corpus.jsonl").is_file() {
            Ok(DatasetRef::Beir { name, path: dir.to_owned(), split: default_split(), prepend_title: false })
        } else if dir.join("books.tsv").is_file() && dir.join("qa.tsv").is_file() {
            Ok(DatasetRef::Gutenqa {
                name,
                books: dir.join("books.tsv"),
                qa: dir.join("qa.tsv"),
                gt_mode: None,
                question_id_col: None,
            })
        } else {
            bail!("{}: not a BEIR, GutenQA or store directory", dir.display())
        }
    }

    /// Default task: graded qrels mean in-corpus, span ground truth means
    /// in-document.
    pub fn default_task(&self) -> Option<Task> {
        match self {
            DatasetRef::Beir { .. } => Some(Task::InCorpus),
            DatasetRef::Gutenqa { .. } => Some(Task::InDocument),
            DatasetRef::Store { .. } => None,
        }
    }

    pub fn gutenqa_options(&self) -> Result<GutenQaOptions> {
        let DatasetRef::Gutenqa { gt_mode, question_id_col, .. } = self else {
            bail!("not a GutenQA dataset");
        };
        let gt_mode = match gt_mode.as_deref() {
            None | Some("text") => GtMode::Text,
            Some("index") => GtMode::Index,
            Some(other) => bail!("unknown gt_mode `{other}` (text | index)"),
        };
        Ok(GutenQaOptions { gt_mode, question_id_col: question_id_col.clone(), ..Default::default() })
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetRef::Beir { path, .. } | DatasetRef::Store { path, .. } => fix(path),
            DatasetRef::Gutenqa { books, qa, .. } => {
                fix(books);
                fix(qa);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Chat-completions URL; the built-in stub answers when absent.
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Cache responses under `<out>/cache/llm`.
    pub cache: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: None,
            api_key_env: None,
            max_in_flight: chunkspace::llm::LlmGateway::DEFAULT_IN_FLIGHT,
            max_retries: 2,
            backoff_ms: 500,
            cache: true,
        }
    }
}

/// Cells of a matrix run: the cross product of every list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub methods: Vec<Method>,
    pub orderings: Vec<Ordering>,
    pub datasets: Vec<DatasetRef>,
    pub embedders: Vec<EmbedderSpec>,
    /// Worker threads; 0 means one per CPU.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetRef>,
    pub method: Method,
    pub ordering: Ordering,
    pub embedder: EmbedderSpec,
    pub chunker: ChunkerConfig,
    pub llm: LlmConfig,
    /// Derived from the dataset kind when absent.
    pub task: Option<Task>,
    pub k: usize,
    pub seed: u64,
    /// Derived from dataset, method and ordering when empty.
    pub run_tag: String,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            method: Method::Fixed,
            ordering: Ordering::Pre,
            embedder: EmbedderSpec::default(),
            chunker: ChunkerConfig::default(),
            llm: LlmConfig::default(),
            task: None,
            k: 10,
            seed: 0,
            run_tag: String::new(),
            out: PathBuf::from("out"),
            grid: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub method: Option<Method>,
    pub ordering: Option<Ordering>,
    pub backend: Option<Backend>,
    pub endpoint: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &mut cfg.dataset {
            d.resolve(base);
        }
        if let Some(g) = &mut cfg.grid {
            for d in &mut g.datasets {
                d.resolve(base);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(dir) = &o.dataset {
            self.dataset = Some(DatasetRef::detect(dir)?);
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(ord) = o.ordering {
            self.ordering = ord;
        }
        if let Some(b) = o.backend {
            self.embedder.backend = b;
        }
        if let Some(url) = &o.endpoint {
            self.embedder.endpoint = Some(url.clone());
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.embedder.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if self.embedder.endpoint.is_none() {
            self.embedder.endpoint = std::env::var(SIDECAR_URL_ENV).ok();
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<&DatasetRef> {
        self.dataset.as_ref().context("no dataset configured (set [dataset] or pass --dataset)")
    }

    pub fn task(&self) -> Result<Task> {
        match self.task {
            Some(t) => Ok(t),
            None => self.dataset()?.default_task().context("task must be set for a store dataset"),
        }
    }

    pub fn run_tag(&self) -> String {
        if !self.run_tag.is_empty() {
            return self.run_tag.clone();
        }
        let dataset = self.dataset.as_ref().map_or("none", DatasetRef::name);
        format!("{dataset}-{}-{}-{}", self.embedder.model_name, self.method, self.ordering)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset()?;
        self.task()?;
        if self.k == 0 {
            bail!("k must be positive");
        }
        self.embedder.validate()?;
        self.chunker.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::pipeline::hash_json(self)
    }
}
