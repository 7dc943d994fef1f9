//! Workdir-based batch steps behind the command-line interface.
//!
//! Each step reads the artifacts of earlier steps from the workdir and
//! writes its own. Artifacts are JSON with a `schema_version` field and are
//! replaced atomically. Timestamps go only to the `run_log.jsonl` sidecar,
//! so artifacts from identical inputs and configuration are byte-identical.
//!
//! Settings resolve as: built-in defaults, then the config file, then
//! command-line overrides.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    self, CorpusError, CorpusStats, KeywordLexicon, LabeledDataset, PartyRegistry, SpeechFormat,
};
use crate::evaluation::{self, CvOptions, CvReport, EvalError, HyperGrid, HyperParams, TextPipeline, SCHEMA_VERSION};
use crate::explain::{
    self, AggregateReport, AggregationMode, Attribution, Background, ExplainError, ImportanceReport, ShapConfig,
    ShapMode,
};
use crate::features::NgramRange;
use crate::report;
use crate::sparse::SparseVector;
use crate::svm::SvmError;

pub const SPEECHES: &str = "speeches.jsonl";
pub const REGISTRY: &str = "registry.json";
pub const LEXICON: &str = "lexicon.json";
pub const STOPWORDS: &str = "stopwords.json";
pub const INGEST_SUMMARY: &str = "ingest.json";
pub const DATASET: &str = "dataset.json";
pub const STATS: &str = "stats.json";
pub const EVALUATION: &str = "evaluation.json";
pub const MODEL: &str = "model.json";
pub const IMPORTANCE: &str = "importance.json";
pub const SHAP_AGGREGATE: &str = "shap_aggregate.json";
pub const RUN_LOG: &str = "run_log.jsonl";
pub const LOCK: &str = ".leaning.lock";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("cannot parse {path}: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
    #[error("workdir is locked by another run ({0}); remove the file if that run is gone")]
    Locked(PathBuf),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// 1 for problems with inputs, configuration or missing artifacts, 2 for
    /// failures inside the pipeline.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingArtifact { .. } | Self::BadArtifact { .. } | Self::Locked(_) => 1,
            Self::Corpus(_) => 1,
            Self::Io { .. } => 1,
            Self::Eval(EvalError::Svm(
                SvmError::DimensionMismatch { .. } | SvmError::NonFinite(_) | SvmError::InvalidConfig(_),
            )) => 2,
            Self::Eval(_) => 1,
            Self::Explain(e) => match e {
                ExplainError::TooManyFeatures(_) | ExplainError::TooFewSamples { .. } => 1,
                _ => 2,
            },
            Self::Internal(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Emit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(format!("unknown emit format `{other}` (expected csv, json or svg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub speeches: Option<PathBuf>,
    pub speeches_format: SpeechFormat,
    pub registry: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            speeches: None,
            speeches_format: SpeechFormat::Jsonl,
            registry: None,
            keywords: None,
            stopwords: None,
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub grid: HyperGrid,
    pub shap: ShapConfig,
    pub aggregation: AggregationMode,
    pub seed: u64,
    pub emit: BTreeSet<Emit>,
    pub k_outer: usize,
    pub k_inner: usize,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    /// Terms listed per side in importance and aggregate reports.
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cv = CvOptions::default();
        Self {
            paths: Paths::default(),
            grid: HyperGrid::default(),
            shap: ShapConfig::default(),
            aggregation: AggregationMode::MaxMin,
            seed: 0,
            emit: [Emit::Csv, Emit::Json, Emit::Svg].into(),
            k_outer: cv.k_outer,
            k_inner: cv.k_inner,
            svm_tol: cv.svm_tol,
            svm_max_iter: cv.svm_max_iter,
            top_k: 20,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workdir: Option<PathBuf>,
    pub speeches: Option<PathBuf>,
    pub speeches_format: Option<SpeechFormat>,
    pub registry: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub ngram_ranges: Option<Vec<NgramRange>>,
    pub c_values: Option<Vec<f64>>,
    pub top_k: Option<usize>,
    pub shap_mode: Option<ShapMode>,
    pub emit: Option<BTreeSet<Emit>>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(format!("cannot read config {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::BadArtifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.shap.seed = seed;
        }
        let p = &mut self.paths;
        if let Some(v) = o.workdir {
            p.workdir = v;
        }
        if o.speeches.is_some() {
            p.speeches = o.speeches;
        }
        if let Some(f) = o.speeches_format {
            p.speeches_format = f;
        }
        if o.registry.is_some() {
            p.registry = o.registry;
        }
        if o.keywords.is_some() {
            p.keywords = o.keywords;
        }
        if o.stopwords.is_some() {
            p.stopwords = o.stopwords;
        }
        if let Some(r) = o.ngram_ranges {
            self.grid.ngram_ranges = r;
        }
        if let Some(c) = o.c_values {
            self.grid.c_values = c;
        }
        if let Some(k) = o.top_k {
            self.top_k = k;
        }
        if let Some(m) = o.shap_mode {
            self.shap.mode = m;
        }
        if let Some(e) = o.emit {
            self.emit = e;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.ngram_ranges.is_empty() || self.grid.c_values.is_empty() {
            return Err(PipelineError::Config("grid needs at least one n-gram range and one C".into()));
        }
        for r in &self.grid.ngram_ranges {
            r.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.grid.c_values.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(PipelineError::Config("every C must be positive and finite".into()));
        }
        if !(self.grid.max_df_frac > 0.0 && self.grid.max_df_frac <= 1.0) {
            return Err(PipelineError::Config(format!("max_df_frac {} outside (0, 1]", self.grid.max_df_frac)));
        }
        if self.k_outer < 2 || self.k_inner < 2 {
            return Err(PipelineError::Config("k_outer and k_inner must be at least 2".into()));
        }
        if self.top_k == 0 {
            return Err(PipelineError::Config("top_k must be positive".into()));
        }
        Ok(())
    }

    pub fn cv_options(&self, stopwords: BTreeSet<String>) -> CvOptions {
        CvOptions {
            k_outer: self.k_outer,
            k_inner: self.k_inner,
            seed: self.seed,
            stopwords,
            svm_tol: self.svm_tol,
            svm_max_iter: self.svm_max_iter,
        }
    }
}

/// JSON artifact wrapper adding `schema_version` at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_speeches: usize,
    pub n_mp_speeches: usize,
    pub n_lemma_fallback: usize,
    pub n_parties: usize,
    pub lexicon_id: String,
    pub n_keywords: usize,
    pub n_stopwords: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopwordList {
    pub stopwords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordShare {
    pub keyword: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub topic: String,
    pub stats: CorpusStats,
    pub keyword_shares: Vec<KeywordShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub schema_version: u32,
    /// One nested cross-validation per n-gram range.
    pub rows: Vec<CvReport>,
    pub best_row: usize,
    pub best_params: HyperParams,
    pub baseline_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub params: HyperParams,
    /// `evaluation` when taken from evaluation.json, `override` otherwise.
    pub params_source: String,
    pub n_train: usize,
    pub pipeline: TextPipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateArtifact {
    pub shap_mode: ShapMode,
    pub background: Background,
    pub max_abs_efficiency_gap: f64,
    pub report: AggregateReport,
}

/// Exclusive hold on a workdir, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self> {
        std::fs::create_dir_all(workdir).map_err(io_err(format!("cannot create workdir {}", workdir.display())))?;
        let path = workdir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(io_err(format!("cannot create lock {}", path.display()))(e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Writes `bytes` to a temporary file beside `path` and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let ctx = || format!("cannot write {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(ctx()))?;
    tmp.write_all(bytes).map_err(io_err(ctx()))?;
    tmp.as_file().sync_all().map_err(io_err(ctx()))?;
    tmp.persist(path).map_err(|e| io_err(ctx())(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(PipelineError::MissingArtifact { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// A pipeline run over one workdir.
pub struct Workspace {
    pub config: PipelineConfig,
    written: Vec<String>,
    _lock: WorkdirLock,
}

impl Workspace {
    pub fn open(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let lock = WorkdirLock::acquire(&config.paths.workdir)?;
        Ok(Self {
            config,
            written: Vec::new(),
            _lock: lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.paths.workdir.join(name)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn emits(&self, e: Emit) -> bool {
        self.config.emit.contains(&e)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = to_json(value)?;
        self.write(name, &bytes)
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str, produced_by: &str) -> Result<T> {
        let path = self.path(name);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PipelineError::MissingArtifact {
                    path,
                    hint: format!("run `leaning {produced_by}` first"),
                })
            }
            Err(e) => return Err(io_err(format!("cannot read {}", path.display()))(e)),
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| PipelineError::BadArtifact {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            found => {
                return Err(PipelineError::BadArtifact {
                    path,
                    reason: format!("schema_version {found:?}, expected {SCHEMA_VERSION}"),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| PipelineError::BadArtifact {
            path,
            reason: e.to_string(),
        })
    }

    fn require_input(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| PipelineError::Config(format!("no {what} path given (config `paths` or command-line flag)")))
    }

    /// Validates the raw inputs and stores normalized copies in the workdir.
    pub fn ingest(&mut self) -> Result<IngestSummary> {
        let p = self.config.paths.clone();
        let speeches_path = self.require_input(&p.speeches, "speeches")?;
        let registry_path = self.require_input(&p.registry, "party registry")?;
        let keywords_path = self.require_input(&p.keywords, "keyword lexicon")?;
        let speeches = corpus::parse_speeches(&speeches_path, p.speeches_format)?;
        let registry = PartyRegistry::load(&registry_path)?;
        let lexicon = KeywordLexicon::load(&keywords_path)?;
        if lexicon.entries.is_empty() {
            return Err(CorpusError::EmptyLexicon(lexicon.source_path.clone()).into());
        }
        let stopwords = match &p.stopwords {
            Some(path) => corpus::load_stopwords(path)?,
            None => BTreeSet::new(),
        };
        for s in &speeches {
            if !s.party_id.is_empty() && !registry.entries.contains_key(&s.party_id) {
                log::warn!("speech {} has unregistered party `{}`; it will be dropped", s.id, s.party_id);
            }
        }

        let mut buf = Vec::new();
        corpus::write_speeches_jsonl(&speeches, &mut buf).map_err(|e| PipelineError::Internal(e.to_string()))?;
        self.write(SPEECHES, &buf)?;
        self.write_json(REGISTRY, &Versioned::new(&registry))?;
        let lexicon_id = lexicon.id();
        let lexicon = KeywordLexicon {
            source_path: lexicon_id.clone(),
            ..lexicon
        };
        self.write_json(LEXICON, &Versioned::new(&lexicon))?;
        self.write_json(STOPWORDS, &Versioned::new(StopwordList { stopwords: stopwords.clone() }))?;

        let summary = IngestSummary {
            n_speeches: speeches.len(),
            n_mp_speeches: corpus::filter_mps(&speeches).len(),
            n_lemma_fallback: speeches.iter().filter(|s| s.lemmas_derived).count(),
            n_parties: registry.entries.len(),
            lexicon_id,
            n_keywords: lexicon.entries.len(),
            n_stopwords: stopwords.len(),
        };
        self.write_json(INGEST_SUMMARY, &Versioned::new(&summary))?;
        Ok(summary)
    }

    fn load_speeches(&self) -> Result<Vec<corpus::Speech>> {
        let path = self.path(SPEECHES);
        if !path.exists() {
            return Err(PipelineError::MissingArtifact {
                path,
                hint: "run `leaning ingest` first".into(),
            });
        }
        Ok(corpus::parse_speeches(&path, SpeechFormat::Jsonl)?)
    }

    fn load_stopwords(&self) -> Result<BTreeSet<String>> {
        Ok(self.read_json::<Versioned<StopwordList>>(STOPWORDS, "ingest")?.body.stopwords)
    }

    fn load_dataset(&self) -> Result<LabeledDataset> {
        Ok(self.read_json::<Versioned<LabeledDataset>>(DATASET, "select")?.body)
    }

    /// Labels MP speeches by party leaning and keeps those on the topic.
    pub fn select(&mut self) -> Result<LabeledDataset> {
        let speeches = self.load_speeches()?;
        let registry = self.read_json::<Versioned<PartyRegistry>>(REGISTRY, "ingest")?.body;
        let lexicon = self.read_json::<Versioned<KeywordLexicon>>(LEXICON, "ingest")?.body;
        let labeled = corpus::assign_leanings(&speeches, &registry);
        let (dataset, _) = corpus::select_by_topic(&labeled, &lexicon)?;
        if dataset.is_empty() {
            return Err(CorpusError::EmptyDataset.into());
        }
        self.write_json(DATASET, &Versioned::new(&dataset))?;
        Ok(dataset)
    }

    pub fn stats(&mut self) -> Result<StatsArtifact> {
        let dataset = self.load_dataset()?;
        let stats = corpus::corpus_stats(&dataset)?;
        let keyword_shares = corpus::keyword_shares(&stats.per_keyword_counts)
            .into_iter()
            .map(|(keyword, share)| KeywordShare {
                count: stats.per_keyword_counts[&keyword],
                keyword,
                share,
            })
            .collect();
        let artifact = StatsArtifact {
            topic: dataset.provenance.lexicon_id.clone().unwrap_or_default(),
            stats,
            keyword_shares,
        };
        if self.emits(Emit::Json) {
            self.write_json(STATS, &Versioned::new(&artifact))?;
        }
        self.render_stats(&artifact)?;
        Ok(artifact)
    }

    fn render_stats(&mut self, a: &StatsArtifact) -> Result<()> {
        let rows: Vec<(String, usize, f64)> =
            a.keyword_shares.iter().map(|k| (k.keyword.clone(), k.count, k.share)).collect();
        if self.emits(Emit::Csv) {
            self.write("keyword_shares.csv", report::keyword_share_csv(&rows).as_bytes())?;
        }
        if self.emits(Emit::Svg) {
            let title = format!("Keyword shares ({})", a.topic);
            self.write("keyword_shares.svg", report::keyword_pie_svg(&title, &rows).as_bytes())?;
        }
        self.write("stats.txt", report::stats_table(&a.topic, &a.stats).as_bytes())
    }

    /// Nested cross-validation, one run per configured n-gram range.
    pub fn evaluate(&mut self) -> Result<EvaluationArtifact> {
        let dataset = self.load_dataset()?;
        let opts = self.config.cv_options(self.load_stopwords()?);
        let mut rows = Vec::new();
        for &range in &self.config.grid.ngram_ranges {
            log::info!("nested cross-validation for {range}-grams");
            rows.push(evaluation::nested_cv(&dataset, &self.config.grid.with_range(range), &opts)?);
        }
        let best_row = (0..rows.len())
            .reduce(|best, i| if rows[i].mean_accuracy > rows[best].mean_accuracy { i } else { best })
            .ok_or(EvalError::EmptyGrid)?;
        let best_params = evaluation::best_params(&rows[best_row]).ok_or(EvalError::EmptyGrid)?;
        let artifact = EvaluationArtifact {
            schema_version: SCHEMA_VERSION,
            baseline_accuracy: rows[best_row].baseline_accuracy,
            rows,
            best_row,
            best_params,
        };
        self.write_json(EVALUATION, &artifact)?;
        self.write("accuracy.txt", report::accuracy_table(&artifact.rows).as_bytes())?;
        Ok(artifact)
    }

    /// Fits the final pipeline on the whole dataset. Parameters come from
    /// `override_params` when given, otherwise from evaluation.json.
    pub fn train(&mut self, override_params: Option<HyperParams>) -> Result<ModelArtifact> {
        let dataset = self.load_dataset()?;
        let (params, params_source) = match override_params {
            Some(p) => {
                p.ngram_range.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                (p, "override")
            }
            None => (self.read_json::<EvaluationArtifact>(EVALUATION, "evaluate")?.best_params, "evaluation"),
        };
        let opts = self.config.cv_options(self.load_stopwords()?);
        let pipeline = evaluation::train_final(&dataset, params, &self.config.grid, &opts)?;
        let artifact = ModelArtifact {
            params,
            params_source: params_source.into(),
            n_train: dataset.len(),
            pipeline,
        };
        self.write_json(MODEL, &Versioned::new(&artifact))?;
        Ok(artifact)
    }

    /// Hyperplane-weight importance plus per-document Shapley attributions
    /// aggregated over the dataset.
    pub fn explain(&mut self) -> Result<(ImportanceReport, AggregateArtifact)> {
        let model = self.read_json::<Versioned<ModelArtifact>>(MODEL, "train")?.body;
        let dataset = self.load_dataset()?;
        let pipeline = &model.pipeline;
        let vocab = &pipeline.tfidf.vocabulary;
        let importance = explain::svm_feature_importance(&pipeline.svm, vocab, self.config.top_k)?;

        let vectors: Vec<SparseVector> = pipeline.tfidf.transform_all(&dataset.documents());
        let dims = pipeline.tfidf.dims();
        let means = match self.config.shap.background {
            Background::ZeroVector => vec![0.0; dims],
            Background::FeatureMeans => explain::feature_means(&vectors, dims),
        };
        let background = SparseVector::from_dense(&means);
        let shap = &self.config.shap;
        let svm = &pipeline.svm;
        let attributions: Vec<Attribution> = vectors
            .par_iter()
            .zip(dataset.speeches.par_iter())
            .map(|(x, ls)| {
                let a = match shap.mode {
                    ShapMode::Linear => explain::linear_shap(svm, &means, x),
                    ShapMode::Exact => explain::exact_shapley(svm, x, &background),
                    ShapMode::Kernel => explain::kernel_shap(svm, x, &background, shap),
                }?;
                Ok(a.with_doc_id(ls.speech.id.clone()))
            })
            .collect::<std::result::Result<_, ExplainError>>()?;
        let max_abs_efficiency_gap = attributions.iter().map(|a| a.efficiency_gap().abs()).fold(0.0, f64::max);
        let full = explain::aggregate_attributions(&attributions, self.config.aggregation, vocab.terms())?;
        if let Some(w) = &full.warning {
            log::warn!("{w}");
        }
        let aggregate = AggregateArtifact {
            shap_mode: shap.mode,
            background: shap.background,
            max_abs_efficiency_gap,
            report: full.top(self.config.top_k),
        };
        if self.emits(Emit::Json) {
            self.write_json(IMPORTANCE, &Versioned::new(&importance))?;
            self.write_json(SHAP_AGGREGATE, &Versioned::new(&aggregate))?;
        }
        self.render_explanations(Some(&importance), Some(&aggregate.report))?;
        Ok((importance, aggregate))
    }

    fn render_explanations(&mut self, imp: Option<&ImportanceReport>, agg: Option<&AggregateReport>) -> Result<()> {
        if let Some(imp) = imp {
            if self.emits(Emit::Csv) {
                self.write("importance.csv", report::importance_csv(imp).as_bytes())?;
            }
            if self.emits(Emit::Svg) {
                self.write("importance.svg", report::importance_svg(imp).as_bytes())?;
            }
        }
        if let Some(agg) = agg {
            if self.emits(Emit::Csv) {
                self.write("shap_aggregate.csv", report::aggregate_csv(agg).as_bytes())?;
            }
            if self.emits(Emit::Svg) {
                self.write("shap_aggregate.svg", report::aggregate_svg(agg).as_bytes())?;
            }
        }
        Ok(())
    }

    /// Re-renders tables and charts from whichever report artifacts exist
    /// and writes a combined `report.txt`.
    pub fn report(&mut self) -> Result<Vec<String>> {
        let stats = optional(self.read_json::<Versioned<StatsArtifact>>(STATS, "stats"))?.map(|v| v.body);
        let eval = optional(self.read_json::<EvaluationArtifact>(EVALUATION, "evaluate"))?;
        let imp = optional(self.read_json::<Versioned<ImportanceReport>>(IMPORTANCE, "explain"))?.map(|v| v.body);
        let agg = optional(self.read_json::<Versioned<AggregateArtifact>>(SHAP_AGGREGATE, "explain"))?.map(|v| v.body);
        if stats.is_none() && eval.is_none() && imp.is_none() && agg.is_none() {
            return Err(PipelineError::MissingArtifact {
                path: self.path(STATS),
                hint: "no report artifacts found; run `leaning stats`, `evaluate` or `explain` first".into(),
            });
        }

        let mut text = String::new();
        if let Some(s) = &stats {
            self.render_stats(s)?;
            text.push_str("Corpus statistics\n\n");
            text.push_str(&report::stats_table(&s.topic, &s.stats));
            text.push('\n');
        }
        if let Some(e) = &eval {
            text.push_str("Classification accuracy (mean ± 95% CI over outer folds)\n\n");
            text.push_str(&report::accuracy_table(&e.rows));
            let p = e.best_params;
            text.push_str(&format!("\nSelected parameters: {}, C = {}\n\n", p.ngram_range.label(), p.c));
        }
        self.render_explanations(imp.as_ref(), agg.as_ref().map(|a| &a.report))?;
        let mut lists: Vec<(&str, &[explain::RankedTerm], &[explain::RankedTerm])> = Vec::new();
        if let Some(i) = &imp {
            lists.push(("SVM feature importance", &i.left_terms, &i.right_terms));
        }
        if let Some(a) = &agg {
            lists.push(("Aggregated Shapley values", &a.report.left_tokens, &a.report.right_tokens));
        }
        for (title, left, right) in lists {
            text.push_str(title);
            text.push_str("\n\n");
            let mut rows = vec![vec!["rank".to_string(), "left".into(), "value".into(), "right".into(), "value".into()]];
            for r in 0..left.len().max(right.len()) {
                let cell = |l: &[explain::RankedTerm]| {
                    l.get(r).map_or((String::new(), String::new()), |t| (t.term.clone(), format!("{:+.4}", t.value)))
                };
                let (lt, lv) = cell(left);
                let (rt, rv) = cell(right);
                rows.push(vec![(r + 1).to_string(), lt, lv, rt, rv]);
            }
            text.push_str(&report::aligned(&rows));
            text.push('\n');
        }
        self.write("report.txt", text.as_bytes())?;
        Ok(self.written.clone())
    }

    /// Appends one line to the run log; failures are logged, not raised.
    pub fn log_run(&self, command: &str, outcome: std::result::Result<(), &PipelineError>) {
        #[derive(Serialize)]
        struct Entry<'a> {
            timestamp: String,
            command: &'a str,
            seed: u64,
            ok: bool,
            error: Option<String>,
            artifacts: &'a [String],
        }
        let entry = Entry {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            command,
            seed: self.config.seed,
            ok: outcome.is_ok(),
            error: outcome.err().map(|e| e.to_string()),
            artifacts: &self.written,
        };
        let path = self.path(RUN_LOG);
        let result = serde_json::to_string(&entry)
            .map_err(std::io::Error::other)
            .and_then(|line| {
                let mut f: File = OpenOptions::new().create(true).append(true).open(&path)?;
                writeln!(f, "{line}")
            });
        if let Err(e) = result {
            log::warn!("cannot append to {}: {e}", path.display());
        }
    }
}
