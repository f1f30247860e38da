//! Pipeline configuration: every tunable in one place, with defaults pinned
//! to the published hyperparameter tables, loadable from a plain-text file
//! with `[section]` headers and `key = value` lines. Unknown sections or
//! keys are rejected so typos surface as configuration errors instead of
//! silently running with defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Skipgram,
    Cbow,
}

/// Multiplier applied to the bigram collocation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhraseScaling {
    /// Scale by the corpus token count (reconciles the published threshold
    /// with realistic counts).
    Corpus,
    /// Scale factor 1: the score formula exactly as printed.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Directory of registry protocol files (`.xml` / `.xml.gz`).
    pub registry_dir: PathBuf,
    /// Directory where all artifacts (corpus, models, reports) are written.
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            registry_dir: PathBuf::from("registry"),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Match oncology markers only at token boundaries instead of as
    /// substrings.
    pub strict_oncology: bool,
    /// Sort parsed studies by registry id for order-independent output.
    pub sort_by_id: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            strict_oncology: false,
            sort_by_id: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Replicate each criterion over the study's condition × intervention
    /// product.
    pub augment: bool,
    pub condition_template: String,
    pub intervention_template: String,
    /// Undersample the majority class after labeling.
    pub balance: bool,
    /// Held-out fraction for the train/test split.
    pub test_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            augment: true,
            condition_template: "patients diagnosed with".to_string(),
            intervention_template: "treated with".to_string(),
            balance: true,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhrasesConfig {
    /// Rewrite the corpus with detected collocations before embedding
    /// training.
    pub enabled: bool,
    /// Discount δ subtracted from the pair count.
    pub delta: f64,
    /// Minimum accepted score.
    pub threshold: f64,
    /// Minimum component-word count.
    pub min_count: u64,
    pub scaling: PhraseScaling,
}

impl Default for PhrasesConfig {
    fn default() -> Self {
        PhrasesConfig {
            enabled: true,
            delta: 20.0,
            threshold: 500.0,
            min_count: 20,
            scaling: PhraseScaling::Corpus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub negatives: usize,
    /// Subsampling threshold t. When unset, defaults to 1e-4 with subwords
    /// enabled and 1e-3 in plain-word mode.
    pub sampling_threshold: Option<f64>,
    pub subwords: bool,
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
    /// Token interval between learning-rate refreshes.
    pub lr_update_rate: usize,
    /// Use the simpler 1−sqrt(t/f) keep-probability variant.
    pub simple_subsample: bool,
    /// Exponent of the negative-sampling unigram distribution.
    pub neg_exponent: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            mode: EmbeddingMode::Skipgram,
            dim: 100,
            window: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 5,
            negatives: 5,
            sampling_threshold: None,
            subwords: true,
            min_n: 3,
            max_n: 6,
            buckets: 2_000_000,
            lr_update_rate: 100,
            simple_subsample: false,
            neg_exponent: 0.75,
        }
    }
}

impl EmbeddingConfig {
    pub fn effective_sampling_threshold(&self) -> f64 {
        self.sampling_threshold
            .unwrap_or(if self.subwords { 1e-4 } else { 1e-3 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    /// Initialize the embedding layer from pre-trained vectors.
    pub pretrained: bool,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            learning_rate: 0.1,
            epochs: 100,
            min_count: 1,
            pretrained: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub seq_len: usize,
    /// Most-frequent-word cutoff for index encoding.
    pub vocab_size: usize,
    pub filters: usize,
    pub kernel: usize,
    /// Pool width per conv block; stride equals pool width.
    pub pools: Vec<usize>,
    pub dense: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            seq_len: 1000,
            vocab_size: 20_000,
            filters: 128,
            kernel: 5,
            pools: vec![5, 5, 35],
            dense: 128,
            batch: 128,
            learning_rate: 0.001,
            epochs: 10,
            rho: 0.9,
            epsilon: 1e-8,
            decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    /// Hard cap on training-set size for the SMO solver.
    pub budget: usize,
    /// Kernel row cache, in rows.
    pub cache_rows: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: 1.0,
            tolerance: 1e-3,
            budget: 50_000,
            cache_rows: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    /// Learning-curve subset sizes.
    pub curve_sizes: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            curve_sizes: vec![1_000, 10_000, 100_000, 1_000_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    /// k for word clustering; 0 selects ⌈0.1 × min(words, 10000)⌉.
    pub kmeans_k: usize,
    pub kmeans_max_iter: usize,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_learning_rate: f64,
    /// Hard cap on exact t-SNE input size.
    pub tsne_cap: usize,
    pub tsne_exaggeration: f64,
    pub tsne_exaggeration_iters: usize,
    pub tsne_momentum_switch: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            kmeans_k: 0,
            kmeans_max_iter: 100,
            tsne_perplexity: 30.0,
            tsne_iterations: 1000,
            tsne_learning_rate: 200.0,
            tsne_cap: 2000,
            tsne_exaggeration: 12.0,
            tsne_exaggeration_iters: 250,
            tsne_momentum_switch: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Single global seed; every stage derives a named substream from it.
    pub seed: u64,
    /// Worker threads; 0 = automatic (also overridable via `ELIG_THREADS`).
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 42, threads: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub preprocess: PreprocessConfig,
    pub phrases: PhrasesConfig,
    pub embedding: EmbeddingConfig,
    pub linear: LinearConfig,
    pub cnn: CnnConfig,
    pub svm: SvmConfig,
    pub knn: KnnConfig,
    pub eval: EvalConfig,
    pub analyze: AnalyzeConfig,
    pub run: RunConfig,
}

fn bad_value(section: &str, key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!(
        "[{section}] {key} = {value:?}: expected {want}"
    ))
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str, want: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| bad_value(section, key, value, want))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad_value(section, key, value, "a boolean")),
    }
}

fn parse_list(section: &str, key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse_num(section, key, s.trim(), "comma-separated integers"))
        .collect()
}

impl PipelineConfig {
    /// Loads a configuration file and applies it over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `[section]` / `key = value` text over the defaults. `#`
    /// starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((head, _)) => head.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let section = section.as_deref().ok_or_else(|| {
                Error::Config(format!("line {}: key before any [section] header", lineno + 1))
            })?;
            cfg.set(section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Applies one key. Used by both the file parser and `--set` style
    /// command-line overrides.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown_key = || {
            Error::Config(format!("unknown key [{section}] {key}"))
        };
        match section {
            "paths" => match key {
                "registry_dir" => self.paths.registry_dir = PathBuf::from(value),
                "out_dir" => self.paths.out_dir = PathBuf::from(value),
                _ => return Err(unknown_key()),
            },
            "ingest" => match key {
                "strict_oncology" => self.ingest.strict_oncology = parse_bool(section, key, value)?,
                "sort_by_id" => self.ingest.sort_by_id = parse_bool(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "preprocess" => match key {
                "augment" => self.preprocess.augment = parse_bool(section, key, value)?,
                "condition_template" => self.preprocess.condition_template = value.to_string(),
                "intervention_template" => self.preprocess.intervention_template = value.to_string(),
                "balance" => self.preprocess.balance = parse_bool(section, key, value)?,
                "test_fraction" => {
                    self.preprocess.test_fraction = parse_num(section, key, value, "a float")?
                }
                _ => return Err(unknown_key()),
            },
            "phrases" => match key {
                "enabled" => self.phrases.enabled = parse_bool(section, key, value)?,
                "delta" => self.phrases.delta = parse_num(section, key, value, "a float")?,
                "threshold" => self.phrases.threshold = parse_num(section, key, value, "a float")?,
                "min_count" => self.phrases.min_count = parse_num(section, key, value, "an integer")?,
                "scaling" => {
                    self.phrases.scaling = match value.to_ascii_lowercase().as_str() {
                        "corpus" => PhraseScaling::Corpus,
                        "literal" | "1" => PhraseScaling::Literal,
                        _ => return Err(bad_value(section, key, value, "`corpus` or `literal`")),
                    }
                }
                _ => return Err(unknown_key()),
            },
            "embedding" => match key {
                "mode" => {
                    self.embedding.mode = match value.to_ascii_lowercase().as_str() {
                        "skipgram" | "sgns" => EmbeddingMode::Skipgram,
                        "cbow" => EmbeddingMode::Cbow,
                        _ => return Err(bad_value(section, key, value, "`skipgram` or `cbow`")),
                    }
                }
                "dim" => self.embedding.dim = parse_num(section, key, value, "an integer")?,
                "window" => self.embedding.window = parse_num(section, key, value, "an integer")?,
                "epochs" => self.embedding.epochs = parse_num(section, key, value, "an integer")?,
                "learning_rate" => {
                    self.embedding.learning_rate = parse_num(section, key, value, "a float")?
                }
                "min_count" => self.embedding.min_count = parse_num(section, key, value, "an integer")?,
                "negatives" => self.embedding.negatives = parse_num(section, key, value, "an integer")?,
                "sampling_threshold" => {
                    self.embedding.sampling_threshold =
                        Some(parse_num(section, key, value, "a float")?)
                }
                "subwords" => self.embedding.subwords = parse_bool(section, key, value)?,
                "min_n" => self.embedding.min_n = parse_num(section, key, value, "an integer")?,
                "max_n" => self.embedding.max_n = parse_num(section, key, value, "an integer")?,
                "buckets" => self.embedding.buckets = parse_num(section, key, value, "an integer")?,
                "lr_update_rate" => {
                    self.embedding.lr_update_rate = parse_num(section, key, value, "an integer")?
                }
                "simple_subsample" => {
                    self.embedding.simple_subsample = parse_bool(section, key, value)?
                }
                "neg_exponent" => {
                    self.embedding.neg_exponent = parse_num(section, key, value, "a float")?
                }
                _ => return Err(unknown_key()),
            },
            "linear" => match key {
                "learning_rate" => self.linear.learning_rate = parse_num(section, key, value, "a float")?,
                "epochs" => self.linear.epochs = parse_num(section, key, value, "an integer")?,
                "min_count" => self.linear.min_count = parse_num(section, key, value, "an integer")?,
                "pretrained" => self.linear.pretrained = parse_bool(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "cnn" => match key {
                "seq_len" => self.cnn.seq_len = parse_num(section, key, value, "an integer")?,
                "vocab_size" => self.cnn.vocab_size = parse_num(section, key, value, "an integer")?,
                "filters" => self.cnn.filters = parse_num(section, key, value, "an integer")?,
                "kernel" => self.cnn.kernel = parse_num(section, key, value, "an integer")?,
                "pools" => self.cnn.pools = parse_list(section, key, value)?,
                "dense" => self.cnn.dense = parse_num(section, key, value, "an integer")?,
                "batch" => self.cnn.batch = parse_num(section, key, value, "an integer")?,
                "learning_rate" => self.cnn.learning_rate = parse_num(section, key, value, "a float")?,
                "epochs" => self.cnn.epochs = parse_num(section, key, value, "an integer")?,
                "rho" => self.cnn.rho = parse_num(section, key, value, "a float")?,
                "epsilon" => self.cnn.epsilon = parse_num(section, key, value, "a float")?,
                "decay" => self.cnn.decay = parse_num(section, key, value, "a float")?,
                _ => return Err(unknown_key()),
            },
            "svm" => match key {
                "c" => self.svm.c = parse_num(section, key, value, "a float")?,
                "gamma" => self.svm.gamma = parse_num(section, key, value, "a float")?,
                "tolerance" => self.svm.tolerance = parse_num(section, key, value, "a float")?,
                "budget" => self.svm.budget = parse_num(section, key, value, "an integer")?,
                "cache_rows" => self.svm.cache_rows = parse_num(section, key, value, "an integer")?,
                _ => return Err(unknown_key()),
            },
            "knn" => match key {
                "k" => self.knn.k = parse_num(section, key, value, "an integer")?,
                _ => return Err(unknown_key()),
            },
            "eval" => match key {
                "folds" => self.eval.folds = parse_num(section, key, value, "an integer")?,
                "curve_sizes" => self.eval.curve_sizes = parse_list(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "analyze" => match key {
                "kmeans_k" => self.analyze.kmeans_k = parse_num(section, key, value, "an integer")?,
                "kmeans_max_iter" => {
                    self.analyze.kmeans_max_iter = parse_num(section, key, value, "an integer")?
                }
                "tsne_perplexity" => {
                    self.analyze.tsne_perplexity = parse_num(section, key, value, "a float")?
                }
                "tsne_iterations" => {
                    self.analyze.tsne_iterations = parse_num(section, key, value, "an integer")?
                }
                "tsne_learning_rate" => {
                    self.analyze.tsne_learning_rate = parse_num(section, key, value, "a float")?
                }
                "tsne_cap" => self.analyze.tsne_cap = parse_num(section, key, value, "an integer")?,
                "tsne_exaggeration" => {
                    self.analyze.tsne_exaggeration = parse_num(section, key, value, "a float")?
                }
                "tsne_exaggeration_iters" => {
                    self.analyze.tsne_exaggeration_iters =
                        parse_num(section, key, value, "an integer")?
                }
                "tsne_momentum_switch" => {
                    self.analyze.tsne_momentum_switch =
                        parse_num(section, key, value, "an integer")?
                }
                _ => return Err(unknown_key()),
            },
            "run" => match key {
                "seed" => self.run.seed = parse_num(section, key, value, "an integer")?,
                "threads" => self.run.threads = parse_num(section, key, value, "an integer")?,
                _ => return Err(unknown_key()),
            },
            _ => return Err(Error::Config(format!("unknown section [{section}]"))),
        }
        Ok(())
    }

    /// Validates cross-field constraints that a single `set` cannot see.
    pub fn validate(&self) -> Result<()> {
        let e = |msg: String| Err(Error::Config(msg));
        if !(self.preprocess.test_fraction > 0.0 && self.preprocess.test_fraction < 1.0) {
            return e(format!(
                "[preprocess] test_fraction must be in (0, 1); got {}",
                self.preprocess.test_fraction
            ));
        }
        if self.embedding.dim == 0 || self.embedding.window == 0 {
            return e("[embedding] dim and window must be >= 1".to_string());
        }
        if self.embedding.min_n > self.embedding.max_n {
            return e(format!(
                "[embedding] min_n ({}) > max_n ({})",
                self.embedding.min_n, self.embedding.max_n
            ));
        }
        if self.embedding.buckets == 0 {
            return e("[embedding] buckets must be >= 1".to_string());
        }
        if self.cnn.pools.is_empty() || self.cnn.pools.contains(&0) {
            return e("[cnn] pools must be a non-empty list of positive widths".to_string());
        }
        if self.cnn.kernel == 0 || self.cnn.filters == 0 || self.cnn.batch == 0 {
            return e("[cnn] kernel, filters, and batch must be >= 1".to_string());
        }
        if self.svm.c <= 0.0 || self.svm.gamma <= 0.0 || self.svm.tolerance <= 0.0 {
            return e("[svm] c, gamma, and tolerance must be positive".to_string());
        }
        if self.knn.k == 0 {
            return e("[knn] k must be >= 1".to_string());
        }
        if self.eval.folds < 2 {
            return e(format!("[eval] folds must be >= 2; got {}", self.eval.folds));
        }
        Ok(())
    }

    /// Stable hexadecimal digest of the effective configuration, recorded
    /// in run manifests.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
