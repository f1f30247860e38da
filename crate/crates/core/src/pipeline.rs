//! Stage orchestration shared by the command-line tool and the tests.
//! Each stage reads the previous stage's artifacts from the output
//! directory, writes its own, and records a JSON run manifest (inputs,
//! outputs, configuration digest, seed, package version) so every
//! artifact can be traced back to what produced it and reproduced
//! bit-identically in deterministic mode.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analyze;
use crate::classify::{
    file_digest, load_model, save_model, train_cnn, train_knn, train_linear_avg, train_svm,
    ClassifierModel, EmbedSource,
};
use crate::config::PipelineConfig;
use crate::embed::{self, EmbeddingModel};
use crate::error::{Error, Result};
use crate::eval::{self, CurvePoint, EvaluationReport, Predict};
use crate::ingest::{ingest_registry, IngestOptions, IngestSummary, RawStudy};
use crate::phrases::{apply_phrases, detect_phrases};
use crate::seed::substream;
use crate::textprep::{
    self, augment, balance, label, normalize, split_statements, split_train_test,
    AugmentTemplates, Dataset, Label, LabeledStatement, Provenance,
};

// ---------------------------------------------------------------------------
// Classifier kinds
// ---------------------------------------------------------------------------

/// The four classifier families, as selected by `train-classifier --model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Linear,
    Cnn,
    Svm,
    Knn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Linear,
        ClassifierKind::Cnn,
        ClassifierKind::Svm,
        ClassifierKind::Knn,
    ];

    pub fn from_name(name: &str) -> Result<ClassifierKind> {
        match name.to_ascii_lowercase().as_str() {
            "linear" => Ok(ClassifierKind::Linear),
            "cnn" => Ok(ClassifierKind::Cnn),
            "svm" => Ok(ClassifierKind::Svm),
            "knn" => Ok(ClassifierKind::Knn),
            _ => Err(Error::Config(format!(
                "unknown model {name:?}: expected linear, cnn, svm, or knn"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Linear => "linear",
            ClassifierKind::Cnn => "cnn",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Knn => "knn",
        }
    }

    /// Whether training (and, for vector-space models, prediction)
    /// consumes pre-trained word vectors.
    pub fn needs_embedding(self, cfg: &PipelineConfig) -> bool {
        match self {
            ClassifierKind::Linear => cfg.linear.pretrained,
            _ => true,
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact locations
// ---------------------------------------------------------------------------

/// Well-known artifact paths under the configured output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    out_dir: PathBuf,
}

impl Artifacts {
    pub fn new(out_dir: impl Into<PathBuf>) -> Artifacts {
        Artifacts {
            out_dir: out_dir.into(),
        }
    }

    pub fn studies(&self) -> PathBuf {
        self.out_dir.join("studies.jsonl")
    }

    pub fn corpus_train(&self) -> PathBuf {
        self.out_dir.join("corpus_train.txt")
    }

    pub fn corpus_test(&self) -> PathBuf {
        self.out_dir.join("corpus_test.txt")
    }

    pub fn sidecar_train(&self) -> PathBuf {
        self.out_dir.join("corpus_train.provenance.tsv")
    }

    pub fn sidecar_test(&self) -> PathBuf {
        self.out_dir.join("corpus_test.provenance.tsv")
    }

    pub fn phrase_table(&self) -> PathBuf {
        self.out_dir.join("phrases.tsv")
    }

    pub fn corpus_train_phrased(&self) -> PathBuf {
        self.out_dir.join("corpus_train_phrased.txt")
    }

    pub fn corpus_test_phrased(&self) -> PathBuf {
        self.out_dir.join("corpus_test_phrased.txt")
    }

    pub fn vectors(&self) -> PathBuf {
        self.out_dir.join("vectors.txt")
    }

    pub fn model(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir.join(format!("model_{}.bin", kind.as_str()))
    }

    pub fn report_json(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir.join(format!("report_{}.json", kind.as_str()))
    }

    pub fn report_text(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir.join(format!("report_{}.txt", kind.as_str()))
    }

    pub fn curve(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir
            .join(format!("learning_curve_{}.tsv", kind.as_str()))
    }

    pub fn simulation_json(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir
            .join(format!("report_simulation_{}.json", kind.as_str()))
    }

    pub fn simulation_text(&self, kind: ClassifierKind) -> PathBuf {
        self.out_dir
            .join(format!("report_simulation_{}.txt", kind.as_str()))
    }

    pub fn clusters(&self) -> PathBuf {
        self.out_dir.join("clusters.tsv")
    }

    pub fn tsne(&self) -> PathBuf {
        self.out_dir.join("tsne.tsv")
    }

    pub fn projector_dir(&self) -> PathBuf {
        self.out_dir.join("projector")
    }

    pub fn manifest(&self, name: &str) -> PathBuf {
        self.out_dir.join(format!("manifest_{name}.json"))
    }

    /// The corpus downstream stages actually consume: the
    /// phrase-rewritten copy when collocation rewriting is enabled.
    /// Returns the path with the subcommand that produces it.
    pub fn effective_train_corpus(&self, cfg: &PipelineConfig) -> (PathBuf, &'static str) {
        if cfg.phrases.enabled {
            (self.corpus_train_phrased(), "phrases")
        } else {
            (self.corpus_train(), "preprocess")
        }
    }

    pub fn effective_test_corpus(&self, cfg: &PipelineConfig) -> (PathBuf, &'static str) {
        if cfg.phrases.enabled {
            (self.corpus_test_phrased(), "phrases")
        } else {
            (self.corpus_test(), "preprocess")
        }
    }

    /// Checks an upstream artifact exists, naming its producing
    /// subcommand when it does not.
    pub fn require(&self, path: PathBuf, producer: &str) -> Result<PathBuf> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::Data(format!(
                "missing artifact {}; run `elig {producer}` first",
                path.display()
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// One input or output file with its content digest. Directories are
/// recorded by path only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub digest: Option<String>,
}

/// What a stage ran with and what it produced. Together with the same
/// configuration file this pins everything needed to reproduce the
/// outputs bit-identically in deterministic (single-thread) mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub package_version: String,
    pub seed: u64,
    pub threads: usize,
    pub config_digest: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

fn record(path: &Path) -> FileRecord {
    FileRecord {
        path: path.display().to_string(),
        digest: path.is_file().then(|| file_digest(path).ok()).flatten(),
    }
}

fn write_manifest(
    art: &Artifacts,
    cfg: &PipelineConfig,
    name: &str,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<PathBuf> {
    let manifest = RunManifest {
        subcommand: name.to_string(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.run.seed,
        threads: effective_threads(cfg)?,
        config_digest: cfg.digest(),
        inputs: inputs.iter().map(|p| record(p)).collect(),
        outputs: outputs.iter().map(|p| record(p)).collect(),
    };
    let path = art.manifest(name);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Schema(format!("manifest serialization failed: {e}")))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Worker threads for stages that parallelize: the `ELIG_THREADS`
/// environment variable overrides the configured count, and 0 means one
/// worker per available core.
pub fn effective_threads(cfg: &PipelineConfig) -> Result<usize> {
    let configured = match std::env::var("ELIG_THREADS") {
        Ok(v) if v.trim().is_empty() => cfg.run.threads,
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("ELIG_THREADS={v:?}: expected an integer")))?,
        Err(_) => cfg.run.threads,
    };
    Ok(if configured == 0 {
        std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
    } else {
        configured
    })
}

// ---------------------------------------------------------------------------
// Small file helpers
// ---------------------------------------------------------------------------

fn write_studies(path: &Path, studies: &[RawStudy]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in studies {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Schema(format!("study serialization failed: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_studies(path: &Path) -> Result<Vec<RawStudy>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut studies = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let study: RawStudy = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        studies.push(study);
    }
    Ok(studies)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    textprep::read_corpus(BufReader::new(file), path)
}

fn write_dataset(path: &Path, statements: &[LabeledStatement]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    textprep::write_corpus(&mut w, statements).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_sidecar_file(path: &Path, statements: &[LabeledStatement]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    textprep::write_sidecar(&mut w, statements).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn prepare_out_dir(cfg: &PipelineConfig) -> Result<Artifacts> {
    fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| Error::io(&cfg.paths.out_dir, e))?;
    Ok(Artifacts::new(&cfg.paths.out_dir))
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct IngestOutcome {
    pub studies: usize,
    pub summary: IngestSummary,
    pub path: PathBuf,
    pub manifest: PathBuf,
}

/// Parses the registry directory, keeps the oncology studies, and writes
/// them as one JSON record per line.
pub fn run_ingest(cfg: &PipelineConfig) -> Result<IngestOutcome> {
    let art = prepare_out_dir(cfg)?;
    let opts = IngestOptions {
        strict_tokens: cfg.ingest.strict_oncology,
        sort_by_id: cfg.ingest.sort_by_id,
    };
    let (studies, summary) = ingest_registry(&cfg.paths.registry_dir, &opts)?;
    if studies.is_empty() {
        return Err(Error::Data(format!(
            "no oncology studies found under {} ({} parsed, {} filtered out, {} failed)",
            cfg.paths.registry_dir.display(),
            summary.parsed,
            summary.filtered_out,
            summary.failed
        )));
    }
    let path = art.studies();
    write_studies(&path, &studies)?;
    let manifest = write_manifest(&art, cfg, "ingest", &[&cfg.paths.registry_dir], &[&path])?;
    Ok(IngestOutcome {
        studies: studies.len(),
        summary,
        path,
        manifest,
    })
}

#[derive(Debug)]
pub struct PreprocessOutcome {
    pub studies: usize,
    /// Labeled statements before balancing.
    pub statements: usize,
    /// After balancing (equal to `statements` when balancing is off).
    pub balanced: usize,
    pub train: usize,
    pub test: usize,
    pub manifest: PathBuf,
}

/// Splits criteria blocks into statements, normalizes, labels, and
/// optionally augments them, then balances the classes and writes the
/// stratified train/test corpora with their provenance sidecars.
///
/// Labeling runs before augmentation so a leading "no" is stripped once
/// from the criterion itself, not once per replicated variant.
pub fn run_preprocess(cfg: &PipelineConfig) -> Result<PreprocessOutcome> {
    let art = prepare_out_dir(cfg)?;
    let studies_path = art.require(art.studies(), "ingest")?;
    let studies = read_studies(&studies_path)?;

    let templates = AugmentTemplates {
        condition: cfg.preprocess.condition_template.clone(),
        intervention: cfg.preprocess.intervention_template.clone(),
    };
    let mut statements = Vec::new();
    for study in &studies {
        for criterion in split_statements(&study.criteria_text, &study.study_id) {
            let normalized = normalize(&criterion.text);
            if normalized.is_empty() {
                continue;
            }
            let (lbl, cleaned) = label(criterion.section, &normalized);
            if cleaned.is_empty() {
                continue;
            }
            if cfg.preprocess.augment {
                for (text, condition, intervention) in augment(
                    &cleaned,
                    &study.conditions,
                    &study.interventions,
                    &templates,
                ) {
                    statements.push(LabeledStatement {
                        label: lbl,
                        text,
                        provenance: Some(Provenance {
                            study_id: study.study_id.clone(),
                            condition,
                            intervention,
                        }),
                    });
                }
            } else {
                statements.push(LabeledStatement {
                    label: lbl,
                    text: cleaned,
                    provenance: Some(Provenance {
                        study_id: study.study_id.clone(),
                        condition: String::new(),
                        intervention: String::new(),
                    }),
                });
            }
        }
    }

    let total = statements.len();
    let mut dataset = Dataset::new(statements);
    if cfg.preprocess.balance {
        dataset = balance(&dataset, substream(cfg.run.seed, "preprocess.balance"))?;
    }
    let balanced = dataset.len();
    let (train, test) = split_train_test(
        &dataset,
        cfg.preprocess.test_fraction,
        substream(cfg.run.seed, "preprocess.split"),
    )?;

    write_dataset(&art.corpus_train(), &train.statements)?;
    write_dataset(&art.corpus_test(), &test.statements)?;
    write_sidecar_file(&art.sidecar_train(), &train.statements)?;
    write_sidecar_file(&art.sidecar_test(), &test.statements)?;

    let manifest = write_manifest(
        &art,
        cfg,
        "preprocess",
        &[&studies_path],
        &[
            &art.corpus_train(),
            &art.corpus_test(),
            &art.sidecar_train(),
            &art.sidecar_test(),
        ],
    )?;
    Ok(PreprocessOutcome {
        studies: studies.len(),
        statements: total,
        balanced,
        train: train.len(),
        test: test.len(),
        manifest,
    })
}

#[derive(Debug)]
pub struct PhrasesOutcome {
    pub phrases: usize,
    pub table: PathBuf,
    pub manifest: PathBuf,
}

/// Detects bigram collocations on the training corpus only (the test
/// side must not influence the vocabulary) and rewrites both corpora
/// with the detected phrases joined.
pub fn run_phrases(cfg: &PipelineConfig) -> Result<PhrasesOutcome> {
    let art = prepare_out_dir(cfg)?;
    let train_path = art.require(art.corpus_train(), "preprocess")?;
    let test_path = art.require(art.corpus_test(), "preprocess")?;
    let train = read_dataset(&train_path)?;
    let test = read_dataset(&test_path)?;

    let texts: Vec<&str> = train.statements.iter().map(|s| s.text.as_str()).collect();
    let table = detect_phrases(&texts, &cfg.phrases)?;

    let table_path = art.phrase_table();
    let file = File::create(&table_path).map_err(|e| Error::io(&table_path, e))?;
    table
        .write_tsv(BufWriter::new(file))
        .map_err(|e| Error::io(&table_path, e))?;

    let rewrite = |dataset: &Dataset| -> Vec<LabeledStatement> {
        dataset
            .statements
            .iter()
            .map(|s| LabeledStatement {
                label: s.label,
                text: apply_phrases(&s.text, &table),
                provenance: s.provenance.clone(),
            })
            .collect()
    };
    write_dataset(&art.corpus_train_phrased(), &rewrite(&train))?;
    write_dataset(&art.corpus_test_phrased(), &rewrite(&test))?;

    let manifest = write_manifest(
        &art,
        cfg,
        "phrases",
        &[&train_path, &test_path],
        &[
            &table_path,
            &art.corpus_train_phrased(),
            &art.corpus_test_phrased(),
        ],
    )?;
    Ok(PhrasesOutcome {
        phrases: table.len(),
        table: table_path,
        manifest,
    })
}

#[derive(Debug)]
pub struct EmbedOutcome {
    pub words: usize,
    pub dim: usize,
    pub pairs_trained: u64,
    pub vectors: PathBuf,
    pub manifest: PathBuf,
}

/// Trains word vectors over every statement in both corpus splits.
/// Embedding training is unsupervised — labels play no role — so it uses
/// the full statement collection, which also gives the qualitative
/// analyses the widest vocabulary coverage.
pub fn run_train_embeddings(cfg: &PipelineConfig) -> Result<EmbedOutcome> {
    let art = prepare_out_dir(cfg)?;
    let (train_path, producer) = art.effective_train_corpus(cfg);
    let train_path = art.require(train_path, producer)?;
    let (test_path, producer) = art.effective_test_corpus(cfg);
    let test_path = art.require(test_path, producer)?;

    let mut texts: Vec<String> = read_dataset(&train_path)?
        .statements
        .into_iter()
        .map(|s| s.text)
        .collect();
    texts.extend(
        read_dataset(&test_path)?
            .statements
            .into_iter()
            .map(|s| s.text),
    );

    let threads = effective_threads(cfg)?;
    let (model, stats) = embed::train(&texts, &cfg.embedding, cfg.run.seed, threads)?;
    let vectors = art.vectors();
    model.save(&vectors)?;

    let sidecar = embed::subword_sidecar_path(&vectors);
    let mut outputs: Vec<&Path> = vec![&vectors];
    if sidecar.is_file() {
        outputs.push(&sidecar);
    }
    let manifest = write_manifest(
        &art,
        cfg,
        "train-embeddings",
        &[&train_path, &test_path],
        &outputs,
    )?;
    Ok(EmbedOutcome {
        words: model.vocab.len(),
        dim: model.dim,
        pairs_trained: stats.pairs_trained,
        vectors,
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Classifier training and prediction plumbing
// ---------------------------------------------------------------------------

/// A trained classifier paired with the vectors it predicts with;
/// plugs into the evaluation protocol.
pub struct Predictor<'a> {
    pub model: ClassifierModel,
    pub embedding: Option<&'a EmbeddingModel>,
}

impl Predict for Predictor<'_> {
    fn predict_label(&self, text: &str) -> Label {
        // Prediction fails only on an empty statement, which the corpus
        // writer never emits; default rather than poison a whole fold.
        self.model
            .predict(text, self.embedding)
            .map(|p| p.label)
            .unwrap_or(Label::NotEligible)
    }
}

fn sentence_vectors(dataset: &Dataset, emb: &EmbeddingModel) -> Result<Vec<(Vec<f64>, Label)>> {
    dataset
        .statements
        .iter()
        .map(|s| emb.sentence_vector(&s.text).map(|(v, _)| (v, s.label)))
        .collect()
}

fn embedding_for(kind: ClassifierKind, embedding: Option<&EmbeddingModel>) -> Result<&EmbeddingModel> {
    embedding.ok_or_else(|| {
        Error::Config(format!(
            "the {} classifier needs pre-trained vectors",
            kind.as_str()
        ))
    })
}

/// Trains one classifier of the requested kind on `train`, returning it
/// wired up for prediction. Shared by the train, evaluate, and
/// learning-curve stages so cross-validation retrains exactly what the
/// final model will be.
pub fn fit<'a>(
    kind: ClassifierKind,
    cfg: &PipelineConfig,
    embedding: Option<&'a EmbeddingModel>,
    train: &Dataset,
) -> Result<Predictor<'a>> {
    let seed = cfg.run.seed;
    let model = match kind {
        ClassifierKind::Linear => {
            let pre = if cfg.linear.pretrained { embedding } else { None };
            ClassifierModel::Linear(train_linear_avg(
                train,
                pre,
                &cfg.linear,
                cfg.embedding.dim,
                seed,
            )?)
        }
        ClassifierKind::Cnn => {
            let emb = embedding_for(kind, embedding)?;
            let (m, _losses) = train_cnn(train, &EmbedSource::Pretrained(emb), &cfg.cnn, seed)?;
            ClassifierModel::Cnn(m)
        }
        ClassifierKind::Svm => {
            let emb = embedding_for(kind, embedding)?;
            ClassifierModel::Svm(train_svm(&sentence_vectors(train, emb)?, &cfg.svm)?)
        }
        ClassifierKind::Knn => {
            let emb = embedding_for(kind, embedding)?;
            ClassifierModel::Knn(train_knn(&sentence_vectors(train, emb)?, &cfg.knn)?)
        }
    };
    // Only vector-space models embed at prediction time.
    let keep = matches!(kind, ClassifierKind::Svm | ClassifierKind::Knn);
    Ok(Predictor {
        model,
        embedding: if keep { embedding } else { None },
    })
}

/// Loads the pre-trained vectors when the classifier kind uses them.
fn load_embedding_if_needed(
    art: &Artifacts,
    cfg: &PipelineConfig,
    kind: ClassifierKind,
) -> Result<Option<(PathBuf, EmbeddingModel)>> {
    if !kind.needs_embedding(cfg) {
        return Ok(None);
    }
    let path = art.require(art.vectors(), "train-embeddings")?;
    let model = EmbeddingModel::load(&path)?;
    Ok(Some((path, model)))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub kind: ClassifierKind,
    pub model_path: PathBuf,
    /// One-line, kind-specific training note for display.
    pub detail: String,
    pub manifest: PathBuf,
}

/// Trains the requested classifier on the training corpus and saves it,
/// stamped with the digest of the vectors file it depends on.
pub fn run_train_classifier(cfg: &PipelineConfig, kind: ClassifierKind) -> Result<TrainOutcome> {
    let art = prepare_out_dir(cfg)?;
    let (train_path, producer) = art.effective_train_corpus(cfg);
    let train_path = art.require(train_path, producer)?;
    let train = read_dataset(&train_path)?;

    let loaded = load_embedding_if_needed(&art, cfg, kind)?;
    let embedding = loaded.as_ref().map(|(_, m)| m);

    let predictor = fit(kind, cfg, embedding, &train)?;
    let detail = match &predictor.model {
        ClassifierModel::Linear(_) => format!("{} training statements", train.len()),
        ClassifierModel::Cnn(_) => format!("{} training statements", train.len()),
        ClassifierModel::Svm(m) => format!("{} support vectors", m.n_support()),
        ClassifierModel::Knn(m) => format!("{} stored points", m.len()),
    };

    let embedding_digest = match &loaded {
        Some((path, _)) => Some(file_digest(path)?),
        None => None,
    };
    let model_path = art.model(kind);
    save_model(&predictor.model, embedding_digest, &model_path)?;

    let mut inputs: Vec<&Path> = vec![&train_path];
    if let Some((path, _)) = &loaded {
        inputs.push(path);
    }
    let manifest = write_manifest(
        &art,
        cfg,
        &format!("train-classifier-{}", kind.as_str()),
        &inputs,
        &[&model_path],
    )?;
    Ok(TrainOutcome {
        kind,
        model_path,
        detail,
        manifest,
    })
}

/// Loads the trained embedding model from the artifact directory.
pub fn load_embedding(cfg: &PipelineConfig) -> Result<EmbeddingModel> {
    let art = Artifacts::new(&cfg.paths.out_dir);
    let path = art.require(art.vectors(), "train-embeddings")?;
    EmbeddingModel::load(&path)
}

/// Loads a trained classifier together with the embedding it needs at
/// prediction time (vector-space models only), verifying the stored
/// embedding digest still matches the vectors file.
pub fn load_classifier(
    cfg: &PipelineConfig,
    kind: ClassifierKind,
) -> Result<(ClassifierModel, Option<EmbeddingModel>)> {
    let art = Artifacts::new(&cfg.paths.out_dir);
    let model_path = art.require(
        art.model(kind),
        &format!("train-classifier --model {}", kind.as_str()),
    )?;
    let (model, digest) = load_model(&model_path)?;
    if !matches!(model, ClassifierModel::Svm(_) | ClassifierModel::Knn(_)) {
        return Ok((model, None));
    }
    let vectors = art.require(art.vectors(), "train-embeddings")?;
    if let Some(expected) = digest {
        let got = file_digest(&vectors)?;
        if got != expected {
            return Err(Error::Data(format!(
                "{} was trained against embedding digest {expected}, but {} now has \
                 digest {got}; retrain the model or restore the matching vectors",
                model_path.display(),
                vectors.display()
            )));
        }
    }
    Ok((model, Some(EmbeddingModel::load(&vectors)?)))
}

// ---------------------------------------------------------------------------
// Evaluation stages
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub cross_validation: EvaluationReport,
    pub test: EvaluationReport,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub manifest: PathBuf,
}

/// Cross-validates the classifier on the training corpus, then trains on
/// all of it and scores the held-out test corpus. Writes a combined JSON
/// report and a rendered text twin.
pub fn run_evaluate(cfg: &PipelineConfig, kind: ClassifierKind) -> Result<EvaluateOutcome> {
    let art = prepare_out_dir(cfg)?;
    let (train_path, producer) = art.effective_train_corpus(cfg);
    let train_path = art.require(train_path, producer)?;
    let (test_path, producer) = art.effective_test_corpus(cfg);
    let test_path = art.require(test_path, producer)?;
    let train = read_dataset(&train_path)?;
    let test = read_dataset(&test_path)?;

    let loaded = load_embedding_if_needed(&art, cfg, kind)?;
    let embedding = loaded.as_ref().map(|(_, m)| m);

    let cross_validation = eval::kfold_cv(&train, cfg.eval.folds, cfg.run.seed, &mut |fold| {
        fit(kind, cfg, embedding, fold)
    })?;

    let final_model = fit(kind, cfg, embedding, &train)?;
    let predictions: Vec<Label> = test
        .statements
        .iter()
        .map(|s| final_model.predict_label(&s.text))
        .collect();
    let golds: Vec<Label> = test.statements.iter().map(|s| s.label).collect();
    let test_report = EvaluationReport::from_confusion(eval::confusion(&predictions, &golds)?)?;

    let combined = serde_json::json!({
        "model": kind.as_str(),
        "cross_validation": cross_validation,
        "test": test_report,
    });
    let report_json = art.report_json(kind);
    let json = serde_json::to_string_pretty(&combined)
        .map_err(|e| Error::Schema(format!("report serialization failed: {e}")))?;
    fs::write(&report_json, json + "\n").map_err(|e| Error::io(&report_json, e))?;

    let report_text = art.report_text(kind);
    let text = format!(
        "model: {}\n\ncross-validation ({} folds)\n{}\nheld-out test\n{}",
        kind.as_str(),
        cfg.eval.folds,
        cross_validation.render_text(),
        test_report.render_text()
    );
    fs::write(&report_text, text).map_err(|e| Error::io(&report_text, e))?;

    let mut inputs: Vec<&Path> = vec![&train_path, &test_path];
    if let Some((path, _)) = &loaded {
        inputs.push(path);
    }
    let manifest = write_manifest(
        &art,
        cfg,
        &format!("evaluate-{}", kind.as_str()),
        &inputs,
        &[&report_json, &report_text],
    )?;
    Ok(EvaluateOutcome {
        cross_validation,
        test: test_report,
        report_json,
        report_text,
        manifest,
    })
}

#[derive(Debug)]
pub struct SimulationOutcome {
    pub cases: usize,
    pub report: EvaluationReport,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub manifest: PathBuf,
}

/// Scores a saved classifier against a clinically phrased statement file
/// in corpus format (`__label__1` eligible / `__label__0` not, then the
/// statement). The statements go through the same normalization as the
/// training corpus, so the file may carry raw clinical phrasing.
pub fn run_simulation(
    cfg: &PipelineConfig,
    kind: ClassifierKind,
    file: &Path,
) -> Result<SimulationOutcome> {
    let art = prepare_out_dir(cfg)?;
    let (model, embedding) = load_classifier(cfg, kind)?;
    let predictor = Predictor {
        model,
        embedding: embedding.as_ref(),
    };

    let cases: Vec<(String, Label)> = read_dataset(file)?
        .statements
        .into_iter()
        .map(|s| (normalize(&s.text), s.label))
        .collect();
    let report = eval::clinical_simulation(&cases, predictor)?;

    let report_json = art.simulation_json(kind);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Schema(format!("report serialization failed: {e}")))?;
    fs::write(&report_json, json + "\n").map_err(|e| Error::io(&report_json, e))?;
    let report_text = art.simulation_text(kind);
    let text = format!(
        "model: {}\n\nclinical simulation ({} statements)\n{}",
        kind.as_str(),
        cases.len(),
        report.render_text()
    );
    fs::write(&report_text, text).map_err(|e| Error::io(&report_text, e))?;

    let manifest = write_manifest(
        &art,
        cfg,
        &format!("simulate-{}", kind.as_str()),
        &[file, &art.model(kind)],
        &[&report_json, &report_text],
    )?;
    Ok(SimulationOutcome {
        cases: cases.len(),
        report,
        report_json,
        report_text,
        manifest,
    })
}

#[derive(Debug)]
pub struct CurveOutcome {
    pub points: Vec<CurvePoint>,
    pub path: PathBuf,
    pub manifest: PathBuf,
}

/// Sweeps training-set sizes and records train/validation F1 per size.
/// `sizes` overrides the configured sweep when given.
pub fn run_learning_curve(
    cfg: &PipelineConfig,
    kind: ClassifierKind,
    sizes: Option<&[usize]>,
) -> Result<CurveOutcome> {
    let art = prepare_out_dir(cfg)?;
    let (train_path, producer) = art.effective_train_corpus(cfg);
    let train_path = art.require(train_path, producer)?;
    let train = read_dataset(&train_path)?;

    let loaded = load_embedding_if_needed(&art, cfg, kind)?;
    let embedding = loaded.as_ref().map(|(_, m)| m);

    let sizes: Vec<usize> = sizes.unwrap_or(&cfg.eval.curve_sizes).to_vec();
    let points = eval::learning_curve(&train, &sizes, cfg.eval.folds, cfg.run.seed, &mut |fold| {
        fit(kind, cfg, embedding, fold)
    })?;

    let path = art.curve(kind);
    eval::write_curve_tsv(&points, &path)?;

    let mut inputs: Vec<&Path> = vec![&train_path];
    if let Some((p, _)) = &loaded {
        inputs.push(p);
    }
    let manifest = write_manifest(
        &art,
        cfg,
        &format!("learning-curve-{}", kind.as_str()),
        &inputs,
        &[&path],
    )?;
    Ok(CurveOutcome {
        points,
        path,
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Embedding-analysis stages
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ClusterOutcome {
    pub k: usize,
    pub inertia: f64,
    pub iterations: usize,
    pub path: PathBuf,
    pub manifest: PathBuf,
}

/// Clusters every vocabulary word's vector with k-means and writes the
/// `cluster_id<TAB>word` table.
pub fn run_cluster(cfg: &PipelineConfig) -> Result<ClusterOutcome> {
    let art = prepare_out_dir(cfg)?;
    let vectors_path = art.require(art.vectors(), "train-embeddings")?;
    let model = EmbeddingModel::load(&vectors_path)?;

    let k = if cfg.analyze.kmeans_k == 0 {
        analyze::default_k(model.vocab.len())
    } else {
        cfg.analyze.kmeans_k
    };
    let vectors: Vec<Vec<f64>> = (0..model.vocab.len()).map(|i| model.represented(i)).collect();
    let assignment = analyze::kmeans(&vectors, k, cfg.run.seed, cfg.analyze.kmeans_max_iter)?;

    let path = art.clusters();
    analyze::write_clusters_tsv(model.vocab.words(), &assignment, &path)?;
    let manifest = write_manifest(&art, cfg, "cluster", &[&vectors_path], &[&path])?;
    Ok(ClusterOutcome {
        k,
        inertia: assignment.inertia,
        iterations: assignment.iterations,
        path,
        manifest,
    })
}

#[derive(Debug)]
pub struct ProjectOutcome {
    pub points: usize,
    pub kl: f64,
    pub path: PathBuf,
    pub manifest: PathBuf,
}

/// Projects word vectors to 2-D with exact t-SNE and writes the
/// `word<TAB>x<TAB>y` table. `top` limits the projection to the most
/// frequent words (the vocabulary is frequency-sorted); the exact method
/// is quadratic, so the configured cap still applies.
pub fn run_project(cfg: &PipelineConfig, top: Option<usize>) -> Result<ProjectOutcome> {
    let art = prepare_out_dir(cfg)?;
    let vectors_path = art.require(art.vectors(), "train-embeddings")?;
    let model = EmbeddingModel::load(&vectors_path)?;

    let n = top.unwrap_or(model.vocab.len()).min(model.vocab.len());
    let vectors: Vec<Vec<f64>> = (0..n).map(|i| model.represented(i)).collect();
    let projected = analyze::tsne(&vectors, &cfg.analyze, cfg.run.seed)?;

    let path = art.tsne();
    analyze::write_tsne_tsv(&model.vocab.words()[..n], &projected, &path)?;
    let manifest = write_manifest(&art, cfg, "project", &[&vectors_path], &[&path])?;
    Ok(ProjectOutcome {
        points: n,
        kl: projected.kl,
        path,
        manifest,
    })
}

#[derive(Debug)]
pub struct ExportOutcome {
    pub vectors_tsv: PathBuf,
    pub metadata_tsv: PathBuf,
    pub manifest: PathBuf,
}

/// Exports the embedding in the two-file TSV layout embedding-projector
/// tools load directly.
pub fn run_export_projector(cfg: &PipelineConfig) -> Result<ExportOutcome> {
    let art = prepare_out_dir(cfg)?;
    let vectors_path = art.require(art.vectors(), "train-embeddings")?;
    let model = EmbeddingModel::load(&vectors_path)?;

    let (vectors_tsv, metadata_tsv) = analyze::export_projector(&model, None, &art.projector_dir())?;
    let manifest = write_manifest(
        &art,
        cfg,
        "export-projector",
        &[&vectors_path],
        &[&vectors_tsv, &metadata_tsv],
    )?;
    Ok(ExportOutcome {
        vectors_tsv,
        metadata_tsv,
        manifest,
    })
}
