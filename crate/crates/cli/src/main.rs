//! `elig` — command-line pipeline from registry protocol XML to trained
//! eligibility classifiers and embedding analyses.
//!
//! Subcommands run the stages in order (`ingest` → `preprocess` →
//! [`phrases`] → `train-embeddings` → `train-classifier` → `evaluate`),
//! plus query tools over the trained artifacts. Every stage writes its
//! artifacts and a JSON run manifest into the output directory.
//! Precedence: built-in defaults < configuration file < `--set` overrides
//! < dedicated flags. Exit codes: 0 ok, 2 configuration error, 3 data
//! error, 4 budget refusal.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eligibility_core::embed::Metric;
use eligibility_core::pipeline::{self, ClassifierKind, Predictor};
use eligibility_core::textprep::normalize;
use eligibility_core::{Error, Label, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "elig", version, about = "Clinical-trial eligibility pipeline", arg_required_else_help = true)]
struct Cli {
    /// Plain-text configuration file (`[section]` headers, `key = value`
    /// lines); omitted means built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration value, e.g. `--set embedding.dim=200`;
    /// repeatable, applied on top of the configuration file.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory for artifacts ([paths] out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Global random seed ([run] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Cnn,
    Svm,
    Knn,
}

impl From<ModelArg> for ClassifierKind {
    fn from(arg: ModelArg) -> ClassifierKind {
        match arg {
            ModelArg::Linear => ClassifierKind::Linear,
            ModelArg::Cnn => ClassifierKind::Cnn,
            ModelArg::Svm => ClassifierKind::Svm,
            ModelArg::Knn => ClassifierKind::Knn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(arg: MetricArg) -> Metric {
        match arg {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse registry XML files into oncology study records.
    Ingest {
        /// Registry directory of `.xml` / `.xml.gz` files ([paths] registry_dir).
        #[arg(long, value_name = "DIR")]
        registry: Option<PathBuf>,
    },
    /// Split criteria into statements, normalize, label, balance, and
    /// write the train/test corpora.
    Preprocess,
    /// Detect bigram collocations on the training corpus and rewrite
    /// both corpora with them.
    Phrases,
    /// Train word vectors over the full statement collection.
    TrainEmbeddings,
    /// Train one classifier on the training corpus and save it.
    TrainClassifier {
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Cross-validate on the training corpus and score the held-out test
    /// corpus.
    Evaluate {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Additionally score a clinically phrased statement file
        /// (corpus format) against the saved model.
        #[arg(long, value_name = "FILE")]
        simulation: Option<PathBuf>,
    },
    /// Sweep training-set sizes and record train/validation F1 per size.
    LearningCurve {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Comma-separated subset sizes overriding [eval] curve_sizes.
        #[arg(long, value_delimiter = ',', value_name = "N,N,…")]
        sizes: Option<Vec<usize>>,
    },
    /// Classify statements from stdin, one per line, printing
    /// `label<TAB>score` where score is the eligible-class probability.
    Predict {
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Print the nearest vocabulary words to a query word.
    Neighbors {
        word: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
    },
    /// Answer `word − minus + plus` by the 3CosMul objective.
    Analogy {
        word: String,
        minus: String,
        plus: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Cluster every word vector with k-means and write the table.
    Cluster,
    /// Project word vectors to 2-D with exact t-SNE.
    Project {
        /// Project only the N most frequent words.
        #[arg(long, value_name = "N")]
        top: Option<usize>,
    },
    /// Export vectors.tsv and metadata.tsv for embedding-projector tools.
    ExportProjector,
}

/// Defaults, then the configuration file, then `--set` pairs, then flags.
fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for pair in &cli.overrides {
        let (path, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects section.key=value, got {pair:?}"))
        })?;
        let (section, key) = path.split_once('.').ok_or_else(|| {
            Error::Config(format!("--set key {path:?} must be section.key"))
        })?;
        cfg.set(section.trim(), key.trim(), value.trim())?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.paths.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Command::Ingest { registry: Some(dir) } = &cli.command {
        cfg.paths.registry_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Ingest { .. } => {
            let out = pipeline::run_ingest(&cfg)?;
            println!(
                "ingested {} oncology studies ({} parsed, {} filtered out, {} failed) -> {}",
                out.studies,
                out.summary.parsed,
                out.summary.filtered_out,
                out.summary.failed,
                out.path.display()
            );
        }
        Command::Preprocess => {
            let out = pipeline::run_preprocess(&cfg)?;
            println!(
                "{} studies -> {} labeled statements, {} after balancing \
                 ({} train / {} test)",
                out.studies, out.statements, out.balanced, out.train, out.test
            );
        }
        Command::Phrases => {
            let out = pipeline::run_phrases(&cfg)?;
            println!("{} collocations -> {}", out.phrases, out.table.display());
        }
        Command::TrainEmbeddings => {
            let out = pipeline::run_train_embeddings(&cfg)?;
            println!(
                "trained {} x {} vectors on {} pairs -> {}",
                out.words,
                out.dim,
                out.pairs_trained,
                out.vectors.display()
            );
        }
        Command::TrainClassifier { model } => {
            let out = pipeline::run_train_classifier(&cfg, (*model).into())?;
            println!("{} -> {}", out.detail, out.model_path.display());
        }
        Command::Evaluate { model, simulation } => {
            let kind: ClassifierKind = (*model).into();
            let out = pipeline::run_evaluate(&cfg, kind)?;
            println!(
                "cross-validation: F1 {:.4} (kappa {:.4}); held-out test: F1 {:.4} (kappa {:.4})",
                out.cross_validation.f1, out.cross_validation.kappa, out.test.f1, out.test.kappa
            );
            println!("report -> {}", out.report_json.display());
            if let Some(file) = simulation {
                let sim = pipeline::run_simulation(&cfg, kind, file)?;
                println!(
                    "clinical simulation ({} statements): accuracy {:.4} (kappa {:.4}) -> {}",
                    sim.cases, sim.report.accuracy, sim.report.kappa, sim.report_json.display()
                );
            }
        }
        Command::LearningCurve { model, sizes } => {
            let out = pipeline::run_learning_curve(&cfg, (*model).into(), sizes.as_deref())?;
            for p in &out.points {
                println!(
                    "size {:>8}: train F1 {:.4}, validation F1 {:.4} (std {:.4})",
                    p.size, p.train_f1, p.val_f1, p.std
                );
            }
            println!("curve -> {}", out.path.display());
        }
        Command::Predict { model } => {
            let (model, embedding) = pipeline::load_classifier(&cfg, (*model).into())?;
            let predictor = Predictor {
                model,
                embedding: embedding.as_ref(),
            };
            let stdin = io::stdin();
            let mut stdout = io::stdout().lock();
            for line in stdin.lock().lines() {
                let line = line.map_err(|e| Error::io("stdin", e))?;
                let text = normalize(line.trim());
                if text.is_empty() {
                    continue;
                }
                let p = predictor.model.predict(&text, predictor.embedding)?;
                writeln!(stdout, "{}\t{:.6}", label_name(p.label), p.scores[1])
                    .map_err(|e| Error::io("stdout", e))?;
            }
        }
        Command::Neighbors { word, k, metric } => {
            let model = pipeline::load_embedding(&cfg)?;
            for (neighbor, score) in model.nearest(word, *k, (*metric).into())? {
                println!("{neighbor}\t{score:.6}");
            }
        }
        Command::Analogy { word, minus, plus, k } => {
            let model = pipeline::load_embedding(&cfg)?;
            for (answer, score) in model.analogy_3cosmul(minus, word, plus, *k)? {
                println!("{answer}\t{score:.6}");
            }
        }
        Command::Cluster => {
            let out = pipeline::run_cluster(&cfg)?;
            println!(
                "k = {}, inertia {:.4} after {} iterations -> {}",
                out.k,
                out.inertia,
                out.iterations,
                out.path.display()
            );
        }
        Command::Project { top } => {
            let out = pipeline::run_project(&cfg, *top)?;
            println!(
                "projected {} words, final KL {:.4} -> {}",
                out.points,
                out.kl,
                out.path.display()
            );
        }
        Command::ExportProjector => {
            let out = pipeline::run_export_projector(&cfg)?;
            println!(
                "exported {} and {}",
                out.vectors_tsv.display(),
                out.metadata_tsv.display()
            );
        }
    }
    Ok(())
}

fn label_name(label: Label) -> &'static str {
    match label {
        Label::Eligible => "Eligible",
        Label::NotEligible => "NotEligible",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
