//! End-to-end tests driving the `elig` binary: the full stage sequence on
//! a synthetic registry, artifact and manifest presence, output formats,
//! determinism, and the exit-code contract.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn study_xml(id: &str, condition: &str, intervention: &str, criteria: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<clinical_study>\n  \
         <id_info>\n    <nct_id>{id}</nct_id>\n  </id_info>\n  \
         <brief_title>t</brief_title>\n  <condition>{condition}</condition>\n  \
         <intervention>\n    <intervention_type>Drug</intervention_type>\n    \
         <intervention_name>{intervention}</intervention_name>\n  </intervention>\n  \
         <eligibility>\n    <criteria>\n      <textblock>{criteria}</textblock>\n    \
         </criteria>\n  </eligibility>\n</clinical_study>\n"
    )
}

fn criteria_block(variant: usize) -> String {
    let extra_in = [
        "measurable disease on imaging",
        "adequate renal function confirmed",
        "eastern performance status zero or one",
        "life expectancy over twelve weeks",
        "prior surgery completed four weeks ago",
    ];
    let extra_ex = [
        "active brain metastases present",
        "uncontrolled cardiac disease",
        "known hypersensitivity to study drug",
        "concurrent systemic steroid therapy",
        "major infection requiring antibiotics",
    ];
    format!(
        "Inclusion Criteria:\n\n  - Histologically confirmed breast cancer\n  \
         - Age 18 years or older\n  - {}\n  - No prior chemotherapy treatment\n\n\
         Exclusion Criteria:\n\n  - Pregnant or nursing women\n  - {}\n",
        extra_in[variant % extra_in.len()],
        extra_ex[variant % extra_ex.len()]
    )
}

fn write_registry(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let conditions = ["Breast Cancer", "Melanoma", "Lung Cancer", "Lymphoma"];
    let interventions = ["Tamoxifen", "Cisplatin", "Erlotinib", "Rituximab"];
    for i in 0..n {
        let id = format!("NCT{:08}", i + 1);
        let xml = study_xml(
            &id,
            conditions[i % conditions.len()],
            interventions[i % interventions.len()],
            &criteria_block(i),
        );
        std::fs::write(dir.join(format!("{id}.xml")), xml).unwrap();
    }
}

/// Small, fast settings; paths point into the given workspace root.
fn write_config(root: &Path) -> PathBuf {
    let text = format!(
        "[paths]\n\
         registry_dir = {}\n\
         out_dir = {}\n\n\
         [preprocess]\n\
         test_fraction = 0.25\n\n\
         [phrases]\n\
         min_count = 2\n\
         threshold = 0.05\n\
         scaling = literal\n\n\
         [embedding]\n\
         dim = 8\n\
         window = 3\n\
         epochs = 3\n\
         min_count = 1\n\
         negatives = 3\n\
         subwords = false\n\n\
         [linear]\n\
         epochs = 10\n\n\
         [knn]\n\
         k = 1\n\n\
         [eval]\n\
         folds = 2\n\n\
         [analyze]\n\
         kmeans_k = 3\n\
         tsne_perplexity = 4\n\
         tsne_iterations = 120\n\n\
         [run]\n\
         seed = 7\n\
         threads = 1\n",
        root.join("registry").display(),
        root.join("out").display()
    );
    let path = root.join("elig.conf");
    std::fs::write(&path, text).unwrap();
    path
}

fn elig(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elig"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("failed to spawn elig")
}

fn run_ok(config: &Path, args: &[&str]) -> String {
    let out = elig(config, args);
    assert!(
        out.status.success(),
        "elig {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process was killed by a signal")
}

#[test]
fn full_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_registry(&root.join("registry"), 12);
    let config = write_config(root);
    let out_dir = root.join("out");

    let stdout = run_ok(&config, &["ingest"]);
    assert!(stdout.contains("ingested 12 oncology studies"), "{stdout}");
    assert!(out_dir.join("studies.jsonl").is_file());
    assert!(out_dir.join("manifest_ingest.json").is_file());

    run_ok(&config, &["preprocess"]);
    assert!(out_dir.join("corpus_train.txt").is_file());
    assert!(out_dir.join("corpus_test.txt").is_file());

    run_ok(&config, &["phrases"]);
    assert!(out_dir.join("phrases.tsv").is_file());
    assert!(out_dir.join("corpus_train_phrased.txt").is_file());

    run_ok(&config, &["train-embeddings"]);
    assert!(out_dir.join("vectors.txt").is_file());

    run_ok(&config, &["train-classifier", "--model", "linear"]);
    assert!(out_dir.join("model_linear.bin").is_file());
    run_ok(&config, &["train-classifier", "--model", "knn"]);
    assert!(out_dir.join("model_knn.bin").is_file());

    // a clinically phrased holdout in corpus format rides along with evaluate
    let sim = root.join("simulation.txt");
    std::fs::write(
        &sim,
        "__label__1 lapatinib to treat breast cancer with brain metastasis\n\
         __label__0 pertuzumab to treat breast cancer with brain metastasis\n\
         __label__1 car to treat lymphoma\n\
         __label__0 tcr to treat breast cancer\n",
    )
    .unwrap();
    let stdout = run_ok(
        &config,
        &["evaluate", "--model", "knn", "--simulation", sim.to_str().unwrap()],
    );
    assert!(stdout.contains("cross-validation: F1"), "{stdout}");
    assert!(stdout.contains("clinical simulation (4 statements)"), "{stdout}");
    assert!(out_dir.join("report_knn.json").is_file());
    assert!(out_dir.join("report_simulation_knn.json").is_file());
    assert!(out_dir.join("manifest_evaluate-knn.json").is_file());

    // the report is machine-readable and carries both protocol halves
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report_knn.json")).unwrap())
            .unwrap();
    assert_eq!(report["model"], "knn");
    assert!(report["cross_validation"]["f1"].is_number());
    assert!(report["test"]["kappa"].is_number());

    let stdout = run_ok(
        &config,
        &["learning-curve", "--model", "linear", "--sizes", "8,16"],
    );
    assert!(stdout.contains("size"), "{stdout}");
    let curve = std::fs::read_to_string(out_dir.join("learning_curve_linear.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 2, "one row per requested size:\n{curve}");

    // stdin → one `label<TAB>score` line per statement
    let mut child = Command::new(env!("CARGO_BIN_EXE_elig"))
        .arg("--config")
        .arg(&config)
        .args(["predict", "--model", "knn"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"Histologically confirmed breast cancer\nPregnant or nursing women\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let predictions = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = predictions.lines().collect();
    assert_eq!(lines.len(), 2, "{predictions}");
    for line in &lines {
        let (label, score) = line.split_once('\t').expect("label<TAB>score");
        assert!(label == "Eligible" || label == "NotEligible", "{line}");
        let score: f64 = score.parse().unwrap();
        assert!((0.0..=1.0).contains(&score), "{line}");
    }

    let stdout = run_ok(&config, &["neighbors", "chemotherapy", "-k", "3"]);
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    for line in stdout.lines() {
        let (word, score) = line.split_once('\t').expect("word<TAB>score");
        assert!(!word.is_empty());
        score.parse::<f64>().unwrap();
    }

    let stdout = run_ok(&config, &["analogy", "chemotherapy", "prior", "pregnant", "-k", "2"]);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");

    run_ok(&config, &["cluster"]);
    assert!(out_dir.join("clusters.tsv").is_file());

    run_ok(&config, &["project", "--top", "30"]);
    let tsne = std::fs::read_to_string(out_dir.join("tsne.tsv")).unwrap();
    assert_eq!(tsne.lines().count(), 30, "one row per projected word");

    run_ok(&config, &["export-projector"]);
    assert!(out_dir.join("projector").join("vectors.tsv").is_file());
    assert!(out_dir.join("projector").join("metadata.tsv").is_file());

    // same seed, same inputs → byte-identical reports
    let before = std::fs::read(out_dir.join("report_knn.json")).unwrap();
    run_ok(&config, &["evaluate", "--model", "knn"]);
    let after = std::fs::read(out_dir.join("report_knn.json")).unwrap();
    assert_eq!(before, after, "evaluate rerun changed the report");

    // scope refusal: the exact t-SNE cap is a budget error
    let out = elig(&config, &["--set", "analyze.tsne_cap=2", "project"]);
    assert_eq!(exit_code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));

    // out-of-vocabulary query word is a data error
    let out = elig(&config, &["neighbors", "zzzgibberish"]);
    assert_eq!(exit_code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_artifacts_name_the_producing_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_registry(&root.join("registry"), 2);
    let config = write_config(root);

    let out = elig(&config, &["preprocess"]);
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("run `elig ingest` first"), "{stderr}");

    let out = elig(&config, &["evaluate", "--model", "linear"]);
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("run `elig"), "{stderr}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = write_config(root);

    for args in [
        &["--set", "embedding.dim=banana", "ingest"][..],
        &["--set", "nosuchsection.key=1", "ingest"][..],
        &["--set", "malformed", "ingest"][..],
        &["--set", "preprocess.test_fraction=2.0", "ingest"][..],
    ] {
        let out = elig(&config, args);
        assert_eq!(
            exit_code(&out),
            2,
            "args {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    // an unreadable configuration file is also a configuration error
    let out = Command::new(env!("CARGO_BIN_EXE_elig"))
        .args(["--config", "/nonexistent/elig.conf", "ingest"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3, "missing file surfaces as an I/O data error");

    // clap itself rejects an unknown classifier kind with a usage error
    let out = elig(&config, &["train-classifier", "--model", "tree"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn thread_override_env_var_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_registry(&root.join("registry"), 2);
    let config = write_config(root);

    let out = Command::new(env!("CARGO_BIN_EXE_elig"))
        .arg("--config")
        .arg(&config)
        .arg("ingest")
        .env("ELIG_THREADS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(
        exit_code(&out),
        2,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
