//! Evaluation: confusion matrices, precision/recall/F1/accuracy, Cohen's
//! kappa, stratified k-fold cross-validation, learning curves over
//! balanced nested subsamples, and the clinical-statement simulation
//! harness. Eligible is the positive class throughout.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textprep::{Dataset, Label};

/// Binary confusion counts with Eligible as the positive class. `fn_`
/// carries a trailing underscore only because `fn` is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Tallies predictions against gold labels.
pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions against {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&pred, &gold) in predictions.iter().zip(labels) {
        match (pred, gold) {
            (Label::Eligible, Label::Eligible) => cm.tp += 1,
            (Label::Eligible, Label::NotEligible) => cm.fp += 1,
            (Label::NotEligible, Label::Eligible) => cm.fn_ += 1,
            (Label::NotEligible, Label::NotEligible) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Precision, recall, F1 and accuracy. A zero denominator yields 0 for
/// the affected metric and sets `degenerate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub degenerate: bool,
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut degenerate = false;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f1,
        accuracy,
        degenerate,
    }
}

/// Cohen's κ = (p_o − p_e)/(1 − p_e) with the marginal chance agreement
/// p_e = [(TP+FP)(TP+FN) + (FN+TN)(FP+TN)]/N². Returns the value and a
/// degeneracy flag. When p_e = 1 (both marginals concentrated on one
/// class) κ is defined as 1 if p_o = 1 and 0 otherwise, flagged.
pub fn cohens_kappa(cm: &ConfusionMatrix) -> Result<(f64, bool)> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Data("cannot compute kappa of an empty confusion matrix".into()));
    }
    let n = n as f64;
    let p_o = (cm.tp + cm.tn) as f64 / n;
    let pred_pos = (cm.tp + cm.fp) as f64;
    let gold_pos = (cm.tp + cm.fn_) as f64;
    let pred_neg = (cm.fn_ + cm.tn) as f64;
    let gold_neg = (cm.fp + cm.tn) as f64;
    let p_e = (pred_pos * gold_pos + pred_neg * gold_neg) / (n * n);
    if p_e >= 1.0 {
        return Ok((if p_o >= 1.0 { 1.0 } else { 0.0 }, true));
    }
    Ok(((p_o - p_e) / (1.0 - p_e), false))
}

/// Aggregate scores of one evaluation. The headline metrics come from
/// the pooled confusion matrix (so f1 is exactly the harmonic mean of
/// the reported precision and recall); per-fold F1 with its mean and
/// population standard deviation describe the cross-validation spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub kappa: f64,
    pub degenerate: bool,
    pub confusion: ConfusionMatrix,
    pub fold_f1: Vec<f64>,
    pub f1_mean: f64,
    pub f1_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

impl EvaluationReport {
    /// Report of a single pass (no folds).
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<EvaluationReport> {
        Self::from_folds(cm, vec![])
    }

    fn from_folds(pooled: ConfusionMatrix, fold_f1: Vec<f64>) -> Result<EvaluationReport> {
        let m = metrics(&pooled);
        let (kappa, kappa_degenerate) = cohens_kappa(&pooled)?;
        let (f1_mean, f1_std) = if fold_f1.is_empty() {
            (m.f1, 0.0)
        } else {
            mean_std(&fold_f1)
        };
        Ok(EvaluationReport {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            kappa,
            degenerate: m.degenerate || kappa_degenerate,
            confusion: pooled,
            fold_f1,
            f1_mean,
            f1_std,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Aligned two-column text rendering for terminals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let cm = &self.confusion;
        let rows = [
            ("precision".to_string(), format!("{:.4}", self.precision)),
            ("recall".to_string(), format!("{:.4}", self.recall)),
            ("f1".to_string(), format!("{:.4}", self.f1)),
            ("accuracy".to_string(), format!("{:.4}", self.accuracy)),
            ("kappa".to_string(), format!("{:.4}", self.kappa)),
            (
                "confusion".to_string(),
                format!("tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn_, cm.tn),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &rows {
            out.push_str(&format!("{k:width$}  {v}\n"));
        }
        if !self.fold_f1.is_empty() {
            let folds: Vec<String> = self.fold_f1.iter().map(|f| format!("{f:.4}")).collect();
            out.push_str(&format!("{:width$}  {}\n", "fold f1", folds.join(" ")));
            out.push_str(&format!(
                "{:width$}  {:.4} ± {:.4}\n",
                "cv f1", self.f1_mean, self.f1_std
            ));
        }
        if self.degenerate {
            out.push_str("note: a zero-denominator metric was reported as 0\n");
        }
        out
    }
}

/// Anything that can label a normalized statement. Implemented for
/// plain closures; the pipeline's model-backed predictor implements it
/// too.
pub trait Predict {
    fn predict_label(&self, text: &str) -> Label;
}

impl<F: Fn(&str) -> Label> Predict for F {
    fn predict_label(&self, text: &str) -> Label {
        self(text)
    }
}

/// Validation index sets of a stratified k-fold split: per class the
/// indices are shuffled once under the seed and dealt round-robin, so
/// every sample lands in exactly one validation fold and class ratios
/// carry over to within one sample.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    if dataset.len() < k {
        return Err(Error::Data(format!(
            "cannot split {} samples into {k} folds",
            dataset.len()
        )));
    }
    let mut rng = rng_for(seed, "eval.kfold");
    let mut folds = vec![Vec::new(); k];
    for class in [Label::NotEligible, Label::Eligible] {
        let mut idxs: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.statements[i].label == class)
            .collect();
        idxs.shuffle(&mut rng);
        for (pos, idx) in idxs.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

fn subset(dataset: &Dataset, indices: &[usize]) -> Dataset {
    Dataset::new(
        indices
            .iter()
            .map(|&i| dataset.statements[i].clone())
            .collect(),
    )
}

/// Stratified k-fold cross-validation. The trainer receives each fold's
/// training set and returns a predictor; the report pools the fold
/// confusion matrices and records per-fold validation F1. Deterministic
/// for a fixed seed and deterministic trainer.
pub fn kfold_cv<F, P>(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    trainer: &mut F,
) -> Result<EvaluationReport>
where
    F: FnMut(&Dataset) -> Result<P>,
    P: Predict,
{
    let folds = stratified_folds(dataset, k, seed)?;
    let mut pooled = ConfusionMatrix::default();
    let mut fold_f1 = Vec::with_capacity(k);
    for val_idx in &folds {
        let in_val: std::collections::HashSet<usize> = val_idx.iter().copied().collect();
        let train_idx: Vec<usize> = (0..dataset.len()).filter(|i| !in_val.contains(i)).collect();
        let predictor = trainer(&subset(dataset, &train_idx))?;
        let val = subset(dataset, val_idx);
        let preds: Vec<Label> = val
            .statements
            .iter()
            .map(|s| predictor.predict_label(&s.text))
            .collect();
        let golds: Vec<Label> = val.statements.iter().map(|s| s.label).collect();
        let cm = confusion(&preds, &golds)?;
        fold_f1.push(metrics(&cm).f1);
        pooled.add(&cm);
    }
    EvaluationReport::from_folds(pooled, fold_f1)
}

/// One learning-curve point: mean F1 on the folds' own training data
/// against mean validation F1 with its spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub train_f1: f64,
    pub val_f1: f64,
    pub std: f64,
}

/// Balanced subsample indices for each requested size, nested so the
/// subset at a smaller size is contained in every larger one (a single
/// per-class shuffle under the seed, cut at increasing prefixes). Sizes
/// split as evenly as the two classes allow, within one sample.
pub fn balanced_nested_subsets(
    dataset: &Dataset,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut rng = rng_for(seed, "eval.curve.sample");
    let mut by_class: Vec<Vec<usize>> = Vec::new();
    for class in [Label::NotEligible, Label::Eligible] {
        let mut idxs: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.statements[i].label == class)
            .collect();
        idxs.shuffle(&mut rng);
        by_class.push(idxs);
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size > dataset.len() {
            return Err(Error::Data(format!(
                "learning-curve size {size} exceeds the {} available samples",
                dataset.len()
            )));
        }
        let half = size / 2;
        let (want_neg, want_pos) = (half, size - half);
        if want_neg > by_class[0].len() || want_pos > by_class[1].len() {
            return Err(Error::Data(format!(
                "cannot draw a balanced subset of {size}: classes hold {} and {} samples",
                by_class[0].len(),
                by_class[1].len()
            )));
        }
        let mut idxs: Vec<usize> = by_class[0][..want_neg]
            .iter()
            .chain(&by_class[1][..want_pos])
            .copied()
            .collect();
        idxs.sort_unstable();
        out.push(idxs);
    }
    Ok(out)
}

/// Learning curve: per size a balanced nested subsample is split 80/20
/// (stratified) and the training side is cross-validated with k folds.
/// Train F1 is measured on each fold's own training data.
pub fn learning_curve<F, P>(
    dataset: &Dataset,
    sizes: &[usize],
    k: usize,
    seed: u64,
    trainer: &mut F,
) -> Result<Vec<CurvePoint>>
where
    F: FnMut(&Dataset) -> Result<P>,
    P: Predict,
{
    let subsets = balanced_nested_subsets(dataset, sizes, seed)?;
    let mut points = Vec::with_capacity(sizes.len());
    for (&size, indices) in sizes.iter().zip(&subsets) {
        let sample = subset(dataset, indices);
        let (train_side, _held_out) =
            crate::textprep::split_train_test(&sample, 0.2, seed ^ size as u64)?;
        let folds = stratified_folds(&train_side, k, seed)?;
        let mut train_f1s = Vec::with_capacity(k);
        let mut val_f1s = Vec::with_capacity(k);
        for val_idx in &folds {
            let in_val: std::collections::HashSet<usize> = val_idx.iter().copied().collect();
            let train_idx: Vec<usize> =
                (0..train_side.len()).filter(|i| !in_val.contains(i)).collect();
            let fold_train = subset(&train_side, &train_idx);
            let predictor = trainer(&fold_train)?;
            let score = |set: &Dataset| -> Result<f64> {
                let preds: Vec<Label> = set
                    .statements
                    .iter()
                    .map(|s| predictor.predict_label(&s.text))
                    .collect();
                let golds: Vec<Label> = set.statements.iter().map(|s| s.label).collect();
                Ok(metrics(&confusion(&preds, &golds)?).f1)
            };
            train_f1s.push(score(&fold_train)?);
            val_f1s.push(score(&subset(&train_side, val_idx))?);
        }
        let (train_f1, _) = mean_std(&train_f1s);
        let (val_f1, std) = mean_std(&val_f1s);
        points.push(CurvePoint {
            size,
            train_f1,
            val_f1,
            std,
        });
    }
    Ok(points)
}

/// Writes curve points as `size<TAB>train_f1<TAB>val_f1<TAB>std` rows.
pub fn write_curve_tsv(points: &[CurvePoint], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in points {
        writeln!(w, "{}\t{}\t{}\t{}", p.size, p.train_f1, p.val_f1, p.std)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Scores a predictor against clinically phrased gold statements (texts
/// must already be normalized like the training corpus).
pub fn clinical_simulation<P>(cases: &[(String, Label)], predictor: P) -> Result<EvaluationReport>
where
    P: Predict,
{
    if cases.is_empty() {
        return Err(Error::Data("the clinical simulation set is empty".into()));
    }
    let preds: Vec<Label> = cases
        .iter()
        .map(|(text, _)| predictor.predict_label(text))
        .collect();
    let golds: Vec<Label> = cases.iter().map(|(_, gold)| *gold).collect();
    EvaluationReport::from_confusion(confusion(&preds, &golds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::LabeledStatement;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn balanced_dataset(n: usize) -> Dataset {
        let statements = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Eligible } else { Label::NotEligible };
                LabeledStatement::new(label, format!("statement number {i}"))
            })
            .collect();
        Dataset::new(statements)
    }

    #[test]
    fn confusion_counts_trivial_cases() {
        let pos = vec![Label::Eligible; 5];
        let neg = vec![Label::NotEligible; 5];
        let golds: Vec<Label> = pos.iter().chain(&neg).copied().collect();
        let cm = confusion(&golds, &golds).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(5, 0, 0, 5));

        let golds = [
            Label::Eligible,
            Label::Eligible,
            Label::Eligible,
            Label::NotEligible,
            Label::NotEligible,
        ];
        let preds = vec![Label::Eligible; 5];
        let cm = confusion(&preds, &golds).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(3, 2, 0, 0));

        assert!(confusion(&preds[..3], &golds).is_err());
    }

    #[test]
    fn confusion_matches_recount_oracle() {
        // deterministic LCG fixture of 1,000 pairs
        let mut state = 99u64;
        let mut flip = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 62) & 1 == 1
        };
        let preds: Vec<Label> =
            (0..1000).map(|_| if flip() { Label::Eligible } else { Label::NotEligible }).collect();
        let golds: Vec<Label> =
            (0..1000).map(|_| if flip() { Label::Eligible } else { Label::NotEligible }).collect();
        let cm = confusion(&preds, &golds).unwrap();

        // independent recount: filter-count each cell separately
        let count = |p: Label, g: Label| {
            preds
                .iter()
                .zip(&golds)
                .filter(|(x, y)| **x == p && **y == g)
                .count() as u64
        };
        assert_eq!(cm.tp, count(Label::Eligible, Label::Eligible));
        assert_eq!(cm.fp, count(Label::Eligible, Label::NotEligible));
        assert_eq!(cm.fn_, count(Label::NotEligible, Label::Eligible));
        assert_eq!(cm.tn, count(Label::NotEligible, Label::NotEligible));
        assert_eq!(cm.total(), 1000);
    }

    #[test]
    fn metrics_worked_example() {
        let m = metrics(&ConfusionMatrix::new(3, 1, 2, 4));
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.6).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!(!m.degenerate);
    }

    #[test]
    fn metrics_perfect_and_degenerate() {
        let m = metrics(&ConfusionMatrix::new(7, 0, 0, 7));
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.degenerate);

        // no positive predictions: precision denominator is zero
        let m = metrics(&ConfusionMatrix::new(0, 0, 3, 5));
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn kappa_worked_example() {
        // p_o = 0.85, p_e = (45·50 + 55·50)/100² = 0.5 → κ = 0.7
        let (kappa, degenerate) = cohens_kappa(&ConfusionMatrix::new(40, 5, 10, 45)).unwrap();
        assert!((kappa - 0.7).abs() < 1e-12, "κ = {kappa}");
        assert!(!degenerate);
    }

    #[test]
    fn kappa_conventions() {
        // perfect agreement on balanced data
        let (kappa, _) = cohens_kappa(&ConfusionMatrix::new(50, 0, 0, 50)).unwrap();
        assert_eq!(kappa, 1.0);

        // always predicting Eligible is chance-level agreement
        let (kappa, _) = cohens_kappa(&ConfusionMatrix::new(5, 5, 0, 0)).unwrap();
        assert_eq!(kappa, 0.0);

        // single-class gold and predictions: p_e = 1, flagged
        let (kappa, degenerate) = cohens_kappa(&ConfusionMatrix::new(9, 0, 0, 0)).unwrap();
        assert_eq!(kappa, 1.0);
        assert!(degenerate);

        assert!(cohens_kappa(&ConfusionMatrix::default()).is_err());
    }

    /// Brute-force re-derivations working from per-sample label streams
    /// instead of count algebra.
    fn brute_force(cm: &ConfusionMatrix) -> (f64, f64, f64, f64, f64) {
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..cm.tp {
            preds.push(1u8);
            golds.push(1u8);
        }
        for _ in 0..cm.fp {
            preds.push(1);
            golds.push(0);
        }
        for _ in 0..cm.fn_ {
            preds.push(0);
            golds.push(1);
        }
        for _ in 0..cm.tn {
            preds.push(0);
            golds.push(0);
        }
        let n = preds.len() as f64;
        let tp = preds.iter().zip(&golds).filter(|(p, g)| **p == 1 && **g == 1).count() as f64;
        let pred_pos = preds.iter().filter(|&&p| p == 1).count() as f64;
        let gold_pos = golds.iter().filter(|&&g| g == 1).count() as f64;
        let agree = preds.iter().zip(&golds).filter(|(p, g)| p == g).count() as f64;
        let precision = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
        let recall = if gold_pos > 0.0 { tp / gold_pos } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let accuracy = agree / n;
        let p_o = agree / n;
        let p_e = (pred_pos / n) * (gold_pos / n) + ((n - pred_pos) / n) * ((n - gold_pos) / n);
        let kappa = if p_e >= 1.0 {
            if p_o >= 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (p_o - p_e) / (1.0 - p_e)
        };
        (precision, recall, f1, accuracy, kappa)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn metrics_agree_with_brute_force(tp in 0u64..40, fp in 0u64..40, fn_ in 0u64..40, tn in 0u64..40) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            let m = metrics(&cm);
            let (kappa, _) = cohens_kappa(&cm).unwrap();
            let (bp, br, bf1, bacc, bkappa) = brute_force(&cm);
            prop_assert!((m.precision - bp).abs() < 1e-12);
            prop_assert!((m.recall - br).abs() < 1e-12);
            prop_assert!((m.f1 - bf1).abs() < 1e-12);
            prop_assert!((m.accuracy - bacc).abs() < 1e-12);
            prop_assert!((kappa - bkappa).abs() < 1e-12);
        }

        #[test]
        fn kappa_is_one_iff_no_errors(tp in 1u64..40, fp in 0u64..40, fn_ in 0u64..40, tn in 1u64..40) {
            // both classes present in the gold labels
            prop_assume!(tp + fn_ > 0 && fp + tn > 0);
            let (kappa, degenerate) = cohens_kappa(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap();
            prop_assert!(!degenerate);
            if fp == 0 && fn_ == 0 {
                prop_assert!((kappa - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(kappa < 1.0 - 1e-12);
            }
        }

        #[test]
        fn f1_is_scale_invariant(tp in 0u64..30, fp in 0u64..30, fn_ in 0u64..30, tn in 0u64..30, scale in 1u64..10) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let a = metrics(&ConfusionMatrix::new(tp, fp, fn_, tn));
            let b = metrics(&ConfusionMatrix::new(tp * scale, fp * scale, fn_ * scale, tn * scale));
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn stratified_folds_partition_and_balance() {
        let ds = balanced_dataset(100);
        let folds = stratified_folds(&ds, 5, 11).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = HashSet::new();
        for fold in &folds {
            assert_eq!(fold.len(), 20);
            let eligible = fold
                .iter()
                .filter(|&&i| ds.statements[i].label == Label::Eligible)
                .count();
            assert_eq!(eligible, 10, "fold must stay balanced");
            for &i in fold {
                assert!(seen.insert(i), "index {i} appears in two folds");
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn kfold_rejects_undersized_input() {
        let ds = balanced_dataset(3);
        assert!(stratified_folds(&ds, 5, 0).is_err());
        assert!(stratified_folds(&balanced_dataset(10), 1, 0).is_err());
    }

    #[test]
    fn kfold_constant_trainer_has_zero_std() {
        let ds = balanced_dataset(50);
        let mut trainer = |_: &Dataset| Ok(|_: &str| Label::Eligible);
        let report = kfold_cv(&ds, 5, 7, &mut trainer).unwrap();
        assert_eq!(report.fold_f1.len(), 5);
        assert!(report.fold_f1.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
        assert_eq!(report.f1_std, 0.0);
        // always-Eligible on balanced data: recall 1, precision 0.5
        assert!((report.recall - 1.0).abs() < 1e-15);
        assert!((report.precision - 0.5).abs() < 1e-15);
        assert!((report.kappa - 0.0).abs() < 1e-15);
    }

    #[test]
    fn kfold_is_reproducible_and_seed_sensitive() {
        let ds = balanced_dataset(40);
        // trainer sensitive to fold composition: predicts the majority
        // label among training statements with an even trailing digit
        let mut trainer = |train: &Dataset| -> crate::error::Result<_> {
            let pos = train
                .statements
                .iter()
                .filter(|s| s.label == Label::Eligible && s.text.ends_with(['0', '2', '4', '6', '8']))
                .count();
            let neg = train.len() - pos;
            let majority = if pos >= neg { Label::Eligible } else { Label::NotEligible };
            Ok(move |_: &str| majority)
        };
        let a = kfold_cv(&ds, 5, 3, &mut trainer).unwrap();
        let b = kfold_cv(&ds, 5, 3, &mut trainer).unwrap();
        assert_eq!(a.fold_f1, b.fold_f1);
        assert_eq!(a.confusion, b.confusion);
    }

    #[test]
    fn kfold_perfect_memorizer_scores_one() {
        let ds = balanced_dataset(30);
        // every statement text is unique and label-determined, so a
        // lookup trained on anything labels by parity of the trailing number
        let mut trainer = |_: &Dataset| -> crate::error::Result<_> {
            Ok(|text: &str| {
                let n: usize = text.rsplit(' ').next().unwrap().parse().unwrap();
                if n % 2 == 0 {
                    Label::Eligible
                } else {
                    Label::NotEligible
                }
            })
        };
        let report = kfold_cv(&ds, 5, 1, &mut trainer).unwrap();
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.kappa, 1.0);
        assert!(!report.degenerate);
    }

    #[test]
    fn nested_subsets_are_balanced_and_nested() {
        let ds = balanced_dataset(200);
        let sizes = [20, 50, 120];
        let subsets = balanced_nested_subsets(&ds, &sizes, 13).unwrap();
        for (subset, &size) in subsets.iter().zip(&sizes) {
            assert_eq!(subset.len(), size);
            let pos = subset
                .iter()
                .filter(|&&i| ds.statements[i].label == Label::Eligible)
                .count();
            let neg = size - pos;
            assert!(pos.abs_diff(neg) <= 1, "subset of {size} split {pos}/{neg}");
        }
        let small: HashSet<usize> = subsets[0].iter().copied().collect();
        let mid: HashSet<usize> = subsets[1].iter().copied().collect();
        let large: HashSet<usize> = subsets[2].iter().copied().collect();
        assert!(small.is_subset(&mid));
        assert!(mid.is_subset(&large));

        assert!(balanced_nested_subsets(&ds, &[500], 13).is_err());
    }

    #[test]
    fn learning_curve_memorizer_trains_to_one() {
        let ds = balanced_dataset(120);
        let mut trainer = |train: &Dataset| -> crate::error::Result<_> {
            let table: std::collections::HashMap<String, Label> = train
                .statements
                .iter()
                .map(|s| (s.text.clone(), s.label))
                .collect();
            Ok(move |text: &str| table.get(text).copied().unwrap_or(Label::NotEligible))
        };
        let points = learning_curve(&ds, &[40, 100], 5, 17, &mut trainer).unwrap();
        assert_eq!(points.len(), 2);
        for p in &points {
            assert_eq!(p.train_f1, 1.0, "memorizer must score 1.0 on its own folds");
            assert!(p.val_f1 <= 0.7, "memorizer cannot generalize to unseen texts");
        }
    }

    #[test]
    fn curve_tsv_round_trips_through_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.tsv");
        let points = vec![
            CurvePoint { size: 100, train_f1: 0.99, val_f1: 0.8, std: 0.05 },
            CurvePoint { size: 1000, train_f1: 0.97, val_f1: 0.9, std: 0.02 },
        ];
        write_curve_tsv(&points, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], "100\t0.99\t0.8\t0.05");
        assert_eq!(rows[1], "1000\t0.97\t0.9\t0.02");
    }

    #[test]
    fn clinical_simulation_scores_cases() {
        let cases = vec![
            ("patient on lapatinib".to_string(), Label::Eligible),
            ("patient on pertuzumab".to_string(), Label::NotEligible),
            ("car t cell lymphoma".to_string(), Label::Eligible),
            ("tcr breast carcinoma".to_string(), Label::NotEligible),
        ];
        // predictor right on 3 of 4
        let report = clinical_simulation(&cases, |text: &str| {
            if text.contains("lapatinib") || text.contains("car") || text.contains("tcr") {
                Label::Eligible
            } else {
                Label::NotEligible
            }
        })
        .unwrap();
        assert!((report.accuracy - 0.75).abs() < 1e-15);
        assert_eq!(report.confusion, ConfusionMatrix::new(2, 1, 0, 1));
        assert!((report.kappa - 0.5).abs() < 1e-12);

        assert!(clinical_simulation(&[], |_: &str| Label::Eligible).is_err());
    }

    #[test]
    fn report_serializes_and_renders() {
        let report = EvaluationReport::from_confusion(ConfusionMatrix::new(40, 5, 10, 45)).unwrap();
        let json = report.to_json().unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.confusion, report.confusion);
        assert!((back.kappa - 0.7).abs() < 1e-12);

        let text = report.render_text();
        assert!(text.contains("precision"));
        assert!(text.contains("kappa"));
        assert!(text.contains("tp=40 fp=5 fn=10 tn=45"));
        // harmonic-mean consistency of the rendered headline metrics
        let f1 = 2.0 * report.precision * report.recall / (report.precision + report.recall);
        assert!((report.f1 - f1).abs() < 1e-15);
    }
}
