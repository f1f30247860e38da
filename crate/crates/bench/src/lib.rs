//! Shared fixtures for the criterion benchmarks.

use eligibility_core::{Dataset, Label, LabeledStatement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FINDINGS: &[&str] = &[
    "adequate bone marrow function",
    "measurable disease by imaging",
    "prior chemotherapy within six months",
    "known brain metastasis at screening",
    "impaired cardiac ejection fraction",
    "active autoimmune disease requiring steroids",
    "adequate renal and hepatic function",
    "uncontrolled hypertension or arrhythmia",
];

const DISEASES: &[&str] = &[
    "breast cancer",
    "prostate cancer",
    "non small cell lung cancer",
    "melanoma",
    "diffuse large cell lymphoma",
    "ovarian cancer",
    "colorectal cancer",
    "renal cell carcinoma",
];

const DRUGS: &[&str] = &[
    "tamoxifen",
    "cisplatin",
    "erlotinib",
    "rituximab",
    "paclitaxel",
    "letrozole",
    "trastuzumab",
    "docetaxel",
];

/// A raw criteria line as it appears in registry export text, before any
/// normalization.
pub const RAW_CRITERION: &str = "  - Age 18 years or older; ECOG performance \
     status 0-2 and no more than 3 prior lines of chemotherapy, with adequate \
     bone marrow function (ANC 1500/mm3, platelets 100000/mm3) at screening.";

/// Deterministic statement collection shaped like the augmented corpus:
/// finding + condition + intervention, already normalized.
pub fn synthetic_corpus(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            format!(
                "{} patients diagnosed with {} treated with {}",
                FINDINGS[i % FINDINGS.len()],
                DISEASES[(i / 2) % DISEASES.len()],
                DRUGS[(i / 3) % DRUGS.len()],
            )
        })
        .collect()
}

/// Balanced labeled dataset over the same statement shapes.
pub fn synthetic_dataset(n: usize) -> Dataset {
    let statements = synthetic_corpus(n)
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            let label = if i % 2 == 0 { Label::Eligible } else { Label::NotEligible };
            LabeledStatement::new(label, text)
        })
        .collect();
    Dataset::new(statements)
}

/// Uniform random vectors in [-1, 1), reproducible from the seed.
pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}
