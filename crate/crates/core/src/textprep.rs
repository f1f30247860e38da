//! Criteria-block preprocessing: statement splitting, text normalization,
//! condition/intervention augmentation, labeling, class balancing, and the
//! stratified train/test split.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StudyId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Section {
    Inclusion,
    Exclusion,
    Unspecified,
}

/// One raw statement with the section of the nearest preceding
/// "inclusion criteria" / "exclusion criteria" header.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionedCriterion {
    pub section: Section,
    pub text: String,
    pub study_id: StudyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Eligible,
    NotEligible,
}

impl Label {
    /// Corpus-file tag: `__label__1` for Eligible, `__label__0` for NotEligible.
    pub fn tag(self) -> &'static str {
        match self {
            Label::Eligible => "__label__1",
            Label::NotEligible => "__label__0",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Label> {
        match tag {
            "__label__1" => Some(Label::Eligible),
            "__label__0" => Some(Label::NotEligible),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub study_id: StudyId,
    pub condition: String,
    pub intervention: String,
}

/// One normalized, labeled short clinical statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStatement {
    pub label: Label,
    pub text: String,
    pub provenance: Option<Provenance>,
}

impl LabeledStatement {
    pub fn new(label: Label, text: impl Into<String>) -> Self {
        LabeledStatement {
            label,
            text: text.into(),
            provenance: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub statements: Vec<LabeledStatement>,
}

impl Dataset {
    pub fn new(statements: Vec<LabeledStatement>) -> Self {
        Dataset { statements }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.statements {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    fn count(&self, label: Label) -> usize {
        self.statements.iter().filter(|s| s.label == label).count()
    }
}

// ---------------------------------------------------------------------------
// Statement splitting
// ---------------------------------------------------------------------------

const BULLET_CHARS: [char; 7] = ['-', '–', '—', '*', '•', '·', '◦'];

fn is_header(line: &str) -> Option<Section> {
    let lc = line.to_lowercase();
    // Check exclusion first so "inclusion/exclusion criteria" style lines
    // do not silently fall into the inclusion branch; the more specific
    // exclusion header usually appears alone.
    if lc.contains("exclusion criteria") {
        Some(Section::Exclusion)
    } else if lc.contains("inclusion criteria") {
        Some(Section::Inclusion)
    } else {
        None
    }
}

/// True when a trimmed line opens a new list item. Markers are a bullet
/// character or a short enumerator ("1.", "23)", "a.") followed by
/// whitespace, so "-5 degrees" and "T3.N0.M0" are never split.
fn list_marker_len(line: &str) -> Option<usize> {
    let mut chars = line.char_indices();
    let (_, first) = chars.next()?;
    if BULLET_CHARS.contains(&first) {
        let mut end = first.len_utf8();
        // allow doubled markers like "--" or "- -"
        for (idx, c) in chars {
            if BULLET_CHARS.contains(&c) {
                end = idx + c.len_utf8();
            } else if c.is_whitespace() {
                return Some(idx + c.len_utf8());
            } else {
                return None;
            }
        }
        return if end == line.len() { None } else { Some(end) };
    }
    // enumerators: 1-3 digits or a single ascii letter, then '.' or ')'
    let head_len = if first.is_ascii_digit() {
        line.bytes().take_while(|b| b.is_ascii_digit()).count()
    } else if first.is_ascii_alphabetic() {
        1
    } else {
        return None;
    };
    if head_len == 0 || head_len > 3 {
        return None;
    }
    let rest = &line[head_len..];
    let mut rest_chars = rest.chars();
    match rest_chars.next() {
        Some(p @ ('.' | ')')) => match rest_chars.next() {
            Some(c) if c.is_whitespace() => Some(head_len + p.len_utf8() + 1),
            _ => None,
        },
        _ => None,
    }
}

/// Splits a raw criteria block into sectioned statements.
///
/// Boundaries are bullet markers, list enumerators, and blank lines; plain
/// continuation lines are joined onto the open statement, so dots,
/// semicolons, and hyphens inside medical notations ("T3.N0.M0", "p53;wt",
/// "mutation V600E; exon 15 confirmed") never split a statement. Lines
/// containing "inclusion criteria" / "exclusion criteria" (case-insensitive)
/// set the section for everything below them and are not themselves emitted.
pub fn split_statements(criteria_text: &str, study_id: &StudyId) -> Vec<SectionedCriterion> {
    let mut out = Vec::new();
    let mut section = Section::Unspecified;
    let mut current = String::new();

    let flush = |current: &mut String, section: Section, out: &mut Vec<SectionedCriterion>| {
        let text = current.trim();
        if !text.is_empty() {
            out.push(SectionedCriterion {
                section,
                text: text.to_string(),
                study_id: study_id.clone(),
            });
        }
        current.clear();
    };

    for raw_line in criteria_text.lines() {
        let line = raw_line.trim();
        if line.is_empty() {
            flush(&mut current, section, &mut out);
            continue;
        }
        if let Some(new_section) = is_header(line) {
            flush(&mut current, section, &mut out);
            section = new_section;
            continue;
        }
        if let Some(marker_len) = list_marker_len(line) {
            flush(&mut current, section, &mut out);
            current.push_str(line[marker_len..].trim());
            continue;
        }
        // continuation of the open statement, or the start of a paragraph
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(line);
    }
    flush(&mut current, section, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

fn digit_word(d: char) -> &'static str {
    match d {
        '0' => "zero",
        '1' => "one",
        '2' => "two",
        '3' => "three",
        '4' => "four",
        '5' => "five",
        '6' => "six",
        '7' => "seven",
        '8' => "eight",
        _ => "nine",
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Normalizes one raw statement into the token form used everywhere
/// downstream: lowercase words separated by single spaces, no punctuation,
/// no single-character tokens, stop words kept.
///
/// Rewrites applied while scanning:
/// - comparators: `>=`/`≥` → greater_equal, `<=`/`≤` → less_equal,
///   `>` → greater_than, `<` → less_than, `=` → equal;
/// - `+`/`-`/`−` as signs: postfix after a word ("er+" → "er positive"),
///   prefix before a digit ("-5" → "negative five"); hyphens between word
///   characters are separators ("first-line" → "first line");
/// - standalone numbers digit-wise with spaces ("18" → "one eight",
///   "3.5" → "three point five"); digits embedded in a mixed token expand
///   in place so the token survives as one word ("l4" → "lfour",
///   "v600e" → "vsixzerozeroe");
/// - every other non-word character is a separator.
pub fn normalize(text: &str) -> String {
    let cs: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    let mut i = 0;

    let push_word = |out: &mut String, w: &str| {
        out.push(' ');
        out.push_str(w);
        out.push(' ');
    };

    while i < cs.len() {
        let c = cs[i];
        if is_word_char(c) {
            let start = i;
            while i < cs.len() && is_word_char(cs[i]) {
                i += 1;
            }
            let run = &cs[start..i];
            if run.iter().all(|d| d.is_ascii_digit()) {
                out.push(' ');
                for d in run {
                    out.push_str(digit_word(*d));
                    out.push(' ');
                }
                // decimal continuation: "3.5" → three point five
                while i + 1 < cs.len() && cs[i] == '.' && cs[i + 1].is_ascii_digit() {
                    out.push_str("point ");
                    i += 1;
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        out.push_str(digit_word(cs[i]));
                        out.push(' ');
                        i += 1;
                    }
                }
            } else {
                out.push(' ');
                for d in run {
                    if d.is_ascii_digit() {
                        out.push_str(digit_word(*d));
                    } else {
                        for lc in d.to_lowercase() {
                            out.push(lc);
                        }
                    }
                }
                out.push(' ');
            }
            continue;
        }
        let prev_word = i > 0 && is_word_char(cs[i - 1]);
        let next = cs.get(i + 1).copied();
        match c {
            '>' if next == Some('=') => {
                push_word(&mut out, "greater_equal");
                i += 2;
            }
            '<' if next == Some('=') => {
                push_word(&mut out, "less_equal");
                i += 2;
            }
            '>' => {
                push_word(&mut out, "greater_than");
                i += 1;
            }
            '<' => {
                push_word(&mut out, "less_than");
                i += 1;
            }
            '≥' => {
                push_word(&mut out, "greater_equal");
                i += 1;
            }
            '≤' => {
                push_word(&mut out, "less_equal");
                i += 1;
            }
            '=' => {
                push_word(&mut out, "equal");
                i += 1;
            }
            '+' | '-' | '−' => {
                let next_word = next.is_some_and(is_word_char);
                let next_digit = next.is_some_and(|n| n.is_ascii_digit());
                let word = if c == '+' { "positive" } else { "negative" };
                if prev_word && !next_word {
                    push_word(&mut out, word); // postfix sign: "er+"
                } else if !prev_word && next_digit {
                    push_word(&mut out, word); // prefix sign: "> -5"
                } else {
                    out.push(' '); // hyphenation or stray symbol
                }
                i += 1;
            }
            _ => {
                out.push(' ');
                i += 1;
            }
        }
    }

    let mut result = String::with_capacity(out.len());
    for token in out.split_whitespace() {
        if token.chars().count() >= 2 {
            if !result.is_empty() {
                result.push(' ');
            }
            result.push_str(token);
        }
    }
    result
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentTemplates {
    pub condition: String,
    pub intervention: String,
}

impl Default for AugmentTemplates {
    fn default() -> Self {
        AugmentTemplates {
            condition: "patients diagnosed with".to_string(),
            intervention: "treated with".to_string(),
        }
    }
}

/// Replicates a normalized criterion over the study's condition ×
/// intervention product. Each output text appends a template clause per
/// non-empty element; empty lists contribute one empty element so the
/// criterion itself is never dropped. Returns (text, condition,
/// intervention) triples with the raw provenance strings.
pub fn augment(
    criterion_text: &str,
    conditions: &[String],
    interventions: &[String],
    templates: &AugmentTemplates,
) -> Vec<(String, String, String)> {
    let empty = [String::new()];
    let conds: &[String] = if conditions.is_empty() { &empty } else { conditions };
    let ivs: &[String] = if interventions.is_empty() { &empty } else { interventions };

    let mut out = Vec::with_capacity(conds.len() * ivs.len());
    for cond in conds {
        let cond_norm = normalize(cond);
        for iv in ivs {
            let iv_norm = normalize(iv);
            let mut text = criterion_text.to_string();
            if !cond_norm.is_empty() {
                text.push(' ');
                text.push_str(&templates.condition);
                text.push(' ');
                text.push_str(&cond_norm);
            }
            if !iv_norm.is_empty() {
                text.push(' ');
                text.push_str(&templates.intervention);
                text.push(' ');
                text.push_str(&iv_norm);
            }
            out.push((text, cond.clone(), iv.clone()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

/// Assigns the eligibility label to a normalized statement.
///
/// Exclusion-section statements are NotEligible as-is. Inclusion and
/// Unspecified statements are Eligible, except those whose first token is
/// "no": the negation is dropped and the positive remainder labeled
/// NotEligible. Exclusion statements are never sign-flipped.
pub fn label(section: Section, normalized_text: &str) -> (Label, String) {
    match section {
        Section::Exclusion => (Label::NotEligible, normalized_text.to_string()),
        Section::Inclusion | Section::Unspecified => {
            if let Some(rest) = normalized_text.strip_prefix("no ") {
                (Label::NotEligible, rest.to_string())
            } else if normalized_text == "no" {
                (Label::NotEligible, String::new())
            } else {
                (Label::Eligible, normalized_text.to_string())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Balancing and splitting
// ---------------------------------------------------------------------------

/// Random balanced undersampling: the majority class is sampled down,
/// without replacement, to the minority count. Input order of the kept
/// statements is preserved. Deterministic given the seed.
pub fn balance(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let n_pos = dataset.count(Label::Eligible);
    let n_neg = dataset.count(Label::NotEligible);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(format!(
            "balance requires both classes; got {n_pos} Eligible / {n_neg} NotEligible"
        )));
    }
    let (majority, keep) = if n_pos > n_neg {
        (Label::Eligible, n_neg)
    } else {
        (Label::NotEligible, n_pos)
    };

    let majority_idx: Vec<usize> = dataset
        .statements
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == majority)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = majority_idx.clone();
    shuffled.shuffle(&mut rng);
    let kept: std::collections::HashSet<usize> = shuffled.into_iter().take(keep).collect();

    let statements = dataset
        .statements
        .iter()
        .enumerate()
        .filter(|(i, s)| s.label != majority || kept.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Ok(Dataset::new(statements))
}

/// Stratified shuffled split. Per class, `test_fraction` of the samples
/// (rounded) go to the test side; both sides are then shuffled.
pub fn split_train_test(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0, 1); got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in [Label::Eligible, Label::NotEligible] {
        let mut idx: Vec<usize> = dataset
            .statements
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);
    let pick = |idx: &[usize]| Dataset::new(idx.iter().map(|&i| dataset.statements[i].clone()).collect());
    Ok((pick(&train_idx), pick(&test_idx)))
}

// ---------------------------------------------------------------------------
// Corpus file format
// ---------------------------------------------------------------------------

/// Writes the labeled corpus: one `__label__{0,1} <text>` record per line.
pub fn write_corpus<W: Write>(mut w: W, statements: &[LabeledStatement]) -> std::io::Result<()> {
    for s in statements {
        writeln!(w, "{} {}", s.label.tag(), s.text)?;
    }
    Ok(())
}

/// Reads a `__label__` corpus file. Provenance is not carried by this
/// format; see [`write_sidecar`].
pub fn read_corpus<R: BufRead>(r: R, path: &Path) -> Result<Dataset> {
    let mut statements = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (tag, text) = line.split_once(' ').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: "expected `__label__X <text>`".into(),
        })?;
        let label = Label::from_tag(tag).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("unknown label tag {tag:?}"),
        })?;
        statements.push(LabeledStatement::new(label, text));
    }
    Ok(Dataset::new(statements))
}

/// Writes the provenance sidecar, row-aligned with the corpus file:
/// `study_id<TAB>condition<TAB>intervention`.
pub fn write_sidecar<W: Write>(mut w: W, statements: &[LabeledStatement]) -> std::io::Result<()> {
    for s in statements {
        match &s.provenance {
            Some(p) => writeln!(w, "{}\t{}\t{}", p.study_id, p.condition, p.intervention)?,
            None => writeln!(w, "\t\t")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid() -> StudyId {
        StudyId::new("NCT00000001").unwrap()
    }

    #[test]
    fn split_assigns_sections_from_headers() {
        let block = "Inclusion Criteria:\n- Age over 18\n- ECOG 0-1\nExclusion Criteria:\n- Prior chemotherapy";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts.len(), 3);
        assert_eq!(stmts[0].section, Section::Inclusion);
        assert_eq!(stmts[0].text, "Age over 18");
        assert_eq!(stmts[1].section, Section::Inclusion);
        assert_eq!(stmts[1].text, "ECOG 0-1");
        assert_eq!(stmts[2].section, Section::Exclusion);
        assert_eq!(stmts[2].text, "Prior chemotherapy");
    }

    #[test]
    fn split_without_headers_is_unspecified() {
        let block = "- one\n- two\n- three";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts.len(), 3);
        assert!(stmts.iter().all(|s| s.section == Section::Unspecified));
    }

    #[test]
    fn split_does_not_break_medical_notation() {
        let block = "- mutation V600E; exon 15 confirmed\n- staging T3.N0.M0 required";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts.len(), 2);
        assert_eq!(stmts[0].text, "mutation V600E; exon 15 confirmed");
        assert_eq!(stmts[1].text, "staging T3.N0.M0 required");
    }

    #[test]
    fn split_joins_wrapped_lines_and_blank_line_separates() {
        let block = "Inclusion Criteria:\n\n  - Histologically confirmed\n    solid tumor\n\n  Paragraph statement one.\n\n  Paragraph statement two.";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts.len(), 3);
        assert_eq!(stmts[0].text, "Histologically confirmed solid tumor");
        assert_eq!(stmts[1].text, "Paragraph statement one.");
    }

    #[test]
    fn split_handles_enumerators() {
        let block = "1. first item\n2) second item\na. lettered item\n1.8 is not an enumerator";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts[0].text, "first item");
        assert_eq!(stmts[1].text, "second item");
        assert_eq!(stmts[2].text, "lettered item 1.8 is not an enumerator");
    }

    #[test]
    fn split_negative_number_is_not_a_bullet() {
        let block = "- temperature range\n-5 to 40 degrees";
        let stmts = split_statements(block, &sid());
        assert_eq!(stmts.len(), 1);
        assert_eq!(stmts[0].text, "temperature range -5 to 40 degrees");
    }

    #[test]
    fn split_empty_input() {
        assert!(split_statements("", &sid()).is_empty());
        assert!(split_statements("\n\n  \n", &sid()).is_empty());
    }

    #[test]
    fn normalize_strips_punctuation() {
        assert_eq!(normalize("No prior chemotherapy."), "no prior chemotherapy");
    }

    #[test]
    fn normalize_rewrites_comparators_and_numbers() {
        assert_eq!(normalize("Age > 18 years"), "age greater_than one eight years");
        assert_eq!(normalize("Age >= 18"), "age greater_equal one eight");
        assert_eq!(normalize("dose <= 3.5 mg"), "dose less_equal three point five mg");
        assert_eq!(normalize("ECOG = 1"), "ecog equal one");
        assert_eq!(normalize("T < 37"), "less_than three seven");
    }

    #[test]
    fn normalize_rewrites_signs() {
        assert_eq!(normalize("ER+ tumor"), "er positive tumor");
        assert_eq!(normalize("HER2- status"), "hertwo negative status");
        assert_eq!(normalize("> -5"), "greater_than negative five");
    }

    #[test]
    fn normalize_hyphen_between_words_is_separator() {
        assert_eq!(normalize("first-line therapy"), "first line therapy");
        assert_eq!(normalize("ECOG 0-1"), "ecog zero one");
    }

    #[test]
    fn normalize_embedded_digits_expand_in_place() {
        assert_eq!(normalize("L4 vertebra"), "lfour vertebra");
        assert_eq!(normalize("V600E mutation"), "vsixzerozeroe mutation");
    }

    #[test]
    fn normalize_drops_single_char_words_keeps_stop_words() {
        assert_eq!(normalize("a dose of 5 x per day"), "dose of five per day");
        assert_eq!(normalize("on or and the"), "on or and the");
    }

    #[test]
    fn normalize_is_idempotent_on_output() {
        for text in [
            "Age > 18 years",
            "ER+ tumor; HER2- excluded",
            "dose 3.5 mg/kg, first-line",
        ] {
            let once = normalize(text);
            assert_eq!(normalize(&once), once);
        }
    }

    #[test]
    fn augment_is_cartesian() {
        let tpl = AugmentTemplates::default();
        let conds = vec!["breast cancer".to_string(), "lung cancer".to_string()];
        let ivs = vec!["a".into(), "b".into(), "c".into()];
        let out = augment("prior chemotherapy", &conds, &ivs, &tpl);
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn augment_empty_lists_keep_criterion() {
        let tpl = AugmentTemplates::default();
        let out = augment("prior chemotherapy", &[], &[], &tpl);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "prior chemotherapy");
    }

    #[test]
    fn augment_appends_condition_clause() {
        let tpl = AugmentTemplates::default();
        let out = augment(
            "prior chemotherapy",
            &["breast cancer".to_string()],
            &[],
            &tpl,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "prior chemotherapy patients diagnosed with breast cancer");
        assert!(out[0].0.ends_with("patients diagnosed with breast cancer"));
    }

    #[test]
    fn augment_appends_both_clauses_in_order() {
        let tpl = AugmentTemplates::default();
        let out = augment(
            "no prior therapy",
            &["Breast Neoplasms".to_string()],
            &["Tamoxifen".to_string()],
            &tpl,
        );
        assert_eq!(
            out[0].0,
            "no prior therapy patients diagnosed with breast neoplasms treated with tamoxifen"
        );
        assert_eq!(out[0].1, "Breast Neoplasms");
        assert_eq!(out[0].2, "Tamoxifen");
    }

    #[test]
    fn label_rules() {
        assert_eq!(
            label(Section::Inclusion, "no prior chemotherapy"),
            (Label::NotEligible, "prior chemotherapy".to_string())
        );
        assert_eq!(
            label(Section::Exclusion, "pregnancy"),
            (Label::NotEligible, "pregnancy".to_string())
        );
        assert_eq!(
            label(Section::Unspecified, "histologically confirmed melanoma"),
            (Label::Eligible, "histologically confirmed melanoma".to_string())
        );
        // exclusion statements are never sign-flipped
        assert_eq!(
            label(Section::Exclusion, "no prior chemotherapy"),
            (Label::NotEligible, "no prior chemotherapy".to_string())
        );
    }

    fn toy_dataset(n_pos: usize, n_neg: usize) -> Dataset {
        let mut v = Vec::new();
        for i in 0..n_pos {
            v.push(LabeledStatement::new(Label::Eligible, format!("pos {i}")));
        }
        for i in 0..n_neg {
            v.push(LabeledStatement::new(Label::NotEligible, format!("neg {i}")));
        }
        Dataset::new(v)
    }

    #[test]
    fn balance_undersamples_majority() {
        let ds = toy_dataset(100, 40);
        let balanced = balance(&ds, 7).unwrap();
        let counts = balanced.class_counts();
        assert_eq!(counts[&Label::Eligible], 40);
        assert_eq!(counts[&Label::NotEligible], 40);
        // determinism
        let again = balance(&ds, 7).unwrap();
        assert_eq!(balanced, again);
        let other = balance(&ds, 8).unwrap();
        assert_ne!(balanced, other);
    }

    #[test]
    fn balance_keeps_already_balanced() {
        let ds = toy_dataset(10, 10);
        let balanced = balance(&ds, 1).unwrap();
        assert_eq!(balanced, ds);
    }

    #[test]
    fn balance_rejects_single_class() {
        let ds = toy_dataset(5, 0);
        assert!(balance(&ds, 1).is_err());
    }

    #[test]
    fn split_train_test_is_stratified() {
        let ds = toy_dataset(500, 500);
        let (train, test) = split_train_test(&ds, 0.2, 3).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        assert_eq!(test.class_counts()[&Label::Eligible], 100);
        assert_eq!(train.class_counts()[&Label::NotEligible], 400);
    }

    #[test]
    fn split_train_test_partition_and_determinism() {
        let ds = toy_dataset(30, 20);
        let (train, test) = split_train_test(&ds, 0.2, 11).unwrap();
        let mut all: Vec<&str> = train
            .statements
            .iter()
            .chain(test.statements.iter())
            .map(|s| s.text.as_str())
            .collect();
        all.sort_unstable();
        let mut orig: Vec<&str> = ds.statements.iter().map(|s| s.text.as_str()).collect();
        orig.sort_unstable();
        assert_eq!(all, orig);

        let (train2, test2) = split_train_test(&ds, 0.2, 11).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_train_test_rejects_bad_fraction() {
        let ds = toy_dataset(4, 4);
        assert!(split_train_test(&ds, 0.0, 1).is_err());
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let stmts = vec![
            LabeledStatement::new(Label::Eligible, "age greater_than one eight"),
            LabeledStatement::new(Label::NotEligible, "prior chemotherapy"),
        ];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &stmts).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf),
            "__label__1 age greater_than one eight\n__label__0 prior chemotherapy\n"
        );
        let ds = read_corpus(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(ds.statements.len(), 2);
        assert_eq!(ds.statements[0].label, Label::Eligible);
        assert_eq!(ds.statements[1].text, "prior chemotherapy");
    }

    #[test]
    fn corpus_rejects_bad_tag() {
        let bad = b"__label__2 something\n";
        assert!(read_corpus(&bad[..], Path::new("mem")).is_err());
    }
}
