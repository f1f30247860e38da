//! Registry study ingestion: parse one-study-per-file XML exports, pull out
//! the identifier, condition, intervention and eligibility fields, and keep
//! only oncology studies.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::bufread::GzDecoder;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Registry identifier: "NCT" followed by 8 decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StudyId(String);

impl StudyId {
    pub fn new(id: &str) -> Result<Self> {
        let ok = id.len() == 11
            && id.starts_with("NCT")
            && id[3..].bytes().all(|b| b.is_ascii_digit());
        if ok {
            Ok(StudyId(id.to_string()))
        } else {
            Err(Error::Schema(format!(
                "study id {id:?} does not match NCT########"
            )))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for StudyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// One study as extracted from its XML file. `criteria_text` is the raw
/// eligibility text block, preserved byte-for-byte; normalization happens
/// downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStudy {
    pub study_id: StudyId,
    pub conditions: Vec<String>,
    pub interventions: Vec<String>,
    pub criteria_text: String,
}

const ONCOLOGY_MARKERS: [&str; 4] = ["cancer", "neoplasm", "oma", "tumor"];

/// True iff any condition mentions an oncology token or suffix.
///
/// Default mode is case-insensitive substring containment over the whole
/// condition string, which covers both whole tokens ("cancer") and suffixes
/// ("glioblastoma"). Containment admits false positives such as "stomach"
/// (contains "oma"); `strict_tokens` instead requires a whole word to equal
/// or end with one of the markers.
pub fn filter_oncology(study: &RawStudy) -> bool {
    filter_oncology_with(study, false)
}

pub fn filter_oncology_with(study: &RawStudy, strict_tokens: bool) -> bool {
    study.conditions.iter().any(|c| {
        let lc = c.to_lowercase();
        if strict_tokens {
            lc.split(|ch: char| !ch.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .any(|t| ONCOLOGY_MARKERS.iter().any(|m| t == *m || t.ends_with(m)))
        } else {
            ONCOLOGY_MARKERS.iter().any(|m| lc.contains(m))
        }
    })
}

/// Parses one registry study XML document.
///
/// Extracts the study id, every condition element, every intervention name,
/// and the eligibility criteria text block. Missing optional fields yield
/// empty lists / an empty string; a missing study id is a schema error.
pub fn parse_study<R: BufRead>(input: R) -> Result<RawStudy> {
    let mut reader = Reader::from_reader(input);
    // Criteria text must survive byte-for-byte; never trim around text events.
    reader.trim_text(false);

    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();

    let mut study_id: Option<String> = None;
    let mut conditions = Vec::new();
    let mut interventions = Vec::new();
    let mut criteria_text = String::new();

    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| Error::XmlParse {
            offset: reader.buffer_position() as u64,
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                path.push(name);
            }
            Event::End(_) => {
                path.pop();
            }
            Event::Text(ref t) => {
                let text = t.unescape().map_err(|e| Error::XmlParse {
                    offset: reader.buffer_position() as u64,
                    message: e.to_string(),
                })?;
                match path_tail(&path) {
                    ("id_info", "nct_id") => {
                        let trimmed = text.trim();
                        if !trimmed.is_empty() {
                            study_id = Some(trimmed.to_string());
                        }
                    }
                    (_, "condition") if path.len() == 2 => {
                        let trimmed = text.trim();
                        if !trimmed.is_empty() {
                            conditions.push(trimmed.to_string());
                        }
                    }
                    ("intervention", "intervention_name") => {
                        let trimmed = text.trim();
                        if !trimmed.is_empty() {
                            interventions.push(trimmed.to_string());
                        }
                    }
                    ("criteria", "textblock") if path_contains(&path, "eligibility") => {
                        criteria_text.push_str(&text);
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    let id = study_id.ok_or_else(|| Error::Schema("missing id_info/nct_id element".into()))?;
    Ok(RawStudy {
        study_id: StudyId::new(&id)?,
        conditions,
        interventions,
        criteria_text,
    })
}

fn path_tail(path: &[String]) -> (&str, &str) {
    match path {
        [.., parent, leaf] => (parent.as_str(), leaf.as_str()),
        [leaf] => ("", leaf.as_str()),
        [] => ("", ""),
    }
}

fn path_contains(path: &[String], name: &str) -> bool {
    path.iter().any(|p| p == name)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub parsed: usize,
    pub filtered_out: usize,
    pub failed: usize,
    /// Per-file failure messages; failures never abort the stream.
    pub failures: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Match oncology markers on word boundaries instead of raw containment.
    pub strict_tokens: bool,
    /// Buffer and sort the output by study id for reproducible merges.
    pub sort_by_id: bool,
}

/// Streams oncology studies out of a directory of `.xml` / `.xml.gz` files.
/// Files are visited in sorted filename order; per-file failures are counted
/// and recorded, never fatal.
pub struct RegistryReader {
    files: std::vec::IntoIter<PathBuf>,
    strict_tokens: bool,
    summary: IngestSummary,
}

impl RegistryReader {
    pub fn open(source: &Path, opts: &IngestOptions) -> Result<Self> {
        let entries = std::fs::read_dir(source).map_err(|e| Error::io(source, e))?;
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(source, e))?;
            let p = entry.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".xml") || name.ends_with(".xml.gz") {
                files.push(p);
            }
        }
        files.sort();
        Ok(RegistryReader {
            files: files.into_iter(),
            strict_tokens: opts.strict_tokens,
            summary: IngestSummary::default(),
        })
    }

    /// Counts accumulated so far; complete once the iterator is exhausted.
    pub fn summary(&self) -> &IngestSummary {
        &self.summary
    }

    pub fn into_summary(self) -> IngestSummary {
        self.summary
    }

    fn parse_file(path: &Path) -> Result<RawStudy> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let buf = BufReader::new(file);
        if path.extension().is_some_and(|e| e == "gz") {
            parse_study(BufReader::new(GzDecoder::new(buf)))
        } else {
            parse_study(buf)
        }
    }
}

impl Iterator for RegistryReader {
    type Item = RawStudy;

    fn next(&mut self) -> Option<RawStudy> {
        for path in self.files.by_ref() {
            match Self::parse_file(&path) {
                Ok(study) => {
                    self.summary.parsed += 1;
                    if filter_oncology_with(&study, self.strict_tokens) {
                        return Some(study);
                    }
                    self.summary.filtered_out += 1;
                }
                Err(e) => {
                    self.summary.failed += 1;
                    self.summary.failures.push((path, e.to_string()));
                }
            }
        }
        None
    }
}

/// Reads the whole source eagerly and returns the studies together with the
/// run summary. Order is by study id when requested, else by filename.
pub fn ingest_registry(source: &Path, opts: &IngestOptions) -> Result<(Vec<RawStudy>, IngestSummary)> {
    let mut reader = RegistryReader::open(source, opts)?;
    let mut studies: Vec<RawStudy> = reader.by_ref().collect();
    if opts.sort_by_id {
        studies.sort_by(|a, b| a.study_id.cmp(&b.study_id));
    }
    Ok((studies, reader.into_summary()))
}

/// Reads a single `__label__` corpus line back into a `Read`-based stream.
/// Helper for gz-or-plain transparent opening of corpus files.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(file))
    }
}
