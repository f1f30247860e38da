//! Building blocks for learning trial eligibility from registry protocols:
//! corpus extraction and preprocessing, bigram collocations, word embeddings
//! with negative sampling, four text classifiers, and the evaluation and
//! embedding-analysis harness.

pub mod analyze;
pub mod classify;
pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod phrases;
pub mod pipeline;
pub mod seed;
pub mod textprep;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::ClassifierKind;
pub use textprep::{Dataset, LabeledStatement, Label};
