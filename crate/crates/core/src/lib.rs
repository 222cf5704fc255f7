//! Place-name provenance scoring.
//!
//! Names are cleaned to the 26-letter Latin alphabet ([`corpus`]), broken
//! into a fixed 263-slot letter-placement vector ([`features`]), and scored
//! by England-vs-Other random forests ([`forest`]) trained on SMOTE-ENN
//! balanced folds ([`resample`]) under stratified cross-validation
//! ([`pipeline`]). [`stats`] and [`report`] turn the out-of-fold scores into
//! rankings, accuracy tables, correlation matrices and significance tests.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod forest;
pub mod pipeline;
pub mod report;
pub mod resample;
pub mod seed;
pub mod stats;
pub mod synth;

pub use corpus::{CleanCorpus, Country, PlaceName, RawEntry};
pub use dataset::{LabeledDataset, Matrix};
pub use error::{Error, Result};
pub use features::{FeatureSchema, FeatureVector};
pub use forest::{ForestConfig, ForestModel};
pub use pipeline::{PairMetrics, ScoreTable};
pub use resample::{ResampleConfig, ResampledSet};
