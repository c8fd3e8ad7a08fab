//! Sharia-compliance screening of cryptocurrencies from binary project
//! features: dataset handling, website text preprocessing, keyword feature
//! extraction, three linear classifiers, cross-validated evaluation, a
//! metadata/website client and a provenance-aware ruling store.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod featurex;
pub mod learners;
pub mod market;
pub mod pipeline;
pub mod rulestore;
pub mod textprep;

pub use corpus::{CoinRecord, Dataset, Ticker};
pub use features::{FeatureId, FeatureVector, Label, Priority, Provenance, FEATURE_COUNT};
pub use eval::EvaluationReport;
pub use featurex::{Explanation, Lexicon};
pub use learners::{ModelKind, Prediction, TrainedModel};
pub use pipeline::ClassifyResponse;
pub use rulestore::RulingEntry;
