//! Duplicate bug-report retrieval.
//!
//! The engine runs four stages over a bug tracker corpus:
//!
//! 1. [`preprocess`] turns raw reports into feature-token documents, pulling stack
//!    traces and characteristic fields into the summary.
//! 2. [`vectorize`] fits a weighted heterogeneous feature space (TF-IDF summary and
//!    description, one-hot component, dictionary-vectorized platform).
//! 3. [`nominate`] answers exact k-nearest-neighbor queries over original reports,
//!    merged with a cache of recently submitted uniques.
//! 4. [`rerank`] trains a pair classifier and suppresses nominees it judges distinct.
//!
//! [`metrics`] scores retrieval runs with recall@n and position histograms, and
//! [`pipeline`] bundles the trained stages into a saveable artifact set.

pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod nominate;
pub mod pipeline;
pub mod preprocess;
pub mod rerank;
pub mod vectorize;

pub use config::Config;
pub use corpus::{BugReport, ReportCollection, SplitSpec};
pub use error::{Error, Result};
pub use nominate::{NeighborIndex, Nomination, RecentCache};
pub use pipeline::Pipeline;
pub use preprocess::{Preprocessor, ProcessedReport};
pub use vectorize::{FeatureSpace, SparseVector};
