//! Approximately metric-fair learning: fairness audits, generalization
//! bounds, fairness-constrained learners and a hardness construction.

pub mod audit;
pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod hardness;
pub mod learners;
pub mod metric;
pub mod predictor;
pub mod rng;
pub mod solver;
pub mod synth;

pub use audit::{FairnessParams, FairnessReport};
pub use data::{build_matching, Example, ExampleSource, LabeledDataset, Matching, MatchingStrategy};
pub use error::{PacfError, Result};
pub use metric::SimilarityMetric;
pub use predictor::{KernelSpec, Predictor};

pub use nalgebra;
