//! Corpus enrichment workbench: sampling, annotation, n-gram classifiers,
//! name-based demographics and cross-tabulated reports.

pub mod analysis;
pub mod annotation;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod enrichment;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod sampling;
pub mod synthetic;
pub mod text;
pub mod util;

pub use error::{Error, Result};
