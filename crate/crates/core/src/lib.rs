//! Sample-split evaluation of experimentation methodologies.
//!
//! A methodology maps a test's estimated impact and its variance to an
//! estimate or a launch decision. Each test is split into a training part,
//! which feeds the methodology, and a validation part, which scores it. The
//! split data can be drawn from a plug-in Gaussian law given only the summary
//! statistics, or by repartitioning simulated unit-level outcomes.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod methodology;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod unit_sim;
pub mod validation;

pub use error::{Error, Result};
pub use estimators::{
    compare, evaluate, ComparisonReport, EvalSettings, PerformanceReport, SamplerKind,
};
pub use methodology::{apply, MethodologyOutput, PlugIn};
pub use model::{
    MethodologySpec, OutputClass, PerformanceMeasure, SplitConfig, SplitPair, TestSummary,
};
