//! Adaptive question selection by expected information gain.
//!
//! The crate is organised around a small number of layers:
//!
//! * [`distribution`] — categorical distributions and entropy math, generic
//!   over the scalar type.
//! * [`types`] — questions, answers, histories, hypotheses and belief sets.
//! * [`backend`] — the language-model abstraction, with an OpenAI-compatible
//!   remote implementation and an exact tabular model for testing.
//! * [`belief`] — the sample-then-filter belief updater.
//! * [`acquisition`] — question scoring and selection.
//! * [`controller`] — the turn loop.
//! * [`harness`] — datasets, benchmark runs and metrics.

pub mod acquisition;
pub mod backend;
pub mod belief;
pub mod controller;
pub mod distribution;
pub mod fixtures;
pub mod harness;
pub mod scalar;
pub mod text;
pub mod types;

pub use distribution::CategoricalDistribution;
pub use scalar::Probability;

/// Double-precision categorical distribution used throughout the
/// non-numeric layers.
pub type Distribution = CategoricalDistribution<f64>;
/// Single-precision categorical distribution.
pub type DistributionF32 = CategoricalDistribution<f32>;
