//! Unsupervised sleep/wake detection for multimodal wearable recordings.
//!
//! The pipeline summarizes raw sensor streams into fixed epochs, screens out
//! abnormal readings with per-subject adaptive cutoffs, bootstraps an initial
//! labeled segment with a Gaussian hidden Markov model, and then labels the
//! rest of the recording batch by batch with Fisher's linear discriminant,
//! choosing the training window length that maximizes the separability
//! index. Labeled epochs are turned into sleep/wake sessions, per-day
//! features, and marginal predictive models.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptive;
pub mod anomaly;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hmm;
pub mod ingest;
pub mod lda;
pub mod pca;
pub mod pipeline;
pub mod predict;
pub mod sessions;
pub mod signal;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use signal::{Signal, Stat, Variable};

/// Seconds in one day.
pub const DAY_SECONDS: f64 = 86_400.0;
