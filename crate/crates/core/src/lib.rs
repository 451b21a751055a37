//! Cluster-partitioned biometric identification over ECG fiducial features.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`feature`]: ingest a gallery CSV, fill missing cells, fuse repeated
//!    enrollments, round, and z-score.
//! 2. [`clustering`]: seeded k-means++ / Lloyd over the preprocessed gallery.
//! 3. [`partition`]: write one CSV per cluster plus a checksummed manifest.
//! 4. [`matcher`]: PRD / cross-correlation confidence matching.
//! 5. [`bench`]: time clustered identification against a serial scan and
//!    assemble per-K decision rows, which [`selection`] scores.

pub mod bench;
pub mod clustering;
mod error;
pub mod feature;
pub mod matcher;
pub mod partition;
pub mod selection;

pub use error::{Error, Result};
pub use feature::{FeatureVector, RawRecord, ScalingStats, SubjectRecord, DIM, FEATURE_NAMES};
