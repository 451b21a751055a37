//! Feature vectors, gallery records, and the preprocessing chain.
//!
//! Preprocessing is applied in a fixed order: [`fill_missing`] →
//! [`fuse_enrollments`] → [`round_features`] → [`zscore_fit`] /
//! [`zscore_apply`]. [`preprocess`] runs the whole chain.
//!
//! Scaling statistics are fitted on the gallery once and reused, unchanged,
//! for every probe vector at identification time.

mod io;
mod synth;

use std::collections::HashMap;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use self::io::{
    load_gallery_csv, load_subjects_csv, parse_gallery, parse_subjects, read_stats,
    subjects_to_csv, write_gallery_csv, write_stats, write_subjects_csv, GALLERY_HEADER,
};
pub use self::synth::synth_gallery;

/// Number of fiducial features per vector.
pub const DIM: usize = 9;

/// Column names, in storage order.
pub const FEATURE_NAMES: [&str; DIM] = [
    "rr", "pr", "qrs", "qt", "qtc", "p_axis", "qrs_axis", "t_axis", "acci",
];

/// A complete 9-component fiducial feature vector.
///
/// Components are raw units (ms, degrees, index units) before scaling and
/// dimensionless after.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct FeatureVector([f64; DIM]);

impl FeatureVector {
    pub const ZERO: FeatureVector = FeatureVector([0.0; DIM]);

    /// Builds a vector, rejecting non-finite components.
    pub fn try_new(values: [f64; DIM]) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature `{}` is not finite: {}",
                FEATURE_NAMES[j], values[j]
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; DIM] = values.try_into().map_err(|_| {
            Error::InvalidArgument(format!("expected {DIM} components, got {}", values.len()))
        })?;
        Self::try_new(arr)
    }

    #[inline]
    pub fn values(&self) -> &[f64; DIM] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> FeatureVector {
        let mut out = [0.0; DIM];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = f(j, self.0[j]);
        }
        FeatureVector(out)
    }

    #[inline]
    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    #[inline]
    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.squared_distance(other).sqrt()
    }

    #[inline]
    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }
}

impl From<[f64; DIM]> for FeatureVector {
    fn from(values: [f64; DIM]) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        FeatureVector(values)
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A gallery row as read from disk: any feature slot may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub subject_id: String,
    pub features: [Option<f64>; DIM],
}

impl RawRecord {
    pub fn new(subject_id: impl Into<String>, features: [Option<f64>; DIM]) -> Self {
        RawRecord {
            subject_id: subject_id.into(),
            features,
        }
    }

    pub fn complete(subject_id: impl Into<String>, vector: &FeatureVector) -> Self {
        RawRecord::new(subject_id, vector.0.map(Some))
    }

    /// The vector, if no slot is absent.
    pub fn vector(&self) -> Option<FeatureVector> {
        let mut out = [0.0; DIM];
        for (slot, v) in out.iter_mut().zip(self.features.iter()) {
            *slot = (*v)?;
        }
        Some(FeatureVector(out))
    }
}

/// One enrolled subject: the gallery element.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub vector: FeatureVector,
}

impl SubjectRecord {
    pub fn new(subject_id: impl Into<String>, vector: impl Into<FeatureVector>) -> Self {
        SubjectRecord {
            subject_id: subject_id.into(),
            vector: vector.into(),
        }
    }
}

/// Per-feature population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub mean: [f64; DIM],
    pub stddev: [f64; DIM],
}

impl ScalingStats {
    /// Maps a standard score back to the original units. Components with
    /// zero deviation map back to the mean.
    pub fn invert(&self, z: &FeatureVector) -> FeatureVector {
        z.map(|j, v| v * self.stddev[j] + self.mean[j])
    }
}

/// Replaces every absent slot with 0.0.
pub fn fill_missing(records: &[RawRecord]) -> Vec<RawRecord> {
    records
        .iter()
        .map(|r| RawRecord {
            subject_id: r.subject_id.clone(),
            features: r.features.map(|v| Some(v.unwrap_or(0.0))),
        })
        .collect()
}

/// Collapses repeated enrollments into one record per subject holding the
/// component-wise mean. Output follows first-appearance order.
///
/// Records must be complete; run [`fill_missing`] first.
pub fn fuse_enrollments(records: &[RawRecord]) -> Result<Vec<SubjectRecord>> {
    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    let mut acc: Vec<(&str, [f64; DIM], usize)> = Vec::new();

    for (i, rec) in records.iter().enumerate() {
        let v = rec.vector().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "record {i} (`{}`) has absent features; fill them first",
                rec.subject_id
            ))
        })?;
        let idx = *slot_of.entry(rec.subject_id.as_str()).or_insert_with(|| {
            acc.push((rec.subject_id.as_str(), [0.0; DIM], 0));
            acc.len() - 1
        });
        let entry = &mut acc[idx];
        for (s, x) in entry.1.iter_mut().zip(v.iter()) {
            *s += x;
        }
        entry.2 += 1;
    }

    Ok(acc
        .into_iter()
        .map(|(id, sum, n)| SubjectRecord::new(id, sum.map(|s| s / n as f64)))
        .collect())
}

/// Rounds every component to the nearest integer, halves away from zero.
pub fn round_features(records: &[SubjectRecord]) -> Vec<SubjectRecord> {
    records
        .iter()
        .map(|r| SubjectRecord {
            subject_id: r.subject_id.clone(),
            vector: r.vector.map(|_, v| v.round()),
        })
        .collect()
}

/// Fits population (divide-by-n) mean and standard deviation per feature.
pub fn zscore_fit(records: &[SubjectRecord]) -> Result<ScalingStats> {
    if records.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let n = records.len() as f64;
    let mut mean = [0.0; DIM];
    for r in records {
        for (m, x) in mean.iter_mut().zip(r.vector.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let mut var = [0.0; DIM];
    for r in records {
        for j in 0..DIM {
            let d = r.vector[j] - mean[j];
            var[j] += d * d;
        }
    }
    Ok(ScalingStats {
        mean,
        stddev: var.map(|v| (v / n).sqrt()),
    })
}

/// Standard score per component. Zero-deviation features map to 0.
pub fn zscore_apply(vector: &FeatureVector, stats: &ScalingStats) -> FeatureVector {
    vector.map(|j, x| {
        let sd = stats.stddev[j];
        if sd > 0.0 {
            (x - stats.mean[j]) / sd
        } else {
            0.0
        }
    })
}

/// Applies [`zscore_apply`] to every record.
pub fn standardize(records: &[SubjectRecord], stats: &ScalingStats) -> Vec<SubjectRecord> {
    records
        .iter()
        .map(|r| SubjectRecord {
            subject_id: r.subject_id.clone(),
            vector: zscore_apply(&r.vector, stats),
        })
        .collect()
}

/// Runs the full chain on a raw gallery and returns the scaled gallery with
/// the statistics it was scaled by.
pub fn preprocess(records: &[RawRecord]) -> Result<(Vec<SubjectRecord>, ScalingStats)> {
    let filled = fill_missing(records);
    let fused = fuse_enrollments(&filled)?;
    let rounded = round_features(&fused);
    let stats = zscore_fit(&rounded)?;
    Ok((standardize(&rounded, &stats), stats))
}

/// Prepares a raw probe for matching against a gallery scaled by `stats`:
/// absent slots become 0, components are rounded, then scaled.
pub fn prepare_probe(features: &[Option<f64>; DIM], stats: &ScalingStats) -> FeatureVector {
    let filled = FeatureVector(features.map(|v| v.unwrap_or(0.0).round()));
    zscore_apply(&filled, stats)
}
