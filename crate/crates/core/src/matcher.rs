//! Template matching by percentage RMS difference (PRD) and normalized
//! cross-correlation (CC), fused into a confidence score.
//!
//! A candidate qualifies when `prd <= prd_max` and `cc >= cc_min`; the
//! qualifying candidate with the highest confidence is the hit.
//!
//! CC is the normalized inner product `Σx·f / sqrt(Σx² · Σf²)`, bounded to
//! [-1, 1].

use crate::feature::{FeatureVector, SubjectRecord};
use crate::{Error, Result};

pub const DEFAULT_PRD_MAX: f64 = 14.0;
pub const DEFAULT_CC_MIN: f64 = 0.995;
pub const DEFAULT_W_PRD: f64 = 0.5;
pub const DEFAULT_W_CC: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchThresholds {
    pub prd_max: f64,
    pub cc_min: f64,
    pub w_prd: f64,
    pub w_cc: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        MatchThresholds {
            prd_max: DEFAULT_PRD_MAX,
            cc_min: DEFAULT_CC_MIN,
            w_prd: DEFAULT_W_PRD,
            w_cc: DEFAULT_W_CC,
        }
    }
}

impl MatchThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.prd_max.is_nan() || self.prd_max <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "prd_max must be positive, got {}",
                self.prd_max
            )));
        }
        if !(-1.0..=1.0).contains(&self.cc_min) {
            return Err(Error::InvalidArgument(format!(
                "cc_min must lie in [-1, 1], got {}",
                self.cc_min
            )));
        }
        if ((self.w_prd + self.w_cc) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "w_prd + w_cc must equal 1, got {}",
                self.w_prd + self.w_cc
            )));
        }
        Ok(())
    }
}

/// Outcome of scanning a candidate list.
///
/// `prd`, `cc` and `confidence` describe the hit when there is one. Without
/// a hit they describe the highest-confidence candidate that failed a
/// threshold, or are NaN when nothing could be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub hit_id: Option<String>,
    pub prd: f64,
    pub cc: f64,
    pub confidence: f64,
    pub candidates_scanned: usize,
    /// Candidates that could not be scored (zero template vector).
    pub skipped: usize,
}

/// `sqrt(Σ(x−f)² / Σx²) × 100`. Not symmetric in its arguments.
pub fn prd(x: &FeatureVector, f: &FeatureVector) -> Result<f64> {
    let denom = x.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroVector("PRD"));
    }
    Ok((x.squared_distance(f) / denom).sqrt() * 100.0)
}

/// Normalized cross-correlation.
pub fn cc(x: &FeatureVector, f: &FeatureVector) -> Result<f64> {
    let denom = x.norm_squared() * f.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroVector("cross-correlation"));
    }
    Ok((x.dot(f) / denom.sqrt()).clamp(-1.0, 1.0))
}

pub fn confidence(prd_val: f64, cc_val: f64, thresholds: &MatchThresholds) -> f64 {
    thresholds.w_prd * (100.0 - prd_val) + thresholds.w_cc * cc_val
}

/// Scores every candidate and returns the best qualifying one. Equal
/// confidences resolve to the earlier candidate.
pub fn best_match(
    query: &FeatureVector,
    candidates: &[SubjectRecord],
    thresholds: &MatchThresholds,
) -> MatchResult {
    let mut result = MatchResult {
        hit_id: None,
        prd: f64::NAN,
        cc: f64::NAN,
        confidence: f64::NAN,
        candidates_scanned: candidates.len(),
        skipped: 0,
    };

    let q_norm = query.norm_squared();
    if q_norm == 0.0 {
        result.skipped = candidates.len();
        return result;
    }

    let mut best_hit: Option<(usize, f64, f64, f64)> = None;
    let mut best_miss: Option<(f64, f64, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let f_norm = cand.vector.norm_squared();
        if f_norm == 0.0 {
            result.skipped += 1;
            continue;
        }
        let p = (query.squared_distance(&cand.vector) / q_norm).sqrt() * 100.0;
        let c = (query.dot(&cand.vector) / (q_norm * f_norm).sqrt()).clamp(-1.0, 1.0);
        let conf = confidence(p, c, thresholds);
        if p <= thresholds.prd_max && c >= thresholds.cc_min {
            if best_hit.is_none_or(|(_, _, _, b)| conf > b) {
                best_hit = Some((i, p, c, conf));
            }
        } else if best_hit.is_none() && best_miss.is_none_or(|(_, _, b)| conf > b) {
            best_miss = Some((p, c, conf));
        }
    }

    if let Some((i, p, c, conf)) = best_hit {
        result.hit_id = Some(candidates[i].subject_id.clone());
        (result.prd, result.cc, result.confidence) = (p, c, conf);
    } else if let Some((p, c, conf)) = best_miss {
        (result.prd, result.cc, result.confidence) = (p, c, conf);
    }
    result
}
