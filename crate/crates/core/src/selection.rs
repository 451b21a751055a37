//! Choosing the cluster count: elbow curve, silhouette, and the weighted
//! decision over time reduction, accuracy and silhouette.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::clustering::{kmeans_fit, Assignment, KMeansConfig};
use crate::feature::SubjectRecord;
use crate::{Error, Result};

pub const DEFAULT_W_TIME: f64 = 0.2;
pub const DEFAULT_W_ACC: f64 = 0.5;
pub const DEFAULT_W_SIL: f64 = 0.3;

pub const DECISION_HEADER: &str = "k,time_reduction,accuracy,silhouette,score";

/// Half-open range of cluster counts, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KRange {
    pub start: usize,
    pub end: usize,
}

impl KRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidArgument(format!(
                "empty k range [{start}, {end})"
            )));
        }
        Ok(KRange { start, end })
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl Default for KRange {
    fn default() -> Self {
        KRange { start: 2, end: 10 }
    }
}

impl fmt::Display for KRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Accepts `A..B` (half-open), `A..=B`, or a single `K`.
impl FromStr for KRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse k range `{s}`"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        if let Some((a, b)) = s.split_once("..=") {
            KRange::new(num(a)?, num(b)? + 1)
        } else if let Some((a, b)) = s.split_once("..") {
            KRange::new(num(a)?, num(b)?)
        } else {
            let k = num(s)?;
            KRange::new(k, k + 1)
        }
    }
}

/// SSQ per k from independent fits, ascending in k. Every fit uses `base`
/// (seed included) with only `k` replaced.
pub fn elbow_curve(
    gallery: &[SubjectRecord],
    k_range: KRange,
    base: &KMeansConfig,
) -> Result<Vec<(usize, f64)>> {
    if k_range.is_empty() || k_range.start < 2 {
        return Err(Error::InvalidArgument(format!(
            "k range {k_range} must be non-empty and start at 2 or more"
        )));
    }
    k_range
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let cfg = KMeansConfig { k, ..*base };
            kmeans_fit(gallery, &cfg).map(|fit| (k, fit.model.ssq))
        })
        .collect()
}

/// The k with the largest discrete second difference
/// `ssq[i-1] - 2 ssq[i] + ssq[i+1]`. Endpoints are never chosen; ties go to
/// the smaller k.
pub fn detect_knee(curve: &[(usize, f64)]) -> Result<usize> {
    if curve.len() < 3 {
        return Err(Error::CurveTooShort {
            needed: 3,
            found: curve.len(),
        });
    }
    let mut best_k = curve[1].0;
    let mut best = f64::NEG_INFINITY;
    for w in curve.windows(3) {
        let d2 = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if d2 > best {
            best = d2;
            best_k = w[1].0;
        }
    }
    Ok(best_k)
}

/// Mean silhouette over all points, with Euclidean distance.
///
/// Points in singleton clusters score 0. A point whose intra- and
/// nearest-cluster distances are both zero also scores 0.
pub fn silhouette_avg(gallery: &[SubjectRecord], assignment: &Assignment) -> Result<f64> {
    let labels = &assignment.labels;
    if labels.len() != gallery.len() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {} labels for {} records",
            labels.len(),
            gallery.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= assignment.k) {
        return Err(Error::LabelOutOfRange {
            label: l,
            k: assignment.k,
        });
    }
    let sizes = assignment.sizes();
    let populated = sizes.iter().filter(|&&s| s > 0).count();
    if populated < 2 {
        return Err(Error::TooFewClusters(populated));
    }

    let k = assignment.k;
    let scores: Vec<f64> = gallery
        .par_iter()
        .with_min_len(64)
        .enumerate()
        .map(|(i, rec)| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (other, &l) in gallery.iter().zip(labels) {
                sums[l] += rec.vector.distance(&other.vector);
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionWeights {
    pub w_time: f64,
    pub w_acc: f64,
    pub w_sil: f64,
}

impl Default for DecisionWeights {
    fn default() -> Self {
        DecisionWeights {
            w_time: DEFAULT_W_TIME,
            w_acc: DEFAULT_W_ACC,
            w_sil: DEFAULT_W_SIL,
        }
    }
}

impl DecisionWeights {
    pub fn new(w_time: f64, w_acc: f64, w_sil: f64) -> Result<Self> {
        let sum = w_time + w_acc + w_sil;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "decision weights must sum to 1, got {sum}"
            )));
        }
        Ok(DecisionWeights {
            w_time,
            w_acc,
            w_sil,
        })
    }

    pub fn score(&self, time_reduction_pct: f64, accuracy_pct: f64, silhouette: f64) -> f64 {
        self.w_time * time_reduction_pct + self.w_acc * accuracy_pct + self.w_sil * silhouette
    }
}

/// One row of the decision table.
#[derive(Debug, Clone, PartialEq)]
pub struct KDecisionRow {
    pub k: usize,
    pub time_reduction_pct: f64,
    pub accuracy_pct: f64,
    pub silhouette_avg: f64,
    pub weighted_score: f64,
}

impl KDecisionRow {
    /// A row whose score is not yet computed.
    pub fn unscored(k: usize, time_reduction_pct: f64, accuracy_pct: f64, silhouette: f64) -> Self {
        KDecisionRow {
            k,
            time_reduction_pct,
            accuracy_pct,
            silhouette_avg: silhouette,
            weighted_score: f64::NAN,
        }
    }
}

/// Scores every row and picks the maximum; ties resolve to the smaller k.
pub fn decide_k(
    rows: &[KDecisionRow],
    weights: &DecisionWeights,
) -> Result<(usize, Vec<KDecisionRow>)> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no decision rows".into()));
    }
    let scored: Vec<KDecisionRow> = rows
        .iter()
        .map(|r| KDecisionRow {
            weighted_score: weights.score(r.time_reduction_pct, r.accuracy_pct, r.silhouette_avg),
            ..r.clone()
        })
        .collect();
    let best = scored
        .iter()
        .fold(None::<&KDecisionRow>, |best, r| match best {
            Some(b)
                if b.weighted_score > r.weighted_score
                    || (b.weighted_score == r.weighted_score && b.k <= r.k) =>
            {
                Some(b)
            }
            _ => Some(r),
        })
        .expect("rows non-empty");
    Ok((best.k, scored))
}

pub fn decision_table_csv(rows: &[KDecisionRow]) -> String {
    let mut out = String::from(DECISION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k, r.time_reduction_pct, r.accuracy_pct, r.silhouette_avg, r.weighted_score
        ));
    }
    out
}

pub fn elbow_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("k,ssq\n");
    for (k, s) in curve {
        out.push_str(&format!("{k},{s}\n"));
    }
    out
}

/// Reads decision rows from CSV with header
/// `k,time_reduction,accuracy,silhouette[,score]`. Any score column is
/// ignored; scores are recomputed by [`decide_k`].
pub fn read_decision_rows(path: &Path) -> Result<Vec<KDecisionRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_decision_rows(&text)
}

pub fn parse_decision_rows(text: &str) -> Result<Vec<KDecisionRow>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let expected = ["k", "time_reduction", "accuracy", "silhouette"];
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_score = cols.len() == 5 && cols[4] == "score";
    if cols.len() < 4 || cols[..4] != expected || (cols.len() == 5 && !has_score) || cols.len() > 5
    {
        return Err(Error::BadHeader {
            expected: DECISION_HEADER.into(),
            found: header.into(),
        });
    }

    lines
        .map(|(i, line)| {
            let row = i + 1;
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(Error::ColumnCount {
                    row,
                    expected: cols.len(),
                    found: cells.len(),
                });
            }
            let k = cells[0].parse::<usize>().map_err(|_| Error::BadNumber {
                row,
                column: "k",
                value: cells[0].into(),
            })?;
            let num = |j: usize, column: &'static str| {
                cells[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::BadNumber {
                        row,
                        column,
                        value: cells[j].into(),
                    })
            };
            Ok(KDecisionRow::unscored(
                k,
                num(1, "time_reduction")?,
                num(2, "accuracy")?,
                num(3, "silhouette")?,
            ))
        })
        .collect()
}
