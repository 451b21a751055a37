//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code paths it checks: distances, means and
//! scores are recomputed from scratch with plain loops.

#![allow(dead_code)]

use ecgident::{FeatureVector, SubjectRecord, DIM};

pub fn dist(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let mut s = 0.0;
    for j in 0..DIM {
        let d = a[j] - b[j];
        s += d * d;
    }
    s.sqrt()
}

/// SSQ of a labelling with each cluster's centroid at its own mean.
fn labelling_ssq(points: &[FeatureVector], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&FeatureVector> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = [0.0; DIM];
        for m in &members {
            for j in 0..DIM {
                mean[j] += m[j];
            }
        }
        for v in &mut mean {
            *v /= members.len() as f64;
        }
        for m in &members {
            for j in 0..DIM {
                total += (m[j] - mean[j]).powi(2);
            }
        }
    }
    total
}

/// Minimum SSQ over every assignment of `points` to at most `k` clusters.
pub fn exhaustive_min_ssq(points: &[FeatureVector], k: usize) -> f64 {
    let n = points.len();
    assert!(n <= 10, "exhaustive oracle is exponential");
    let total = k.pow(n as u32);
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        best = best.min(labelling_ssq(points, &labels, k));
    }
    best
}

/// Silhouette straight from the definition.
pub fn brute_silhouette(points: &[FeatureVector], labels: &[usize]) -> f64 {
    let n = points.len();
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();

    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if own.is_empty() {
            continue; // singleton scores 0
        }
        let a = own
            .iter()
            .map(|&j| dist(&points[i], &points[j]))
            .sum::<f64>()
            / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == labels[i] {
                continue;
            }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let mean = other
                .iter()
                .map(|&j| dist(&points[i], &points[j]))
                .sum::<f64>()
                / other.len() as f64;
            b = b.min(mean);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Label of the nearest centroid by computing all distances and sorting
/// (distance, label) pairs.
pub fn sorted_nearest(v: &FeatureVector, centroids: &[FeatureVector]) -> usize {
    let mut all: Vec<(f64, usize)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (dist(v, c), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all[0].1
}

/// Scores every candidate, filters by thresholds, then takes the first
/// maximum. Returns the hit id.
pub fn naive_best(
    q: &FeatureVector,
    cands: &[SubjectRecord],
    prd_max: f64,
    cc_min: f64,
) -> Option<String> {
    let mut qq = 0.0;
    for j in 0..DIM {
        qq += q[j] * q[j];
    }
    let scored: Vec<(usize, f64, f64, f64)> = cands
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let (mut diff, mut ff, mut qf) = (0.0, 0.0, 0.0);
            for j in 0..DIM {
                diff += (q[j] - c.vector[j]).powi(2);
                ff += c.vector[j] * c.vector[j];
                qf += q[j] * c.vector[j];
            }
            if qq == 0.0 || ff == 0.0 {
                return None;
            }
            let prd = (diff / qq).sqrt() * 100.0;
            let cc = qf / (qq * ff).sqrt();
            Some((i, prd, cc, 0.5 * (100.0 - prd) + 0.5 * cc))
        })
        .collect();
    let passing: Vec<_> = scored
        .into_iter()
        .filter(|&(_, p, c, _)| p <= prd_max && c >= cc_min)
        .collect();
    let best = passing
        .iter()
        .map(|s| s.3)
        .fold(f64::NEG_INFINITY, f64::max);
    passing
        .iter()
        .find(|s| s.3 == best)
        .map(|s| cands[s.0].subject_id.clone())
}

/// Small deterministic generator so oracles do not share the library's RNG
/// plumbing.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn vector(&mut self, lo: f64, hi: f64) -> FeatureVector {
        let a: [f64; DIM] = std::array::from_fn(|_| self.uniform(lo, hi));
        a.into()
    }
}

pub fn records(points: &[FeatureVector]) -> Vec<SubjectRecord> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| SubjectRecord::new(format!("p{i:03}"), *p))
        .collect()
}
