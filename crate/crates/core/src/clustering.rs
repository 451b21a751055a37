//! Seeded k-means over preprocessed galleries.
//!
//! Initialization is k-means++ driven by a ChaCha8 stream seeded from the
//! caller's seed, so a fit is bit-reproducible across runs and platforms.
//! The assignment step runs in parallel; every reduction is sequential in
//! record order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::feature::{FeatureVector, SubjectRecord, DIM};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_N_INIT: usize = 10;

/// Fitted centroids plus the metadata needed to reproduce the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<FeatureVector>,
    /// Within-cluster sum of squared distances under the final assignment.
    pub ssq: f64,
    /// Number of centroid update steps performed.
    pub iterations: usize,
    pub seed: u64,
    pub tol: f64,
}

/// Cluster label per gallery record, aligned by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub k: usize,
    pub labels: Vec<usize>,
}

impl Assignment {
    /// Record count per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent k-means++ restarts drawn from one seeded stream; the run
    /// with the lowest SSQ wins, earliest on ties.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            n_init: DEFAULT_N_INIT,
        }
    }
}

/// Result of [`kmeans_fit`].
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignment: Assignment,
    /// SSQ after every assignment step of the winning restart, starting
    /// with its k-means++ seeding.
    pub ssq_trace: Vec<f64>,
}

/// Index of the nearest centroid; ties go to the lowest label.
pub fn nearest_centroid(vector: &FeatureVector, centroids: &[FeatureVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = vector.squared_distance(c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Label of the centroid nearest to `vector`.
pub fn assign(vector: &FeatureVector, model: &ClusterModel) -> usize {
    nearest_centroid(vector, &model.centroids)
}

/// Sum of squared distances from each record to its assigned centroid.
pub fn ssq(gallery: &[SubjectRecord], model: &ClusterModel, assignment: &Assignment) -> f64 {
    debug_assert_eq!(gallery.len(), assignment.labels.len());
    gallery
        .iter()
        .zip(&assignment.labels)
        .map(|(r, &l)| r.vector.squared_distance(&model.centroids[l]))
        .sum()
}

fn assign_all(points: &[FeatureVector], centroids: &[FeatureVector]) -> Vec<usize> {
    points
        .par_iter()
        .with_min_len(1024)
        .map(|p| nearest_centroid(p, centroids))
        .collect()
}

fn inertia(points: &[FeatureVector], centroids: &[FeatureVector], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| p.squared_distance(&centroids[l]))
        .sum()
}

/// Index drawn with probability proportional to `weights`.
fn weighted_pick(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let n = weights.len();
    if total <= 0.0 {
        return rng.random_range(0..n);
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &d) in weights.iter().enumerate() {
        acc += d;
        if d > 0.0 && acc >= target {
            return i;
        }
    }
    // Rounding can leave `acc` just short of `target`.
    weights.iter().rposition(|&d| d > 0.0).unwrap_or(n - 1)
}

/// Greedy k-means++: each new centre is the best of a few D²-weighted draws.
fn kmeans_pp(points: &[FeatureVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
    let n = points.len();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);

    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| p.squared_distance(&centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let i = weighted_pick(&dist, total, rng);
            let c = points[i];
            let next: Vec<f64> = dist
                .iter()
                .zip(points)
                .map(|(&d, p)| d.min(p.squared_distance(&c)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, next, i));
            }
        }
        let (_, next, i) = best.expect("at least two trials");
        dist = next;
        centroids.push(points[i]);
    }
    centroids
}

/// Lloyd iterations from seeded k-means++ starts.
///
/// Each restart stops when the assignment no longer changes, when the
/// largest centroid displacement drops below `tol`, or after `max_iter`
/// updates. A centroid left without points is moved onto the point farthest
/// from its own centroid.
pub fn kmeans_fit(gallery: &[SubjectRecord], config: &KMeansConfig) -> Result<KMeansFit> {
    let KMeansConfig {
        k,
        seed,
        tol,
        max_iter,
        n_init,
    } = *config;
    if k == 0 || gallery.len() < k {
        return Err(Error::InvalidK {
            k,
            n: gallery.len(),
        });
    }
    if tol.is_nan() || tol <= 0.0 || max_iter == 0 || n_init == 0 {
        return Err(Error::InvalidArgument(
            "tol, max_iter and n_init must be positive".into(),
        ));
    }

    let points: Vec<FeatureVector> = gallery.iter().map(|r| r.vector).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Lloyd> = None;
    for _ in 0..n_init {
        let run = lloyd(&points, kmeans_pp(&points, k, &mut rng), tol, max_iter);
        if best.as_ref().is_none_or(|b| run.ssq() < b.ssq()) {
            best = Some(run);
        }
    }
    let best = best.expect("n_init > 0");

    Ok(KMeansFit {
        model: ClusterModel {
            k,
            ssq: best.ssq(),
            centroids: best.centroids,
            iterations: best.iterations,
            seed,
            tol,
        },
        assignment: Assignment {
            k,
            labels: best.labels,
        },
        ssq_trace: best.trace,
    })
}

struct Lloyd {
    centroids: Vec<FeatureVector>,
    labels: Vec<usize>,
    trace: Vec<f64>,
    iterations: usize,
}

impl Lloyd {
    fn ssq(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

fn lloyd(points: &[FeatureVector], init: Vec<FeatureVector>, tol: f64, max_iter: usize) -> Lloyd {
    let mut centroids = init;
    let mut labels = assign_all(points, &centroids);
    let mut trace = vec![inertia(points, &centroids, &labels)];
    let mut iterations = 0;

    while iterations < max_iter {
        let updated = update_centroids(points, &labels, &centroids);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        centroids = updated;
        iterations += 1;

        let next = assign_all(points, &centroids);
        trace.push(inertia(points, &centroids, &next));
        let stable = next == labels;
        labels = next;
        if stable || shift < tol {
            break;
        }
    }
    Lloyd {
        centroids,
        labels,
        trace,
        iterations,
    }
}

fn update_centroids(
    points: &[FeatureVector],
    labels: &[usize],
    previous: &[FeatureVector],
) -> Vec<FeatureVector> {
    let k = previous.len();
    let mut sums = vec![[0.0; DIM]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }

    let mut out: Vec<FeatureVector> = sums
        .iter()
        .zip(&counts)
        .zip(previous)
        .map(|((s, &c), prev)| {
            if c == 0 {
                *prev
            } else {
                s.map(|v| v / c as f64).into()
            }
        })
        .collect();

    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        // Farthest-from-own-centroid points, largest first; index breaks ties.
        let mut order: Vec<(f64, usize)> = points
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (p, &l))| (p.squared_distance(&out[l]), i))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (slot, (_, i)) in empty.into_iter().zip(order) {
            out[slot] = points[i];
        }
    }
    out
}
