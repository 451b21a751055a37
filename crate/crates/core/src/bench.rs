//! Timed identification: clustered search against a serial scan.
//!
//! For each probe the clustered path picks the nearest centroid (untimed),
//! then times reading that one partition and scanning it. The serial path
//! times reading the whole gallery and scanning it. The per-probe reduction
//! is `(t_serial - t_cluster) / t_serial * 100`, and a K's time reduction is
//! the mean of those ratios.
//!
//! In [`ScanMode::InMemory`] every file is loaded once up front and only the
//! scans are timed.
//!
//! Timed sections never overlap inside one process: [`run_bench`] holds a
//! global lock for its whole measurement phase.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::clustering::{assign, kmeans_fit, Assignment, ClusterModel, KMeansConfig, KMeansFit};
use crate::feature::{FeatureVector, SubjectRecord};
use crate::matcher::{best_match, MatchResult, MatchThresholds};
use crate::partition::{load_all, load_partition, load_serial, partition, PartitionIndex};
use crate::selection::{
    decide_k, detect_knee, silhouette_avg, DecisionWeights, KDecisionRow, KRange,
};
use crate::{Error, Result};

pub const DEFAULT_REPEATS: usize = 5;
pub const DEFAULT_QUERIES: usize = 100;

pub const DETAIL_HEADER: &str =
    "query_id,truth_id,k,t_serial_ns,t_cluster_ns,reduction_pct,serial_hit,cluster_hit";

static TIMING_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanPath {
    Clustered,
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Partition and gallery files are read inside the timed region.
    #[default]
    FileBacked,
    /// Files are preloaded; only the scan is timed.
    InMemory,
}

/// One timed identification.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedIdentification {
    pub path: ScanPath,
    /// Set for [`ScanPath::Clustered`] only.
    pub cluster_label: Option<usize>,
    pub elapsed: Duration,
    pub result: MatchResult,
}

impl TimedIdentification {
    pub fn hit_id(&self) -> Option<&str> {
        self.result.hit_id.as_deref()
    }
}

/// A probe with its ground-truth subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub truth_id: String,
    pub vector: FeatureVector,
}

/// Nearest-centroid search against the partition files of `index`.
pub fn identify_clustered(
    query: &FeatureVector,
    index: &PartitionIndex,
    thresholds: &MatchThresholds,
) -> Result<TimedIdentification> {
    let label = assign(query, &index.model);
    let start = Instant::now();
    let candidates = load_partition(index, label)?;
    let result = best_match(query, &candidates, thresholds);
    let elapsed = start.elapsed();
    Ok(TimedIdentification {
        path: ScanPath::Clustered,
        cluster_label: Some(label),
        elapsed,
        result,
    })
}

/// Full scan of the gallery file.
pub fn identify_serial(
    query: &FeatureVector,
    gallery_path: &Path,
    thresholds: &MatchThresholds,
) -> Result<TimedIdentification> {
    let start = Instant::now();
    let candidates = load_serial(gallery_path)?;
    let result = best_match(query, &candidates, thresholds);
    let elapsed = start.elapsed();
    Ok(TimedIdentification {
        path: ScanPath::Serial,
        cluster_label: None,
        elapsed,
        result,
    })
}

/// Gallery and partitions held in memory, for timing the scans alone.
#[derive(Debug, Clone)]
pub struct InMemoryGallery {
    pub model: ClusterModel,
    pub partitions: Vec<Vec<SubjectRecord>>,
    pub serial: Vec<SubjectRecord>,
}

impl InMemoryGallery {
    pub fn load(gallery_path: &Path, index: &PartitionIndex) -> Result<Self> {
        Ok(InMemoryGallery {
            model: index.model.clone(),
            partitions: load_all(index)?,
            serial: load_serial(gallery_path)?,
        })
    }

    pub fn identify_clustered(
        &self,
        query: &FeatureVector,
        thresholds: &MatchThresholds,
    ) -> TimedIdentification {
        let label = assign(query, &self.model);
        let start = Instant::now();
        let result = best_match(query, &self.partitions[label], thresholds);
        let elapsed = start.elapsed();
        TimedIdentification {
            path: ScanPath::Clustered,
            cluster_label: Some(label),
            elapsed,
            result,
        }
    }

    pub fn identify_serial(
        &self,
        query: &FeatureVector,
        thresholds: &MatchThresholds,
    ) -> TimedIdentification {
        let start = Instant::now();
        let result = best_match(query, &self.serial, thresholds);
        let elapsed = start.elapsed();
        TimedIdentification {
            path: ScanPath::Serial,
            cluster_label: None,
            elapsed,
            result,
        }
    }
}

/// Percentage of serial time saved by the clustered search. Negative when
/// the clustered search was slower.
pub fn time_reduction(t_serial: Duration, t_cluster: Duration) -> Result<f64> {
    if t_serial.is_zero() {
        return Err(Error::ZeroDuration);
    }
    let ts = t_serial.as_secs_f64();
    Ok((ts - t_cluster.as_secs_f64()) / ts * 100.0)
}

/// Samples `n` distinct subjects and perturbs each component with
/// N(0, noise_sigma²). A zero sigma yields exact copies.
pub fn make_queries(
    gallery: &[SubjectRecord],
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Query>> {
    if n > gallery.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} queries from {} subjects",
            gallery.len()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, gallery.len(), n);
    let noise = Normal::new(0.0, noise_sigma).expect("sigma validated above");
    Ok(picks
        .iter()
        .map(|i| {
            let rec = &gallery[i];
            let vector = if noise_sigma == 0.0 {
                rec.vector
            } else {
                rec.vector.map(|_, v| v + noise.sample(&mut rng))
            };
            Query {
                truth_id: rec.subject_id.clone(),
                vector,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Timed runs per probe and path; the median is kept.
    pub repeats: usize,
    pub mode: ScanMode,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repeats: DEFAULT_REPEATS,
            mode: ScanMode::FileBacked,
        }
    }
}

/// Measurements for one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: usize,
    pub truth_id: String,
    pub cluster_label: usize,
    /// Whether the truth subject's record sits in the searched partition.
    pub truth_in_cluster: bool,
    pub t_serial: Duration,
    pub t_cluster: Duration,
    pub serial_hit: Option<String>,
    pub cluster_hit: Option<String>,
}

impl QueryOutcome {
    pub fn reduction_pct(&self) -> Result<f64> {
        time_reduction(self.t_serial, self.t_cluster)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub k: usize,
    pub outcomes: Vec<QueryOutcome>,
    /// Mean of the per-probe reduction percentages.
    pub t_avg_pct: f64,
    /// Share of probes whose clustered hit equals the truth, in percent.
    pub accuracy_pct: f64,
    /// `|Σt_serial − Σt_cluster| / Σt_serial × 100`, the aggregate form.
    /// Diagnostic only; not used for decisions.
    pub abs_total_reduction_pct: f64,
    /// Among probes whose truth lies in the searched partition, the share
    /// whose clustered and serial hits agree, in percent.
    pub hit_agreement_pct: f64,
}

impl BenchReport {
    pub fn from_outcomes(k: usize, outcomes: Vec<QueryOutcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidArgument("no query outcomes".into()));
        }
        let n = outcomes.len() as f64;
        let mut reduction_sum = 0.0;
        for o in &outcomes {
            reduction_sum += o.reduction_pct()?;
        }
        let correct = outcomes
            .iter()
            .filter(|o| o.cluster_hit.as_deref() == Some(o.truth_id.as_str()))
            .count();
        let total_s: f64 = outcomes.iter().map(|o| o.t_serial.as_secs_f64()).sum();
        let total_c: f64 = outcomes.iter().map(|o| o.t_cluster.as_secs_f64()).sum();
        let in_cluster: Vec<&QueryOutcome> =
            outcomes.iter().filter(|o| o.truth_in_cluster).collect();
        let agreeing = in_cluster
            .iter()
            .filter(|o| o.cluster_hit == o.serial_hit)
            .count();
        let hit_agreement_pct = if in_cluster.is_empty() {
            100.0
        } else {
            100.0 * agreeing as f64 / in_cluster.len() as f64
        };

        Ok(BenchReport {
            k,
            t_avg_pct: reduction_sum / n,
            accuracy_pct: 100.0 * correct as f64 / n,
            abs_total_reduction_pct: (total_s - total_c).abs() / total_s * 100.0,
            hit_agreement_pct,
            outcomes,
        })
    }

    /// Per-probe detail rows under [`DETAIL_HEADER`], without the header.
    pub fn detail_rows(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                o.query_id,
                o.truth_id,
                self.k,
                o.t_serial.as_nanos(),
                o.t_cluster.as_nanos(),
                o.reduction_pct().unwrap_or(f64::NAN),
                o.serial_hit.as_deref().unwrap_or(""),
                o.cluster_hit.as_deref().unwrap_or(""),
            );
        }
        out
    }
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

/// Times every probe on both paths and aggregates a [`BenchReport`].
///
/// Before timing, the serial gallery and every partition some probe will
/// search are scanned once untimed. Each probe then gets `repeats` timed runs per path (clustered
/// first); the median of each is kept.
pub fn run_bench(
    gallery_path: &Path,
    index: &PartitionIndex,
    queries: &[Query],
    thresholds: &MatchThresholds,
    options: &BenchOptions,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("query batch is empty".into()));
    }
    if options.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }

    // Also verifies every checksum before any timing starts.
    let partitions = load_all(index)?;
    let mut label_of: HashMap<&str, usize> = HashMap::new();
    for (label, part) in partitions.iter().enumerate() {
        for r in part {
            label_of.insert(r.subject_id.as_str(), label);
        }
    }
    let memory = match options.mode {
        ScanMode::InMemory => Some(InMemoryGallery {
            model: index.model.clone(),
            partitions: partitions.clone(),
            serial: load_serial(gallery_path)?,
        }),
        ScanMode::FileBacked => None,
    };

    let clustered = |q: &FeatureVector| -> Result<TimedIdentification> {
        match &memory {
            Some(m) => Ok(m.identify_clustered(q, thresholds)),
            None => identify_clustered(q, index, thresholds),
        }
    };
    let serial = |q: &FeatureVector| -> Result<TimedIdentification> {
        match &memory {
            Some(m) => Ok(m.identify_serial(q, thresholds)),
            None => identify_serial(q, gallery_path, thresholds),
        }
    };

    let _guard = TIMING_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut warmed = vec![false; index.k];
    for (qi, query) in queries.iter().enumerate() {
        let label = assign(&query.vector, &index.model);
        if !warmed[label] {
            warmed[label] = true;
            clustered(&query.vector).map_err(|e| Error::Query {
                index: qi,
                source: Box::new(e),
            })?;
        }
    }
    serial(&queries[0].vector)?;

    let mut outcomes = Vec::with_capacity(queries.len());
    for (qi, query) in queries.iter().enumerate() {
        let wrap = |e: Error| Error::Query {
            index: qi,
            source: Box::new(e),
        };
        let mut tc = Vec::with_capacity(options.repeats);
        let mut ts = Vec::with_capacity(options.repeats);
        let mut last_c = None;
        let mut last_s = None;
        for _ in 0..options.repeats {
            let c = clustered(&query.vector).map_err(wrap)?;
            let s = serial(&query.vector).map_err(wrap)?;
            tc.push(c.elapsed);
            ts.push(s.elapsed);
            last_c = Some(c);
            last_s = Some(s);
        }
        let c = last_c.expect("repeats > 0");
        let s = last_s.expect("repeats > 0");
        let label = c.cluster_label.expect("clustered path sets a label");
        outcomes.push(QueryOutcome {
            query_id: qi,
            truth_id: query.truth_id.clone(),
            cluster_label: label,
            truth_in_cluster: label_of.get(query.truth_id.as_str()) == Some(&label),
            t_serial: median(ts),
            t_cluster: median(tc),
            serial_hit: s.result.hit_id,
            cluster_hit: c.result.hit_id,
        });
    }
    drop(_guard);

    BenchReport::from_outcomes(index.k, outcomes)
}

/// Settings for [`build_decision_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionConfig {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_init: usize,
    pub n_queries: usize,
    pub noise_sigma: f64,
    pub bench: BenchOptions,
    /// Partitions for every K are written under this directory.
    pub partition_root: PathBuf,
    /// Compute silhouettes on a seeded subsample of at most this many
    /// records. `None` uses the whole gallery.
    pub silhouette_sample: Option<usize>,
}

impl DecisionConfig {
    pub fn new(seed: u64, partition_root: impl Into<PathBuf>) -> Self {
        DecisionConfig {
            seed,
            tol: crate::clustering::DEFAULT_TOL,
            max_iter: crate::clustering::DEFAULT_MAX_ITER,
            n_init: crate::clustering::DEFAULT_N_INIT,
            n_queries: DEFAULT_QUERIES,
            noise_sigma: 0.0,
            bench: BenchOptions::default(),
            partition_root: partition_root.into(),
            silhouette_sample: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecisionTable {
    /// Scored rows, ascending in k.
    pub rows: Vec<KDecisionRow>,
    pub best_k: usize,
    pub elbow: Vec<(usize, f64)>,
    /// Knee of the elbow curve, when it has at least three points.
    pub knee: Option<usize>,
    pub reports: Vec<BenchReport>,
}

fn sampled_silhouette(
    gallery: &[SubjectRecord],
    assignment: &Assignment,
    limit: Option<usize>,
    seed: u64,
) -> Result<f64> {
    match limit {
        Some(m) if gallery.len() > m => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picks = sample(&mut rng, gallery.len(), m).into_vec();
            picks.sort_unstable();
            let sub: Vec<SubjectRecord> = picks.iter().map(|&i| gallery[i].clone()).collect();
            let labels = picks.iter().map(|&i| assignment.labels[i]).collect();
            silhouette_avg(
                &sub,
                &Assignment {
                    k: assignment.k,
                    labels,
                },
            )
        }
        _ => silhouette_avg(gallery, assignment),
    }
}

/// Fits, partitions, scores and benchmarks every K in `k_range`, then picks
/// the best K by weighted sum.
///
/// The same query batch is used for every K. Fitting and silhouettes run in
/// parallel across K; benchmarks run one K at a time.
pub fn build_decision_table(
    gallery_path: &Path,
    k_range: KRange,
    thresholds: &MatchThresholds,
    weights: &DecisionWeights,
    config: &DecisionConfig,
) -> Result<DecisionTable> {
    thresholds.validate()?;
    if k_range.is_empty() || k_range.start < 2 {
        return Err(Error::InvalidArgument(format!(
            "k range {k_range} must be non-empty and start at 2 or more"
        )));
    }
    let gallery = load_serial(gallery_path)?;
    let queries = make_queries(&gallery, config.n_queries, config.noise_sigma, config.seed)?;

    let fitted: Vec<(KMeansFit, f64)> = k_range
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let cfg = KMeansConfig {
                k,
                seed: config.seed,
                tol: config.tol,
                max_iter: config.max_iter,
                n_init: config.n_init,
            };
            let fit = kmeans_fit(&gallery, &cfg)?;
            let sil = sampled_silhouette(
                &gallery,
                &fit.assignment,
                config.silhouette_sample,
                config.seed,
            )?;
            Ok((fit, sil))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(fitted.len());
    let mut reports = Vec::with_capacity(fitted.len());
    let mut elbow = Vec::with_capacity(fitted.len());
    for (fit, sil) in &fitted {
        let index = partition(&gallery, &fit.model, &config.partition_root)?;
        let report = run_bench(gallery_path, &index, &queries, thresholds, &config.bench)?;
        rows.push(KDecisionRow::unscored(
            fit.model.k,
            report.t_avg_pct,
            report.accuracy_pct,
            *sil,
        ));
        elbow.push((fit.model.k, fit.model.ssq));
        reports.push(report);
    }

    let (best_k, rows) = decide_k(&rows, weights)?;
    let knee = (elbow.len() >= 3)
        .then(|| detect_knee(&elbow))
        .transpose()?;
    Ok(DecisionTable {
        rows,
        best_k,
        elbow,
        knee,
        reports,
    })
}
