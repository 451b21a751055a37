use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecgident::bench::{
    build_decision_table, identify_clustered, identify_serial, BenchOptions, DecisionConfig,
    DecisionTable, ScanMode, DEFAULT_QUERIES, DEFAULT_REPEATS, DETAIL_HEADER,
};
use ecgident::clustering::{
    kmeans_fit, KMeansConfig, DEFAULT_MAX_ITER, DEFAULT_N_INIT, DEFAULT_TOL,
};
use ecgident::feature::{
    load_gallery_csv, prepare_probe, preprocess, read_stats, synth_gallery, write_gallery_csv,
    write_stats, write_subjects_csv,
};
use ecgident::matcher::{
    MatchThresholds, DEFAULT_CC_MIN, DEFAULT_PRD_MAX, DEFAULT_W_CC, DEFAULT_W_PRD,
};
use ecgident::partition::{load_serial, partition, PartitionIndex};
use ecgident::selection::{
    decide_k, decision_table_csv, elbow_csv, read_decision_rows, DecisionWeights, KRange,
    DEFAULT_W_ACC, DEFAULT_W_SIL, DEFAULT_W_TIME,
};
use ecgident::{FeatureVector, DIM};

#[derive(Debug, Parser)]
#[command(
    name = "ecgident",
    version,
    about = "Cluster-partitioned ECG feature identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fill, fuse, round and z-score a raw gallery.
    Preprocess(PreprocessArgs),
    /// Write a seeded synthetic raw gallery.
    Synth(SynthArgs),
    /// Fit k-means and write per-cluster partition files.
    Partition(PartitionArgs),
    /// Score every K and report the best one.
    SelectK(SelectKArgs),
    /// Identify one probe vector.
    Identify(IdentifyArgs),
    /// Benchmark clustered against serial identification for every K.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Raw gallery CSV.
    #[arg(long)]
    input: PathBuf,
    /// Processed gallery CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Scaling statistics (TOML) to write.
    #[arg(long)]
    stats: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    subjects: usize,
    #[arg(long, default_value_t = 5)]
    blobs: usize,
    /// Per-blob standard deviation, in raw feature units.
    #[arg(long, default_value_t = 5.0)]
    spread: f64,
    #[arg(long)]
    seed: u64,
    /// Raw gallery CSV to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Convergence threshold on centroid movement.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// k-means++ restarts; the lowest SSQ wins.
    #[arg(long, default_value_t = DEFAULT_N_INIT)]
    n_init: usize,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    /// Processed gallery CSV.
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    k: usize,
    /// Seed for k-means++ initialisation.
    #[arg(long)]
    seed: u64,
    /// Partitions are written to <out-dir>/k=<k>/.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Largest PRD (percent) that can count as a match.
    #[arg(long, default_value_t = DEFAULT_PRD_MAX)]
    prd_max: f64,
    /// Smallest correlation coefficient that can count as a match.
    #[arg(long, default_value_t = DEFAULT_CC_MIN)]
    cc_min: f64,
    /// Confidence weight on (100 - PRD).
    #[arg(long, default_value_t = DEFAULT_W_PRD)]
    w_prd: f64,
    /// Confidence weight on CC.
    #[arg(long, default_value_t = DEFAULT_W_CC)]
    w_cc: f64,
}

impl ThresholdArgs {
    fn thresholds(&self) -> Result<MatchThresholds> {
        let t = MatchThresholds {
            prd_max: self.prd_max,
            cc_min: self.cc_min,
            w_prd: self.w_prd,
            w_cc: self.w_cc,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Decision weight on mean time reduction.
    #[arg(long, default_value_t = DEFAULT_W_TIME)]
    w_time: f64,
    /// Decision weight on accuracy.
    #[arg(long, default_value_t = DEFAULT_W_ACC)]
    w_acc: f64,
    /// Decision weight on mean silhouette.
    #[arg(long, default_value_t = DEFAULT_W_SIL)]
    w_sil: f64,
}

impl WeightArgs {
    fn weights(&self) -> Result<DecisionWeights> {
        Ok(DecisionWeights::new(self.w_time, self.w_acc, self.w_sil)?)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Candidate K values, half-open (`2..10`), inclusive (`2..=9`) or single.
    #[arg(long, default_value_t = KRange::default())]
    k_range: KRange,
    /// Probes drawn from the gallery for every K.
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    queries: usize,
    /// Standard deviation of Gaussian noise added to each probe.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Timed runs per probe and path; the median is kept.
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    /// Time scans over preloaded data instead of reading files per query.
    #[arg(long)]
    in_memory: bool,
    /// Compute silhouettes on a seeded subsample of at most this many rows.
    #[arg(long)]
    silhouette_sample: Option<usize>,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    /// Processed gallery CSV.
    #[arg(long, required_unless_present = "rows_from_file")]
    gallery: Option<PathBuf>,
    /// Score precomputed rows (`k,time_reduction,accuracy,silhouette`) instead
    /// of measuring them.
    #[arg(long, conflicts_with = "gallery")]
    rows_from_file: Option<PathBuf>,
    /// Seed for k-means and probe sampling.
    #[arg(long, required_unless_present = "rows_from_file")]
    seed: Option<u64>,
    /// Directory for elbow.csv, decision.csv and partitions.
    #[arg(long, required_unless_present = "rows_from_file")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    /// Processed gallery CSV, scanned when no index is given.
    #[arg(long, required_unless_present = "index")]
    gallery: Option<PathBuf>,
    /// Partition root written by `partition`; requires --k.
    #[arg(long, requires = "k")]
    index: Option<PathBuf>,
    #[arg(long, requires = "index")]
    k: Option<usize>,
    /// Nine comma-separated feature values. Empty cells count as missing.
    #[arg(long, allow_hyphen_values = true)]
    probe: String,
    /// Treat the probe as raw features and apply these scaling statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Processed gallery CSV.
    #[arg(long)]
    gallery: PathBuf,
    /// Seed for k-means and probe sampling.
    #[arg(long)]
    seed: u64,
    /// Directory for decision.csv, elbow.csv, bench_detail.csv and partitions.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Partition(a) => cmd_partition(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let raw = load_gallery_csv(&a.input)?;
    let (processed, stats) = preprocess(&raw)?;
    write_subjects_csv(&a.output, &processed)?;
    write_stats(&a.stats, &stats)?;
    println!("rows_in={} subjects={}", raw.len(), processed.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let raw = synth_gallery(a.subjects, a.blobs, a.spread, a.seed)?;
    write_gallery_csv(&a.output, &raw)?;
    println!("subjects={} blobs={}", raw.len(), a.blobs);
    Ok(())
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let gallery = load_serial(&a.gallery)?;
    let cfg = KMeansConfig {
        tol: a.fit.tol,
        max_iter: a.fit.max_iter,
        n_init: a.fit.n_init,
        ..KMeansConfig::new(a.k, a.seed)
    };
    let fit = kmeans_fit(&gallery, &cfg)?;
    let index = partition(&gallery, &fit.model, &a.out_dir)?;
    println!(
        "k={} ssq={} iterations={} sizes={} dir={}",
        index.k,
        fit.model.ssq,
        fit.model.iterations,
        join(&index.partition_sizes),
        index.dir().display()
    );
    Ok(())
}

fn decision_config(run: &RunArgs, seed: u64, out_dir: &Path) -> DecisionConfig {
    DecisionConfig {
        tol: run.fit.tol,
        max_iter: run.fit.max_iter,
        n_init: run.fit.n_init,
        n_queries: run.queries,
        noise_sigma: run.noise_sigma,
        bench: BenchOptions {
            repeats: run.repeats,
            mode: if run.in_memory {
                ScanMode::InMemory
            } else {
                ScanMode::FileBacked
            },
        },
        silhouette_sample: run.silhouette_sample,
        ..DecisionConfig::new(seed, out_dir.join("partitions"))
    }
}

fn measure(gallery: &Path, seed: u64, out_dir: &Path, run: &RunArgs) -> Result<DecisionTable> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let table = build_decision_table(
        gallery,
        run.k_range,
        &run.thresholds.thresholds()?,
        &run.weights.weights()?,
        &decision_config(run, seed, out_dir),
    )?;
    write(
        &out_dir.join("decision.csv"),
        &decision_table_csv(&table.rows),
    )?;
    write(&out_dir.join("elbow.csv"), &elbow_csv(&table.elbow))?;
    Ok(table)
}

fn print_table(table: &DecisionTable) {
    for r in &table.rows {
        println!(
            "k={} time_reduction={:.2} accuracy={:.2} silhouette={:.4} score={:.4}",
            r.k, r.time_reduction_pct, r.accuracy_pct, r.silhouette_avg, r.weighted_score
        );
    }
    if let Some(knee) = table.knee {
        println!("elbow_knee={knee}");
    }
    println!("best_k={}", table.best_k);
}

fn cmd_select_k(a: SelectKArgs) -> Result<()> {
    if let Some(rows_path) = &a.rows_from_file {
        let rows = read_decision_rows(rows_path)?;
        let (best, scored) = decide_k(&rows, &a.run.weights.weights()?)?;
        for r in &scored {
            println!("k={} score={:.4}", r.k, r.weighted_score);
        }
        if let Some(dir) = &a.out_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write(&dir.join("decision.csv"), &decision_table_csv(&scored))?;
        }
        println!("best_k={best}");
        return Ok(());
    }
    let (Some(gallery), Some(seed), Some(out_dir)) = (&a.gallery, a.seed, &a.out_dir) else {
        bail!("--gallery, --seed and --out-dir are required unless --rows-from-file is given");
    };
    let table = measure(gallery, seed, out_dir, &a.run)?;
    print_table(&table);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let table = measure(&a.gallery, a.seed, &a.out_dir, &a.run)?;
    let mut detail = format!("{DETAIL_HEADER}\n");
    for report in &table.reports {
        detail.push_str(&report.detail_rows());
    }
    write(&a.out_dir.join("bench_detail.csv"), &detail)?;
    for report in &table.reports {
        println!(
            "k={} t_avg={:.2} accuracy={:.2} hit_agreement={:.2} abs_total_reduction={:.2}",
            report.k,
            report.t_avg_pct,
            report.accuracy_pct,
            report.hit_agreement_pct,
            report.abs_total_reduction_pct
        );
    }
    print_table(&table);
    Ok(())
}

fn parse_probe(text: &str) -> Result<[Option<f64>; DIM]> {
    let cells: Vec<&str> = text.split(',').map(str::trim).collect();
    if cells.len() != DIM {
        bail!(
            "probe needs {DIM} comma-separated values, got {}",
            cells.len()
        );
    }
    let mut out = [None; DIM];
    for (slot, cell) in out.iter_mut().zip(&cells) {
        if !cell.is_empty() {
            let v: f64 = cell
                .parse()
                .with_context(|| format!("probe value {cell:?} is not a number"))?;
            if !v.is_finite() {
                bail!("probe value {cell:?} is not finite");
            }
            *slot = Some(v);
        }
    }
    Ok(out)
}

fn cmd_identify(a: IdentifyArgs) -> Result<()> {
    let thresholds = a.thresholds.thresholds()?;
    let raw = parse_probe(&a.probe)?;
    let probe = match &a.stats {
        Some(path) => prepare_probe(&raw, &read_stats(path)?),
        None => FeatureVector::from(raw.map(|v| v.unwrap_or(0.0))),
    };
    let found = match (&a.index, a.k, &a.gallery) {
        (Some(root), Some(k), _) => {
            identify_clustered(&probe, &PartitionIndex::open(root, k)?, &thresholds)?
        }
        (None, _, Some(gallery)) => identify_serial(&probe, gallery, &thresholds)?,
        _ => bail!("give either --gallery or --index with --k"),
    };
    let r = &found.result;
    println!(
        "hit={} prd={} cc={} confidence={}",
        r.hit_id.as_deref().unwrap_or("NONE"),
        r.prd,
        r.cc,
        r.confidence
    );
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn join(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
