//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_silhouette, exhaustive_min_ssq, records, SplitMix};
use ecgident::bench::{
    build_decision_table, make_queries, run_bench, BenchOptions, DecisionConfig, ScanMode,
};
use ecgident::clustering::{assign, kmeans_fit, Assignment, KMeansConfig};
use ecgident::feature::{preprocess, synth_gallery, write_subjects_csv};
use ecgident::matcher::{cc, prd, MatchThresholds};
use ecgident::partition::{load_all, partition};
use ecgident::selection::{
    decide_k, detect_knee, elbow_curve, silhouette_avg, DecisionWeights, KDecisionRow, KRange,
};
use ecgident::{FeatureVector, SubjectRecord, DIM};

type Outcome = Result<String, String>;

fn synthetic(
    n: usize,
    blobs: usize,
    seed: u64,
    dir: &Path,
) -> (Vec<SubjectRecord>, std::path::PathBuf) {
    let raw = synth_gallery(n, blobs, 5.0, seed).expect("synthetic gallery");
    let (g, _) = preprocess(&raw).expect("preprocess");
    let path = dir.join(format!("gallery_{n}_{blobs}_{seed}.csv"));
    write_subjects_csv(&path, &g).expect("write gallery");
    (g, path)
}

fn table_one() -> Outcome {
    let table: [(usize, f64, f64, f64, f64); 8] = [
        (2, 18.57, 97.0, 0.39, 52.331),
        (3, 57.37, 100.0, 0.32, 61.57),
        (4, 73.10, 96.0, 0.35, 62.725),
        (5, 79.26, 100.0, 0.32, 65.95),
        (6, 80.95, 94.0, 0.28, 63.27),
        (7, 83.43, 98.0, 0.29, 65.77),
        (8, 82.34, 98.0, 0.27, 65.54),
        (9, 86.14, 97.0, 0.24, 65.8),
    ];
    let rows: Vec<KDecisionRow> = table
        .iter()
        .map(|&(k, t, a, s, _)| KDecisionRow::unscored(k, t, a, s))
        .collect();
    let (best, scored) = decide_k(&rows, &DecisionWeights::default()).map_err(|e| e.to_string())?;
    let mut off = Vec::new();
    for (row, &(k, .., printed)) in scored.iter().zip(&table) {
        let dev = (row.weighted_score - printed).abs();
        if dev > 0.005 {
            off.push(format!(
                "k={k} computed {:.4} printed {printed} (off by {dev:.4})",
                row.weighted_score
            ));
        }
    }
    if best != 5 {
        off.push(format!("best_k={best}"));
    }
    if off.is_empty() {
        Ok("all 8 scores within 0.005, best_k=5".into())
    } else {
        Err(format!("best_k={best}; {}", off.join("; ")))
    }
}

fn matching_identities() -> Outcome {
    let mut e1 = [0.0; DIM];
    e1[0] = 1.0;
    let mut e2 = [0.0; DIM];
    e2[1] = 1.0;
    let x = FeatureVector::from([1.0, -2.0, 3.0, 0.5, 4.0, -1.0, 2.0, 0.0, 7.0]);
    let e1 = FeatureVector::from(e1);
    let e2 = FeatureVector::from(e2);
    let neg = x.map(|_, v| -v);
    let twice = x.map(|_, v| 2.0 * v);
    let checks = [
        ("prd identical", prd(&x, &x), 0.0),
        ("prd zero template", prd(&x, &FeatureVector::ZERO), 100.0),
        ("prd orthogonal", prd(&e1, &e2), 100.0 * 2f64.sqrt()),
        ("cc parallel", cc(&x, &twice), 1.0),
        ("cc orthogonal", cc(&e1, &e2), 0.0),
        ("cc anti-parallel", cc(&x, &neg), -1.0),
    ];
    let mut bad = Vec::new();
    for (name, got, want) in checks {
        match got {
            Ok(v) if (v - want).abs() <= 1e-9 => {}
            other => bad.push(format!("{name}: {other:?} vs {want}")),
        }
    }
    if bad.is_empty() {
        Ok("6 identities within 1e-9".into())
    } else {
        Err(bad.join("; "))
    }
}

/// Criteria 3 and 4 share one decision-table run.
fn exact_hits(dir: &Path) -> (Outcome, Outcome) {
    let (_, path) = synthetic(10_000, 5, 2024, dir);
    let mut cfg = DecisionConfig::new(2024, dir.join("c3"));
    cfg.n_queries = 500;
    cfg.bench = BenchOptions {
        repeats: 1,
        mode: ScanMode::FileBacked,
    };
    let table = match build_decision_table(
        &path,
        KRange::default(),
        &MatchThresholds::default(),
        &DecisionWeights::default(),
        &cfg,
    ) {
        Ok(t) => t,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };

    let acc: Vec<String> = table
        .reports
        .iter()
        .filter(|r| r.accuracy_pct != 100.0)
        .map(|r| format!("k={} accuracy {:.2}%", r.k, r.accuracy_pct))
        .collect();
    let c3 = if acc.is_empty() && table.reports.len() == 8 {
        Ok(format!("accuracy 100% for k=2..9, best_k={}", table.best_k))
    } else {
        Err(acc.join("; "))
    };

    let mut bad = Vec::new();
    let mut checked = 0;
    for r in &table.reports {
        for o in r.outcomes.iter().filter(|o| o.truth_in_cluster) {
            checked += 1;
            if o.cluster_hit != o.serial_hit {
                bad.push(format!("k={} query {}", r.k, o.query_id));
            }
        }
    }
    let c4 = if bad.is_empty() {
        Ok(format!("{checked} in-cluster queries, all hits identical"))
    } else {
        Err(format!("{} disagreements: {}", bad.len(), bad.join(", ")))
    };
    (c3, c4)
}

fn time_reduction(dir: &Path) -> Outcome {
    let (g, path) = synthetic(100_000, 1, 77, dir);
    let queries = make_queries(&g, 200, 0.0, 77).map_err(|e| e.to_string())?;
    let opts = BenchOptions {
        repeats: 5,
        mode: ScanMode::InMemory,
    };
    let mut summary = Vec::new();
    let mut bad = Vec::new();
    let mut prev_median = f64::NEG_INFINITY;
    for k in [2usize, 5, 8] {
        let fit = kmeans_fit(&g, &KMeansConfig::new(k, 77)).map_err(|e| e.to_string())?;
        let index = partition(&g, &fit.model, &dir.join("c5")).map_err(|e| e.to_string())?;
        let report = run_bench(&path, &index, &queries, &MatchThresholds::default(), &opts)
            .map_err(|e| e.to_string())?;
        let expected = (1.0 - 1.0 / k as f64) * 100.0;
        let mut per_query: Vec<f64> = report
            .outcomes
            .iter()
            .map(|o| o.reduction_pct().unwrap_or(f64::NAN))
            .collect();
        per_query.sort_by(f64::total_cmp);
        let median = per_query[per_query.len() / 2];
        summary.push(format!(
            "k={k} t_avg {:.1}% (model {expected:.1}%), median {median:.1}%, sizes {:?}",
            report.t_avg_pct, index.partition_sizes
        ));
        if (report.t_avg_pct - expected).abs() > 15.0 {
            bad.push(format!(
                "k={k} t_avg {:.1}% outside ±15 of {expected:.1}%",
                report.t_avg_pct
            ));
        }
        if median < prev_median {
            bad.push(format!("median at k={k} fell to {median:.1}%"));
        }
        prev_median = median;
    }
    if bad.is_empty() {
        Ok(summary.join("; "))
    } else {
        Err(format!("{} [{}]", bad.join("; "), summary.join("; ")))
    }
}

fn clumped_instance(seed: u64) -> Vec<FeatureVector> {
    let mut rng = SplitMix(seed);
    let n = 5 + rng.below(4);
    let kc = 2 + rng.below(2);
    let centres: Vec<FeatureVector> = (0..kc).map(|_| rng.vector(-10.0, 10.0)).collect();
    (0..n)
        .map(|i| centres[i % kc].map(|_, x| x + rng.uniform(-1.0, 1.0)))
        .collect()
}

fn clustering_oracles() -> Outcome {
    let mut bad = Vec::new();
    let mut fits = 0;
    for inst in 0..20u64 {
        let pts = clumped_instance(5000 + inst);
        let g = records(&pts);
        for k in [2, 3] {
            let fit = kmeans_fit(&g, &KMeansConfig::new(k, inst)).map_err(|e| e.to_string())?;
            fits += 1;
            let opt = exhaustive_min_ssq(&pts, k);
            if (fit.model.ssq - opt).abs() > 1e-9 {
                bad.push(format!(
                    "instance {inst} k={k}: {} vs optimum {opt}",
                    fit.model.ssq
                ));
            }
            if fit
                .ssq_trace
                .windows(2)
                .any(|w| w[1] > w[0] * (1.0 + 1e-12))
            {
                bad.push(format!("instance {inst} k={k}: trace increases"));
            }
        }
    }
    if bad.is_empty() {
        Ok(format!(
            "{fits} fits at the exhaustive optimum, traces non-increasing"
        ))
    } else {
        Err(bad.join("; "))
    }
}

fn silhouette_oracle() -> Outcome {
    let mut rng = SplitMix(2718);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 4 + rng.below(17);
        let k = 2 + rng.below(3);
        let pts: Vec<FeatureVector> = (0..n).map(|_| rng.vector(-4.0, 4.0)).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let got = silhouette_avg(
            &records(&pts),
            &Assignment {
                k,
                labels: labels.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_silhouette(&pts, &labels)).abs());
    }
    let line: Vec<FeatureVector> = [0.0, 1.0, 10.0, 11.0]
        .iter()
        .map(|&x| {
            let mut a = [0.0; DIM];
            a[0] = x;
            a.into()
        })
        .collect();
    let example = silhouette_avg(
        &records(&line),
        &Assignment {
            k: 2,
            labels: vec![0, 0, 1, 1],
        },
    )
    .map_err(|e| e.to_string())?;
    let detail =
        format!("max deviation {worst:.2e} over 50 galleries, worked example {example:.4}");
    if worst <= 1e-9 && (example - 0.8997).abs() <= 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn elbow_recovery() -> Outcome {
    let mut knees = Vec::new();
    for seed in [1u64, 2, 3] {
        let raw = synth_gallery(5000, 5, 5.0, seed).map_err(|e| e.to_string())?;
        let (g, _) = preprocess(&raw).map_err(|e| e.to_string())?;
        let curve = elbow_curve(&g, KRange::default(), &KMeansConfig::new(2, seed))
            .map_err(|e| e.to_string())?;
        knees.push(detect_knee(&curve).map_err(|e| e.to_string())?);
    }
    let fives = knees.iter().filter(|&&k| k == 5).count();
    let detail = format!("knees {knees:?}");
    if fives >= 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn partition_integrity(dir: &Path) -> Outcome {
    let (g, _) = synthetic(10_000, 5, 9, dir);
    let mut expected: Vec<(String, [u64; DIM])> = g
        .iter()
        .map(|r| (r.subject_id.clone(), r.vector.values().map(f64::to_bits)))
        .collect();
    expected.sort();
    let mut bad = Vec::new();
    for k in 2..10 {
        let fit = kmeans_fit(&g, &KMeansConfig::new(k, 9)).map_err(|e| e.to_string())?;
        let index = partition(&g, &fit.model, &dir.join("c9")).map_err(|e| e.to_string())?;
        let parts = load_all(&index).map_err(|e| e.to_string())?;
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut union = Vec::with_capacity(g.len());
        for (label, part) in parts.iter().enumerate() {
            for r in part {
                if assign(&r.vector, &index.model) != label {
                    *counts.entry(label).or_default() += 1;
                }
                union.push((r.subject_id.clone(), r.vector.values().map(f64::to_bits)));
            }
        }
        union.sort();
        if union != expected {
            bad.push(format!("k={k}: union differs from gallery"));
        }
        if !counts.is_empty() {
            bad.push(format!("k={k}: misassigned rows {counts:?}"));
        }
    }
    if bad.is_empty() {
        Ok("k=2..9: exact multiset union, every row in its nearest-centroid file".into())
    } else {
        Err(bad.join("; "))
    }
}

fn report(n: usize, budget: Duration, started: Instant, outcome: Outcome) -> bool {
    let elapsed = started.elapsed();
    let (ok, detail) = match outcome {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over time budget of {budget:?}")),
        Err(d) => (false, d),
    };
    println!(
        "criterion {n}: {} ({detail}) [{:.2}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let secs = Duration::from_secs;
    let mut all = true;

    let t = Instant::now();
    all &= report(1, secs(1), t, table_one());
    let t = Instant::now();
    all &= report(2, secs(1), t, matching_identities());

    let t = Instant::now();
    let (c3, c4) = exact_hits(dir.path());
    let c3_time = t.elapsed();
    all &= report(3, secs(120), t, c3);
    // Shares criterion 3's run, so it inherits that budget.
    let ok4 = report(4, secs(120), t, c4);
    all &= ok4 && c3_time <= secs(120);

    let t = Instant::now();
    all &= report(5, secs(300), t, time_reduction(dir.path()));
    let t = Instant::now();
    all &= report(6, secs(30), t, clustering_oracles());
    let t = Instant::now();
    all &= report(7, secs(30), t, silhouette_oracle());
    let t = Instant::now();
    all &= report(8, secs(120), t, elbow_recovery());
    let t = Instant::now();
    all &= report(9, secs(60), t, partition_integrity(dir.path()));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
