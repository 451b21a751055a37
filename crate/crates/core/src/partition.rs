//! Physical per-cluster partitions of a gallery.
//!
//! Layout under a root directory, one subdirectory per cluster count:
//!
//! ```text
//! <root>/k=<K>/cluster_<label>.csv   gallery-schema CSV, one per label
//! <root>/k=<K>/manifest.toml         model, row counts, SHA-256 per file
//! <root>/k=<K>/INCOMPLETE            present only while a write is in flight
//! ```
//!
//! Rows inside each file are sorted by subject id. Paths in the manifest are
//! relative to the root. Writers are not coordinated across processes; one
//! writer per root is assumed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{assign, ClusterModel};
use crate::feature::{self, FeatureVector, SubjectRecord};
use crate::{Error, Result};

const MANIFEST: &str = "manifest.toml";
const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Descriptor of the partitions written for one cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionIndex {
    pub k: usize,
    pub root_dir: PathBuf,
    pub model: ClusterModel,
    pub partition_sizes: Vec<usize>,
    /// Hex SHA-256 of each partition file, by label.
    pub checksums: Vec<String>,
    /// Partition file paths relative to `root_dir`, by label.
    pub files: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    k: usize,
    seed: u64,
    tol: f64,
    iterations: usize,
    ssq: f64,
    centroids: Vec<Vec<f64>>,
    partitions: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    label: usize,
    file: String,
    rows: usize,
    sha256: String,
}

fn k_dir_name(k: usize) -> String {
    format!("k={k}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PartitionIndex {
    /// Directory holding this index's files.
    pub fn dir(&self) -> PathBuf {
        self.root_dir.join(k_dir_name(self.k))
    }

    pub fn partition_path(&self, label: usize) -> Option<PathBuf> {
        self.files.get(label).map(|f| self.root_dir.join(f))
    }

    pub fn total_rows(&self) -> usize {
        self.partition_sizes.iter().sum()
    }

    /// Opens the index for `k` under `root_dir`, refusing one left behind by
    /// an interrupted write.
    pub fn open(root_dir: &Path, k: usize) -> Result<PartitionIndex> {
        let dir = root_dir.join(k_dir_name(k));
        if dir.join(INCOMPLETE_MARKER).exists() {
            return Err(Error::IncompleteIndex(dir));
        }
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |message: String| Error::Manifest {
            path: path.clone(),
            message,
        };
        let m: Manifest = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if m.k != k || m.centroids.len() != k || m.partitions.len() != k {
            return Err(bad(format!(
                "expected {k} centroids and partitions, found k={} with {} and {}",
                m.k,
                m.centroids.len(),
                m.partitions.len()
            )));
        }
        let centroids = m
            .centroids
            .iter()
            .map(|c| FeatureVector::from_slice(c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(e.to_string()))?;

        let mut sizes = Vec::with_capacity(k);
        let mut checksums = Vec::with_capacity(k);
        let mut files = Vec::with_capacity(k);
        for (label, entry) in m.partitions.into_iter().enumerate() {
            if entry.label != label {
                return Err(bad(format!(
                    "partition entries out of order at label {label}"
                )));
            }
            sizes.push(entry.rows);
            checksums.push(entry.sha256);
            files.push(PathBuf::from(entry.file));
        }

        Ok(PartitionIndex {
            k,
            root_dir: root_dir.to_path_buf(),
            model: ClusterModel {
                k,
                centroids,
                ssq: m.ssq,
                iterations: m.iterations,
                seed: m.seed,
                tol: m.tol,
            },
            partition_sizes: sizes,
            checksums,
            files,
        })
    }
}

/// Assigns every record to its nearest centroid and writes one file per
/// label under `<root_dir>/k=<K>/`, followed by the manifest.
///
/// Empty clusters get a header-only file. Rebuilding from the same inputs
/// produces byte-identical files.
pub fn partition(
    gallery: &[SubjectRecord],
    model: &ClusterModel,
    root_dir: &Path,
) -> Result<PartitionIndex> {
    let k = model.k;
    let dir = root_dir.join(k_dir_name(k));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }

    let mut labelled: Vec<(usize, &SubjectRecord)> = gallery
        .iter()
        .map(|r| (assign(&r.vector, model), r))
        .collect();
    labelled.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.subject_id.cmp(&b.1.subject_id))
    });

    let mut buckets: Vec<Vec<SubjectRecord>> = vec![Vec::new(); k];
    for (label, rec) in labelled {
        buckets[label].push(rec.clone());
    }

    let mut entries = Vec::with_capacity(k);
    for (label, rows) in buckets.iter().enumerate() {
        let rel = PathBuf::from(k_dir_name(k)).join(format!("cluster_{label}.csv"));
        let bytes = feature::subjects_to_csv(rows);
        let path = root_dir.join(&rel);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            label,
            file: rel.to_string_lossy().replace('\\', "/"),
            rows: rows.len(),
            sha256: sha256_hex(&bytes),
        });
    }

    let manifest = Manifest {
        k,
        seed: model.seed,
        tol: model.tol,
        iterations: model.iterations,
        ssq: model.ssq,
        centroids: model
            .centroids
            .iter()
            .map(|c| c.values().to_vec())
            .collect(),
        partitions: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;

    PartitionIndex::open(root_dir, k)
}

/// Reads one partition in file order after verifying its checksum.
pub fn load_partition(index: &PartitionIndex, label: usize) -> Result<Vec<SubjectRecord>> {
    let path = index
        .partition_path(label)
        .ok_or(Error::LabelOutOfRange { label, k: index.k })?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let found = sha256_hex(&bytes);
    if found != index.checksums[label] {
        return Err(Error::ChecksumMismatch {
            path,
            expected: index.checksums[label].clone(),
            found,
        });
    }
    feature::parse_subjects(bytes.as_slice())
}

/// Reads every partition, by label.
pub fn load_all(index: &PartitionIndex) -> Result<Vec<Vec<SubjectRecord>>> {
    (0..index.k).map(|l| load_partition(index, l)).collect()
}

/// Reads the full preprocessed gallery in file order.
pub fn load_serial(gallery_path: &Path) -> Result<Vec<SubjectRecord>> {
    feature::load_subjects_csv(gallery_path)
}
