//! Gallery CSV and scaling-stats sidecar I/O.
//!
//! Gallery files are UTF-8 CSV with the fixed header [`GALLERY_HEADER`].
//! An empty cell is a missing value. Numbers are written with 17
//! significant digits so a reload reproduces every bit.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureVector, RawRecord, ScalingStats, SubjectRecord, DIM, FEATURE_NAMES};
use crate::{Error, Result};

pub const GALLERY_HEADER: [&str; DIM + 1] = [
    "id", "rr", "pr", "qrs", "qt", "qtc", "p_axis", "qrs_axis", "t_axis", "acci",
];

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_line() -> String {
    GALLERY_HEADER.join(",")
}

/// Parses a gallery from any reader. Row numbers in errors are 1-based file
/// lines, so the first data row is row 2.
pub fn parse_gallery<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = Vec::new();
    let mut row = ::csv::StringRecord::new();
    if !rdr.read_record(&mut row)? {
        return Err(Error::BadHeader {
            expected: header_line(),
            found: String::new(),
        });
    }
    if row.iter().ne(GALLERY_HEADER.iter().copied()) {
        return Err(Error::BadHeader {
            expected: header_line(),
            found: row.iter().collect::<Vec<_>>().join(","),
        });
    }

    while rdr.read_record(&mut row)? {
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != DIM + 1 {
            return Err(Error::ColumnCount {
                row: line,
                expected: DIM + 1,
                found: row.len(),
            });
        }
        if row.iter().eq(GALLERY_HEADER.iter().copied()) {
            return Err(Error::DuplicateHeader { row: line });
        }
        let id = &row[0];
        if id.is_empty() {
            return Err(Error::BadRow {
                row: line,
                message: "empty subject id".into(),
            });
        }
        let mut features = [None; DIM];
        for (j, slot) in features.iter_mut().enumerate() {
            let cell = row[j + 1].trim();
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::BadNumber {
                    row: line,
                    column: FEATURE_NAMES[j],
                    value: cell.to_string(),
                })?;
            *slot = Some(value);
        }
        records.push(RawRecord::new(id, features));
    }
    Ok(records)
}

/// Parses a gallery in which every cell must be present.
pub fn parse_subjects<R: Read>(reader: R) -> Result<Vec<SubjectRecord>> {
    parse_gallery(reader)?
        .into_iter()
        .enumerate()
        .map(|(i, rec)| match rec.vector() {
            Some(v) => Ok(SubjectRecord {
                subject_id: rec.subject_id,
                vector: v,
            }),
            None => Err(Error::BadRow {
                row: i + 2,
                message: "missing value in a preprocessed gallery".into(),
            }),
        })
        .collect()
}

pub fn load_gallery_csv(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_gallery(std::io::BufReader::new(file))
}

pub fn load_subjects_csv(path: &Path) -> Result<Vec<SubjectRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_subjects(std::io::BufReader::new(file))
}

fn write_rows<'a>(rows: impl Iterator<Item = (&'a str, [Option<f64>; DIM])>) -> Vec<u8> {
    let mut w = ::csv::WriterBuilder::new()
        .terminator(::csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(GALLERY_HEADER).expect("in-memory write");
    let mut cells: Vec<String> = Vec::with_capacity(DIM + 1);
    for (id, features) in rows {
        cells.clear();
        cells.push(id.to_string());
        cells.extend(features.iter().map(|v| v.map(fmt_real).unwrap_or_default()));
        w.write_record(&cells).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Serializes a complete gallery to CSV bytes.
pub fn subjects_to_csv(records: &[SubjectRecord]) -> Vec<u8> {
    write_rows(
        records
            .iter()
            .map(|r| (r.subject_id.as_str(), r.vector.values().map(Some))),
    )
}

pub fn write_subjects_csv(path: &Path, records: &[SubjectRecord]) -> Result<()> {
    fs::write(path, subjects_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn write_gallery_csv(path: &Path, records: &[RawRecord]) -> Result<()> {
    let bytes = write_rows(records.iter().map(|r| (r.subject_id.as_str(), r.features)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    features: Vec<String>,
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

pub fn write_stats(path: &Path, stats: &ScalingStats) -> Result<()> {
    let file = StatsFile {
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        mean: stats.mean.to_vec(),
        stddev: stats.stddev.to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_stats(path: &Path) -> Result<ScalingStats> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let file: StatsFile = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if file.features.iter().ne(FEATURE_NAMES.iter()) {
        return Err(bad(format!("unexpected feature list {:?}", file.features)));
    }
    let mean: [f64; DIM] = file
        .mean
        .try_into()
        .map_err(|_| bad("mean must have 9 entries".into()))?;
    let stddev: [f64; DIM] = file
        .stddev
        .try_into()
        .map_err(|_| bad("stddev must have 9 entries".into()))?;
    if stddev.iter().any(|s| s.is_nan() || *s < 0.0) || FeatureVector::try_new(mean).is_err() {
        return Err(bad("stats must be finite with non-negative stddev".into()));
    }
    Ok(ScalingStats { mean, stddev })
}
