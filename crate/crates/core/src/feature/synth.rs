//! Seeded synthetic galleries: isotropic Gaussian blobs around a typical
//! resting-ECG feature vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{FeatureVector, RawRecord, DIM};
use crate::{Error, Result};

/// Typical adult values: RR, PR, QRS, QT, QTc (ms); P, QRS, T axes (deg); ACCI.
const BASELINE: [f64; DIM] = [800.0, 160.0, 90.0, 400.0, 420.0, 50.0, 40.0, 40.0, 2.0];

/// Minimum center separation, in units of blob spread.
const MIN_SEPARATION: f64 = 10.0;

/// Edge length of the center simplex, in units of blob spread.
const SIMPLEX_EDGE: f64 = 3.0 * MIN_SEPARATION;

/// Draws `n_subjects` single-enrollment records from `n_blobs` Gaussian blobs.
///
/// Subject `i` belongs to blob `i % n_blobs`, so blob sizes differ by at most
/// one. Blob centers are pairwise at least `10 * blob_spread` apart. Up to
/// nine blobs sit on a randomly rotated regular simplex, so every pair of
/// centers is equally far apart.
pub fn synth_gallery(
    n_subjects: usize,
    n_blobs: usize,
    blob_spread: f64,
    seed: u64,
) -> Result<Vec<RawRecord>> {
    if n_blobs == 0 {
        return Err(Error::InvalidArgument("n_blobs must be positive".into()));
    }
    if n_subjects < n_blobs {
        return Err(Error::InvalidArgument(format!(
            "n_subjects ({n_subjects}) must be at least n_blobs ({n_blobs})"
        )));
    }
    if !(blob_spread > 0.0 && blob_spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blob_spread must be positive, got {blob_spread}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = blob_centers(&mut rng, n_blobs, blob_spread);
    let noise = Normal::new(0.0, blob_spread).expect("spread validated above");

    let width = n_subjects.to_string().len();
    Ok((0..n_subjects)
        .map(|i| {
            let center = &centers[i % n_blobs];
            let v: [f64; DIM] = std::array::from_fn(|j| center[j] + noise.sample(&mut rng));
            RawRecord::complete(format!("S{:0width$}", i + 1), &FeatureVector::from(v))
        })
        .collect())
}

fn blob_centers(rng: &mut ChaCha8Rng, n_blobs: usize, spread: f64) -> Vec<FeatureVector> {
    if n_blobs <= DIM {
        simplex_centers(rng, n_blobs, spread)
    } else {
        scattered_centers(rng, n_blobs, spread)
    }
}

fn simplex_centers(rng: &mut ChaCha8Rng, n_blobs: usize, spread: f64) -> Vec<FeatureVector> {
    let basis = random_rotation(rng);
    // e_i minus the mean of e_1..e_n has edge length sqrt(2).
    let scale = SIMPLEX_EDGE * spread / std::f64::consts::SQRT_2;
    let offset = 1.0 / n_blobs as f64;
    (0..n_blobs)
        .map(|i| {
            let v: [f64; DIM] = std::array::from_fn(|j| {
                let along: f64 = (0..n_blobs)
                    .map(|a| (f64::from(a == i) - offset) * basis[a][j])
                    .sum();
                BASELINE[j] + scale * along
            });
            v.into()
        })
        .collect()
}

/// Orthonormal rows from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; DIM]; DIM] {
    let mut rows = [[0.0; DIM]; DIM];
    let mut i = 0;
    while i < DIM {
        let mut v: [f64; DIM] = std::array::from_fn(|_| StandardNormal.sample(rng));
        for prev in &rows[..i] {
            let d: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= d * p;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows[i] = v.map(|x| x / norm);
            i += 1;
        }
    }
    rows
}

fn scattered_centers(rng: &mut ChaCha8Rng, n_blobs: usize, spread: f64) -> Vec<FeatureVector> {
    let min_sq = (MIN_SEPARATION * spread).powi(2);
    let mut half_width = 2.0 * MIN_SEPARATION * spread;
    let mut centers: Vec<FeatureVector> = Vec::with_capacity(n_blobs);
    let mut rejected = 0usize;
    while centers.len() < n_blobs {
        let c: FeatureVector =
            std::array::from_fn(|j| BASELINE[j] + rng.random_range(-half_width..=half_width))
                .into();
        if centers.iter().all(|o| o.squared_distance(&c) >= min_sq) {
            centers.push(c);
        } else {
            rejected += 1;
            // Crowded box: widen it rather than loop forever.
            if rejected.is_multiple_of(1000) {
                half_width *= 1.5;
            }
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = synth_gallery(10, 2, 0.1, 7).unwrap();
        let b = synth_gallery(10, 2, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_gallery(10, 2, 0.1, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_fewer_subjects_than_blobs() {
        assert!(synth_gallery(1, 2, 0.1, 0).is_err());
        assert!(synth_gallery(5, 0, 0.1, 0).is_err());
        assert!(synth_gallery(5, 1, 0.0, 0).is_err());
    }

    #[test]
    fn ids_are_unique() {
        let recs = synth_gallery(1000, 3, 1.0, 1).unwrap();
        let mut ids: Vec<_> = recs.iter().map(|r| r.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn single_blob_spread_matches_parameter() {
        let spread = 2.0;
        let recs = synth_gallery(2000, 1, spread, 3).unwrap();
        let n = recs.len() as f64;
        for j in 0..DIM {
            let col: Vec<f64> = recs.iter().map(|r| r.features[j].unwrap()).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((sd - spread).abs() < 0.5 * spread, "feature {j}: sd {sd}");
        }
    }

    #[test]
    fn simplex_centers_are_equidistant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=DIM {
            let centers = blob_centers(&mut rng, n, 1.5);
            for (i, a) in centers.iter().enumerate() {
                for b in &centers[i + 1..] {
                    assert!((a.distance(b) - SIMPLEX_EDGE * 1.5).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn centers_respect_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spread = 0.5;
        let centers = blob_centers(&mut rng, 12, spread);
        for (i, a) in centers.iter().enumerate() {
            for b in &centers[i + 1..] {
                assert!(a.distance(b) >= MIN_SEPARATION * spread);
            }
        }
    }
}
