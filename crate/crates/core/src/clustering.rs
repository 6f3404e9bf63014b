//! k-means over per-pixel band vectors.
//!
//! Cluster labels stand in for ground truth during encoder pre-training. Fit
//! is Lloyd's algorithm with k-means++ seeding from an explicit seed; all
//! accumulation runs in f64, so results are deterministic for a fixed
//! (pixels, k, seed) triple. Pixels enter in raw digital-number space unless
//! the per-band standardization flag is set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the largest centroid displacement drops below this.
    pub tol: f64,
    /// Standardize each band to zero mean, unit variance before fitting. The
    /// scaling is stored on the model and re-applied by `assign`.
    pub standardize: bool,
    /// Fit on a seeded uniform subsample when the input exceeds this count.
    /// Assignment is unaffected; callers always assign the full pixel set.
    pub subsample_cap: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
            standardize: false,
            subsample_cap: Some(2_000_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KMeansModel {
    pub k: usize,
    /// k x band_count, in the (possibly standardized) fit space.
    pub centroids: Array2<f64>,
    /// Sum of squared distances of the fit sample to its nearest centroids.
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
    pub scaling: Option<BandScaling>,
}

impl KMeansModel {
    pub fn band_count(&self) -> usize {
        self.centroids.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 || self.centroids.nrows() != self.k {
            return Err(Error::Cluster(format!(
                "model has k={} but {} centroids",
                self.k,
                self.centroids.nrows()
            )));
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Cluster("centroids must be finite".into()));
        }
        if !(self.inertia >= 0.0) {
            return Err(Error::Cluster(format!("inertia must be >= 0, got {}", self.inertia)));
        }
        if let Some(s) = &self.scaling {
            if s.mean.len() != self.band_count() || s.std.len() != self.band_count() {
                return Err(Error::Cluster("scaling length does not match band count".into()));
            }
        }
        Ok(())
    }
}

fn to_points(pixels: ArrayView2<'_, f32>) -> Array2<f64> {
    pixels.mapv(f64::from)
}

fn apply_scaling(points: &mut Array2<f64>, scaling: &BandScaling) {
    for mut row in points.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - scaling.mean[j]) / scaling.std[j];
        }
    }
}

fn compute_scaling(points: &ArrayView2<'_, f64>) -> BandScaling {
    let n = points.nrows() as f64;
    let d = points.ncols();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for row in points.rows() {
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for row in points.rows() {
        for (j, v) in row.iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    BandScaling { mean, std }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared Euclidean distance; strict improvement keeps
/// ties on the lowest index.
fn nearest(centroids: &Array2<f64>, point: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (idx, c) in centroids.rows().into_iter().enumerate() {
        let d = dist2(c.as_slice().unwrap(), point);
        if d < best.1 {
            best = (idx, d);
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, the rest sampled proportional
/// to squared distance from the chosen set.
fn seed_centroids<R: Rng>(points: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut centroids = Array2::<f64>::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));

    let mut min_d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| dist2(p.as_slice().unwrap(), centroids.row(0).as_slice().unwrap()))
        .collect();
    for ci in 1..k {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // All remaining mass at distance zero: any point works.
            rng.gen_range(0..n)
        };
        centroids.row_mut(ci).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            let d = dist2(p.as_slice().unwrap(), centroids.row(ci).as_slice().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }
    centroids
}

fn assign_points(centroids: &Array2<f64>, points: &Array2<f64>) -> (Vec<u32>, f64) {
    let results: Vec<(usize, f64)> = points
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| nearest(centroids, p.as_slice().unwrap()))
        .collect();
    let inertia = results.iter().map(|(_, d)| d).sum();
    (results.into_iter().map(|(l, _)| l as u32).collect(), inertia)
}

/// Fit k-means with Lloyd iterations. Deterministic for fixed inputs; the
/// per-iteration inertia sequence is checked non-increasing.
pub fn fit_kmeans(
    pixels: ArrayView2<'_, f32>,
    k: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<KMeansModel> {
    if k < 1 {
        return Err(Error::Cluster(format!("k must be >= 1, got {k}")));
    }
    let n = pixels.nrows();
    if n < k {
        return Err(Error::Cluster(format!("need at least k={k} pixels, got {n}")));
    }
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Cluster("input pixels must be finite".into()));
    }

    let mut points = match options.subsample_cap {
        Some(cap) if n > cap && cap >= k => {
            let mut rng = crate::util::seeded_rng(seed, "kmeans-subsample");
            let idx = rand::seq::index::sample(&mut rng, n, cap);
            let mut sub = Array2::<f64>::zeros((cap, pixels.ncols()));
            for (row, i) in idx.into_iter().enumerate() {
                for j in 0..pixels.ncols() {
                    sub[[row, j]] = f64::from(pixels[[i, j]]);
                }
            }
            sub
        }
        _ => to_points(pixels),
    };
    let scaling = options.standardize.then(|| {
        let s = compute_scaling(&points.view());
        apply_scaling(&mut points, &s);
        s
    });

    let mut rng = crate::util::seeded_rng(seed, "kmeans++");
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let d = points.ncols();
    let mut prev_inertia = f64::INFINITY;
    let mut iterations_run = 0;
    for _ in 0..options.max_iter {
        let (labels, inertia) = assign_points(&centroids, &points);
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-9,
            "inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (p, &l) in points.rows().into_iter().zip(&labels) {
            counts[l as usize] += 1;
            let mut row = sums.row_mut(l as usize);
            row += &p;
        }
        let mut shift: f64 = 0.0;
        for ci in 0..k {
            // Empty clusters keep their centroid; deterministic and rare
            // with ++ seeding.
            if counts[ci] == 0 {
                continue;
            }
            let inv = 1.0 / counts[ci] as f64;
            let mut disp = 0.0;
            for j in 0..d {
                let updated = sums[[ci, j]] * inv;
                disp += (updated - centroids[[ci, j]]).powi(2);
                centroids[[ci, j]] = updated;
            }
            shift = shift.max(disp.sqrt());
        }
        iterations_run += 1;
        if shift < options.tol {
            break;
        }
    }
    let (_, inertia) = assign_points(&centroids, &points);

    let model = KMeansModel {
        k,
        centroids,
        inertia,
        iterations_run,
        seed,
        scaling,
    };
    model.validate()?;
    Ok(model)
}

/// Label every pixel with its nearest centroid.
pub fn assign(model: &KMeansModel, pixels: ArrayView2<'_, f32>) -> Result<Vec<u32>> {
    if pixels.ncols() != model.band_count() {
        return Err(Error::Cluster(format!(
            "pixels have {} bands, model expects {}",
            pixels.ncols(),
            model.band_count()
        )));
    }
    let mut points = to_points(pixels);
    if let Some(s) = &model.scaling {
        apply_scaling(&mut points, s);
    }
    Ok(assign_points(&model.centroids, &points).0)
}

/// Modal label among valid pixels; ties resolve to the lowest label.
pub fn predominant_label(labels: &[u32], validity: &[bool]) -> Result<u32> {
    if labels.len() != validity.len() {
        return Err(Error::Cluster(format!(
            "got {} labels but {} validity flags",
            labels.len(),
            validity.len()
        )));
    }
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for (&l, &ok) in labels.iter().zip(validity) {
        if ok {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .ok_or_else(|| Error::Cluster("no valid pixels in tile".into()))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut joint = std::collections::BTreeMap::<(u32, u32), f64>::new();
    let mut rows = std::collections::BTreeMap::<u32, f64>::new();
    let mut cols = std::collections::BTreeMap::<u32, f64>::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *rows.entry(x).or_insert(0.0) += 1.0;
        *cols.entry(y).or_insert(0.0) += 1.0;
    }
    let c2 = |m: f64| m * (m - 1.0) / 2.0;
    let sum_joint: f64 = joint.values().map(|&m| c2(m)).sum();
    let sum_rows: f64 = rows.values().map(|&m| c2(m)).sum();
    let sum_cols: f64 = cols.values().map(|&m| c2(m)).sum();
    let expected = sum_rows * sum_cols / c2(n as f64);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (sum_joint - expected) / (max_index - expected)
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    k: usize,
    seed: u64,
    iterations_run: usize,
    inertia: f64,
    scaling: Option<BandScaling>,
    centroids: Vec<Vec<f64>>,
}

/// Persist a fitted model as JSON for manifest provenance.
pub fn save_kmeans(model: &KMeansModel, path: &Path) -> Result<()> {
    let saved = SavedModel {
        k: model.k,
        seed: model.seed,
        iterations_run: model.iterations_run,
        inertia: model.inertia,
        scaling: model.scaling.clone(),
        centroids: model
            .centroids
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &saved).map_err(|e| Error::Serde(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_kmeans(path: &Path) -> Result<KMeansModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let saved: SavedModel = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    let bands = saved.centroids.first().map_or(0, Vec::len);
    if saved.centroids.iter().any(|r| r.len() != bands) {
        return Err(Error::Cluster("centroid rows have inconsistent lengths".into()));
    }
    let mut centroids = Array2::<f64>::zeros((saved.centroids.len(), bands));
    for (i, row) in saved.centroids.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            centroids[[i, j]] = v;
        }
    }
    let model = KMeansModel {
        k: saved.k,
        centroids,
        inertia: saved.inertia,
        iterations_run: saved.iterations_run,
        seed: saved.seed,
        scaling: saved.scaling,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    /// Gaussian-ish clouds at the given centers with uniform +-spread noise.
    fn clouds(centers: &[Vec<f32>], per_cloud: usize, spread: f32, seed: u64) -> (Array2<f32>, Vec<u32>) {
        let d = centers[0].len();
        let mut rng = crate::util::seeded_rng(seed, "clouds");
        let mut data = Array2::<f32>::zeros((centers.len() * per_cloud, d));
        let mut truth = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for i in 0..per_cloud {
                let row = ci * per_cloud + i;
                for j in 0..d {
                    data[[row, j]] = c[j] + rng.gen_range(-spread..spread);
                }
                truth.push(ci as u32);
            }
        }
        (data, truth)
    }

    fn cloud_mean(data: &Array2<f32>, rows: std::ops::Range<usize>) -> Vec<f64> {
        let mut m = vec![0.0; data.ncols()];
        for r in rows.clone() {
            for j in 0..data.ncols() {
                m[j] += f64::from(data[[r, j]]);
            }
        }
        let n = rows.len() as f64;
        m.iter().map(|v| v / n).collect()
    }

    #[test]
    fn k1_centroid_is_the_mean() {
        let (data, _) = clouds(&[vec![5.0, -2.0, 9.0]], 200, 3.0, 1);
        let model = fit_kmeans(data.view(), 1, 7, &FitOptions::default()).unwrap();
        let mean = cloud_mean(&data, 0..200);
        for j in 0..3 {
            assert!((model.centroids[[0, j]] - mean[j]).abs() < 1e-9);
        }
        // One step reaches the mean, a second detects the fixed point.
        assert!(model.iterations_run <= 2);
    }

    #[test]
    fn two_separated_clouds_recover_their_means() {
        let (data, _) = clouds(&[vec![0.0; 4], vec![100.0; 4]], 300, 1.0, 2);
        let model = fit_kmeans(data.view(), 2, 11, &FitOptions::default()).unwrap();
        let m0 = cloud_mean(&data, 0..300);
        let m1 = cloud_mean(&data, 300..600);
        // Match fitted centroids to clouds by proximity.
        let c0 = model.centroids.row(0).to_vec();
        let (lo, hi) = if dist2(&c0, &m0) < dist2(&c0, &m1) { (0, 1) } else { (1, 0) };
        for j in 0..4 {
            assert!((model.centroids[[lo, j]] - m0[j]).abs() < 1e-6);
            assert!((model.centroids[[hi, j]] - m1[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn supported_k_sweep_fits() {
        let (data, _) = clouds(
            &(0..12).map(|i| vec![(i * 20) as f32; 3]).collect::<Vec<_>>(),
            40,
            2.0,
            3,
        );
        for k in [2usize, 4, 6, 8, 10, 12] {
            let model = fit_kmeans(data.view(), k, 5, &FitOptions::default()).unwrap();
            assert_eq!(model.centroids.nrows(), k);
            assert!(model.inertia.is_finite());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, _) = clouds(&[vec![0.0, 0.0]], 3, 1.0, 4);
        assert!(fit_kmeans(data.view(), 0, 1, &FitOptions::default()).is_err());
        assert!(fit_kmeans(data.view(), 4, 1, &FitOptions::default()).is_err());
    }

    #[test]
    fn assign_matches_brute_force_and_breaks_ties_low() {
        let (data, _) = clouds(&[vec![0.0; 3], vec![50.0; 3], vec![120.0; 3]], 100, 10.0, 5);
        let model = fit_kmeans(data.view(), 3, 9, &FitOptions::default()).unwrap();
        let labels = assign(&model, data.view()).unwrap();
        for (i, p) in data.rows().into_iter().enumerate() {
            let point: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            let mut best = (0usize, f64::INFINITY);
            for (ci, c) in model.centroids.rows().into_iter().enumerate() {
                let d = dist2(c.as_slice().unwrap(), &point);
                if d < best.1 {
                    best = (ci, d);
                }
            }
            assert_eq!(labels[i], best.0 as u32);
        }

        // A pixel sitting exactly on centroid 2 gets label 2; an equidistant
        // pixel takes the lower index.
        let mut probe = Array2::<f32>::zeros((2, 3));
        for j in 0..3 {
            probe[[0, j]] = model.centroids[[2, j]] as f32;
        }
        let mid = KMeansModel {
            k: 2,
            centroids: ndarray::arr2(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]),
            inertia: 0.0,
            iterations_run: 1,
            seed: 0,
            scaling: None,
        };
        probe[[1, 0]] = 1.0;
        let labels = assign(&model, probe.view()).unwrap();
        assert_eq!(labels[0], 2);
        let tie = assign(&mid, probe.view()).unwrap();
        assert_eq!(tie[1], 0);

        let narrow = Array2::<f32>::zeros((1, 2));
        assert!(assign(&model, narrow.view()).is_err());
    }

    #[test]
    fn predominant_label_counts_and_ties() {
        let uniform = vec![5u32; 64];
        assert_eq!(predominant_label(&uniform, &vec![true; 64]).unwrap(), 5);

        let mut labels = vec![0u32; 600];
        labels.extend(vec![1u32; 424]);
        assert_eq!(predominant_label(&labels, &vec![true; 1024]).unwrap(), 0);

        let mut tie = vec![2u32; 512];
        tie.extend(vec![7u32; 512]);
        assert_eq!(predominant_label(&tie, &vec![true; 1024]).unwrap(), 2);

        // Invalid pixels are excluded from the vote.
        let labels = vec![3u32, 3, 3, 9];
        let validity = vec![false, false, false, true];
        assert_eq!(predominant_label(&labels, &validity).unwrap(), 9);
        assert!(predominant_label(&labels, &vec![false; 4]).is_err());
        assert!(predominant_label(&labels, &vec![true; 3]).is_err());
    }

    #[test]
    fn well_separated_clusters_agree_with_truth() {
        // Inter-cluster distance 100, intra spread 5: >= 10x separation.
        let (data, truth) = clouds(
            &[vec![0.0; 4], vec![100.0; 4], vec![200.0; 4]],
            400,
            5.0,
            6,
        );
        let model = fit_kmeans(data.view(), 3, 13, &FitOptions::default()).unwrap();
        let labels = assign(&model, data.view()).unwrap();
        assert!(adjusted_rand_index(&labels, &truth) >= 0.99);
    }

    #[test]
    fn permuting_pixels_permutes_labels_consistently() {
        let (data, _) = clouds(&[vec![0.0; 3], vec![90.0; 3], vec![180.0; 3]], 150, 4.0, 7);
        let n = data.nrows();
        // Deterministic permutation: reverse order.
        let mut permuted = Array2::<f32>::zeros(data.dim());
        for i in 0..n {
            permuted.row_mut(i).assign(&data.row(n - 1 - i));
        }
        // Tight tolerance drives both fits to the exact fixed point, so the
        // matched centroids differ only by f64 summation order.
        let opts = FitOptions { tol: 1e-12, ..FitOptions::default() };
        let a = fit_kmeans(data.view(), 3, 21, &opts).unwrap();
        let b = fit_kmeans(permuted.view(), 3, 21, &opts).unwrap();

        // Find the centroid matching between the two fits.
        let mut mapping = [usize::MAX; 3];
        for i in 0..3 {
            let row = a.centroids.row(i).to_vec();
            let mut best = (0usize, f64::INFINITY);
            for j in 0..3 {
                let d = dist2(&row, b.centroids.row(j).as_slice().unwrap());
                if d < best.1 {
                    best = (j, d);
                }
            }
            assert!(best.1 < 1e-10, "no matching centroid within tolerance");
            mapping[i] = best.0;
        }
        let mut sorted = mapping;
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2], "mapping must be a permutation");

        let la = assign(&a, data.view()).unwrap();
        let lb = assign(&b, data.view()).unwrap();
        for (x, y) in la.iter().zip(&lb) {
            assert_eq!(mapping[*x as usize] as u32, *y);
        }
    }

    #[test]
    fn converged_centroids_are_cluster_means() {
        let (data, _) = clouds(&[vec![0.0; 3], vec![60.0; 3]], 200, 8.0, 8);
        let opts = FitOptions {
            tol: 1e-12,
            max_iter: 500,
            ..FitOptions::default()
        };
        let model = fit_kmeans(data.view(), 2, 17, &opts).unwrap();
        let labels = assign(&model, data.view()).unwrap();
        let mut sums = Array2::<f64>::zeros((2, 3));
        let mut counts = [0usize; 2];
        for (row, &l) in data.rows().into_iter().zip(&labels) {
            counts[l as usize] += 1;
            for j in 0..3 {
                sums[[l as usize, j]] += f64::from(row[j]);
            }
        }
        for ci in 0..2 {
            for j in 0..3 {
                let mean = sums[[ci, j]] / counts[ci] as f64;
                assert!((mean - model.centroids[[ci, j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn subsampled_fit_is_deterministic_and_close() {
        let (data, truth) = clouds(&[vec![0.0; 3], vec![100.0; 3]], 3000, 2.0, 9);
        let opts = FitOptions {
            subsample_cap: Some(500),
            ..FitOptions::default()
        };
        let a = fit_kmeans(data.view(), 2, 30, &opts).unwrap();
        let b = fit_kmeans(data.view(), 2, 30, &opts).unwrap();
        assert_eq!(a.centroids, b.centroids);
        let labels = assign(&a, data.view()).unwrap();
        assert!(adjusted_rand_index(&labels, &truth) >= 0.99);
    }

    #[test]
    fn standardization_is_recorded_and_applied() {
        // Band 1 has 100x the scale of band 0; standardization makes both
        // count equally.
        let mut data = Array2::<f32>::zeros((400, 2));
        let mut rng = crate::util::seeded_rng(10, "std-test");
        for i in 0..400 {
            let group = i % 2;
            data[[i, 0]] = group as f32 + rng.gen_range(-0.1..0.1);
            data[[i, 1]] = rng.gen_range(-100.0..100.0);
        }
        let opts = FitOptions {
            standardize: true,
            ..FitOptions::default()
        };
        let model = fit_kmeans(data.view(), 2, 19, &opts).unwrap();
        assert!(model.scaling.is_some());
        let labels = assign(&model, data.view()).unwrap();
        let truth: Vec<u32> = (0..400).map(|i| (i % 2) as u32).collect();
        assert!(adjusted_rand_index(&labels, &truth) >= 0.99);
    }

    #[test]
    fn json_roundtrip_preserves_the_model() {
        let (data, _) = clouds(&[vec![0.0; 4], vec![50.0; 4]], 100, 3.0, 11);
        let model = fit_kmeans(data.view(), 2, 23, &FitOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kmeans.json");
        save_kmeans(&model, &path).unwrap();
        let back = load_kmeans(&path).unwrap();
        assert_eq!(back.k, model.k);
        assert_eq!(back.seed, model.seed);
        assert_eq!(back.centroids, model.centroids);
        assert_eq!(back.inertia, model.inertia);
        let la = assign(&model, data.view()).unwrap();
        let lb = assign(&back, data.view()).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn ari_known_values() {
        // Identical labelings score 1; independent-looking splits score near 0.
        let a = vec![0u32, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        let relabeled = vec![5u32, 5, 3, 3, 8, 8];
        assert!((adjusted_rand_index(&a, &relabeled) - 1.0).abs() < 1e-12);
        let b = vec![0u32, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &b) < 0.1);
    }
}
