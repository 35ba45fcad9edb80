//! Per-GPU, per-class variability profiles and their PM-Score binning.
//!
//! A profile holds one median-normalized iteration time per GPU for every
//! application class. Binning replaces each inlier GPU's value by the centroid
//! of its K-means bin; GPUs more than three standard deviations from the class
//! mean keep their own value.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{kmeans_1d, silhouette_score_1d};
use crate::scalar::{cmp_scalar, Real};

/// Candidate bin counts swept by [`select_k`].
pub const MIN_BINS: usize = 2;
pub const MAX_BINS: usize = 11;

/// Outlier threshold in standard deviations.
pub const OUTLIER_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilityProfile<T> {
    /// `values[class][gpu]`
    values: Vec<Vec<T>>,
}

impl<T: Real> VariabilityProfile<T> {
    /// Wraps already-normalized values, checking shape and positivity.
    pub fn new(values: Vec<Vec<T>>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::invalid("profile has no classes"));
        };
        let gpus = first.len();
        if gpus == 0 {
            return Err(Error::invalid("profile has no GPUs"));
        }
        for (c, v) in values.iter().enumerate() {
            if v.len() != gpus {
                return Err(Error::invalid(format!(
                    "class {c} has {} GPUs, expected {gpus}",
                    v.len()
                )));
            }
            if let Some(g) = v.iter().position(|&x| !(x > T::zero()) || !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "class {c}, gpu {g}: value must be positive and finite"
                )));
            }
        }
        Ok(VariabilityProfile { values })
    }

    pub fn num_classes(&self) -> usize {
        self.values.len()
    }

    pub fn num_gpus(&self) -> usize {
        self.values[0].len()
    }

    pub fn class(&self, class: usize) -> &[T] {
        &self.values[class]
    }

    pub fn value(&self, gpu: usize, class: usize) -> T {
        self.values[class][gpu]
    }

    pub fn classes(&self) -> impl Iterator<Item = &[T]> {
        self.values.iter().map(Vec::as_slice)
    }
}

/// Median; the mean of the two middle values for even lengths.
pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(cmp_scalar);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::from_f64(2.0).unwrap()
    })
}

/// Divides every class vector by its median.
pub fn normalize_profile<T: Real>(raw: &[Vec<T>]) -> Result<VariabilityProfile<T>> {
    let mut out = Vec::with_capacity(raw.len());
    for (c, durations) in raw.iter().enumerate() {
        if durations.is_empty() {
            return Err(Error::invalid(format!("class {c}: no durations")));
        }
        if let Some(g) = durations.iter().position(|&d| !(d > T::zero()) || !d.is_finite()) {
            return Err(Error::invalid(format!(
                "class {c}, gpu {g}: duration must be positive"
            )));
        }
        let m = median(durations).expect("nonempty");
        out.push(durations.iter().map(|&d| d / m).collect());
    }
    VariabilityProfile::new(out)
}

/// Splits indices into inliers and outliers (`|v - mean| > 3σ`, population σ).
pub fn split_outliers<T: Real>(values: &[T]) -> (Vec<usize>, Vec<usize>) {
    let n = T::from_usize(values.len().max(1)).unwrap();
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let limit = T::from_f64(OUTLIER_SIGMAS).unwrap() * var.sqrt();
    (0..values.len()).partition(|&i| !((values[i] - mean).abs() > limit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection<T> {
    pub k: usize,
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    /// `(k, mean silhouette)` for every candidate evaluated.
    pub silhouettes: Vec<(usize, T)>,
    /// Set when fewer than three inliers forced a single bin.
    pub fallback: bool,
}

fn distinct_count<T: Real>(values: &[T]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(cmp_scalar);
    v.dedup();
    v.len()
}

/// Relabels cluster ids to `0..m` in order of first use by ascending id.
fn dense_labels(assignments: &[usize]) -> (Vec<usize>, usize) {
    let mut used = assignments.to_vec();
    used.sort_unstable();
    used.dedup();
    let dense = assignments
        .iter()
        .map(|a| used.binary_search(a).expect("present"))
        .collect();
    (dense, used.len())
}

/// Chooses the inlier bin count by maximum mean silhouette over k = 2..=11
/// (capped by the number of inliers minus one and by distinct values). Ties go
/// to the smaller k.
pub fn select_k<T: Real>(values: &[T], seed: u64) -> Result<KSelection<T>> {
    if values.is_empty() {
        return Err(Error::invalid("select_k: empty input"));
    }
    let (inliers, outliers) = split_outliers(values);
    let inlier_values: Vec<T> = inliers.iter().map(|&i| values[i]).collect();
    let mut sel = KSelection {
        k: 1,
        inliers,
        outliers,
        silhouettes: Vec::new(),
        fallback: inlier_values.len() < 3,
    };
    if sel.fallback {
        return Ok(sel);
    }
    let k_max = MAX_BINS
        .min(inlier_values.len() - 1)
        .min(distinct_count(&inlier_values));
    let mut best: Option<T> = None;
    for k in MIN_BINS..=k_max {
        let km = kmeans_1d(&inlier_values, k, seed)?;
        let (labels, used) = dense_labels(&km.assignments);
        if used < 2 {
            continue;
        }
        let s = silhouette_score_1d(&inlier_values, &labels)?;
        sel.silhouettes.push((k, s));
        if best.is_none_or(|b| s > b) {
            best = Some(s);
            sel.k = k;
        }
    }
    Ok(sel)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBinning<T> {
    pub k_inliers: usize,
    /// Strictly ascending centroids of the non-empty inlier bins.
    pub bin_centroids: Vec<T>,
    /// PM-Score of every GPU, indexed by gpu id.
    pub gpu_to_score: Vec<T>,
    pub outlier_gpus: BTreeSet<usize>,
    pub silhouettes: Vec<(usize, T)>,
    pub fallback: bool,
}

impl<T: Real> ClassBinning<T> {
    /// All distinct scores in ascending order: inlier centroids plus outlier
    /// values. These are the variability columns of the L×V matrix.
    pub fn score_levels(&self) -> Vec<T> {
        let mut v = self.gpu_to_score.clone();
        v.sort_by(cmp_scalar);
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PMBinning<T> {
    pub classes: Vec<ClassBinning<T>>,
}

impl<T: Real> PMBinning<T> {
    pub fn class(&self, class: usize) -> &ClassBinning<T> {
        &self.classes[class]
    }

    pub fn score(&self, gpu: usize, class: usize) -> T {
        self.classes[class].gpu_to_score[gpu]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Binning that leaves every GPU at its raw normalized value.
    pub fn identity(profile: &VariabilityProfile<T>) -> Self {
        let classes = profile
            .classes()
            .map(|v| {
                let mut centroids = v.to_vec();
                centroids.sort_by(cmp_scalar);
                centroids.dedup();
                ClassBinning {
                    k_inliers: centroids.len(),
                    bin_centroids: centroids,
                    gpu_to_score: v.to_vec(),
                    outlier_gpus: BTreeSet::new(),
                    silhouettes: Vec::new(),
                    fallback: false,
                }
            })
            .collect();
        PMBinning { classes }
    }
}

pub fn bin_class<T: Real>(values: &[T], seed: u64) -> Result<ClassBinning<T>> {
    let sel = select_k(values, seed)?;
    let inlier_values: Vec<T> = sel.inliers.iter().map(|&i| values[i]).collect();
    let km = kmeans_1d(&inlier_values, sel.k, seed)?;

    let mut gpu_to_score = values.to_vec();
    for (&gpu, &bin) in sel.inliers.iter().zip(&km.assignments) {
        gpu_to_score[gpu] = km.centroids[bin][0];
    }
    let mut bin_centroids: Vec<T> = km
        .cluster_sizes()
        .iter()
        .zip(&km.centroids)
        .filter(|(&n, _)| n > 0)
        .map(|(_, c)| c[0])
        .collect();
    bin_centroids.dedup();

    Ok(ClassBinning {
        k_inliers: sel.k,
        bin_centroids,
        gpu_to_score,
        outlier_gpus: sel.outliers.into_iter().collect(),
        silhouettes: sel.silhouettes,
        fallback: sel.fallback,
    })
}

pub fn bin_pm_scores<T: Real>(profile: &VariabilityProfile<T>, seed: u64) -> Result<PMBinning<T>> {
    let classes = profile
        .classes()
        .map(|v| bin_class(v, seed))
        .collect::<Result<_>>()?;
    Ok(PMBinning { classes })
}

/// `n` distinct GPU indices out of `m`, in sampled order.
pub fn sample_indices(m: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > m {
        return Err(Error::invalid(format!(
            "cannot sample {n} GPUs from a {m}-GPU profile"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, m, n).into_vec())
}

/// Draws `n` GPUs without replacement; a sampled GPU keeps its whole
/// per-class tuple. Values are not renormalized.
pub fn sample_profile<T: Real>(source: &VariabilityProfile<T>, n: usize, seed: u64) -> Result<VariabilityProfile<T>> {
    if n == 0 {
        return Err(Error::invalid("cannot sample an empty cluster"));
    }
    let idx = sample_indices(source.num_gpus(), n, seed)?;
    let values = source
        .classes()
        .map(|v| idx.iter().map(|&i| v[i]).collect())
        .collect();
    VariabilityProfile::new(values)
}
