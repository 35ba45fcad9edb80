//! K-means clustering and silhouette scoring over small fixed-dimension points.
//!
//! Both kernels are pure. Points are `[T; D]`; the classifier uses `D = 2`
//! (DRAM utilization, peak functional-unit utilization) and PM-Score binning
//! uses `D = 1` (normalized iteration time).

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Real};

/// Lloyd iterations stop at an assignment fixpoint or after this many updates.
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T, const D: usize> {
    /// Centroids sorted ascending by first coordinate (then by the rest).
    pub centroids: Vec<[T; D]>,
    /// Cluster index of every input point, in input order.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: T,
    /// Number of centroid updates performed.
    pub iterations: usize,
    /// Inertia after every assignment step, in order.
    pub inertia_history: Vec<T>,
}

impl<T: Real, const D: usize> KMeansResult<T, D> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Number of points assigned to each cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
}

pub fn distance<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    squared_distance(a, b).sqrt()
}

fn cmp_point<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| cmp_scalar(x, y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid<T: Real, const D: usize>(point: &[T; D], centroids: &[[T; D]]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(point, &centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn assign<T: Real, const D: usize>(points: &[[T; D]], centroids: &[[T; D]], out: &mut [usize]) -> T {
    let mut inertia = T::zero();
    for (p, slot) in points.iter().zip(out.iter_mut()) {
        let c = nearest_centroid(p, centroids);
        *slot = c;
        inertia = inertia + squared_distance(p, &centroids[c]);
    }
    inertia
}

fn kmeans_plus_plus<T: Real, const D: usize>(points: &[[T; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[T; D]> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut min_d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[first]).to_f64().unwrap_or(0.0))
        .collect();

    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`; fall back to the
            // last point with positive weight.
            pick.unwrap_or_else(|| min_d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // Fewer distinct points than k: reuse the first unchosen point.
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[next] = true;
        centroids.push(points[next]);
        for (p, d) in points.iter().zip(min_d2.iter_mut()) {
            let nd = squared_distance(p, &points[next]).to_f64().unwrap_or(0.0);
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Points are processed in a canonical (lexicographically sorted) order, so the
/// result depends only on the multiset of points, `k` and `seed`; permuting the
/// input permutes `assignments` the same way.
pub fn kmeans<T: Real, const D: usize>(points: &[[T; D]], k: usize, seed: u64) -> Result<KMeansResult<T, D>> {
    if points.is_empty() {
        return Err(Error::invalid("kmeans: empty input"));
    }
    if k < 1 || k > points.len() {
        return Err(Error::invalid(format!(
            "kmeans: k = {k} must be in 1..={}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kmeans: non-finite coordinate"));
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cmp_point(&points[a], &points[b]).then(a.cmp(&b)));
    let sorted: Vec<[T; D]> = order.iter().map(|&i| points[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&sorted, k, &mut rng);
    let mut labels = vec![0usize; sorted.len()];
    let mut previous: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let inertia = assign(&sorted, &centroids, &mut labels);
        history.push(inertia);
        if previous.as_deref() == Some(labels.as_slice()) || iterations >= MAX_ITERATIONS {
            break;
        }
        let mut sums = vec![[T::zero(); D]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in sorted.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            // An empty cluster keeps its previous centroid.
            if n > 0 {
                let n = T::from_usize(n).expect("count fits in scalar");
                for (ci, &si) in c.iter_mut().zip(s) {
                    *ci = si / n;
                }
            }
        }
        iterations += 1;
        previous = Some(labels.clone());
    }

    centroids.sort_by(cmp_point);
    let inertia = assign(&sorted, &centroids, &mut labels);

    let mut assignments = vec![0usize; points.len()];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = labels[pos];
    }

    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// One-dimensional convenience wrapper around [`kmeans`].
pub fn kmeans_1d<T: Real>(values: &[T], k: usize, seed: u64) -> Result<KMeansResult<T, 1>> {
    let points: Vec<[T; 1]> = values.iter().map(|&v| [v]).collect();
    kmeans(&points, k, seed)
}

/// Mean silhouette coefficient.
///
/// Cluster labels must be dense: every index in `0..=max(assignments)` needs at
/// least one point. Points in singleton clusters contribute 0.
pub fn silhouette_score<T: Real, const D: usize>(points: &[[T; D]], assignments: &[usize]) -> Result<T> {
    if points.len() != assignments.len() {
        return Err(Error::invalid(format!(
            "silhouette: {} points but {} assignments",
            points.len(),
            assignments.len()
        )));
    }
    if points.len() < 3 {
        return Err(Error::invalid("silhouette: need at least 3 points"));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    if k < 2 {
        return Err(Error::invalid("silhouette: need at least 2 clusters"));
    }
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("silhouette: cluster {empty} is empty")));
    }

    let mut total = T::zero();
    let mut sums = vec![T::zero(); k];
    for (i, p) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = T::zero());
        for (q, &b) in points.iter().zip(assignments) {
            sums[b] = sums[b] + distance(p, q);
        }
        let own = assignments[i];
        if counts[own] == 1 {
            continue;
        }
        let a = sums[own] / T::from_usize(counts[own] - 1).unwrap();
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / T::from_usize(counts[c]).unwrap())
            .fold(T::infinity(), T::min);
        let denom = a.max(b);
        if denom > T::zero() {
            total = total + (b - a) / denom;
        }
    }
    Ok(total / T::from_usize(points.len()).unwrap())
}

/// One-dimensional convenience wrapper around [`silhouette_score`].
pub fn silhouette_score_1d<T: Real>(values: &[T], assignments: &[usize]) -> Result<T> {
    let points: Vec<[T; 1]> = values.iter().map(|&v| [v]).collect();
    silhouette_score(&points, assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_groups_in_one_dimension() {
        let r = kmeans_1d(&[0.9, 0.91, 2.5], 2, 0).unwrap();
        assert_relative_eq!(r.centroids[0][0], 0.905, epsilon = 1e-12);
        assert_relative_eq!(r.centroids[1][0], 2.5, epsilon = 1e-12);
        assert_eq!(r.assignments, vec![0, 0, 1]);
    }

    #[test]
    fn single_point_identity() {
        let r = kmeans_1d(&[1.234_f64], 1, 9).unwrap();
        assert_eq!(r.centroids, vec![[1.234]]);
        assert_eq!(r.assignments, vec![0]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans_1d::<f64>(&[], 1, 0).is_err());
        assert!(kmeans_1d(&[1.0, 2.0], 0, 0).is_err());
        assert!(kmeans_1d(&[1.0, 2.0], 3, 0).is_err());
        assert!(kmeans_1d(&[1.0, f64::NAN], 1, 0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let r = kmeans_1d(&[0.9_f32, 0.91, 2.5], 2, 3).unwrap();
        assert!((r.centroids[0][0] - 0.905).abs() < 1e-6);
    }

    #[test]
    fn duplicate_points_with_large_k() {
        let r = kmeans_1d(&[1.0, 1.0, 1.0, 2.0], 3, 1).unwrap();
        assert_eq!(r.k(), 3);
        for (i, &a) in r.assignments.iter().enumerate() {
            let v = [1.0, 1.0, 1.0, 2.0][i];
            assert_eq!(r.centroids[a][0], v);
        }
    }

    #[test]
    fn two_dimensional_clusters() {
        let pts = [[0.0, 9.0], [0.2, 8.8], [9.0, 1.0], [8.9, 1.2]];
        let r = kmeans(&pts, 2, 5).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1, 1]);
        assert_relative_eq!(r.centroids[0][0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(r.centroids[1][1], 1.1, epsilon = 1e-12);
    }

    #[test]
    fn silhouette_well_separated() {
        let v = [1.0, 1.01, 1.02, 5.0, 5.01, 5.02];
        let s = silhouette_score_1d(&v, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!(s > 0.9, "{s}");
    }

    #[test]
    fn silhouette_interleaved_four_points() {
        // Hand computation on {0,1,2,3} labelled {0,1,0,1}:
        // s = {0, -1/2, -1/2, 0}, mean -1/4.
        let s = silhouette_score_1d(&[0.0, 1.0, 2.0, 3.0], &[0, 1, 0, 1]).unwrap();
        assert_relative_eq!(s, -0.25, epsilon = 1e-15);
    }

    #[test]
    fn silhouette_errors() {
        assert!(silhouette_score_1d(&[1.0, 2.0, 3.0], &[0, 0, 0]).is_err());
        assert!(silhouette_score_1d(&[1.0, 2.0, 3.0], &[0, 2, 2]).is_err());
        assert!(silhouette_score_1d(&[1.0, 2.0], &[0, 1]).is_err());
        assert!(silhouette_score_1d(&[1.0, 2.0, 3.0], &[0, 1]).is_err());
    }

    #[test]
    fn singleton_cluster_contributes_zero() {
        // Cluster 1 is a singleton; only points 0 and 1 contribute.
        let s = silhouette_score_1d(&[0.0, 1.0, 10.0], &[0, 0, 1]).unwrap();
        let s0 = (10.0 - 1.0) / 10.0;
        let s1 = (9.0 - 1.0) / 9.0;
        assert_relative_eq!(s, (s0 + s1) / 3.0, epsilon = 1e-15);
    }

    fn points_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec([0.0..10.0f64, 0.0..10.0f64], 3..40)
    }

    proptest! {
        #[test]
        fn kmeans_is_deterministic(pts in points_strategy(), k in 1usize..5, seed in any::<u64>()) {
            let k = k.min(pts.len());
            prop_assert_eq!(kmeans(&pts, k, seed).unwrap(), kmeans(&pts, k, seed).unwrap());
        }

        #[test]
        fn inertia_never_increases(pts in points_strategy(), k in 1usize..6, seed in any::<u64>()) {
            let k = k.min(pts.len());
            let r = kmeans(&pts, k, seed).unwrap();
            for w in r.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
        }

        #[test]
        fn assignments_are_nearest_and_centroids_sorted(pts in points_strategy(), k in 1usize..6, seed in any::<u64>()) {
            let k = k.min(pts.len());
            let r = kmeans(&pts, k, seed).unwrap();
            for w in r.centroids.windows(2) {
                prop_assert!(w[0][0] <= w[1][0]);
            }
            for (p, &a) in pts.iter().zip(&r.assignments) {
                prop_assert_eq!(a, nearest_centroid(p, &r.centroids));
            }
            let mut distinct = r.assignments.clone();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assert!(distinct.len() <= k);
        }

        #[test]
        fn permutation_only_permutes_assignments(pts in points_strategy(), k in 1usize..5, seed in any::<u64>(), rot in 0usize..40) {
            let k = k.min(pts.len());
            let rot = rot % pts.len();
            let mut rotated = pts.clone();
            rotated.rotate_left(rot);
            let a = kmeans(&pts, k, seed).unwrap();
            let b = kmeans(&rotated, k, seed).unwrap();
            prop_assert_eq!(&a.centroids, &b.centroids);
            for i in 0..pts.len() {
                prop_assert_eq!(a.assignments[(i + rot) % pts.len()], b.assignments[i]);
            }
        }

        #[test]
        fn silhouette_is_bounded(pts in points_strategy(), k in 2usize..5, seed in any::<u64>()) {
            let k = k.min(pts.len() - 1);
            let r = kmeans(&pts, k, seed).unwrap();
            // Relabel densely; duplicates can leave a cluster empty.
            let mut used: Vec<usize> = r.assignments.clone();
            used.sort_unstable();
            used.dedup();
            if used.len() >= 2 {
                let dense: Vec<usize> = r.assignments.iter().map(|a| used.binary_search(a).unwrap()).collect();
                let s = silhouette_score(&pts, &dense).unwrap();
                prop_assert!((-1.0..=1.0).contains(&s));
            }
        }
    }
}
