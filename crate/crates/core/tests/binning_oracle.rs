//! Binning and classification checked against values computed outside this
//! crate (scikit-learn `KMeans(n_init=50)` + `silhouette_score` on the same
//! synthetic profiles) and against a naive silhouette implementation.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use palsim::classifier::{build_class_model, classify_app, AppFeatures};
use palsim::numeric::{kmeans_1d, silhouette_score, silhouette_score_1d};
use palsim::synth::{four_level_profile, three_level_profile, uniform_profile};
use palsim::variability::{bin_class, bin_pm_scores, sample_profile, VariabilityProfile};

// Reference silhouettes at the selected k, from scikit-learn.
const SK_THREE_LEVELS: (usize, f64) = (3, 0.979_155_535_956_449_8);
const SK_FOUR_LEVELS: (usize, f64) = (4, 0.920_504_094_032_466_5);
const SK_UNIFORM: (usize, f64) = (2, 0.615_157_189_773_191_4);
// Lloyd iterations can stop in a neighbouring local optimum.
const SILHOUETTE_TOL: f64 = 1e-3;

fn naive_silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sum[labels[j]] += dist(p, q);
                count[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if count[own] == 0 {
            continue;
        }
        let a = sum[own] / count[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && count[c] > 0)
            .map(|c| sum[c] / count[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

#[test]
fn three_levels_match_reference() {
    let p = three_level_profile(40, 1).unwrap();
    let b = bin_class(p.class(0), 0).unwrap();
    assert_eq!(b.k_inliers, SK_THREE_LEVELS.0);
    let sil = b.silhouettes.iter().find(|(k, _)| *k == b.k_inliers).unwrap().1;
    assert_abs_diff_eq!(sil, SK_THREE_LEVELS.1, epsilon = SILHOUETTE_TOL);
    assert_eq!(b.outlier_gpus.iter().copied().collect::<Vec<_>>(), vec![120]);
    assert_eq!(b.gpu_to_score[120], 2.55);
    for (c, want) in b.bin_centroids.iter().zip([0.89, 0.94, 1.06]) {
        assert_abs_diff_eq!(*c, want, epsilon = 0.005);
    }
}

#[test]
fn four_levels_match_reference() {
    let p = four_level_profile(0).unwrap();
    let b = bin_class(p.class(0), 0).unwrap();
    assert_eq!(b.k_inliers, SK_FOUR_LEVELS.0);
    let sil = b.silhouettes.iter().find(|(k, _)| *k == b.k_inliers).unwrap().1;
    assert_abs_diff_eq!(sil, SK_FOUR_LEVELS.1, epsilon = SILHOUETTE_TOL);
    assert!(b.outlier_gpus.is_empty());
    let in_bin = |c: f64| b.gpu_to_score.iter().filter(|&&s| s == c).count();
    let first_two = in_bin(b.bin_centroids[0]) + in_bin(b.bin_centroids[1]);
    assert!(first_two * 2 > p.num_gpus(), "{first_two} of {}", p.num_gpus());
    // The median GPU sits in the second bin, just below 1.0.
    assert_abs_diff_eq!(b.bin_centroids[1], 1.0, epsilon = 0.01);
}

#[test]
fn uniform_spread_picks_two_bins() {
    for n in [16, 32, 64, 128] {
        let p = uniform_profile(n, 0.01, 3).unwrap();
        assert_eq!(bin_class(p.class(0), 0).unwrap().k_inliers, 2, "n = {n}");
    }
    let p = uniform_profile(64, 0.01, 3).unwrap();
    let b = bin_class(p.class(0), 0).unwrap();
    let sil = b.silhouettes.iter().find(|(k, _)| *k == 2).unwrap().1;
    assert_abs_diff_eq!(sil, SK_UNIFORM.1, epsilon = SILHOUETTE_TOL);
}

#[test]
fn constant_profile_is_one_bin() {
    let b = bin_class(&[1.0; 16], 0).unwrap();
    assert_eq!(b.bin_centroids, vec![1.0]);
    assert!(b.gpu_to_score.iter().all(|&s| s == 1.0));
}

#[test]
fn lone_slow_gpu_is_outlier() {
    let mut v: Vec<f64> = (0..127).map(|i| 1.0 + 0.0002 * (i % 10) as f64).collect();
    v.push(3.5);
    let b = bin_class(&v, 0).unwrap();
    assert_eq!(b.outlier_gpus.iter().copied().collect::<Vec<_>>(), vec![127]);
    assert_eq!(b.gpu_to_score[127], 3.5);
}

#[test]
fn sampled_subsets_come_from_source() {
    let src = four_level_profile(2).unwrap();
    let a = sample_profile(&src, 64, 1).unwrap();
    let b = sample_profile(&src, 64, 2).unwrap();
    assert_ne!(a, b);
    for s in [&a, &b] {
        assert!(s.class(0).iter().all(|v| src.class(0).contains(v)));
    }
}

#[test]
fn table_of_apps_classifies_like_the_reference() {
    // (dram, peak FU) on the profiler's 0..10 scale.
    let apps = [
        ("resnet50", 2.5, 8.0),
        ("vgg19", 2.0, 8.5),
        ("dcgan", 3.0, 7.5),
        ("bert", 5.0, 5.5),
        ("pointnet", 7.0, 2.0),
        ("pagerank", 8.0, 1.0),
    ];
    let features: Vec<AppFeatures<f64>> = apps.iter().map(|&(n, d, p)| AppFeatures::new(n, d, p).unwrap()).collect();
    let model = build_class_model(&features, 3, 0).unwrap();
    let class_of = |f: &AppFeatures<f64>| model.label(classify_app(&model, f)).to_string();
    let labels: Vec<String> = features.iter().map(class_of).collect();
    assert_eq!(labels, ["A", "A", "A", "B", "C", "C"]);
    let gpt2 = AppFeatures::new("gpt2", 5.5, 5.0).unwrap();
    assert_eq!(class_of(&gpt2), "B");
    for (i, c) in model.centroids.iter().enumerate() {
        assert_eq!(classify_app(&model, &AppFeatures::new("c", c[0], c[1]).unwrap()), i);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn silhouette_matches_naive(points in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 4..40), k in 2usize..5) {
        let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
        let labels: Vec<usize> = (0..pts.len()).map(|i| i % k).collect();
        let got = silhouette_score(&pts, &labels).unwrap();
        prop_assert!((got - naive_silhouette(&pts, &labels)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn binning_invariants(values in prop::collection::vec(0.8..1.6f64, 4..60), seed in 0u64..4) {
        let p = VariabilityProfile::new(vec![values.clone()]).unwrap();
        let b = bin_pm_scores(&p, seed).unwrap();
        let c = b.class(0);
        prop_assert_eq!(&b, &bin_pm_scores(&p, seed).unwrap());
        prop_assert!(c.bin_centroids.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(c.gpu_to_score.len(), values.len());
        for &g in &c.outlier_gpus {
            prop_assert_eq!(c.gpu_to_score[g], values[g]);
        }
        // Inliers sit at a centroid, no farther than that bin's widest member.
        for (g, &s) in c.gpu_to_score.iter().enumerate() {
            if c.outlier_gpus.contains(&g) { continue; }
            prop_assert!(c.bin_centroids.contains(&s));
            let radius = c.gpu_to_score.iter().zip(&values)
                .filter(|(x, _)| **x == s)
                .map(|(_, v)| (v - s).abs())
                .fold(0.0, f64::max);
            prop_assert!((values[g] - s).abs() <= radius);
        }
        for (_, s) in &c.silhouettes {
            prop_assert!((-1.0..=1.0).contains(s));
        }
    }

    #[test]
    fn one_d_silhouette_agrees(values in prop::collection::vec(0.0..5.0f64, 6..30), k in 2usize..4, seed in any::<u64>()) {
        let km = kmeans_1d(&values, k, seed).unwrap();
        let pts: Vec<[f64; 2]> = values.iter().map(|&v| [v, 0.0]).collect();
        if km.cluster_sizes().iter().filter(|&&n| n > 0).count() >= 2 {
            let a = silhouette_score_1d(&values, &km.assignments).unwrap();
            prop_assert!((a - naive_silhouette(&pts, &km.assignments)).abs() < 1e-9);
        }
    }
}
