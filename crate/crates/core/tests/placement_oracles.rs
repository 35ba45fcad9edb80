use itertools::Itertools;
use proptest::prelude::*;

use palsim::placement::{
    choose_packed, choose_random, packed, pal, pm_first, random_place, reorder_for_placement, guaranteed_prefix_len, ClassLvMatrix,
    ClusterState, PlacementPolicy, PlacementRequest,
};

fn req(demand: usize) -> PlacementRequest {
    PlacementRequest {
        job_id: 9,
        class: 0,
        demand,
    }
}

fn levels(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Takes GPUs so that node `i` keeps `free[i]` free GPUs.
fn with_free(gpn: usize, free: &[usize]) -> ClusterState {
    let mut s = ClusterState::new(free.len(), gpn).unwrap();
    let taken: Vec<usize> = free
        .iter()
        .enumerate()
        .flat_map(|(n, &f)| (n * gpn + f..(n + 1) * gpn).collect::<Vec<_>>())
        .collect();
    if !taken.is_empty() {
        s.mark_in_use(1000, &taken).unwrap();
    }
    s
}

fn brute_force(state: &ClusterState, scores: &[f64], demand: usize, l: f64) -> Option<(f64, Vec<usize>)> {
    state
        .free_gpus()
        .into_iter()
        .combinations(demand)
        .map(|set| {
            let worst = set.iter().map(|&g| scores[g]).fold(f64::MIN, f64::max);
            let f = if state.spans_nodes(&set) { l } else { 1.0 };
            (f * worst, set)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

#[test]
fn two_by_two_example_matches_enumeration() {
    let mut s = ClusterState::new(2, 2).unwrap();
    let scores = [0.9, 2.6, 1.0, 1.0];
    let lv = ClassLvMatrix::new(levels(&scores), 1.5).unwrap();
    let (best, set) = brute_force(&s, &scores, 2, 1.5).unwrap();
    let a = pal(&mut s, req(2), &scores, &lv).unwrap();
    assert_eq!(a.gpu_ids, vec![2, 3]);
    assert_eq!(a.lv_product, 1.0);
    assert_eq!((best, set), (1.0, vec![2, 3]));
}

#[test]
fn packed_bin_stays_on_one_node() {
    // Two bin-1 GPUs on node 1; node 0 has mixed scores.
    let mut s = ClusterState::new(2, 2).unwrap();
    let scores = [0.9, 1.2, 0.9, 0.9];
    let lv = ClassLvMatrix::new(levels(&scores), 1.5).unwrap();
    let a = pal(&mut s, req(2), &scores, &lv).unwrap();
    assert_eq!(a.gpu_ids, vec![2, 3]);
    assert!(!a.spans_nodes);
}

#[test]
fn packed_examples_by_enumeration() {
    // Oracle: minimum node count, then fewest free GPUs left on the used
    // nodes, then lowest node ids.
    fn oracle(free: &[usize], demand: usize) -> Vec<usize> {
        (1..=free.len())
            .find_map(|m| {
                (0..free.len())
                    .combinations(m)
                    .filter(|c| c.iter().map(|&n| free[n]).sum::<usize>() >= demand)
                    .min_by_key(|c| (c.iter().map(|&n| free[n]).sum::<usize>() - demand, c.clone()))
            })
            .unwrap()
    }
    let s = with_free(4, &[1, 2, 3]);
    let got = choose_packed(&s, 2).unwrap();
    assert_eq!(got.iter().map(|&g| s.node_of(g)).dedup().collect::<Vec<_>>(), oracle(&[1, 2, 3], 2));
    assert_eq!(got, vec![4, 5]);

    let s = ClusterState::new(3, 4).unwrap();
    let got = choose_packed(&s, 6).unwrap();
    assert_eq!(got.iter().map(|&g| s.node_of(g)).dedup().count(), 2);

    let s = with_free(4, &[4, 0, 4]);
    assert_eq!(choose_packed(&s, 4).unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn random_is_uniform_over_free_gpus() {
    // Chi-square over 8 free GPUs, 4000 draws of 2 each: df = 7, the 0.999
    // quantile is 24.3.
    let s = with_free(4, &[4, 2, 2]);
    let free = s.free_gpus();
    let mut counts = vec![0usize; s.num_gpus()];
    let draws = 4000;
    for seed in 0..draws {
        for g in choose_random(&s, 2, seed).unwrap() {
            counts[g] += 1;
        }
    }
    let expected = (2 * draws) as f64 / free.len() as f64;
    let chi2: f64 = free.iter().map(|&g| (counts[g] as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 24.3, "chi2 = {chi2}");
    assert!(counts.iter().enumerate().all(|(g, &c)| s.is_free(g) || c == 0));
    let mut all = choose_random(&s, 8, 0).unwrap();
    all.sort_unstable();
    assert_eq!(all, free);
    assert_eq!(choose_random(&s, 3, 5), choose_random(&s, 3, 5));
}

fn cluster_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(nodes, gpn)| {
        let n = nodes * gpn;
        (
            Just(nodes),
            Just(gpn),
            prop::collection::vec(prop::sample::select(vec![0.85, 0.9, 1.0, 1.1, 1.4, 2.5]), n),
            prop::collection::vec(prop::bool::weighted(0.3), n),
        )
    })
}

fn build(nodes: usize, gpn: usize, taken: &[bool]) -> ClusterState {
    let mut s = ClusterState::new(nodes, gpn).unwrap();
    let ids: Vec<usize> = taken.iter().positions(|&t| t).collect();
    if !ids.is_empty() {
        s.mark_in_use(1000, &ids).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn pal_is_optimal((nodes, gpn, scores, taken) in cluster_strategy(), l in prop::sample::select(vec![1.0, 1.25, 1.5, 2.0, 3.0]), d in 1usize..=4) {
        let s = build(nodes, gpn, &taken);
        let demand = d.min(gpn);
        let lv = ClassLvMatrix::new(levels(&scores), l).unwrap();
        let got = pal(&mut s.clone(), req(demand), &scores, &lv).ok().map(|a| a.lv_product);
        prop_assert_eq!(got, brute_force(&s, &scores, demand, l).map(|b| b.0));
    }

    #[test]
    fn pal_degenerates_to_pm_first((nodes, gpn, scores, taken) in cluster_strategy(), d in 1usize..=16) {
        let s = build(nodes, gpn, &taken);
        let lv = ClassLvMatrix::new(levels(&scores), 1.0).unwrap();
        let a = pal(&mut s.clone(), req(d), &scores, &lv).ok().map(|a| a.lv_product);
        let b = pm_first(&mut s.clone(), req(d), &scores, 1.0).ok().map(|a| a.lv_product);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn policies_only_take_free_gpus((nodes, gpn, scores, taken) in cluster_strategy(), d in 1usize..=16, seed in any::<u64>()) {
        let s = build(nodes, gpn, &taken);
        let lv = ClassLvMatrix::new(levels(&scores), 1.5).unwrap();
        for policy in PlacementPolicy::ALL {
            let mut after = s.clone();
            match policy.place(&mut after, req(d), &scores, &lv, seed) {
                Ok(a) => {
                    prop_assert_eq!(a.gpu_ids.len(), d);
                    prop_assert!(a.gpu_ids.iter().all(|&g| s.is_free(g)));
                    prop_assert!(a.gpu_ids.windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(after.free_count(), s.free_count() - d);
                }
                Err(_) => {
                    prop_assert!(s.free_count() < d);
                    prop_assert_eq!(after.free_count(), s.free_count());
                }
            }
        }
        // The free-function forms agree with the policy enum.
        let lv1 = ClassLvMatrix::new(levels(&scores), 1.5).unwrap();
        prop_assert_eq!(
            packed(&mut s.clone(), req(d), &scores, 1.5).ok(),
            PlacementPolicy::PackedSticky.place(&mut s.clone(), req(d), &scores, &lv1, 0).ok()
        );
        prop_assert_eq!(
            random_place(&mut s.clone(), req(d), &scores, 1.5, seed).ok(),
            PlacementPolicy::RandomNonSticky.place(&mut s.clone(), req(d), &scores, &lv1, seed).ok()
        );
    }

    #[test]
    fn packed_uses_minimum_node_count((nodes, gpn, _scores, taken) in cluster_strategy(), d in 1usize..=16) {
        let s = build(nodes, gpn, &taken);
        if let Some(gpus) = choose_packed(&s, d) {
            let used = gpus.iter().map(|&g| s.node_of(g)).dedup().count();
            let mut free = s.free_per_node();
            free.sort_unstable_by(|a, b| b.cmp(a));
            let mut need = 0;
            let mut acc = 0;
            for f in free {
                if acc >= d { break; }
                acc += f;
                need += 1;
            }
            prop_assert_eq!(used, need);
        } else {
            prop_assert!(s.free_count() < d);
        }
    }

    #[test]
    fn traversal_non_decreasing(mut v in prop::collection::vec(0.5..4.0f64, 1..12), l in 1.0..3.0f64) {
        v.sort_by(f64::total_cmp);
        v.dedup();
        let m = ClassLvMatrix::new(v, l).unwrap();
        prop_assert!(m.traversal.windows(2).all(|w| w[0].product <= w[1].product));
    }

    #[test]
    fn reorder_keeps_truncation_boundary(jobs in prop::collection::vec((1usize..20, 0usize..3), 0..20), size in 1usize..64) {
        let queue: Vec<PlacementRequest> = jobs.iter().enumerate().map(|(i, &(demand, class))| PlacementRequest { job_id: i as u64, class, demand }).collect();
        let cut = guaranteed_prefix_len(&queue, size);
        let out = reorder_for_placement(queue.clone(), size);
        prop_assert_eq!(&out[cut..], &queue[cut..]);
        let mut head: Vec<u64> = out[..cut].iter().map(|r| r.job_id).collect();
        head.sort_unstable();
        prop_assert_eq!(head, (0..cut as u64).collect::<Vec<_>>());
        prop_assert!(out[..cut].windows(2).all(|w| w[0].class <= w[1].class));
    }
}
