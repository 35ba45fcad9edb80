use palsim::trace::{load_trace, synthesize_trace, write_trace, TraceSpec};

const N: usize = 10_000;

/// Frequency of `hits` out of `N` lies within 4 standard deviations of `p`.
fn within_binomial(hits: usize, p: f64) -> bool {
    let sd = (N as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - N as f64 * p).abs() <= 4.0 * sd
}

#[test]
fn inter_arrival_mean_matches_rate() {
    for rate in [10.0, 20.0, 60.0] {
        let jobs = synthesize_trace(&TraceSpec::synergy_like(rate, N, 11)).unwrap();
        let mean_gap = jobs.last().unwrap().arrival_time / N as f64;
        let want = 3600.0 / rate;
        assert!((mean_gap - want).abs() / want < 0.05, "rate {rate}: mean gap {mean_gap}");
        assert!(jobs.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
    }
}

#[test]
fn demand_and_class_frequencies() {
    let mut spec = TraceSpec::sia_like(5);
    spec.num_jobs = N;
    let jobs = synthesize_trace(&spec).unwrap();
    for d in &spec.demand {
        let hits = jobs.iter().filter(|j| j.gpu_demand == d.gpus).count();
        assert!(within_binomial(hits, d.probability), "{} GPUs: {hits}", d.gpus);
    }
    for (c, mix) in spec.classes.iter().enumerate() {
        let hits = jobs.iter().filter(|j| j.class == c).count();
        assert!(within_binomial(hits, mix.probability), "class {}: {hits}", mix.class);
    }
}

#[test]
fn durations_stay_in_range_and_are_log_uniform() {
    let jobs = synthesize_trace(&TraceSpec::synergy_like(20.0, N, 3)).unwrap();
    let (lo, hi) = (2_000f64, 40_000f64);
    for j in &jobs {
        assert!((2_000..=40_000).contains(&j.total_iterations));
        assert!((0.15..=0.45).contains(&j.base_iter_time));
    }
    // ln(iterations) is uniform: mean at the midpoint, sd (hi-lo)/sqrt(12)/sqrt(N).
    let mean_ln = jobs.iter().map(|j| (j.total_iterations as f64).ln()).sum::<f64>() / N as f64;
    let mid = (lo.ln() + hi.ln()) / 2.0;
    let sd = (hi.ln() - lo.ln()) / 12f64.sqrt() / (N as f64).sqrt();
    assert!((mean_ln - mid).abs() < 4.0 * sd, "{mean_ln} vs {mid}");
}

#[test]
fn same_seed_same_trace_and_file_round_trip() {
    let spec = TraceSpec::sia_like(9);
    let a = synthesize_trace(&spec).unwrap();
    assert_eq!(a, synthesize_trace(&spec).unwrap());
    assert_ne!(a, synthesize_trace(&TraceSpec::sia_like(10)).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&path, &a).unwrap();
    assert_eq!(load_trace(&path, 3).unwrap(), a);
}

#[test]
fn spec_toml_round_trip() {
    let spec = TraceSpec::synergy_like(12.5, 300, 4);
    assert_eq!(TraceSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    let mut bad = spec.clone();
    bad.demand[0].probability += 0.1;
    assert!(TraceSpec::from_toml(&bad.to_toml()).is_err());
}
