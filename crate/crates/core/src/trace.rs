//! Job traces: CSV loading/writing and Poisson workload synthesis.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::classifier::{class_label, parse_class};
use crate::error::{Error, Result};
use crate::placement::JobId;
use crate::scheduler::Job;

pub const TRACE_HEADER: [&str; 6] = [
    "job_id",
    "arrival_time_s",
    "gpu_demand",
    "class",
    "total_iterations",
    "base_iter_time_s",
];

/// Static description of a job as it appears in a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobTemplate {
    pub job_id: JobId,
    pub arrival_time: f64,
    pub gpu_demand: usize,
    pub class: usize,
    pub total_iterations: u64,
    pub base_iter_time: f64,
}

impl JobTemplate {
    pub fn to_job(&self) -> Job {
        Job::new(
            self.job_id,
            self.arrival_time,
            self.gpu_demand,
            self.class,
            self.total_iterations,
            self.base_iter_time,
        )
    }

    /// Run time on median GPUs with no locality penalty.
    pub fn base_duration(&self) -> f64 {
        self.total_iterations as f64 * self.base_iter_time
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    job_id: String,
    arrival_time_s: String,
    gpu_demand: String,
    class: String,
    total_iterations: String,
    base_iter_time_s: String,
}

fn parse_row(row: &TraceRow, num_classes: usize) -> std::result::Result<JobTemplate, String> {
    fn num<T: std::str::FromStr>(field: &str, v: &str) -> std::result::Result<T, String> {
        v.trim()
            .parse()
            .map_err(|_| format!("{field}: cannot parse '{v}'"))
    }
    let job_id: JobId = num("job_id", &row.job_id)?;
    let arrival_time: f64 = num("arrival_time_s", &row.arrival_time_s)?;
    let gpu_demand: i64 = num("gpu_demand", &row.gpu_demand)?;
    let total_iterations: i64 = num("total_iterations", &row.total_iterations)?;
    let base_iter_time: f64 = num("base_iter_time_s", &row.base_iter_time_s)?;
    let class = parse_class(&row.class)
        .filter(|&c| c < num_classes)
        .ok_or_else(|| format!("class: unknown class '{}'", row.class))?;
    if !(arrival_time >= 0.0) || !arrival_time.is_finite() {
        return Err(format!("arrival_time_s must be >= 0, got {arrival_time}"));
    }
    if gpu_demand < 1 {
        return Err(format!("gpu_demand must be >= 1, got {gpu_demand}"));
    }
    if total_iterations < 1 {
        return Err(format!("total_iterations must be >= 1, got {total_iterations}"));
    }
    if !(base_iter_time > 0.0) || !base_iter_time.is_finite() {
        return Err(format!("base_iter_time_s must be > 0, got {base_iter_time}"));
    }
    Ok(JobTemplate {
        job_id,
        arrival_time,
        gpu_demand: gpu_demand as usize,
        class,
        total_iterations: total_iterations as u64,
        base_iter_time,
    })
}

/// Sorts by arrival, ties by job id.
pub fn sort_trace(jobs: &mut [JobTemplate]) {
    jobs.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.job_id.cmp(&b.job_id))
    });
}

/// Reads a trace CSV. Class labels (`A`, `B`, ...) or indices must be below
/// `num_classes`. The result is sorted by arrival time.
pub fn load_trace(path: &Path, num_classes: usize) -> Result<Vec<JobTemplate>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    for col in TRACE_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Load {
                path: path.into(),
                row: 1,
                message: format!("missing column '{col}'"),
            });
        }
    }
    let mut jobs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in reader.deserialize::<TraceRow>().enumerate() {
        let row = i + 2;
        let load_err = |message: String| Error::Load {
            path: path.into(),
            row,
            message,
        };
        let raw = rec.map_err(|e| load_err(e.to_string()))?;
        let job = parse_row(&raw, num_classes).map_err(load_err)?;
        if !seen.insert(job.job_id) {
            return Err(load_err(format!("duplicate job_id {}", job.job_id)));
        }
        jobs.push(job);
    }
    sort_trace(&mut jobs);
    Ok(jobs)
}

pub fn write_trace_to<W: Write>(out: W, jobs: &[JobTemplate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for j in jobs {
        w.write_record([
            j.job_id.to_string(),
            j.arrival_time.to_string(),
            j.gpu_demand.to_string(),
            class_label(j.class),
            j.total_iterations.to_string(),
            j.base_iter_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, jobs: &[JobTemplate]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(file, jobs).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandWeight {
    pub gpus: usize,
    pub probability: f64,
}

/// One application class in a synthetic workload with its share of jobs and
/// the ranges its durations are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub class: String,
    pub probability: f64,
    /// Inclusive range; iterations are drawn log-uniformly.
    pub iterations: [u64; 2],
    /// Inclusive range in seconds; drawn uniformly.
    pub base_iter_time: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub num_jobs: usize,
    /// Mean arrivals per hour.
    pub arrival_rate: f64,
    #[serde(default)]
    pub seed: u64,
    pub demand: Vec<DemandWeight>,
    pub classes: Vec<ClassMix>,
}

const PROBABILITY_TOLERANCE: f64 = 1e-9;

fn check_distribution<'a>(what: &str, probs: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut sum = 0.0;
    for &p in probs {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::invalid(format!("{what}: probability {p} is not valid")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::invalid(format!("{what}: probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

impl TraceSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: TraceSpec = toml::from_str(text).map_err(|e| Error::invalid(format!("trace spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("trace spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0) || !self.arrival_rate.is_finite() {
            return Err(Error::invalid("arrival_rate must be positive"));
        }
        if self.demand.is_empty() || self.classes.is_empty() {
            return Err(Error::invalid("demand and class distributions must be nonempty"));
        }
        if self.demand.iter().any(|d| d.gpus == 0) {
            return Err(Error::invalid("GPU demands must be >= 1"));
        }
        check_distribution("demand", self.demand.iter().map(|d| &d.probability))?;
        check_distribution("classes", self.classes.iter().map(|c| &c.probability))?;
        for c in &self.classes {
            if parse_class(&c.class).is_none() {
                return Err(Error::invalid(format!("unknown class '{}'", c.class)));
            }
            let [lo, hi] = c.iterations;
            if lo == 0 || lo > hi {
                return Err(Error::invalid(format!("class {}: bad iteration range", c.class)));
            }
            let [tlo, thi] = c.base_iter_time;
            if !(tlo > 0.0) || !(tlo <= thi) || !thi.is_finite() {
                return Err(Error::invalid(format!("class {}: bad base_iter_time range", c.class)));
            }
        }
        Ok(())
    }

    /// Highest class index the spec can produce, plus one.
    pub fn num_classes(&self) -> usize {
        self.classes
            .iter()
            .filter_map(|c| parse_class(&c.class))
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn max_demand(&self) -> usize {
        self.demand.iter().map(|d| d.gpus).max().unwrap_or(0)
    }

    /// Philly-derived mix: 40% single-GPU jobs, up to 48 GPUs per job,
    /// 160 jobs at 20 jobs/hour.
    pub fn sia_like(seed: u64) -> Self {
        TraceSpec {
            num_jobs: 160,
            arrival_rate: 20.0,
            seed,
            demand: vec![
                DemandWeight { gpus: 1, probability: 0.40 },
                DemandWeight { gpus: 2, probability: 0.18 },
                DemandWeight { gpus: 4, probability: 0.22 },
                DemandWeight { gpus: 8, probability: 0.10 },
                DemandWeight { gpus: 16, probability: 0.06 },
                DemandWeight { gpus: 32, probability: 0.025 },
                DemandWeight { gpus: 48, probability: 0.015 },
            ],
            classes: default_class_mix(),
        }
    }

    /// Steady-state mix dominated by single-GPU jobs (> 80%).
    pub fn synergy_like(arrival_rate: f64, num_jobs: usize, seed: u64) -> Self {
        TraceSpec {
            num_jobs,
            arrival_rate,
            seed,
            demand: vec![
                DemandWeight { gpus: 1, probability: 0.82 },
                DemandWeight { gpus: 2, probability: 0.07 },
                DemandWeight { gpus: 4, probability: 0.08 },
                DemandWeight { gpus: 8, probability: 0.03 },
            ],
            classes: default_class_mix(),
        }
    }
}

/// Default classes: compute-bound (A), language models (B), memory-bound (C).
fn default_class_mix() -> Vec<ClassMix> {
    vec![
        ClassMix {
            class: "A".into(),
            probability: 0.5,
            iterations: [2_000, 40_000],
            base_iter_time: [0.15, 0.45],
        },
        ClassMix {
            class: "B".into(),
            probability: 0.3,
            iterations: [2_000, 40_000],
            base_iter_time: [0.15, 0.45],
        },
        ClassMix {
            class: "C".into(),
            probability: 0.2,
            iterations: [2_000, 40_000],
            base_iter_time: [0.15, 0.45],
        },
    ]
}

/// Poisson arrivals (exponential gaps with mean `3600 / arrival_rate` s);
/// demand and class drawn i.i.d. from the spec. Deterministic per seed.
pub fn synthesize_trace(spec: &TraceSpec) -> Result<Vec<JobTemplate>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaps = Exp::new(spec.arrival_rate / 3600.0).map_err(|e| Error::invalid(e.to_string()))?;
    let demand_pick = WeightedIndex::new(spec.demand.iter().map(|d| d.probability))
        .map_err(|e| Error::invalid(format!("demand: {e}")))?;
    let class_pick = WeightedIndex::new(spec.classes.iter().map(|c| c.probability))
        .map_err(|e| Error::invalid(format!("classes: {e}")))?;

    let mut t = 0.0;
    let mut jobs = Vec::with_capacity(spec.num_jobs);
    for id in 0..spec.num_jobs {
        t += gaps.sample(&mut rng);
        let gpu_demand = spec.demand[demand_pick.sample(&mut rng)].gpus;
        let mix = &spec.classes[class_pick.sample(&mut rng)];
        let [lo, hi] = mix.iterations;
        let (lo_ln, hi_ln) = ((lo as f64).ln(), (hi as f64).ln());
        let total_iterations = (lo_ln + rng.random::<f64>() * (hi_ln - lo_ln))
            .exp()
            .round()
            .clamp(lo as f64, hi as f64) as u64;
        let [tlo, thi] = mix.base_iter_time;
        let base_iter_time = tlo + rng.random::<f64>() * (thi - tlo);
        jobs.push(JobTemplate {
            job_id: id as JobId,
            arrival_time: t,
            gpu_demand,
            class: parse_class(&mix.class).expect("validated"),
            total_iterations,
            base_iter_time,
        });
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_sorts() {
        let f = write_tmp(
            "job_id,arrival_time_s,gpu_demand,class,total_iterations,base_iter_time_s\n\
             0,30,2,A,100,0.5\n1,10,1,C,50,0.25\n2,20,4,1,10,1.0\n",
        );
        let jobs = load_trace(f.path(), 3).unwrap();
        assert_eq!(jobs.len(), 3);
        assert_eq!(jobs.iter().map(|j| j.job_id).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(jobs[0].class, 2);
        assert_eq!(jobs[1].class, 1);
    }

    #[test]
    fn zero_demand_names_row() {
        let f = write_tmp(
            "job_id,arrival_time_s,gpu_demand,class,total_iterations,base_iter_time_s\n\
             0,0,1,A,100,0.5\n1,0,0,A,100,0.5\n",
        );
        let err = load_trace(f.path(), 3).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("gpu_demand"), "{err}");
    }

    #[test]
    fn rejects_unknown_class_and_bad_rows() {
        let base = "job_id,arrival_time_s,gpu_demand,class,total_iterations,base_iter_time_s\n";
        for row in ["0,0,1,D,100,0.5", "0,0,1,A,0,0.5", "0,0,1,A,10,-1", "0,x,1,A,10,1", "0,0,1,A,10"] {
            let f = write_tmp(&format!("{base}{row}\n"));
            assert!(load_trace(f.path(), 3).is_err(), "{row}");
        }
        let f = write_tmp(&format!("{base}0,0,1,A,10,1\n0,1,1,A,10,1\n"));
        assert!(load_trace(f.path(), 3).is_err());
        let f = write_tmp("job_id,gpu_demand\n0,1\n");
        assert!(load_trace(f.path(), 3).is_err());
    }

    #[test]
    fn presets_match_described_mix() {
        let sia = TraceSpec::sia_like(1);
        assert_eq!(sia.demand[0], DemandWeight { gpus: 1, probability: 0.40 });
        assert_eq!(sia.max_demand(), 48);
        assert_eq!((sia.num_jobs, sia.arrival_rate), (160, 20.0));
        let syn = TraceSpec::synergy_like(10.0, 100, 1);
        assert!(syn.demand[0].gpus == 1 && syn.demand[0].probability > 0.8);
        sia.validate().unwrap();
        syn.validate().unwrap();
    }

    #[test]
    fn synthesis_is_deterministic_and_ordered() {
        let spec = TraceSpec::sia_like(3);
        let a = synthesize_trace(&spec).unwrap();
        assert_eq!(a, synthesize_trace(&spec).unwrap());
        assert_eq!(a.len(), 160);
        assert!(a.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        assert_ne!(a, synthesize_trace(&TraceSpec::sia_like(4)).unwrap());
    }

    #[test]
    fn expected_job_count_over_eight_hours() {
        // 20 jobs/hour over 8 hours: the 160th arrival should land near 8 h.
        let mut hours = Vec::new();
        for seed in 0..50 {
            let t = synthesize_trace(&TraceSpec::sia_like(seed)).unwrap();
            hours.push(t.last().unwrap().arrival_time / 3600.0);
        }
        let mean = hours.iter().sum::<f64>() / hours.len() as f64;
        // Gamma(160, 1/20 h): sd of the mean over 50 draws ~ 0.09 h.
        assert!((mean - 8.0).abs() < 0.4, "{mean}");
    }

    #[test]
    fn bad_specs_rejected() {
        let mut s = TraceSpec::sia_like(0);
        s.demand[0].probability = 0.5;
        assert!(s.validate().is_err());
        let mut s = TraceSpec::sia_like(0);
        s.demand[0].gpus = 0;
        assert!(s.validate().is_err());
        let mut s = TraceSpec::sia_like(0);
        s.arrival_rate = 0.0;
        assert!(s.validate().is_err());
        let mut s = TraceSpec::sia_like(0);
        s.classes[0].iterations = [10, 5];
        assert!(synthesize_trace(&s).is_err());
    }

    #[test]
    fn spec_toml_round_trip() {
        let s = TraceSpec::synergy_like(8.0, 50, 9);
        assert_eq!(TraceSpec::from_toml(&s.to_toml()).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip(seed in any::<u64>(), n in 0usize..40) {
            let mut spec = TraceSpec::sia_like(seed);
            spec.num_jobs = n;
            let jobs = synthesize_trace(&spec).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_trace(f.path(), &jobs).unwrap();
            prop_assert_eq!(load_trace(f.path(), 3).unwrap(), jobs);
        }
    }
}
