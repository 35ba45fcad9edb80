//! Flag and config-file handling. Every flag has a same-named key (with
//! underscores) in the TOML config; flags win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use palsim::scheduler::DEFAULT_LAS_THRESHOLD;
use palsim::sim::{DEFAULT_L_ACROSS, DEFAULT_ROUND_DURATION};
use palsim::trace::{load_trace, synthesize_trace};
use palsim::variability::VariabilityProfile;
use palsim::{JobTemplate, PlacementPolicy, SchedulerPolicy, ScoreMode, SimConfig, TraceSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Job trace CSV.
    #[arg(long, conflicts_with = "trace_spec")]
    pub trace: Option<PathBuf>,
    /// TOML workload description; the trace is synthesized with the run seed.
    #[arg(long)]
    pub trace_spec: Option<PathBuf>,
    /// Variability profile CSV.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Divide raw profile times by each class's median.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub gpus_per_node: Option<usize>,
    /// fifo, las or srtf.
    #[arg(long)]
    pub scheduler: Option<String>,
    /// LAS demotion threshold in GPU-seconds.
    #[arg(long)]
    pub las_threshold: Option<f64>,
    /// pal, pm-first, packed-sticky, packed-nonsticky, random-sticky or
    /// random-nonsticky.
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub l_across: Option<f64>,
    /// Seconds per scheduling round.
    #[arg(long)]
    pub round_duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// binned or raw.
    #[arg(long)]
    pub score_mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Axis to vary: l_across, job_load, placement, scheduler or seed.
    /// Repeat together with --sweep-values for a cross product.
    #[arg(long = "sweep-axis")]
    pub sweep_axis: Vec<String>,
    /// Comma-separated values for the matching --sweep-axis.
    #[arg(long = "sweep-values")]
    pub sweep_values: Vec<String>,
    /// Cells run concurrently; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// On-disk form of the options. Relative paths are taken from the config
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    trace: Option<PathBuf>,
    trace_spec: Option<PathBuf>,
    profile: Option<PathBuf>,
    normalize: Option<bool>,
    nodes: Option<usize>,
    gpus_per_node: Option<usize>,
    scheduler: Option<String>,
    las_threshold: Option<f64>,
    placement: Option<String>,
    l_across: Option<f64>,
    round_duration: Option<f64>,
    seed: Option<u64>,
    score_mode: Option<String>,
    out: Option<PathBuf>,
    #[serde(default)]
    sweep_axis: Vec<String>,
    #[serde(default)]
    sweep_values: Vec<String>,
    jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.trace, &mut cfg.trace_spec, &mut cfg.profile, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub enum TraceSource {
    File(PathBuf),
    Spec(PathBuf, TraceSpec),
}

/// Everything a single simulation needs, after merging flags and file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub trace: TraceSource,
    pub profile_path: PathBuf,
    pub normalize: bool,
    pub sim: SimConfig,
    pub las_threshold: f64,
    pub out: Option<PathBuf>,
}

/// The reproducibility header written into every summary.
#[derive(Debug, Serialize)]
pub struct ConfigRecord<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_spec: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_jobs: Option<usize>,
    pub profile: &'a Path,
    pub normalize: bool,
    pub sim: &'a SimConfig,
}

pub fn parse_scheduler(name: &str, las_threshold: f64) -> Result<SchedulerPolicy, CliError> {
    Ok(SchedulerPolicy::from_name(name, las_threshold)?)
}

pub fn parse_placement(name: &str) -> Result<PlacementPolicy, CliError> {
    Ok(name.parse::<PlacementPolicy>()?)
}

pub fn score_mode_name(m: ScoreMode) -> &'static str {
    match m {
        ScoreMode::Binned => "binned",
        ScoreMode::Raw => "raw",
    }
}

impl Resolved {
    pub fn from_args(args: &SimArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(args, file)
    }

    fn merge(args: &SimArgs, file: FileConfig) -> Result<Self, CliError> {
        // A trace flag of either kind replaces both trace keys of the file.
        let (trace, trace_spec) = if args.trace.is_some() || args.trace_spec.is_some() {
            (args.trace.clone(), args.trace_spec.clone())
        } else {
            (file.trace, file.trace_spec)
        };
        let trace = match (trace, trace_spec) {
            (Some(_), Some(_)) => return Err(CliError::Input("give either trace or trace_spec, not both".into())),
            (Some(t), None) => TraceSource::File(t),
            (None, Some(s)) => {
                let spec = TraceSpec::load(&s)?;
                TraceSource::Spec(s, spec)
            }
            (None, None) => return Err(CliError::Input("a trace is required (--trace or --trace-spec)".into())),
        };
        let profile_path = args
            .profile
            .clone()
            .or(file.profile)
            .ok_or_else(|| CliError::Input("a profile is required (--profile)".into()))?;

        let las_threshold = args.las_threshold.or(file.las_threshold).unwrap_or(DEFAULT_LAS_THRESHOLD);
        let defaults = SimConfig::default();
        let scheduler = match args.scheduler.as_deref().or(file.scheduler.as_deref()) {
            Some(name) => parse_scheduler(name, las_threshold)?,
            None => SchedulerPolicy::Las {
                threshold: las_threshold,
            },
        };
        let placement = match args.placement.as_deref().or(file.placement.as_deref()) {
            Some(name) => parse_placement(name)?,
            None => defaults.placement,
        };
        let score_mode = match args.score_mode.as_deref().or(file.score_mode.as_deref()) {
            Some(name) => name.parse::<ScoreMode>()?,
            None => ScoreMode::default(),
        };
        let sim = SimConfig {
            nodes: args.nodes.or(file.nodes).unwrap_or(defaults.nodes),
            gpus_per_node: args.gpus_per_node.or(file.gpus_per_node).unwrap_or(defaults.gpus_per_node),
            round_duration: args.round_duration.or(file.round_duration).unwrap_or(DEFAULT_ROUND_DURATION),
            l_across: args.l_across.or(file.l_across).unwrap_or(DEFAULT_L_ACROSS),
            l_across_per_class: None,
            scheduler,
            placement,
            seed: args.seed.or(file.seed).unwrap_or(0),
            score_mode,
        };
        sim.validate()?;
        Ok(Resolved {
            trace,
            profile_path,
            normalize: args.normalize || file.normalize.unwrap_or(false),
            sim,
            las_threshold,
            out: args.out.clone().or(file.out),
        })
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Input("an output directory is required (--out)".into()))
    }

    pub fn load_profile(&self) -> Result<VariabilityProfile<f64>, CliError> {
        Ok(palsim::io::load_profile(&self.profile_path, self.normalize)?)
    }

    pub fn load_trace(&self, num_classes: usize) -> Result<Vec<JobTemplate>, CliError> {
        match &self.trace {
            TraceSource::File(path) => Ok(load_trace(path, num_classes)?),
            TraceSource::Spec(_, spec) => {
                let mut spec = spec.clone();
                spec.seed = self.sim.seed;
                Ok(synthesize_trace(&spec)?)
            }
        }
    }

    pub fn record(&self) -> ConfigRecord<'_> {
        let (trace, trace_spec, arrival_rate, num_jobs) = match &self.trace {
            TraceSource::File(p) => (Some(p.as_path()), None, None, None),
            TraceSource::Spec(p, s) => (None, Some(p.as_path()), Some(s.arrival_rate), Some(s.num_jobs)),
        };
        ConfigRecord {
            trace,
            trace_spec,
            arrival_rate,
            num_jobs,
            profile: &self.profile_path,
            normalize: self.normalize,
            sim: &self.sim,
        }
    }
}

pub struct SweepPlan {
    pub base: Resolved,
    /// `(axis, comma-separated values)` pairs.
    pub axes: Vec<(String, String)>,
    pub jobs: Option<usize>,
}

impl SweepArgs {
    /// Sweep axes and values, flags first, then the config file.
    pub fn resolve(&self) -> Result<SweepPlan, CliError> {
        let file = match &self.sim.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let (axes, values) = if self.sweep_axis.is_empty() && self.sweep_values.is_empty() {
            (file.sweep_axis.clone(), file.sweep_values.clone())
        } else {
            (self.sweep_axis.clone(), self.sweep_values.clone())
        };
        if axes.len() != values.len() {
            return Err(CliError::Input(format!(
                "{} --sweep-axis but {} --sweep-values",
                axes.len(),
                values.len()
            )));
        }
        if axes.is_empty() {
            return Err(CliError::Input("a sweep needs at least one --sweep-axis".into()));
        }
        let jobs = self.jobs.or(file.jobs);
        Ok(SweepPlan {
            base: Resolved::merge(&self.sim, file)?,
            axes: axes.into_iter().zip(values).collect(),
            jobs,
        })
    }
}
