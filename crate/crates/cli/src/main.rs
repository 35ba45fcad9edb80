mod config;
mod error;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use palsim::classifier::{build_class_model, classify_app};
use palsim::io::{load_features, load_kernel_features, load_profile, write_profile};
use palsim::report::{write_atomic, write_run};
use palsim::sim::{measure_policy_overhead, Simulation};
use palsim::synth::{synthesize_profile, ProfileKind};
use palsim::trace::{synthesize_trace, write_trace};
use palsim::variability::{bin_pm_scores, ClassBinning, VariabilityProfile};
use palsim::{compute_metrics, PlacementPolicy, Summary, TraceSpec};

use config::{Resolved, SimArgs, SweepArgs};
use error::CliError;

#[derive(Parser)]
#[command(name = "palsim", version, about = "GPU cluster scheduling simulator with variability-aware placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trace; writes jobs.csv, rounds.csv and summary.json.
    Run(SimArgs),
    /// Simulate the cross product of sweep values; writes sweep.csv plus
    /// one run directory per cell.
    Sweep(SweepArgs),
    /// Bin a profile into PM-Scores and write the result as JSON.
    BinProfile(BinArgs),
    /// Cluster applications into classes from utilization features.
    Classify(ClassifyArgs),
    /// Time the placement step of each policy; writes overhead.csv.
    Overhead(SimArgs),
    /// Write a synthetic trace CSV.
    SynthTrace(SynthTraceArgs),
    /// Write a synthetic variability profile CSV.
    SynthProfile(SynthProfileArgs),
}

#[derive(Args)]
struct BinArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// CSV with app_name,dram_util,peak_fu_util.
    #[arg(long, conflicts_with = "kernels", required_unless_present = "kernels")]
    features: Option<PathBuf>,
    /// Per-kernel CSV with app_name,kernel_type,runtime_s,unit,util.
    #[arg(long)]
    kernels: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV with one class per application.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthTraceArgs {
    /// Workload TOML; overrides --preset.
    #[arg(long)]
    trace_spec: Option<PathBuf>,
    /// sia or synergy.
    #[arg(long, default_value = "sia")]
    preset: String,
    #[arg(long)]
    num_jobs: Option<usize>,
    /// Jobs per hour.
    #[arg(long)]
    arrival_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthProfileArgs {
    /// heavy-tail, three-levels, four-levels or uniform.
    #[arg(long, default_value = "heavy-tail")]
    kind: String,
    #[arg(long, default_value_t = 64)]
    gpus: usize,
    #[arg(long, default_value_t = 4)]
    gpus_per_node: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Simulates one resolved configuration and writes its outputs to `dir`.
pub(crate) fn run_one(cfg: &Resolved, profile: &VariabilityProfile<f64>, dir: &Path) -> Result<Summary, CliError> {
    let trace = cfg.load_trace(profile.num_classes())?;
    let result = Simulation::new(&trace, profile, cfg.sim.clone())?.run()?;
    let metrics = compute_metrics(&result, None);
    write_run(dir, &result, cfg.sim.placement.name(), &cfg.record(), cfg.sim.seed, &metrics)?;
    Ok(metrics)
}

fn cmd_run(args: &SimArgs) -> Result<(), CliError> {
    let cfg = Resolved::from_args(args)?;
    let dir = cfg.out_dir()?;
    let profile = cfg.load_profile()?;
    let m = run_one(&cfg, &profile, dir)?;
    println!(
        "{} jobs, avg JCT {:.1} s, makespan {:.1} s -> {}",
        m.all.num_jobs,
        m.all.avg_jct.unwrap_or(0.0),
        m.makespan,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let plan = args.resolve()?;
    let profile = plan.base.load_profile()?;
    let n = sweep::run_sweep(&plan.base, &plan.axes, plan.jobs, &profile)?;
    println!("{n} cells -> {}", plan.base.out_dir()?.join("sweep.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct LabeledBinning<'a> {
    class: String,
    #[serde(flatten)]
    binning: &'a ClassBinning<f64>,
}

#[derive(Serialize)]
struct BinningFile<'a> {
    profile: &'a Path,
    seed: u64,
    num_gpus: usize,
    classes: Vec<LabeledBinning<'a>>,
}

fn cmd_bin_profile(args: &BinArgs) -> Result<(), CliError> {
    let profile = load_profile(&args.profile, args.normalize)?;
    let binning = bin_pm_scores(&profile, args.seed)?;
    let file = BinningFile {
        profile: &args.profile,
        seed: args.seed,
        num_gpus: profile.num_gpus(),
        classes: binning
            .classes
            .iter()
            .enumerate()
            .map(|(c, b)| LabeledBinning {
                class: palsim::classifier::class_label(c),
                binning: b,
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).map_err(|e| io_err(&args.out, e))?;
    bytes.push(b'\n');
    write_atomic(&args.out, &bytes)?;
    for c in &file.classes {
        println!(
            "class {}: {} bins {:?}, {} outliers",
            c.class,
            c.binning.k_inliers,
            c.binning.bin_centroids,
            c.binning.outlier_gpus.len()
        );
    }
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let apps = match (&args.features, &args.kernels) {
        (Some(p), _) => load_features(p)?,
        (None, Some(p)) => load_kernel_features(p)?,
        (None, None) => return Err(CliError::Input("--features or --kernels is required".into())),
    };
    let model = build_class_model(&apps, args.k, args.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| io_err(&args.out, e);
    w.write_record(["app_name", "dram_util", "peak_fu_util", "class"]).map_err(csv_err)?;
    for a in &apps {
        let class = model.label(classify_app(&model, a));
        w.write_record([
            a.app_name.clone(),
            a.dram_util.to_string(),
            a.peak_fu_util.to_string(),
            class.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(&args.out, e))?;
    write_atomic(&args.out, &bytes)?;
    for (label, c) in model.labels.iter().zip(&model.centroids) {
        println!("class {label}: dram {:.3}, peak fu {:.3}", c[0], c[1]);
    }
    Ok(())
}

fn cmd_overhead(args: &SimArgs) -> Result<(), CliError> {
    let cfg = Resolved::from_args(args)?;
    let dir = cfg.out_dir()?;
    let profile = cfg.load_profile()?;
    let trace = cfg.load_trace(profile.num_classes())?;
    let policies: Vec<PlacementPolicy> = match args.placement {
        Some(_) => vec![cfg.sim.placement],
        None => PlacementPolicy::ALL.to_vec(),
    };
    let configs: Vec<_> = policies
        .iter()
        .map(|&placement| palsim::SimConfig {
            placement,
            ..cfg.sim.clone()
        })
        .collect();
    let reports = measure_policy_overhead(&trace, &profile, &configs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let path = dir.join("overhead.csv");
    for r in &reports {
        w.serialize(r).map_err(|e| io_err(&path, e))?;
        println!(
            "{:>16}: median {:.3} ms, max {:.3} ms over {} rounds",
            r.placement,
            r.median_s * 1e3,
            r.max_s * 1e3,
            r.rounds
        );
    }
    let bytes = w.into_inner().map_err(|e| io_err(&path, e))?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_atomic(&path, &bytes)?;
    Ok(())
}

fn cmd_synth_trace(args: &SynthTraceArgs) -> Result<(), CliError> {
    let mut spec = match &args.trace_spec {
        Some(p) => TraceSpec::load(p)?,
        None => match args.preset.as_str() {
            "sia" => TraceSpec::sia_like(args.seed),
            "synergy" => TraceSpec::synergy_like(10.0, 1000, args.seed),
            other => return Err(CliError::Input(format!("unknown preset '{other}' (sia, synergy)"))),
        },
    };
    spec.seed = args.seed;
    if let Some(n) = args.num_jobs {
        spec.num_jobs = n;
    }
    if let Some(r) = args.arrival_rate {
        spec.arrival_rate = r;
    }
    let trace = synthesize_trace(&spec)?;
    write_trace(&args.out, &trace)?;
    println!("{} jobs -> {}", trace.len(), args.out.display());
    Ok(())
}

fn cmd_synth_profile(args: &SynthProfileArgs) -> Result<(), CliError> {
    let kind: ProfileKind = args.kind.parse()?;
    let profile = synthesize_profile(kind, args.gpus, args.seed)?;
    write_profile(&args.out, &profile, args.gpus_per_node)?;
    println!(
        "{} GPUs x {} classes -> {}",
        profile.num_gpus(),
        profile.num_classes(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::BinProfile(a) => cmd_bin_profile(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Overhead(a) => cmd_overhead(a),
        Command::SynthTrace(a) => cmd_synth_trace(a),
        Command::SynthProfile(a) => cmd_synth_profile(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("palsim: {e}");
            e.exit_code()
        }
    }
}
