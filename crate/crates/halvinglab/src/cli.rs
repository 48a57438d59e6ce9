//! Command-line front end. Every command returns the text it prints on
//! success, so the commands can also be driven in-process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use halvinglab_core::experiment::{self, SweepSpec, TrialKey};
use halvinglab_core::gp::FitConfig;
use halvinglab_core::sh::{GpSettings, RankerKind};
use halvinglab_core::synth::generate_synthetic;
use halvinglab_core::PerfSpec;
use serde::{Deserialize, Serialize};

use crate::curves_csv;
use crate::error::{quote, Result};
use crate::formats::{self, GenerateSpec};
use crate::report;
use crate::sweep;

pub const SEED_ENV: &str = "HALVINGLAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "halvinglab", version, about = "Successive Halving over learning curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic universe of learning curves into a curves CSV.
    Generate(GenerateArgs),
    /// Run Successive Halving once on a curves CSV and dump the trace.
    Run(RunArgs),
    /// Run a seeded multi-trial sweep and aggregate regret and compute.
    Sweep(SweepArgs),
    /// Turn sweep results into per-series plot data and a summary table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Synthetic family spec (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Curves CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub curves: PathBuf,
    /// Run settings (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for trace.json, trace.csv and resolved_config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ranker: Option<RankerKind>,
    #[arg(long)]
    pub final_candidates: Option<usize>,
    #[arg(long)]
    pub training_curves: Option<usize>,
    #[arg(long)]
    pub eta: Option<u64>,
    #[arg(long)]
    pub grace: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub curves: PathBuf,
    /// Sweep spec (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for results.csv, aggregate.csv and resolved_config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub ranker: Option<Vec<RankerKind>>,
    #[arg(long, value_delimiter = ',')]
    pub final_candidates: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub training_curves: Option<Vec<usize>>,
    #[arg(long)]
    pub eta: Option<u64>,
    #[arg(long)]
    pub grace: Option<f64>,
    /// Candidates drawn from the universe per trial.
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// results.csv or aggregate.csv of a sweep.
    pub input: PathBuf,
    /// Directory for the series files and summary.txt.
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings of a single run, as read from `--config` and echoed to
/// `resolved_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ranker: RankerKind,
    pub final_candidates: usize,
    /// Training curves drawn from the file for the gp ranker.
    pub training_curves: usize,
    pub seed: u64,
    pub eta: u64,
    pub grace_fraction: f64,
    pub perf: PerfSpec,
    pub reference_perf: Option<f64>,
    pub gp: GpSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ranker: RankerKind::Current,
            final_candidates: 1,
            training_curves: 8,
            seed: 0,
            eta: 2,
            grace_fraction: 0.1,
            perf: PerfSpec::default(),
            reference_perf: None,
            gp: GpSettings { fit: FitConfig::default(), n_samples: 64 },
        }
    }
}

impl RunConfig {
    fn sweep_spec(&self, universe_size: usize) -> SweepSpec {
        SweepSpec {
            pool_size: universe_size,
            final_candidates: vec![self.final_candidates],
            training_curves: vec![self.training_curves],
            rankers: vec![self.ranker],
            trials: 1,
            root_seed: self.seed,
            perf: self.perf,
            reference_perf: self.reference_perf,
            eta: self.eta,
            grace_fraction: self.grace_fraction,
            gp: self.gp.clone(),
        }
    }
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Run(a) => run(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a),
    }
}

pub fn generate(args: &GenerateArgs) -> Result<String> {
    let mut spec: GenerateSpec = formats::read_json(&args.config)?;
    let seed = args.seed.or(spec.seed).unwrap_or(0);
    spec.seed = Some(seed);
    let set = generate_synthetic(&spec.family_spec(), spec.n, spec.t, seed)?;
    curves_csv::save_csv(&set, &args.out)?;
    formats::write_json(&resolved_path(&args.out), &spec)?;
    Ok(format!(
        "status=ok n={} t={} d={} seed={seed} out={}\n",
        set.len(),
        set.steps(),
        set.dims(),
        quote(&args.out.display().to_string())
    ))
}

/// `curves.csv` → `curves.resolved.json`.
pub fn resolved_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "curves".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.resolved.json"))
}

pub fn run(args: &RunArgs) -> Result<String> {
    let mut cfg: RunConfig = match &args.config {
        Some(p) => formats::read_json(p)?,
        None => RunConfig::default(),
    };
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.ranker = args.ranker.unwrap_or(cfg.ranker);
    cfg.final_candidates = args.final_candidates.unwrap_or(cfg.final_candidates);
    cfg.training_curves = args.training_curves.unwrap_or(cfg.training_curves);
    cfg.eta = args.eta.unwrap_or(cfg.eta);
    cfg.grace_fraction = args.grace.unwrap_or(cfg.grace_fraction);
    if cfg.ranker != RankerKind::Gp {
        cfg.training_curves = 0;
    }

    let universe = curves_csv::load_csv(&args.curves)?;
    let spec = cfg.sweep_spec(universe.len());
    let resolved = sweep::resolve(&universe, &spec)?;
    cfg.reference_perf = resolved.reference_perf;
    let key = TrialKey {
        ranker: cfg.ranker,
        final_candidates: cfg.final_candidates,
        training_curves: cfg.training_curves,
        trial: 0,
    };
    let outcome = experiment::run_trial(&universe, &resolved, &key, cfg.reference_perf.expect("resolved"))?;

    formats::create_dir(&args.out)?;
    formats::write_trace_json(&args.out.join("trace.json"), &outcome.trace)?;
    formats::write_trace_csv(&args.out.join("trace.csv"), &outcome.trace)?;
    formats::write_json(&args.out.join(sweep::RESOLVED_CONFIG_FILE), &cfg)?;
    let r = &outcome.result;
    Ok(format!(
        "status=ok ranker={} picked={} picked_perf={} best={} best_perf={} regret={} relative_regret={} compute={} relative_compute={}\n",
        r.ranker, r.picked, r.picked_perf, r.best, r.best_perf, r.absolute_regret, r.relative_regret, r.absolute_compute, r.relative_compute
    ))
}

pub fn sweep(args: &SweepArgs) -> Result<String> {
    let mut spec: SweepSpec = match &args.config {
        Some(p) => formats::read_json(p)?,
        None => SweepSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.root_seed = s;
    }
    if let Some(r) = &args.ranker {
        spec.rankers = r.clone();
    }
    if let Some(f) = &args.final_candidates {
        spec.final_candidates = f.clone();
    }
    if let Some(c) = &args.training_curves {
        spec.training_curves = c.clone();
    }
    spec.eta = args.eta.unwrap_or(spec.eta);
    spec.grace_fraction = args.grace.unwrap_or(spec.grace_fraction);
    spec.pool_size = args.pool_size.unwrap_or(spec.pool_size);
    spec.trials = args.trials.unwrap_or(spec.trials);
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let universe = curves_csv::load_csv(&args.curves)?;
    let resolved = sweep::resolve(&universe, &spec)?;
    let results: Vec<_> = sweep::run(&universe, &resolved, jobs)?.into_iter().map(|o| o.result).collect();
    let agg = sweep::write_outputs(&args.out, &resolved, &results)?;

    let mut out = String::new();
    for w in &agg.warnings {
        let _ = writeln!(
            out,
            "status=warning ranker={} final_candidates={} training_curves={} message={}",
            w.ranker,
            w.final_candidates,
            w.training_curves,
            quote(&w.message)
        );
    }
    let _ = writeln!(
        out,
        "status=ok trials={} cells={} out={}",
        results.len(),
        agg.rows.len(),
        quote(&args.out.display().to_string())
    );
    Ok(out)
}

pub fn report(args: &ReportArgs) -> Result<String> {
    let rows = report::load_rows(&args.input)?;
    let (paths, table) = report::write_report(&rows, &args.out)?;
    Ok(format!("{table}status=ok series={} out={}\n", paths.len(), quote(&args.out.display().to_string())))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}
