//! Command-line front end. [`main_entry`] returns the process exit code:
//! 0 success, 2 I/O or parse error, 3 scenario or oracle error, 4 output
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uptodate_core::feature::{bayes_oracle, FeatureName};
use uptodate_core::routine::minimal_routine_oracle;
use uptodate_core::ScenarioId;

use crate::config::{ConfigFile, ExperimentConfig, DEFAULT_BASE_SEED, DEFAULT_OUT};
use crate::error::HarnessError;
use crate::harness::{aggregate, load_records, run_experiment_with, RunOptions};
use crate::{plot, report};

pub const SEED_ENV: &str = "UPTODATE_SEED";

#[derive(Debug, Parser)]
#[command(name = "uptodate", version, about = "Run, tabulate and chart the closed-loop adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute (method, round) cells, appending to the results file.
    Run(RunArgs),
    /// Print the aggregate table of a results file.
    Report(ReportArgs),
    /// Write SVG bar charts of a results file.
    Plot(PlotArgs),
    /// Print a brute-force reference value.
    Oracle(OracleArgs),
}

fn scenario_arg(s: &str) -> Result<ScenarioId, String> {
    ScenarioId::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_parser = scenario_arg)]
    pub scenario: Option<ScenarioId>,
    /// Comma-separated method keys (default: all of the scenario's methods).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub rounds: Option<u32>,
    /// Base seed; round r uses seed + r. Falls back to the config file,
    /// then $UPTODATE_SEED, then 7.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results file (NDJSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Do not print the aggregate table.
    #[arg(long)]
    pub quiet: bool,
    /// Skip cells already completed in the results file (default).
    #[arg(long, conflicts_with = "no_resume")]
    pub resume: bool,
    /// Truncate the results file and run every cell.
    #[arg(long)]
    pub no_resume: bool,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results file to read.
    #[arg(long, alias = "results", default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    /// Print CSV instead of the aligned table.
    #[arg(long)]
    pub csv: bool,
    /// Require the file to hold this scenario.
    #[arg(long, value_parser = scenario_arg)]
    pub scenario: Option<ScenarioId>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Results file to read.
    #[arg(long, alias = "results", default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[arg(long, default_value = "plots")]
    pub plot_dir: PathBuf,
    #[arg(long, value_parser = scenario_arg)]
    pub scenario: Option<ScenarioId>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// `feature` or `routine`.
    #[arg(long, value_parser = scenario_arg)]
    pub scenario: ScenarioId,
    /// Comma-separated feature subset (feature oracle).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Longest routine to enumerate, at most 8 (routine oracle, default 8).
    #[arg(long)]
    pub max_len: Option<usize>,
    /// TOML experiment file whose `overrides.feature.spec` replaces the
    /// shipped generative table.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Failure of a subcommand: exit code plus message.
struct Failure(u8, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure(e.exit_code(), e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// `env_seed` is the value of `$UPTODATE_SEED`, if set.
pub fn main_entry<I, T>(args: I, env_seed: Option<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return 2;
            }
            let _ = write!(out, "{text}");
            return 0;
        }
    };
    let mut io = Io { out, err };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, env_seed, &mut io),
        Command::Report(a) => cmd_report(a, &mut io),
        Command::Plot(a) => cmd_plot(a, &mut io),
        Command::Oracle(a) => cmd_oracle(a, &mut io),
    };
    match result {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            let _ = writeln!(io.err, "error: {msg}");
            code
        }
    }
}

fn experiment_from(args: &RunArgs, env_seed: Option<OsString>) -> Result<ExperimentConfig, Failure> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let scenario = args
        .scenario
        .or(file.scenario)
        .ok_or_else(|| usage("--scenario is required (or set `scenario` in --config)"))?;
    let file_seed = file.base_seed;
    let mut cfg = file.resolve(ExperimentConfig::new(scenario, DEFAULT_OUT));
    cfg.base_seed = match (args.seed, file_seed, env_seed) {
        (Some(s), _, _) => s,
        (None, Some(s), _) => s,
        (None, None, Some(raw)) => raw
            .to_str()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| usage(format!("{SEED_ENV}={raw:?} is not an unsigned 64-bit integer")))?,
        (None, None, None) => DEFAULT_BASE_SEED,
    };
    if let Some(m) = &args.methods {
        cfg.methods = m.clone();
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs, env_seed: Option<OsString>, io: &mut Io) -> Result<(), Failure> {
    let cfg = experiment_from(&args, env_seed)?;
    let opts = RunOptions { resume: !args.no_resume, cell_limit: None, jobs: args.jobs };
    let total = cfg.methods.len() * cfg.rounds as usize;
    let err = &mut *io.err;
    let _ = writeln!(
        err,
        "{}: {} methods x {} rounds, base seed {}, results {}",
        cfg.scenario,
        cfg.methods.len(),
        cfg.rounds,
        cfg.base_seed,
        cfg.out.display()
    );
    let mut done = 0usize;
    let summary = run_experiment_with(&cfg, opts, &mut |rec| {
        done += 1;
        let _ = writeln!(
            err,
            "  [{done}] {}/{} round {} seed {} ({} ms)",
            rec.scenario, rec.method, rec.round_index, rec.seed, rec.wall_time_ms
        );
    })?;
    let _ = writeln!(
        io.err,
        "{} cells run, {} already complete, {} total",
        summary.appended, summary.skipped, total
    );
    if !args.quiet {
        if let Some(t) = &summary.table {
            let _ = write!(io.out, "{}", report::render_text(t));
        }
    }
    Ok(())
}

fn load_table(path: &std::path::Path, scenario: Option<ScenarioId>) -> Result<crate::harness::AggregateTable, Failure> {
    let records = load_records(path)?;
    let table = aggregate(&records)?;
    if let Some(s) = scenario {
        if s != table.scenario {
            return Err(HarnessError::MixedScenarios { expected: s, found: table.scenario }.into());
        }
    }
    Ok(table)
}

fn cmd_report(args: ReportArgs, io: &mut Io) -> Result<(), Failure> {
    let table = load_table(&args.out, args.scenario)?;
    let text = if args.csv { report::render_csv(&table) } else { report::render_text(&table) };
    let _ = write!(io.out, "{text}");
    Ok(())
}

fn cmd_plot(args: PlotArgs, io: &mut Io) -> Result<(), Failure> {
    let table = load_table(&args.out, args.scenario)?;
    for path in plot::write_charts(&table, &args.plot_dir)? {
        let _ = writeln!(io.out, "{}", path.display());
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs, io: &mut Io) -> Result<(), Failure> {
    match args.scenario {
        ScenarioId::Feature => {
            if args.max_len.is_some() {
                return Err(usage("--max-len applies to the routine oracle only"));
            }
            let names = args.features.ok_or_else(|| usage("the feature oracle needs --features"))?;
            let mut features = Vec::new();
            for n in &names {
                let f = FeatureName::parse(n).ok_or_else(|| usage(format!("unknown feature `{n}`")))?;
                if !features.contains(&f) {
                    features.push(f);
                }
            }
            let spec = match &args.config {
                Some(p) => ConfigFile::load(p)?.overrides.feature.generative_spec(),
                None => Default::default(),
            };
            let acc = bayes_oracle(&spec, &features).map_err(|e| Failure(3, e.to_string()))?;
            let _ = writeln!(io.out, "{acc:.6}");
            Ok(())
        }
        ScenarioId::Routine => {
            if args.features.is_some() || args.config.is_some() {
                return Err(usage("--features and --config apply to the feature oracle only"));
            }
            let routine = minimal_routine_oracle(args.max_len.unwrap_or(8)).map_err(|e| Failure(3, e.to_string()))?;
            let names: Vec<&str> = routine.iter().map(|a| a.name()).collect();
            let _ = writeln!(io.out, "{} {}", routine.len(), names.join(","));
            Ok(())
        }
        other => Err(usage(format!("no oracle for scenario `{other}` (expected feature or routine)"))),
    }
}
