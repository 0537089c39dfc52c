use clap::{Args, Parser, Subcommand};
use skilltrace::ingest::GroupLabel;
use skilltrace_cli::config::Config;
use skilltrace_cli::{cmd_analyze, cmd_group, cmd_report, cmd_synth, parse_seeds, CliError, RunOptions, SynthKind};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

/// Surgical skill analysis of tool-tip trajectories.
#[derive(Parser, Debug)]
#[command(name = "skilltrace", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Identification seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of dynamic modes
    #[arg(long, global = true)]
    k_modes: Option<usize>,
    /// Histogram bins: N for both axes or SPEEDxKAPPA
    #[arg(long, global = true, value_parser = parse_bins)]
    bins: Option<(usize, usize)>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyse trajectory files one by one
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// JSON report path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for CSV plot data
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Compare skill groups listed in a path,subject,group manifest
    Group {
        manifest: PathBuf,
        /// JSON report path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        /// Seed range A..B, both ends included
        #[arg(long, value_parser = parse_seeds)]
        seeds: RangeInclusive<u64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Skill preset for peg corpora
        #[arg(long)]
        skill: Option<GroupLabel>,
    },
    /// Print a JSON report as text
    Report { file: PathBuf },
}

fn parse_bins(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("invalid bins '{s}', expected N or SPEEDxKAPPA");
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn config(global: &GlobalArgs) -> Result<Config, CliError> {
    let mut config = match &global.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(k) = global.k_modes {
        config.k_modes = k;
    }
    if let Some((speed, kappa)) = global.bins {
        config.speed_bins = speed;
        config.kappa_bins = kappa;
    }
    config.validate().map_err(CliError::Usage)?;
    Ok(config)
}

fn emit(report: &skilltrace_cli::report::SkillReport, out: &Option<PathBuf>) {
    if out.is_none() {
        print!("{}", skilltrace_cli::report::to_json(report));
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = config(&cli.global)?;
    match cli.command {
        Command::Analyze { inputs, out, plot_dir } => {
            let opts = RunOptions { jobs: cli.global.jobs, out: out.clone(), plot_dir };
            emit(&cmd_analyze(&inputs, &config, &opts)?, &out);
        }
        Command::Group { manifest, out } => {
            let opts = RunOptions { jobs: cli.global.jobs, out: out.clone(), plot_dir: None };
            emit(&cmd_group(&manifest, &config, &opts)?, &out);
        }
        Command::Synth { kind, seeds, out, skill } => {
            if let Some(skill) = skill {
                config.synth_skill = skill;
            }
            let written = cmd_synth(kind, &config, seeds, &out, cli.global.jobs)?;
            eprintln!("wrote {} trajectories to {}", written.len(), out.display());
        }
        Command::Report { file } => print!("{}", cmd_report(&file)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
