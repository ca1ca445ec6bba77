use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jcas_lab::commands::{self, Outcome};
use jcas_lab::config::ExperimentConfig;
use jcas_lab::output::OutputDir;
use jcas_lab::{CliError, EXIT_CONFIG};

/// Capacity-distortion experiments for joint communication and sensing.
#[derive(Debug, Parser)]
#[command(name = "jcas-lab", version)]
struct Cli {
    /// Experiment config (TOML). Without it every section takes its defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "JCAS_LAB_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 4 when any result is infeasible.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady-state covariances and budget thresholds.
    Riccati,
    /// Switching and multi-beam rate-distortion curves.
    RdCurve {
        /// Also report rates in bits.
        #[arg(long)]
        bits: bool,
    },
    /// Monte Carlo check of the expected error covariance against its bounds.
    McVerify,
    /// Simulate one trajectory (or many, with `filter.trials`) and track the distortion.
    FilterSim,
    /// Posterior check and tradeoff sweep on a discrete model.
    Bayes,
    /// Regenerate the data behind a figure from built-in presets.
    Reproduce {
        #[command(subcommand)]
        figure: Figure,
        #[arg(long)]
        bits: bool,
    },
}

#[derive(Debug, Subcommand)]
enum Figure {
    /// Switching bounds over a noiseless channel.
    Fig3,
    /// Switching against multi-beam over a Gaussian channel.
    Fig4,
}

/// Seed recorded by the figure presets when none is given.
const PRESET_SEED: u64 = 0;

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(t) = cli.threads.or(cfg.threads) {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    if let Command::Reproduce { figure, bits } = &cli.command {
        let seed = cfg.seed.unwrap_or(PRESET_SEED);
        return match figure {
            Figure::Fig3 => commands::reproduce_fig3(&OutputDir::create(&cli.out, "preset-fig3", seed)?, *bits),
            Figure::Fig4 => commands::reproduce_fig4(&OutputDir::create(&cli.out, "preset-fig4", seed)?, *bits),
        };
    }

    let seed = cfg.seed()?;
    let out = OutputDir::create(&cli.out, &cfg.hash(), seed)?;
    match cli.command {
        Command::Riccati => commands::riccati(&cfg, &out),
        Command::RdCurve { bits } => commands::rd_curve(&cfg, &out, bits),
        Command::McVerify => commands::mc_verify(&cfg, &out, seed),
        Command::FilterSim => commands::filter_sim(&cfg, &out, seed),
        Command::Bayes => commands::bayes(&cfg, &out, seed),
        Command::Reproduce { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let strict = cli.strict;
    match run(cli) {
        Ok(outcome) => {
            // a closed pipe on stdout is not worth failing over
            let mut stdout = std::io::stdout().lock();
            let _ = write!(stdout, "{}", outcome.report);
            for f in &outcome.summary.files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            if strict && outcome.summary.infeasible > 0 {
                let e = CliError::Infeasible(outcome.summary.infeasible);
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
