//! `redee` command-line interface.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "redee",
    version,
    about = "Document-level event extraction with relation-augmented attention"
)]
struct Cli {
    /// Run configuration JSON; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation, initialisation and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output location (a directory for most commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace RAAT blocks with vanilla transformer blocks.
    #[arg(long, global = true, value_enum)]
    ablate: Option<Ablate>,
    /// Load checkpoints whose config hash does not match.
    #[arg(long, global = true)]
    force: bool,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablate {
    Raat1,
    Raat2,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic train/dev/test splits and a manifest.
    GenData,
    /// Relation statistics per split as TSV.
    Stats {
        /// Dataset files in column order (defaults to the configured train/dev/test).
        paths: Vec<PathBuf>,
        /// Read files in the public ChFinAnn release format with its five-type ontology.
        #[arg(long)]
        chfinann: bool,
    },
    /// Train a model into a new run directory.
    Train {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write JSON-lines predictions for a dataset.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train and score the full model and its three RAAT ablations.
    Ablate {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Finite-difference gradient checks over every differentiable component.
    Gradcheck {
        /// Number of random seeds, starting from `--seed` (default 0).
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn effective_config(cli: &Cli) -> redee::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.ablate {
        Some(Ablate::Raat1) => cfg.model.disable_raat1 = true,
        Some(Ablate::Raat2) => cfg.model.disable_raat2 = true,
        Some(Ablate::Both) => {
            cfg.model.disable_raat1 = true;
            cfg.model.disable_raat2 = true;
        }
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> redee::Result<()> {
    let cfg = effective_config(&cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let out = cli.out.as_deref();
    match cli.command {
        None => Err(redee::Error::Config("no command given (see --help)".into())),
        Some(Command::GenData) => commands::gen_data(&cfg, out),
        Some(Command::Stats { paths, chfinann }) => commands::stats(&cfg, &paths, chfinann, out),
        Some(Command::Train { train, dev }) => commands::train(&cfg, train, dev, out),
        Some(Command::Eval { checkpoint, data }) => commands::eval(
            &cfg,
            cli.config.is_some(),
            &checkpoint,
            data,
            cli.force,
            out,
        ),
        Some(Command::Predict { checkpoint, data }) => commands::predict(
            &cfg,
            cli.config.is_some(),
            &checkpoint,
            data,
            cli.force,
            out,
        ),
        Some(Command::Ablate { train, dev, test }) => commands::ablate(&cfg, train, dev, test, out),
        Some(Command::Gradcheck { seeds }) => commands::gradcheck(cli.seed.unwrap_or(0), seeds),
    }
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
