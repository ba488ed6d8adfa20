use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multipatch_cli::{
    cmd_ablate, cmd_evaluate, cmd_finetune, cmd_forecast, cmd_pretrain, cmd_synth, CliResult,
    ExperimentConfig,
};

/// Multi-scale patch transformer forecasting with Monte Carlo dropout.
#[derive(Parser)]
#[command(name = "multipatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (synth) or run directory (everything else). Run
    /// directories must not exist yet.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic series as CSV.
    Synth(Common),
    /// Pretrain on the configured corpus.
    Pretrain(Common),
    /// Finetune a pretrained checkpoint on the target data.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated horizons, replacing `evaluation.horizons`.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Also score the persistence baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Full model against the four single-component ablations.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Forecast past the end of a CSV file.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Input series; defaults to the configured target data.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(format!("{name}-seed{}", cfg.seed)))
}

fn with_horizons(mut cfg: ExperimentConfig, horizons: &Option<Vec<usize>>) -> CliResult<ExperimentConfig> {
    if let Some(h) = horizons {
        cfg.evaluation.horizons = h.clone();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(c) => {
            let cfg = resolve(c)?;
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.csv"));
            let r = cmd_synth(&cfg, &out)?;
            println!("wrote {} rows to {}", r.rows, r.path.display());
        }
        Command::Pretrain(c) => {
            let cfg = resolve(c)?;
            let r = cmd_pretrain(&cfg, &out_dir(c, &cfg, "pretrain"))?;
            println!("checkpoint {}", r.checkpoint.display());
        }
        Command::Finetune { common, checkpoint } => {
            let cfg = resolve(common)?;
            let r = cmd_finetune(&cfg, checkpoint.as_deref(), &out_dir(common, &cfg, "finetune"))?;
            println!("checkpoint {}", r.checkpoint.display());
        }
        Command::Evaluate {
            common,
            checkpoint,
            horizons,
            baseline,
        } => {
            let mut cfg = with_horizons(resolve(common)?, horizons)?;
            cfg.evaluation.baseline |= *baseline;
            let out = out_dir(common, &cfg, "evaluate");
            let r = cmd_evaluate(&cfg, checkpoint.as_deref(), &out)?;
            print!("{}", multipatch_cli::report::metrics_text(&r));
        }
        Command::Ablate { common, horizons } => {
            let cfg = with_horizons(resolve(common)?, horizons)?;
            let r = cmd_ablate(&cfg, &out_dir(common, &cfg, "ablate"))?;
            print!("{}", multipatch_cli::report::ablation_text(&r));
        }
        Command::Forecast {
            common,
            checkpoint,
            input,
        } => {
            let cfg = resolve(common)?;
            let out = out_dir(common, &cfg, "forecast");
            let r = cmd_forecast(&cfg, checkpoint.as_deref(), input.as_deref(), &out)?;
            println!("wrote {} rows to {}", r.rows.len(), r.dir.join("forecast.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
