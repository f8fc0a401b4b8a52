use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sal_core::experiment::{run_experiment, run_stage, DataSource, ExperimentConfig, Stage};
use sal_core::filter::ScoreKind;

#[derive(Parser)]
#[command(name = "sal", version, about = "Separate-and-learn OOD experiments on toy or CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run every stage and write a manifest
    Run,
    /// Generate (or import) the datasets
    GenData,
    /// Train the ID classifier
    TrainId,
    /// Score the wild data and extract candidate outliers
    Filter,
    /// Train the binary OOD classifier on ID data and candidates
    TrainOod,
    /// Compute test metrics
    Eval,
    /// Discrepancy sweep and condition check
    TheoryCheck,
    /// Print the effective configuration as TOML
    ShowConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Sal,
    Gradnorm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file; missing fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    score_kind: Option<ScoreArg>,
    #[arg(long, global = true)]
    class_conditional: bool,
    #[arg(long, global = true)]
    num_vectors: Option<usize>,
    #[arg(long, global = true)]
    percentile: Option<f64>,
    /// Also evaluate the filtering score directly as a detector
    #[arg(long, global = true)]
    posthoc: bool,
    #[arg(long, global = true)]
    pi: Option<f64>,
    #[arg(long, global = true, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Comma-separated mixing ratios for the discrepancy sweep
    #[arg(long, global = true, value_delimiter = ',')]
    pi_sweep: Option<Vec<f64>>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(k) = self.score_kind {
            cfg.filter.score_kind = match k {
                ScoreArg::Sal => ScoreKind::SalProjection,
                ScoreArg::Gradnorm => ScoreKind::GradNorm,
            };
        }
        if self.class_conditional {
            cfg.filter.class_conditional = true;
        }
        if let Some(c) = self.num_vectors {
            cfg.filter.num_vectors = c;
        }
        if let Some(p) = self.percentile {
            cfg.filter.percentile = p;
        }
        if self.posthoc {
            cfg.eval.posthoc = true;
        }
        if let Some(pi) = self.pi {
            cfg.pi = pi;
        }
        if let Some(s) = self.scenario {
            cfg.scenario = match s {
                ScenarioArg::One => DataSource::One,
                ScenarioArg::Two => DataSource::Two,
            };
        }
        if let Some(pis) = &self.pi_sweep {
            cfg.theory.pis = pis.clone();
        }
    }
}

fn run(cli: &Cli) -> sal_core::Result<()> {
    let mut cfg = match &cli.overrides.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;

    let stage = match cli.command {
        Command::Run => {
            let manifest = run_experiment(&cfg)?;
            println!(
                "wrote {} artifacts to {} (config {})",
                manifest.artifacts.len(),
                cfg.out_dir.display(),
                &manifest.config_hash[..12]
            );
            return Ok(());
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::GenData => Stage::GenData,
        Command::TrainId => Stage::TrainId,
        Command::Filter => Stage::Filter,
        Command::TrainOod => Stage::TrainOod,
        Command::Eval => Stage::Eval,
        Command::TheoryCheck => Stage::TheoryCheck,
    };
    run_stage(&cfg, stage)?;
    println!("{}: done ({})", stage.name(), cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
