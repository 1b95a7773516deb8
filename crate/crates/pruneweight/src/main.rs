use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pruneweight::config::PipelineConfig;
use pruneweight::error::{exit, CliResult};
use pruneweight::pipeline::{self, Stage};

/// Prune a labeled dataset, learn class weights, and train a small
/// class-conditional diffusion model on the weighted coreset.
#[derive(Parser)]
#[command(name = "pruneweight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the dataset.
    GenData(Common),
    /// Train the reference diffusion model on the full dataset.
    TrainRef(Common),
    /// Embed, score and select the coreset.
    Prune(Common),
    /// Learn class weights by DRO against the reference model.
    Reweight(Common),
    /// Train the diffusion model on the weighted coreset.
    Train(Common),
    /// Draw labeled samples from the trained model.
    Sample(Common),
    /// Compare generated samples with the real data.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Earlier report to compare against; must use the same encoder.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Ratio of training work between a config and a baseline config.
    Speedup {
        #[command(flatten)]
        common: Common,
        /// Baseline config, typically full-data training.
        #[arg(long)]
        baseline: PathBuf,
        /// Also time both training runs (printed, not written).
        #[arg(long)]
        wall_clock: bool,
    },
}

fn stage(c: &Common) -> CliResult<Stage> {
    Stage::new(PipelineConfig::load(&c.config)?, c.out.clone(), c.seed)
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenData(c) => pipeline::gen_data(&stage(&c)?).map(drop),
        Command::TrainRef(c) => pipeline::train_ref(&stage(&c)?).map(drop),
        Command::Prune(c) => pipeline::prune(&stage(&c)?).map(drop),
        Command::Reweight(c) => pipeline::reweight(&stage(&c)?).map(drop),
        Command::Train(c) => pipeline::train_stage(&stage(&c)?).map(drop),
        Command::Sample(c) => pipeline::sample(&stage(&c)?).map(drop),
        Command::Eval { common, compare } => pipeline::eval(&stage(&common)?, compare.as_deref()).map(drop),
        Command::Speedup {
            common,
            baseline,
            wall_clock,
        } => {
            let st = stage(&common)?;
            let mut base = PipelineConfig::load(&baseline)?;
            if let Some(s) = common.seed {
                base.seed = s;
            }
            let r = pipeline::speedup_report(&st.cfg, &base)?;
            pipeline::write_speedup(&st, &base, &r)?;
            println!(
                "speedup: step-count ratio {:.6} ({} vs {} sample gradients); optimizer-step ratio {:.6}",
                r.ratio, r.baseline.sample_gradients, r.candidate.sample_gradients, r.optimizer_step_ratio
            );
            if wall_clock {
                let base_stage = Stage::new(base, None, None)?;
                let tc = pipeline::time_training(&st)?;
                let tb = pipeline::time_training(&base_stage)?;
                println!("speedup: wall-clock {tb:.3}s / {tc:.3}s = {:.3}", tb / tc);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PRUNEWEIGHT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
