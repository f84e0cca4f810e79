use clap::{Parser, Subcommand};
use inkrec::commands::{self, EvalArgs};
use inkrec::config::{CmdError, Overrides, Settings};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "inkrec", version, about = "Online handwritten character recognition")]
struct Cli {
    /// JSON run configuration; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for anything randomized.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Feature preset (A through H).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled dataset.
    Synth {
        /// Directory for dataset.jsonl and its manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a POT stroke file to the JSON-lines dataset format.
    Pot2json {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a dataset to feature tensors and archive them.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply the configured random deformations (off = deterministic features).
        #[arg(long)]
        train_mode: bool,
    },
    /// Train a network on a dataset and write a weight file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Architecture string; M and K stand for the input channel count
        /// and the class count.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate weights or an ensemble manifest on a labeled dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// single | hsp | vote | average (hsp = early-exit cascade).
        #[arg(long)]
        method: Option<String>,
        /// Early-exit confidence threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Member index for --method single.
        #[arg(long)]
        member: Option<usize>,
        /// Write the evaluation report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical verification suite.
    Selfcheck {
        /// Deliberately break one check to prove the suite can fail.
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let overrides = |arch: Option<String>, epochs: Option<usize>| Overrides {
        seed: cli.seed,
        preset: cli.preset.clone(),
        arch,
        epochs,
    };
    match cli.cmd {
        Cmd::Synth { ref out } => {
            let settings = Settings::load(cli.config.as_deref(), &overrides(None, None))?;
            commands::cmd_synth(&settings, out.clone(), cli.force)
        }
        Cmd::Pot2json { ref input, ref out } => commands::cmd_pot2json(input, out, cli.force),
        Cmd::Featurize {
            ref dataset,
            ref out,
            train_mode,
        } => {
            let settings = Settings::load(cli.config.as_deref(), &overrides(None, None))?;
            commands::cmd_featurize(&settings, dataset, out, train_mode, cli.force)
        }
        Cmd::Train {
            ref dataset,
            ref out,
            ref arch,
            epochs,
        } => {
            let settings =
                Settings::load(cli.config.as_deref(), &overrides(arch.clone(), epochs))?;
            commands::cmd_train(&settings, dataset, out, cli.force)
        }
        Cmd::Eval {
            ref dataset,
            ref weights,
            ref manifest,
            ref method,
            threshold,
            member,
            ref out,
        } => {
            let settings = Settings::load(cli.config.as_deref(), &overrides(None, None))?;
            commands::cmd_eval(
                &settings,
                &EvalArgs {
                    dataset: dataset.clone(),
                    weights: weights.clone(),
                    manifest: manifest.clone(),
                    method: method.clone(),
                    threshold,
                    member,
                    out: out.clone(),
                    force: cli.force,
                },
            )
        }
        Cmd::Selfcheck { ref fault } => commands::cmd_selfcheck(fault.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
