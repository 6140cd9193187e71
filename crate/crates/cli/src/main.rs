//! `gdrift`: membership-inference experiments from the command line.
//!
//! Every command works on one run directory. Settings come from an optional
//! TOML file, then `--seed`, then the dedicated flags, then `--set` overrides
//! in the order given.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gdrift_core::harness::{self, ExperimentConfig, RunManifest};

#[derive(Parser)]
#[command(name = "gdrift", version, about = "White-box membership inference through gradient-induced feature drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct Settings {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run directory (config key `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Sets every seed in the configuration. Required by `run-all`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training epochs (`training.epochs`).
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Training learning rate (`training.lr`).
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Ascent step of the drift probe (`attack.eta`).
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Overrides any configuration key, e.g. `--set corpus.n_facts=800`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration as TOML, or write it to a file.
    Config {
        #[arg(value_name = "FILE")]
        path: Option<PathBuf>,
    },
    /// Generate the synthetic world and the split membership dataset.
    GenData,
    /// Fine-tune the target model on member samples.
    Train {
        /// Continue from the run's checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Compute drift features and baseline scores for every sample.
    Extract,
    /// Fit the drift classifier and compare every attack on the test split.
    Evaluate,
    /// Evaluate with shuffled membership labels.
    Control,
    /// Refit the drift classifier on each feature subset.
    Ablate,
    /// Normalised drift statistics and CDF data per class.
    DriftReport,
    /// Drift of the probe projection across paraphrases.
    Consistency,
    /// Every stage from data generation to the consistency probe.
    RunAll,
    /// Check every artifact of the run against the manifest.
    Verify,
}

fn resolve(s: &Settings) -> Result<ExperimentConfig> {
    let mut cfg = match &s.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::with_seed(s.seed.unwrap_or(0)),
    };
    if let Some(seed) = s.seed {
        cfg.reseed(seed);
    }
    if let Some(out) = &s.out {
        cfg.output_dir = out.clone();
    }
    if let Some(e) = s.epochs {
        cfg.training.epochs = e;
    }
    if let Some(lr) = s.lr {
        cfg.training.lr = lr;
    }
    if let Some(eta) = s.eta {
        cfg.attack.eta = eta;
    }
    for a in &s.set {
        cfg.set(a)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if matches!(cli.command, Command::RunAll) && cli.settings.seed.is_none() {
        bail!("run-all requires --seed");
    }
    let cfg = resolve(&cli.settings)?;
    match cli.command {
        Command::Config { path } => {
            let text = cfg.to_toml()?;
            match path {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::GenData => {
            let s = harness::gen_data(&cfg)?;
            println!("{} samples written to {}", s.n_samples, cfg.output_dir.display());
            for (name, [m, n]) in ["train", "validation", "test"].iter().zip(s.split_counts) {
                println!("{name:<10} {m} members, {n} non-members");
            }
        }
        Command::Train { resume } => {
            let r = harness::train(&cfg, resume)?;
            println!(
                "trained on {} examples from {} member samples ({} non-member)",
                r.n_examples, r.n_member_samples, r.n_nonmember_examples
            );
            for (i, l) in r.epoch_losses.iter().enumerate() {
                println!("epoch {:>3}  loss {l:.6}", i + 1);
            }
            let loss = r.final_member_loss.unwrap_or(f64::NAN);
            println!("final member loss {loss:.6} (threshold {})", r.loss_threshold);
            if !r.success {
                eprintln!("warning: member loss did not reach the threshold");
            }
        }
        Command::Extract => {
            let s = harness::extract(&cfg)?;
            println!("{} rows; columns {}", s.n_rows, s.columns.join(","));
            println!("parameter checksum {} unchanged", s.param_checksum);
        }
        Command::Evaluate => print!("{}", harness::evaluate(&cfg)?.render()),
        Command::Control => print!("{}", harness::control(&cfg)?.render()),
        Command::Ablate => print!("{}", harness::render_ablation(&harness::ablate(&cfg)?)),
        Command::DriftReport => print!("{}", harness::drift_report(&cfg)?.summary.render()),
        Command::Consistency => print!("{}", harness::consistency(&cfg)?.render()),
        Command::RunAll => {
            let s = harness::run_all(&cfg)?;
            let loss = s.training.final_member_loss.unwrap_or(f64::NAN);
            println!("final member loss {loss:.6}");
            print!("{}", s.evaluation.render());
            println!();
            print!("{}", harness::render_ablation(&s.ablation));
            println!();
            print!("{}", s.drift.summary.render());
            println!();
            println!(
                "paraphrase consistency: mean per-fact std |d alpha| member {:.4}, non-member {:.4}",
                s.consistency.mean_member_std, s.consistency.mean_nonmember_std
            );
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Verify => {
            let m = RunManifest::open(&cfg.output_dir, &cfg.hash()?)?;
            m.verify_all(&cfg.output_dir)?;
            println!("{} artifacts match the manifest", m.artifacts.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
