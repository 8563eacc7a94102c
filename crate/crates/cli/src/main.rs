use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use supernet_lab::config::ExperimentConfig;
use supernet_lab::harness::{self, Lab};

#[derive(Parser)]
#[command(
    name = "supernet-lab",
    version,
    about = "Dynamic supernet training lab on a toy cell search space"
)]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the oracle (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train and validation splits as CSV.
    GenData,
    /// Build (or load from cache) the stand-alone accuracy table.
    Oracle,
    /// Train the supernet(s); writes checkpoints, step log and consistency windows.
    Train,
    /// Rank every subnet with the checkpoints in --out against the oracle.
    Evaluate,
    /// Select a subnet with the checkpoints in --out.
    Search,
    /// Static vs dynamic training, or two finished run directories.
    Compare {
        #[arg(long, requires = "candidate")]
        baseline: Option<PathBuf>,
        #[arg(long, requires = "baseline")]
        candidate: Option<PathBuf>,
    },
    /// The {CaLR} x {MS} grid.
    Ablate,
    /// Every stage end to end.
    Run,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path).context("config stage failed")?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn jobs(n: usize) -> usize {
    if n == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        n
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out: &Path = &cli.out;
    let jobs = jobs(cli.jobs);
    match &cli.command {
        Command::GenData => {
            let lab = Lab::prepare(&cfg)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            lab.train.write_csv(&out.join("train.csv"))?;
            lab.val.write_csv(&out.join("val.csv"))?;
            println!(
                "{} train / {} val rows written to {}",
                lab.train.len(),
                lab.val.len(),
                out.display()
            );
        }
        Command::Oracle => {
            let lab = Lab::prepare(&cfg)?;
            let oracle = harness::load_or_build_oracle(&lab, jobs)?;
            harness::persist_ground_truth(&oracle.table, out)?;
            println!(
                "oracle: {} subnets, {} epochs, cache {}, seed self-consistency {}{}",
                oracle.table.len(),
                oracle.table.oracle.epochs,
                if oracle.cache_hit { "hit" } else { "miss" },
                oracle
                    .self_consistency
                    .map_or("n/a".into(), |t| format!("{t:.3}")),
                if oracle.gate_passed {
                    ""
                } else {
                    " (below gate)"
                },
            );
        }
        Command::Train => {
            let lab = Lab::prepare(&cfg)?;
            let outputs = harness::train_stage(&lab)?;
            harness::persist_training(&lab, &outputs, out).context("persist stage failed")?;
            println!(
                "trained {} supernet(s) into {}",
                outputs.len(),
                out.display()
            );
        }
        Command::Evaluate => {
            let lab = Lab::prepare(&cfg)?;
            let oracle = harness::load_or_build_oracle(&lab, jobs)?;
            let supernets = harness::load_supernets(&lab, out).context("evaluate stage failed")?;
            let report = harness::evaluate(&lab, &supernets, &oracle.table)?;
            harness::persist_report(&report, out).context("persist stage failed")?;
            println!("{}", report.summary_json());
        }
        Command::Search => {
            let lab = Lab::prepare(&cfg)?;
            let oracle = if cfg.harness.use_oracle {
                Some(harness::load_or_build_oracle(&lab, jobs)?)
            } else {
                None
            };
            let supernets = harness::load_supernets(&lab, out).context("search stage failed")?;
            let result = harness::search(&lab, &supernets, oracle.as_ref().map(|o| &o.table))?;
            harness::persist_search(&result, out).context("persist stage failed")?;
            println!(
                "selected {} (predicted {:.4}, ground truth {:?})",
                result.subnet, result.predicted, result.ground_truth
            );
        }
        Command::Compare {
            baseline,
            candidate,
        } => {
            let cmp = match (baseline, candidate) {
                (Some(a), Some(b)) => harness::compare_dirs(a, b, out)?,
                _ => harness::compare(&cfg, out, jobs)?,
            };
            println!(
                "delta tau {:+.4}  delta CB {}  delta C3 {}",
                cmp.delta_tau,
                cmp.delta_cb.map_or("n/a".into(), |v| format!("{v:+.4}")),
                cmp.delta_c3.map_or("n/a".into(), |v| format!("{v:+.4}")),
            );
        }
        Command::Ablate => {
            for cell in harness::ablate(&cfg, out, jobs)? {
                println!(
                    "{:<8} tau {:.4}  top CB {:?}",
                    cell.name, cell.report.kendall_tau, cell.report.top_cb
                );
            }
        }
        Command::Run => {
            let summary = harness::run_experiment(&cfg, out, jobs)?;
            if let Some(r) = &summary.report {
                println!("{}", r.summary_json());
            }
            println!(
                "selected {} (predicted {:.4}, ground truth {:?})",
                summary.search.subnet, summary.search.predicted, summary.search.ground_truth
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
