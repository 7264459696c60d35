//! `seedbox` command-line front end.
//!
//! Logs go to standard error. Labels, manifests and reports are written
//! only to files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use seedbox::pipeline::{cmd_eval, cmd_generate, cmd_score, cmd_synth, load_config, Manifest, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "seedbox", version, about = "3D box pseudo-labels from LiDAR and 2D instance masks")]
struct Cli {
    /// TOML configuration file. Omitted keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Frame-level worker threads.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Exit nonzero when any frame fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Override a configuration key, e.g. `--set dcpg.r_init=1.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label every frame of the dataset.
    Generate {
        /// Also write scored proposals for later re-scoring.
        #[arg(long)]
        dump_proposals: bool,
        /// Also write kept clusters and box corners as point-list text files.
        #[arg(long)]
        export_clusters: bool,
    },
    /// Re-score proposals dumped by an earlier `generate --dump-proposals`.
    Score {
        /// Directory of `<frame>.json` proposal dumps [default: <output>/proposals].
        #[arg(long, value_name = "DIR")]
        proposals: Option<PathBuf>,
    },
    /// Compare label files against ground truth.
    Eval {
        /// Pseudo-label directory [default: <output>/label_2].
        #[arg(long, value_name = "DIR")]
        labels: Option<PathBuf>,
        /// Ground-truth label directory [default: <dataset>/label_2].
        #[arg(long, value_name = "DIR")]
        gt: Option<PathBuf>,
        /// Where to write the report [default: <output>].
        #[arg(long, value_name = "DIR")]
        report: Option<PathBuf>,
    },
    /// Write a synthetic dataset with ground truth into the dataset root.
    Synth {
        /// Number of frames [default: synth_frames from the configuration].
        #[arg(long, value_name = "N")]
        frames: Option<u64>,
    },
}

fn report_run(m: &Manifest) -> bool {
    log::info!(
        "{}: {} frames, {} proposals, {} kept, config {}",
        m.command,
        m.frames,
        m.proposals,
        m.kept,
        &m.config_hash[..12]
    );
    for f in &m.failed {
        log::error!("frame {} failed: {}", f.frame, f.error);
    }
    m.failed.is_empty()
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg: PipelineConfig = load_config(cli.config.as_deref(), &cli.overrides).context("loading configuration")?;
    if let Some(n) = cli.workers {
        cfg.workers = n;
    }
    match cli.command {
        Command::Generate {
            dump_proposals,
            export_clusters,
        } => {
            cfg.dump_proposals |= dump_proposals;
            cfg.export_clusters |= export_clusters;
            let m = cmd_generate(&cfg).context("generate")?;
            Ok(report_run(&m))
        }
        Command::Score { proposals } => {
            let dump = proposals.unwrap_or_else(|| cfg.output.join("proposals"));
            let m = cmd_score(&cfg, &dump).with_context(|| format!("scoring proposals in {}", dump.display()))?;
            Ok(report_run(&m))
        }
        Command::Eval { labels, gt, report } => {
            let labels = labels.unwrap_or_else(|| cfg.output.join("label_2"));
            let gt = gt.unwrap_or_else(|| cfg.dataset.join("label_2"));
            let report = report.unwrap_or_else(|| cfg.output.clone());
            let outcome = cmd_eval(&cfg, &labels, &gt, &report).context("eval")?;
            for r in &outcome.report.recall {
                log::info!("recall@{:.2} = {:.4} ({} matched)", r.iou, r.recall, r.matched);
            }
            Ok(outcome.missing_labels.is_empty() && outcome.missing_gt.is_empty())
        }
        Command::Synth { frames } => {
            if let Some(n) = frames {
                cfg.synth_frames = n;
            }
            let ids = cmd_synth(&cfg).context("synth")?;
            log::info!("wrote {} frames to {}", ids.len(), cfg.dataset.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let strict = cli.strict;
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if strict => ExitCode::FAILURE,
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
