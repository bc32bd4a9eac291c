use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tagalign::commands::{self, EvalOverrides, PipelineOverrides, ReportPaths};
use tagalign::config::{Direction, Method};
use tagalign::CliError;

/// Registers a SLAM point cloud and an SfM point cloud using planted tags.
#[derive(Parser)]
#[command(name = "tagalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Localize the tags in both clouds and write tags_slam.json / tags_sfm.json.
    Localize {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the transform and write alignment.json and merged.ply.
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        /// SLAM tag report from `localize`; with --sfm-tags skips localization.
        #[arg(long, requires = "sfm_tags")]
        slam_tags: Option<PathBuf>,
        #[arg(long, requires = "slam_tags")]
        sfm_tags: Option<PathBuf>,
    },
    /// Generate a synthetic scene with known ground truth.
    Synth {
        /// Scene configuration (TOML); an empty file gives the defaults.
        #[arg(long)]
        config: PathBuf,
        /// Scene directory [default: ./scene].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score an alignment report against a truth manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Localize { common } => {
            let o = PipelineOverrides {
                output_dir: common.out,
                ..Default::default()
            };
            let cfg = commands::load_pipeline(&common.config, &o)?;
            let (slam, sfm) = commands::cmd_localize(&cfg)?;
            println!("localized {} SLAM tags and {} SfM tags", slam.tags.len(), sfm.tags.len());
        }
        Command::Align {
            common,
            method,
            direction,
            slam_tags,
            sfm_tags,
        } => {
            let o = PipelineOverrides {
                output_dir: common.out,
                method,
                direction,
            };
            let cfg = commands::load_pipeline(&common.config, &o)?;
            let report = commands::cmd_align(&cfg, &ReportPaths { slam: slam_tags, sfm: sfm_tags })?;
            println!(
                "{} alignment on {} tags, rmse {:.3e}",
                report.method,
                report.tags_used.len(),
                report.rmse
            );
        }
        Command::Synth { config, out, seed } => {
            let cfg = commands::load_scene_config(&config, seed)?;
            let out = out.unwrap_or_else(|| PathBuf::from("scene"));
            let manifest = commands::cmd_synth(&cfg, &out)?;
            println!("wrote scene with {} tags to {}", manifest.tags.len(), out.display());
        }
        Command::Eval {
            common,
            manifest,
            report,
        } => {
            let o = EvalOverrides {
                manifest,
                report,
                output_dir: common.out,
            };
            let cfg = commands::load_eval(&common.config, &o)?;
            let metrics = commands::cmd_eval(&cfg)?;
            print!("{}", commands::summary(&metrics));
            if !metrics.passed {
                let failed: Vec<_> = metrics.gates.iter().filter(|g| !g.passed).map(|g| g.gate.as_str()).collect();
                return Err(CliError::GateFailure(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tagalign::logging::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
