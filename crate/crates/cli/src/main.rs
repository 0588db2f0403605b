//! `isn`: scale-range sampling analysis, multi-scale fusion, evaluation and
//! range search over COCO-format data.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use isn_core::error::{CocoError, SearchError};
use isn_core::search::SearchFailure;
use isn_core::{PyramidSpec, ScaleRange};

use commands::{PolicyArg, PopulationArgs, Run};
use config::AppConfig;

#[derive(Parser)]
#[command(name = "isn", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON configuration file; unset fields keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (a directory for `simulate`). Reports go to stdout when unset.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Pyramid scaling factors, e.g. `4,2,1,0.5,0.25`.
    #[arg(long, global = true, value_name = "W,..", value_parser = config::parse_omegas)]
    omegas: Option<PyramidSpec>,
    /// Valid instance scale range, e.g. `16,560` or `0,inf`.
    #[arg(long, global = true, value_name = "LO,HI", value_parser = config::parse_range)]
    isn_range: Option<ScaleRange>,
    /// Override any config field: `--set soft_nms.sigma=0.3`. The value is
    /// parsed as JSON, falling back to a plain string.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Valid/ignored training instances per resolution.
    Partition {
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Isn)]
        policy: PolicyArg,
    },
    /// Trained/ignored resized-scale histograms and their overlap for both
    /// sampling policies. Writes JSON, plus CSV next to `--out`.
    AnalyzeSnip {
        /// Annotations to analyse; a synthetic log-normal population otherwise.
        #[arg(long, value_name = "FILE")]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        population: usize,
        /// Median instance scale of the synthetic population, in pixels.
        #[arg(long, default_value_t = 64.0)]
        median: f64,
        /// Log-space standard deviation of the synthetic population.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Fuse per-resolution detections into one COCO results file.
    Fuse {
        /// Results files whose records carry an `omega` or `resolution_index` tag.
        #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
        detections: Vec<PathBuf>,
        /// Fuse every resolution without scale gating.
        #[arg(long)]
        naive: bool,
    },
    /// COCO-style AP/AR. Writes JSON, plus CSV next to `--out`.
    Eval {
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
        detections: Vec<PathBuf>,
        /// Also report metrics restricted to this scale range.
        #[arg(long, value_name = "LO,HI", value_parser = config::parse_range)]
        scale_range: Option<ScaleRange>,
    },
    /// Greedy search for the valid scale range.
    Search {
        /// JSON list of `{"range": [lo, hi], "ap": x}` entries.
        #[arg(
            long,
            value_name = "FILE",
            conflicts_with = "simulate",
            required_unless_present = "simulate"
        )]
        lookup: Option<PathBuf>,
        /// Score candidate ranges on a simulated dataset instead.
        #[arg(long)]
        simulate: bool,
    },
    /// Synthetic annotations and per-resolution detections.
    Simulate {
        #[arg(long)]
        images: Option<usize>,
    },
    /// Valid training samples per feature-pyramid level, as CSV.
    StageHist {
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
    },
}

fn effective_config(global: &GlobalArgs) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(global.config.as_deref())?;
    if let Some(omegas) = &global.omegas {
        cfg.omegas = omegas.clone();
    }
    if let Some(range) = global.isn_range {
        cfg.isn_range = range;
    }
    if !global.overrides.is_empty() {
        let mut value = serde_json::to_value(&cfg)?;
        for o in &global.overrides {
            config::apply_override(&mut value, o)?;
        }
        cfg = serde_json::from_value(value).context("applying --set overrides")?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.sim.profile.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = effective_config(&cli.global)?;
    if let Command::Simulate { images: Some(n) } = cli.command {
        config.sim.dataset.num_images = n;
    }
    let run = Run {
        config,
        out: cli.global.out,
    };
    match cli.command {
        Command::Partition {
            annotations,
            policy,
        } => commands::partition(&run, &annotations, policy),
        Command::AnalyzeSnip {
            annotations,
            population,
            median,
            sigma,
        } => commands::analyze_snip(
            &run,
            annotations.as_deref(),
            PopulationArgs {
                size: population,
                median,
                sigma,
            },
        ),
        Command::Fuse { detections, naive } => commands::fuse(&run, &detections, naive),
        Command::Eval {
            annotations,
            detections,
            scale_range,
        } => commands::evaluate(&run, &annotations, &detections, scale_range),
        Command::Search { lookup, .. } => commands::search(&run, lookup.as_deref()),
        Command::Simulate { .. } => commands::simulate(&run),
        Command::StageHist { annotations } => commands::stage_hist(&run, &annotations),
    }
}

/// Coarse failure class for the error line.
fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<CocoError>() {
            return "input";
        }
        if cause.is::<SearchFailure>() || cause.is::<SearchError>() {
            return "search";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
    }
    "error"
}

/// Cause chain joined with `: `, skipping causes already quoted by their
/// parent's message.
fn error_message(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "error": error_kind(&err),
                "message": error_message(&err),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
