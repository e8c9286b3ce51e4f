//! `webfsm`: batch pipeline over FSM-specified web environments.
//!
//! validate → enumerate → ground → replay → export, plus reward scoring and
//! dataset statistics. Exit status is 0 on success, 1 on a domain failure
//! and 2 on I/O or usage errors.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use webfsm_core::search::{SearchConfig, DEFAULT_MAX_NODES, DEFAULT_PARAM_CAP};

#[derive(Parser)]
#[command(
    name = "webfsm",
    version,
    about = "Trajectory pipeline for FSM-specified web environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Caps {
    /// Maximum trajectory length explored.
    #[arg(long, default_value_t = 8)]
    max_depth: u32,
    /// Stop adding states beyond this many.
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    max_nodes: usize,
    /// Stop expanding after this many states.
    #[arg(long)]
    per_goal_cap: Option<usize>,
    /// Parameter bindings tried per action.
    #[arg(long, default_value_t = DEFAULT_PARAM_CAP)]
    param_cap: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check an fsm.json document and print its findings.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        /// Print the report as JSON instead of tab-separated lines.
        #[arg(long)]
        json: bool,
    },
    /// Breadth-first search for goal-reaching trajectories.
    Enumerate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Goal predicate as inline JSON or a file path; defaults to the terminal pages.
        #[arg(long)]
        goal: Option<String>,
        #[command(flatten)]
        caps: Caps,
        /// Trajectories kept, each ending in a distinct state.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Also write negatives.json.
        #[arg(long)]
        negatives: bool,
        /// Expand each frontier layer on a thread pool (same output).
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand trajectories into atomic GUI steps with target boxes.
    Ground {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        /// Layout seed for box placement.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay trajectories strictly and partition them into accepted and rejected.
    Replay {
        #[arg(long)]
        spec: PathBuf,
        /// A grounded.json or trajectories.json artifact.
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON list of {page, selector, kind} defects to inject.
        #[arg(long)]
        defects: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write bfs.json files, the dataset stream and the statistics manifest.
    Export {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// accepted.json from replay.
        #[arg(long)]
        accepted: PathBuf,
        /// Interaction modes to instantiate (default: all five).
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long, default_value = "bfs_driven")]
        family: String,
        /// Website label; defaults to meta.app or the fsm.json file stem.
        #[arg(long)]
        website: Option<String>,
        /// Keep one trajectory per goal.
        #[arg(long)]
        dedup: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a batch of completions with the composite reward.
    Reward {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute dataset aggregates and compare them with a manifest.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { spec, json } => commands::validate(&spec, json),
        Command::Enumerate {
            spec,
            catalog,
            goal,
            caps,
            samples,
            negatives,
            parallel,
            out,
        } => commands::enumerate(commands::EnumerateArgs {
            spec: &spec,
            catalog: catalog.as_deref(),
            goal: goal.as_deref(),
            config: SearchConfig {
                max_depth: caps.max_depth,
                max_nodes: Some(caps.max_nodes),
                per_goal_cap: caps.per_goal_cap,
                param_instantiation_cap: caps.param_cap,
            },
            samples,
            negatives,
            parallel,
            out: &out,
        }),
        Command::Ground {
            spec,
            trajectories,
            seed,
            out,
        } => commands::ground(&spec, &trajectories, seed, &out),
        Command::Replay {
            spec,
            trajectories,
            seed,
            defects,
            out,
        } => commands::replay(&spec, &trajectories, seed, defects.as_deref(), &out),
        Command::Export {
            spec,
            catalog,
            accepted,
            modes,
            family,
            website,
            dedup,
            out,
        } => commands::export(commands::ExportArgs {
            spec: &spec,
            catalog: catalog.as_deref(),
            accepted: &accepted,
            modes,
            family,
            website,
            dedup,
            out: &out,
        }),
        Command::Reward { batch, out } => commands::reward(&batch, out.as_deref()),
        Command::Stats { dataset, manifest } => commands::stats(&dataset, manifest.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
