//! `smvslab` — scene generation, localization, vulnerability profiling, spoofer
//! placement, attack simulation and evaluation from one binary.
//!
//! Exit status: 0 on success, 1 when the data or parameters are rejected, 2 on
//! usage errors.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::UsageError;

#[derive(Parser, Debug)]
#[command(name = "smvslab", version, about = "Scan-matching vulnerability analysis and LiDAR spoofing simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene and raycast a dataset along its route.
    Scene {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Scan-to-local-map odometry over a dataset.
    Odom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Localize a dataset against a prior map built from a benign recording.
    Localize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Recording (with ground truth) the prior map is built from; defaults to --dataset.
        #[arg(long)]
        map_dataset: Option<PathBuf>,
    },
    /// Frame-wise vulnerability profile of a dataset.
    Smvs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Poses for the profile (TUM); defaults to the dataset's ground truth.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        smvs: SmvsArgs,
    },
    /// Recommend spoofer positions from a vulnerability profile.
    Place {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        place: PlaceArgs,
    },
    /// Apply a spoofing attack to a dataset.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// APE/RPE of an estimated trajectory against a reference.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Estimated trajectory (TUM file or a localization output directory).
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Reference trajectory (TUM file or a dataset directory).
        #[arg(long, alias = "dataset")]
        reference: Option<PathBuf>,
        #[arg(long)]
        rpe_delta: Option<usize>,
    },
    /// Bucket evaluated attack runs by the vulnerability score where they were launched.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        profile: Option<PathBuf>,
        /// `eval` output directories.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Comma-separated lower bucket edges.
        #[arg(long)]
        edges: Option<String>,
    },
    /// Run every stage: scene, benign localization, profile, placement, attack, evaluation, report.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        smvs: SmvsArgs,
        #[command(flatten)]
        place: PlaceArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// odometry or priormap
        #[arg(long)]
        pipeline: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; nothing is written elsewhere.
    #[arg(long)]
    out: PathBuf,
    /// Base seed; falls back to the config file, then SMVSLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// key=value file supplying defaults for any flag (flags win).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SceneArgs {
    /// canyon, open-wall or mixed (default mixed)
    #[arg(long)]
    scene: Option<String>,
    /// Route length, meters (default 100)
    #[arg(long)]
    length: Option<f64>,
    /// Vehicle speed, m/s (default 5)
    #[arg(long)]
    speed: Option<f64>,
    /// Scans per second (default 10)
    #[arg(long)]
    frame_rate: Option<f64>,
    /// Gaussian range noise σ, meters (default 0.02)
    #[arg(long)]
    range_noise: Option<f64>,
}

#[derive(Args, Debug)]
struct SmvsArgs {
    /// Azimuth sectors per scan (default 72)
    #[arg(long)]
    n_regions: Option<usize>,
    /// Sector-distance threshold of the frame score (default 8)
    #[arg(long)]
    d_th: Option<usize>,
    /// Per-axis jitter of the perturbed clones, meters (default 0.01)
    #[arg(long)]
    clone_sigma: Option<f64>,
    /// Fraction of points kept in each clone (default 0.9)
    #[arg(long)]
    keep_ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct PlaceArgs {
    /// Spoofer distance from the route, meters (default 12.5)
    #[arg(long)]
    standoff: Option<f64>,
    /// Highest-scoring frames used for placement (default 10)
    #[arg(long)]
    top_m: Option<usize>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// hfr, hfr-noise or inject (default hfr-noise)
    #[arg(long)]
    attack: Option<String>,
    /// Range of the injected wall, meters (default 5)
    #[arg(long)]
    wall_dist: Option<f64>,
    /// Rings the spoofer can inject into (default 10)
    #[arg(long)]
    layers: Option<usize>,
    /// Spoofer world x, meters
    #[arg(long, allow_hyphen_values = true)]
    spoofer_x: Option<f64>,
    /// Spoofer world y, meters
    #[arg(long, allow_hyphen_values = true)]
    spoofer_y: Option<f64>,
    /// placement.txt from `place`; used when no spoofer position is given.
    #[arg(long)]
    placement: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Scene { common, .. }
        | Command::Odom { common, .. }
        | Command::Localize { common, .. }
        | Command::Smvs { common, .. }
        | Command::Place { common, .. }
        | Command::Attack { common, .. }
        | Command::Eval { common, .. }
        | Command::Report { common, .. }
        | Command::Pipeline { common, .. } => common.threads,
    };
    match smvslab::par::with_threads(threads, || commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
