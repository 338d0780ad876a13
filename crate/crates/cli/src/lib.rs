//! The `p6d` command line: pipeline stages as subcommands over the file formats
//! of `p6d-core`.
//!
//! Every subcommand reads one JSON config (`--config`), applies `--set key=value`
//! overrides and its own flags on top, and echoes the effective config into its
//! output. Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use p6d_core::config::{parse_value, PipelineConfig};

mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "p6d", version, about = "Object pose estimation, tracking, retargeting and evaluation from serialized features")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline config (JSON). Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set track.ransac=false`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Seed; takes precedence over P6D_SEED and the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-item parallelism; all cores by default.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the descriptor index from the view bundles.
    BuildIndex {
        /// Directory of object bundles (paths.bundles).
        #[arg(long)]
        bundles: Option<PathBuf>,
        /// Index file to write (paths.index).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Descriptor: ffa or cls.
        #[arg(long)]
        descriptor: Option<String>,
        /// Views expected per bundle.
        #[arg(long)]
        views: Option<usize>,
    },
    /// Rank indexed objects against a query descriptor or patch grid.
    Retrieve {
        /// Tensor: a descriptor `[dim]` or a patch grid `[rows, cols, dim]`.
        #[arg(long)]
        query: PathBuf,
        /// Foreground of a grid query, `[rows, cols]`; every patch when absent.
        #[arg(long)]
        fg: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metric scales of all proposals of a scene.
    Scale {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieval, rotation, translation and scale for every proposal.
    Align {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        descriptor: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seed tracking points from an alignment, or solve a trajectory from tracks.
    Track {
        /// Alignment output of `align`.
        #[arg(long, required_unless_present = "seeds")]
        poses: Option<PathBuf>,
        /// Object to follow; the best-scoring alignment when absent.
        #[arg(long)]
        object: Option<String>,
        /// Write seed points instead of solving.
        #[arg(long, requires = "poses")]
        emit_seeds: Option<PathBuf>,
        /// Seed file from `track --emit-seeds`.
        #[arg(long, conflicts_with = "emit_seeds", requires = "tracks")]
        seeds: Option<PathBuf>,
        /// Point tracks of the seed pixels.
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint trajectory of a 7-DoF arm reproducing an object trajectory.
    Retarget {
        #[arg(long)]
        trajectory: PathBuf,
        /// Kinematic chain profile (retarget.chain).
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-frame and tracking metrics against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// Alignment output to score per instance.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Trajectory outputs to score per video. Repeatable.
        #[arg(long)]
        trajectory: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic test fixtures.
    #[command(subcommand)]
    Fixtures(FixtureCommand),
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Three-object scene with bundles, proposals, depth, scale database and ground truth.
    Scene {
        #[arg(long)]
        out: PathBuf,
        /// Template views per object.
        #[arg(long)]
        views: Option<usize>,
    },
    /// Point tracks of seed pixels following the ground-truth motion.
    Tracks {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        /// Fraction of points hidden per frame.
        #[arg(long, default_value_t = 0.0)]
        occlusion: f64,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A problem with the invocation rather than the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<p6d_core::Error>() {
            return if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

/// Effective configuration and the directory its relative paths resolve against.
pub struct Context {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Context {
    /// Config file (or defaults), then `--set`, then P6D_SEED, then `--seed`,
    /// then the subcommand's own flags in `extra`.
    pub fn load(global: &GlobalArgs, extra: &[(String, Value)]) -> anyhow::Result<Self> {
        let mut overrides = Vec::new();
        for s in &global.set {
            let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            overrides.push((k.trim().to_string(), parse_value(v.trim())));
        }
        let (doc, base) = match &global.config {
            Some(path) => (p6d_core::io::read_json::<Value>(path)?, path.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (Value::Null, PathBuf::new()),
        };
        let mut config = PipelineConfig::from_value(doc.clone(), &overrides).map_err(|e| config_error(&global.config, e))?;
        config.apply_env().map_err(|e| usage(e.to_string()))?;
        if let Some(seed) = global.seed {
            config.seed = seed;
        }
        if !extra.is_empty() {
            let mut all = overrides;
            all.push(("seed".into(), Value::from(config.seed)));
            all.extend(extra.iter().cloned());
            config = PipelineConfig::from_value(doc, &all).map_err(|e| usage(e.to_string()))?;
        }
        Ok(Context { config, base })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        p6d_core::config::resolve(&self.base, rel)
    }

    /// A configured path, or a usage error naming the missing key.
    pub fn path(&self, value: &Option<String>, key: &str) -> anyhow::Result<PathBuf> {
        value
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| usage(format!("no {key} configured (set it in the config, with --set {key}=..., or by flag)")))
    }

    pub fn echo(&self) -> Value {
        self.config.to_value()
    }
}

fn config_error(path: &Option<PathBuf>, e: p6d_core::Error) -> anyhow::Error {
    match path {
        Some(p) => anyhow::Error::new(e).context(format!("config {}", p.display())),
        None => usage(e.to_string()),
    }
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(j);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| commands::dispatch(&cli)),
        Err(e) => Err(anyhow::anyhow!("thread pool: {e}")),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
