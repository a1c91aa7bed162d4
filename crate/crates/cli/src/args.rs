use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use credtrack_core::kernels::KernelOp;
use credtrack_core::verify::{Mutation, Suite};
use credtrack_core::{GateMode, MemoryPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "credtrack", version, about = "Long-term object tracking engine: verification, simulation and benchmarks")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "CREDTRACK_OUT", default_value = "credtrack-out")]
    pub out: PathBuf,
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run configuration (TOML with `[tracker]` and `[scene]` tables).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Run the oracle-backed property suites.
    Verify(VerifyArgs),
    /// Track one simulated scene and score it.
    Simulate(SimulateArgs),
    /// Run several configurations over many seeds of the same scene.
    Compare(CompareArgs),
    /// Finite-difference checks of the kernel gradients.
    Gradcheck(GradcheckArgs),
    /// Per-frame policy overhead along a long stream.
    Bench(BenchArgs),
    /// Re-run a command from its manifest and compare outputs byte for byte.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::Compare(_) => "compare",
            Command::Gradcheck(_) => "gradcheck",
            Command::Bench(_) => "bench",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Suites to run (default: all).
    #[arg(long = "suite", value_delimiter = ',')]
    pub suites: Vec<Suite>,
    /// Inject a known defect; the affected suite is expected to fail.
    #[arg(long)]
    pub mutate: Option<Mutation>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Memory policy; overrides the config file.
    #[arg(long)]
    pub policy: Option<MemoryPolicy>,
    /// Initial-frame gate; overrides the config file.
    #[arg(long)]
    pub gate: Option<GateMode>,
    /// Keep measured policy timings in the outputs (they stop being reproducible).
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "vanilla,extended,interval,dlm")]
    pub policies: Vec<MemoryPolicy>,
    #[arg(long, value_delimiter = ',', default_value = "windowed")]
    pub gates: Vec<GateMode>,
    /// Number of seeds, counted up from `--seed`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// Operations to check (default: all).
    #[arg(long, value_delimiter = ',')]
    pub ops: Vec<KernelOp>,
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Stream length; at least 1000.
    #[arg(long, default_value_t = 10_000)]
    pub frames: usize,
    /// Policies to profile (default: all).
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<MemoryPolicy>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Frames pushed through the toy neural backend for the FPS figure.
    #[arg(long, default_value_t = 200)]
    pub fps_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Where to write the re-run outputs (default: `replay/` next to the manifest).
    #[arg(long)]
    pub into: Option<PathBuf>,
}
