use std::path::PathBuf;

use cassi_core::scene::MaskKind;
use cassi_core::solver::Precision;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cassi",
    version,
    about = "Snapshot spectral imaging: simulate, reconstruct, evaluate, render"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene cube and a random coded aperture.
    Synth(SynthArgs),
    /// Encode a cube through a mask, optionally with Poisson noise.
    Simulate(SimulateArgs),
    /// Recover a cube from a measurement.
    Reconstruct(Box<ReconstructArgs>),
    /// Compare an estimate with a reference cube.
    Evaluate(EvaluateArgs),
    /// Write channels as grayscale PNGs or the cube as one sRGB PNG.
    Render(RenderArgs),
    /// Re-run a recorded command and check it reproduces bit for bit.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskKindArg {
    Binary,
    Real,
}

impl From<MaskKindArg> for MaskKind {
    fn from(k: MaskKindArg) -> Self {
        match k {
            MaskKindArg::Binary => MaskKind::Binary,
            MaskKindArg::Real => MaskKind::Real,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MaskKindArg::Binary)]
    pub mask_kind: MaskKindArg,
    #[arg(long, default_value_t = 450.0)]
    pub first_nm: f64,
    #[arg(long, default_value_t = 650.0)]
    pub last_nm: f64,
    #[arg(long)]
    pub out_cube: PathBuf,
    #[arg(long)]
    pub out_mask: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Dispersion in pixels per channel.
    #[arg(long, default_value_t = 1)]
    pub shift: usize,
    /// Target SNR in dB; noiseless when absent.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub meas: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub shift: usize,
    /// Channel count; derived from the measurement width when the shift is nonzero.
    #[arg(long)]
    pub bands: Option<usize>,
    /// One of pnp_dip, pnp_dip_tv, single_fidelity, sole_dip, admm_tv.
    #[arg(long)]
    pub mode: Option<String>,
    /// JSON object merged over the mode defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the long-budget outer count and inner schedule.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub outer: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eta_decay: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub inner_base: Option<usize>,
    #[arg(long)]
    pub inner_step: Option<usize>,
    #[arg(long)]
    pub inner_cap: Option<usize>,
    #[arg(long)]
    pub sole_iters: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long)]
    pub normalized_init: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference cube; enables per-iteration PSNR and final metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    /// JSON list of `{name, row, col, height, width}` rectangles.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub cube: PathBuf,
    /// Comma-separated channel indices, or `all`.
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub srgb: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
