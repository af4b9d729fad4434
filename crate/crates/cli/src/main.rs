//! `nightglow` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nightglow::glow::ConvMode;
use nightglow::lightsource::MattingResolution;

/// Exit codes. Clap usage errors also exit with 2.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const PARTIAL: u8 = 3;
    pub const IO: u8 = 4;
    pub const FORMAT: u8 = 5;
    pub const NUMERIC: u8 = 6;
    pub const CACHE: u8 = 7;
}

#[derive(Debug)]
pub enum CliError {
    Core(nightglow::Error),
    Usage(String),
    Partial { failed: usize, total: usize },
}

impl From<nightglow::Error> for CliError {
    fn from(e: nightglow::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Partial { failed, total } => {
                write!(f, "{failed} of {total} records failed")
            }
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use nightglow::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Partial { .. } => exit::PARTIAL,
            CliError::Core(e) => match e {
                E::Parameter(_) | E::Domain(_) => exit::USAGE,
                E::Io { .. } => exit::IO,
                E::Format { .. } => exit::FORMAT,
                E::Numeric(_)
                | E::DegenerateKernel(_)
                | E::Convergence { .. }
                | E::MatteOvershoot { .. } => exit::NUMERIC,
                E::CacheInvalid(_) => exit::CACHE,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nightglow", version, about = "Night glow synthesis and haze enhancement")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// TOML file with parameter defaults; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a 2D APSF kernel; writes a max-normalized PNG and a raw f64 sidecar.
    ApsfKernel(ApsfKernelArgs),
    /// Detect light sources and write the refined matte and light-source image.
    DetectLight(DetectLightArgs),
    /// Render glow on one clean image.
    RenderGlow(RenderGlowArgs),
    /// Render glow for every record of a JSON-lines manifest.
    BatchRender(BatchRenderArgs),
    /// Pixel-difference edge map.
    Edges(InOutArgs),
    /// Bilateral texture residual, shifted by 0.5 for display.
    Texture(TextureArgs),
    /// Attention-guided gamma enhancement.
    Enhance(EnhanceArgs),
    /// Quality and consistency metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

fn parse_resolution(s: &str) -> Result<MattingResolution, String> {
    match s {
        "auto" => Ok(MattingResolution::Auto),
        "full" => Ok(MattingResolution::Full),
        "half" => Ok(MattingResolution::Half),
        _ => Err(format!("expected auto, full or half, got {s:?}")),
    }
}

fn parse_conv_mode(s: &str) -> Result<ConvMode, String> {
    match s {
        "auto" => Ok(ConvMode::Auto),
        "fft" => Ok(ConvMode::Fft),
        "direct" => Ok(ConvMode::Direct),
        _ => Err(format!("expected auto, fft or direct, got {s:?}")),
    }
}

#[derive(Debug, Args, Default)]
pub struct ApsfArgs {
    /// Optical thickness, > 0.
    #[arg(long = "T", value_name = "T", allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Forward-scattering parameter, in (0, 1).
    #[arg(long = "q", value_name = "Q", allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Number of Legendre terms.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Angular samples over [-180, 180] degrees.
    #[arg(long)]
    pub angles: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct MattingArgs {
    /// Brightness threshold for the initial mask.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub matting_eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub matting_lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    /// auto | full | half
    #[arg(long, value_parser = parse_resolution)]
    pub matting_resolution: Option<MattingResolution>,
}

#[derive(Debug, Args, Default)]
pub struct GlowArgs {
    #[command(flatten)]
    pub apsf: ApsfArgs,
    #[command(flatten)]
    pub matting: MattingArgs,
    /// Odd kernel side in pixels.
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Keep the raw kernel mass instead of normalizing to unit sum.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// auto | fft | direct
    #[arg(long, value_parser = parse_conv_mode)]
    pub conv_mode: Option<ConvMode>,
}

#[derive(Debug, Args)]
pub struct ApsfKernelArgs {
    #[command(flatten)]
    pub apsf: ApsfArgs,
    /// Odd kernel side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub no_normalize: bool,
    /// Evaluate Legendre terms through a cached lookup table at this path.
    #[arg(long, value_name = "FILE")]
    pub lut: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Raw little-endian f64 sidecar; defaults to the output path with extension `f64`.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectLightArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_matte: PathBuf,
    #[arg(long)]
    pub out_light: Option<PathBuf>,
    #[command(flatten)]
    pub matting: MattingArgs,
}

#[derive(Debug, Args)]
pub struct RenderGlowArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Glow layer `G`, clamped for display.
    #[arg(long)]
    pub out_layer: Option<PathBuf>,
    #[arg(long)]
    pub out_matte: Option<PathBuf>,
    #[command(flatten)]
    pub glow: GlowArgs,
}

#[derive(Debug, Args)]
pub struct BatchRenderArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON-lines report; defaults to `<out-dir>/report.jsonl`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub glow: GlowArgs,
}

#[derive(Debug, Args)]
pub struct InOutArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct BilateralArgs {
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TextureArgs {
    #[command(flatten)]
    pub io: InOutArgs,
    #[command(flatten)]
    pub bilateral: BilateralArgs,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Dehazed image to brighten.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Haze image the attention map is computed from; defaults to `--in`.
    #[arg(long)]
    pub haze: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub smooth_radius: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub guided_eps: Option<f64>,
    #[arg(long)]
    pub dump_attention: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// PSNR and SSIM of one pair, as JSON.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// PSNR and SSIM over same-named files of two directories, with means.
    Batch {
        #[arg(long)]
        a_dir: PathBuf,
        #[arg(long)]
        b_dir: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Light-source, gradient and bilateral consistency terms, as JSON.
    Consistency {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        matte: PathBuf,
        #[arg(long)]
        light: PathBuf,
        #[command(flatten)]
        bilateral: BilateralArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .target(env_logger::Target::Stderr)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
