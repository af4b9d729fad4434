//! TOML configuration. Every key is optional; precedence is flag > file > default.
//!
//! ```toml
//! [apsf]
//! T = 1.2
//! q = 0.9
//! terms = 200
//! angles = 721
//!
//! [glow]
//! kernel_size = 127
//! normalize_kernel = true
//! tau = 0.8
//! noise_sigma = 0.01
//! seed = 0
//! conv_mode = "auto"        # auto | fft | direct
//!
//! [matting]
//! eps = 1e-7
//! lambda = 100.0
//! cg_tol = 1e-6
//! cg_max_iter = 2000
//! resolution = "auto"       # auto | full | half
//!
//! [enhance]
//! gamma = 0.3
//! smooth_radius = 16
//! guided_eps = 1e-3
//!
//! [bilateral]
//! radius = 5
//! alpha1 = 0.02
//! alpha2 = 13.444           # defaults to ((2 radius + 1) / 3)^2
//!
//! [batch]
//! jobs = 4
//! ```

use std::path::Path;

use serde::Deserialize;

use nightglow::enhance::EnhanceParams;
use nightglow::glow::{ConvMode, GlowRecipe};
use nightglow::gradops::BilateralParams;
use nightglow::lightsource::MattingResolution;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub apsf: ApsfSection,
    pub glow: GlowSection,
    pub matting: MattingSection,
    pub enhance: EnhanceSection,
    pub bilateral: BilateralSection,
    pub batch: BatchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApsfSection {
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub q: Option<f64>,
    pub terms: Option<usize>,
    pub angles: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlowSection {
    pub kernel_size: Option<usize>,
    pub normalize_kernel: Option<bool>,
    pub tau: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub conv_mode: Option<ConvMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MattingSection {
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub resolution: Option<MattingResolution>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    pub gamma: Option<f64>,
    pub smooth_radius: Option<usize>,
    pub guided_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilateralSection {
    pub radius: Option<usize>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Core(nightglow::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Effective parameters for every stage after layering.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub recipe: GlowRecipe,
    pub enhance: EnhanceParams,
    pub bilateral: BilateralParams,
    pub jobs: usize,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Settings {
    /// Built-in defaults overlaid with the file, when one is given.
    pub fn from_file(file: Option<&FileConfig>) -> Self {
        let mut s = Settings {
            recipe: GlowRecipe::default(),
            enhance: EnhanceParams::default(),
            bilateral: BilateralParams::default(),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let Some(f) = file else { return s };
        let r = &mut s.recipe;
        set(&mut r.apsf.optical_thickness, f.apsf.t);
        set(&mut r.apsf.forward_scatter, f.apsf.q);
        set(&mut r.apsf.num_terms, f.apsf.terms);
        set(&mut r.apsf.num_angles, f.apsf.angles);
        set(&mut r.kernel_size, f.glow.kernel_size);
        set(&mut r.normalize_kernel, f.glow.normalize_kernel);
        set(&mut r.tau, f.glow.tau);
        set(&mut r.noise_sigma, f.glow.noise_sigma);
        set(&mut r.seed, f.glow.seed);
        set(&mut r.conv_mode, f.glow.conv_mode);
        set(&mut r.matting.eps, f.matting.eps);
        set(&mut r.matting.lambda, f.matting.lambda);
        set(&mut r.matting.cg_tol, f.matting.cg_tol);
        set(&mut r.matting.cg_max_iter, f.matting.cg_max_iter);
        set(&mut r.matting.resolution, f.matting.resolution);
        set(&mut s.enhance.gamma, f.enhance.gamma);
        set(&mut s.enhance.smooth_radius, f.enhance.smooth_radius);
        set(&mut s.enhance.guided_eps, f.enhance.guided_eps);
        if let Some(radius) = f.bilateral.radius {
            s.bilateral = BilateralParams::with_radius(radius);
        }
        set(&mut s.bilateral.alpha1, f.bilateral.alpha1);
        set(&mut s.bilateral.alpha2, f.bilateral.alpha2);
        set(&mut s.jobs, f.batch.jobs);
        s
    }
}
