use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use nightglow::apsf::{apsf_kernel_2d, apsf_weights, apsf_weights_with, lut_cache, DEFAULT_LUT_GRID};
use nightglow::enhance::{attention_map, gamma_enhance};
use nightglow::glow::{batch_render, read_manifest, render_glow, write_report};
use nightglow::gradops::{consistency_metrics, edge_map, texture_map, BilateralParams};
use nightglow::imgio::{clamp01, load_image, save_image, save_matte, write_atomic};
use nightglow::lightsource::detect_light_sources;
use nightglow::metrics::{compare, compare_dirs};
use nightglow::{ImageBuffer, Matte};

use crate::config::{FileConfig, Settings};
use crate::{
    ApsfArgs, BilateralArgs, Cli, CliError, Command, GlowArgs, MattingArgs, MetricsCommand,
};

type Result<T> = std::result::Result<T, CliError>;

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Runs `f` and logs its wall time under `stage`.
fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match &out {
        Ok(_) => log::info!("stage={stage} status=ok ms={ms:.1}"),
        Err(e) => log::info!("stage={stage} status=error ms={ms:.1} error={e}"),
    }
    out
}

fn print_json<T: Serialize>(value: &T) -> Result<String> {
    let text = serde_json::to_string(value)
        .map_err(|e| CliError::Usage(format!("cannot serialize result: {e}")))?;
    println!("{text}");
    Ok(text)
}

impl ApsfArgs {
    fn apply(&self, s: &mut Settings) {
        let p = &mut s.recipe.apsf;
        set(&mut p.optical_thickness, self.t);
        set(&mut p.forward_scatter, self.q);
        set(&mut p.num_terms, self.terms);
        set(&mut p.num_angles, self.angles);
    }
}

impl MattingArgs {
    fn apply(&self, s: &mut Settings) {
        let r = &mut s.recipe;
        set(&mut r.tau, self.tau);
        set(&mut r.matting.eps, self.matting_eps);
        set(&mut r.matting.lambda, self.matting_lambda);
        set(&mut r.matting.cg_tol, self.cg_tol);
        set(&mut r.matting.cg_max_iter, self.cg_max_iter);
        set(&mut r.matting.resolution, self.matting_resolution);
    }
}

impl GlowArgs {
    fn apply(&self, s: &mut Settings) {
        self.apsf.apply(s);
        self.matting.apply(s);
        let r = &mut s.recipe;
        set(&mut r.kernel_size, self.kernel_size);
        if self.no_normalize {
            r.normalize_kernel = false;
        }
        set(&mut r.noise_sigma, self.noise_sigma);
        set(&mut r.seed, self.seed);
        set(&mut r.conv_mode, self.conv_mode);
    }
}

impl BilateralArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(radius) = self.radius {
            s.bilateral = BilateralParams::with_radius(radius);
        }
        set(&mut s.bilateral.alpha1, self.alpha1);
        set(&mut s.bilateral.alpha2, self.alpha2);
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => Some(FileConfig::load(path)?),
        None => None,
    };
    let mut settings = Settings::from_file(file.as_ref());
    match cli.command {
        Command::ApsfKernel(a) => {
            a.apsf.apply(&mut settings);
            set(&mut settings.recipe.kernel_size, a.size);
            if a.no_normalize {
                settings.recipe.normalize_kernel = false;
            }
            settings.recipe.validate()?;
            apsf_kernel(&settings, a.lut.as_deref(), &a.out, a.raw)
        }
        Command::DetectLight(a) => {
            a.matting.apply(&mut settings);
            settings.recipe.validate()?;
            detect_light(&settings, &a.input, &a.out_matte, a.out_light.as_deref())
        }
        Command::RenderGlow(a) => {
            a.glow.apply(&mut settings);
            settings.recipe.validate()?;
            render_one(&settings, &a)
        }
        Command::BatchRender(a) => {
            a.glow.apply(&mut settings);
            set(&mut settings.jobs, a.jobs);
            settings.recipe.validate()?;
            if settings.jobs == 0 {
                return Err(CliError::Usage("jobs must be >= 1".into()));
            }
            let report = a.report.clone().unwrap_or_else(|| a.out_dir.join("report.jsonl"));
            batch(&settings, &a.manifest, &a.out_dir, &report)
        }
        Command::Edges(a) => timed("edges", || {
            let img = load_image(&a.input)?;
            save_matte(&edge_map(&img), &a.out)?;
            Ok(())
        }),
        Command::Texture(a) => {
            a.bilateral.apply(&mut settings);
            settings.bilateral.validate()?;
            timed("texture", || {
                let img = load_image(&a.io.input)?;
                let t = texture_map(&img, &settings.bilateral)?;
                save_image(&t.visualization, &a.io.out)?;
                Ok(())
            })
        }
        Command::Enhance(a) => {
            set(&mut settings.enhance.gamma, a.gamma);
            set(&mut settings.enhance.smooth_radius, a.smooth_radius);
            set(&mut settings.enhance.guided_eps, a.guided_eps);
            settings.enhance.validate()?;
            enhance(&settings, &a)
        }
        Command::Metrics(m) => metrics(&mut settings, m),
    }
}

fn apsf_kernel(s: &Settings, lut: Option<&Path>, out: &Path, raw: Option<PathBuf>) -> Result<()> {
    let r = &s.recipe;
    let kernel = timed("apsf-kernel", || {
        let apsf = match lut {
            Some(path) => {
                let table = lut_cache(path, DEFAULT_LUT_GRID, r.apsf.num_terms)?;
                apsf_weights_with(&r.apsf, &table)?
            }
            None => apsf_weights(&r.apsf)?,
        };
        Ok(apsf_kernel_2d(&apsf, r.kernel_size, r.normalize_kernel)?)
    })?;
    let max = kernel.weights().iter().copied().fold(0.0, f64::max);
    let vis = ImageBuffer::new(
        kernel.size(),
        kernel.size(),
        1,
        kernel.weights().iter().map(|w| w / max).collect(),
    )?;
    save_image(&vis, out)?;
    let raw = raw.unwrap_or_else(|| out.with_extension("f64"));
    let bytes: Vec<u8> = kernel.weights().iter().flat_map(|w| w.to_le_bytes()).collect();
    write_atomic(&raw, &bytes)?;

    #[derive(Serialize)]
    struct Summary {
        size: usize,
        sum: f64,
        max: f64,
        raw: String,
    }
    print_json(&Summary {
        size: kernel.size(),
        sum: kernel.sum(),
        max,
        raw: raw.display().to_string(),
    })?;
    Ok(())
}

fn detect_light(s: &Settings, input: &Path, out_matte: &Path, out_light: Option<&Path>) -> Result<()> {
    let img = timed("load", || Ok(load_image(input)?))?;
    let found = timed("detect-light", || {
        Ok(detect_light_sources(&img, s.recipe.tau, &s.recipe.matting)?)
    })?;
    save_matte(&found.matte, out_matte)?;
    if let Some(p) = out_light {
        save_image(&found.light_image, p)?;
    }
    println!("{}", found.light_sz);
    Ok(())
}

fn render_one(s: &Settings, a: &crate::RenderGlowArgs) -> Result<()> {
    let clean = timed("load", || Ok(load_image(&a.input)?))?;
    let out = timed("render-glow", || Ok(render_glow(&clean, &s.recipe)?))?;
    save_image(&out.glow_image, &a.out)?;
    if let Some(p) = &a.out_layer {
        save_image(&clamp01(&out.glow_layer)?, p)?;
    }
    if let Some(p) = &a.out_matte {
        save_matte(&out.matte, p)?;
    }

    #[derive(Serialize)]
    struct Summary {
        light_sz: f64,
        alpha: f64,
        epsilon: f64,
    }
    print_json(&Summary {
        light_sz: out.light_sz,
        alpha: out.alpha,
        epsilon: out.epsilon,
    })?;
    Ok(())
}

fn batch(s: &Settings, manifest: &Path, out_dir: &Path, report_path: &Path) -> Result<()> {
    let entries = read_manifest(manifest)?;
    log::info!(
        "batch: {} records, jobs={}, out={}",
        entries.len(),
        s.jobs,
        out_dir.display()
    );
    let report = timed("batch-render", || {
        Ok(batch_render(&entries, &s.recipe, out_dir, s.jobs)?)
    })?;
    write_report(report_path, &report)?;
    let failed = report.iter().filter(|r| !r.is_ok()).count();
    log::info!(
        "batch: {} ok, {failed} failed, report {}",
        report.len() - failed,
        report_path.display()
    );
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: report.len(),
        });
    }
    Ok(())
}

fn enhance(s: &Settings, a: &crate::EnhanceArgs) -> Result<()> {
    let dehazed = load_image(&a.input)?;
    let haze = match &a.haze {
        Some(p) => load_image(p)?,
        None => dehazed.clone(),
    };
    let attention = timed("attention", || Ok(attention_map(&haze, &s.enhance)?))?;
    let out = timed("enhance", || Ok(gamma_enhance(&dehazed, &attention, &s.enhance)?))?;
    save_image(&out, &a.out)?;
    if let Some(p) = &a.dump_attention {
        save_matte(&attention, p)?;
    }
    Ok(())
}

fn load_rgb(path: &Path) -> Result<ImageBuffer> {
    Ok(load_image(path)?.to_rgb())
}

fn metrics(s: &mut Settings, cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Compare { a, b } => {
            let (a, b) = (load_image(&a)?, load_image(&b)?);
            let report = timed("metrics-compare", || Ok(compare(&a, &b)?))?;
            print_json(&report)?;
        }
        MetricsCommand::Batch { a_dir, b_dir, out } => {
            let report = timed("metrics-batch", || Ok(compare_dirs(&a_dir, &b_dir)?))?;
            let text = print_json(&report)?;
            if let Some(p) = out {
                write_atomic(&p, format!("{text}\n").as_bytes())?;
            }
        }
        MetricsCommand::Consistency {
            a,
            b,
            matte,
            light,
            bilateral,
        } => {
            bilateral.apply(s);
            s.bilateral.validate()?;
            let (a, b, light) = (load_rgb(&a)?, load_rgb(&b)?, load_rgb(&light)?);
            let matte = Matte::from_image(&load_image(&matte)?);
            let m = timed("metrics-consistency", || {
                Ok(consistency_metrics(&a, &b, &matte, &light, &s.bilateral)?)
            })?;
            print_json(&m)?;
        }
    }
    Ok(())
}
