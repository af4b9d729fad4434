//! Manifest-driven batch generation of glow pairs.
//!
//! Manifest: UTF-8 JSON lines `{"in": path, "T": number?, "q": number?, "seed": integer?}`.
//! Report: JSON lines `{"in", "light_sz", "alpha", "ms", "status"}` in manifest order.
//!
//! Record `i` draws its randomness from `image_rng(seed, i)` with the recipe seed, or
//! from `image_rng(record.seed, 0)` when the record carries its own seed, so outputs do
//! not depend on scheduling or thread count.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{image_rng, render_glow_with, GlowRecipe};
use crate::apsf::ApsfKernel2D;
use crate::error::{Error, Result};
use crate::imgio::{clamp01, load_image, save_image, save_matte};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub optical_thickness: Option<f64>,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub forward_scatter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    #[serde(rename = "in")]
    pub input: String,
    pub light_sz: Option<f64>,
    pub alpha: Option<f64>,
    pub ms: f64,
    pub status: String,
}

impl ReportRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Paths written for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOutputs {
    pub glow: PathBuf,
    pub layer: PathBuf,
    pub matte: PathBuf,
}

/// `<out_dir>/<index>_<stem>_{glow,layer,matte}.png`; the index keeps names unique.
pub fn output_paths(out_dir: &Path, index: usize, input: &Path) -> BatchOutputs {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    let name = |kind: &str| out_dir.join(format!("{index:04}_{stem}_{kind}.png"));
    BatchOutputs {
        glow: name("glow"),
        layer: name("layer"),
        matte: name("matte"),
    }
}

/// Parses manifest text. Blank lines are skipped; malformed lines become `Err` entries
/// carrying the line text so the batch can report them and continue.
pub fn parse_manifest(text: &str) -> Vec<std::result::Result<ManifestRecord, (String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| {
            serde_json::from_str::<ManifestRecord>(line)
                .map_err(|e| (line.to_string(), format!("bad manifest line: {e}")))
        })
        .collect()
}

pub fn read_manifest(
    path: impl AsRef<Path>,
) -> Result<Vec<std::result::Result<ManifestRecord, (String, String)>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_manifest(&text))
}

fn record_recipe(defaults: &GlowRecipe, rec: &ManifestRecord) -> GlowRecipe {
    let mut recipe = defaults.clone();
    if let Some(t) = rec.optical_thickness {
        recipe.apsf.optical_thickness = t;
    }
    if let Some(q) = rec.forward_scatter {
        recipe.apsf.forward_scatter = q;
    }
    recipe
}

fn kernel_key(recipe: &GlowRecipe) -> (u64, u64) {
    (
        recipe.apsf.optical_thickness.to_bits(),
        recipe.apsf.forward_scatter.to_bits(),
    )
}

fn render_record(
    index: usize,
    rec: &ManifestRecord,
    recipe: &GlowRecipe,
    kernel: &ApsfKernel2D,
    out_dir: &Path,
) -> Result<(f64, f64)> {
    let clean = load_image(&rec.input)?;
    let mut rng = match rec.seed {
        Some(s) => image_rng(s, 0),
        None => image_rng(recipe.seed, index as u64),
    };
    let out = render_glow_with(&clean, recipe, kernel, &mut rng)?;
    let paths = output_paths(out_dir, index, &rec.input);
    save_image(&out.glow_image, &paths.glow)?;
    save_image(&clamp01(&out.glow_layer)?, &paths.layer)?;
    save_matte(&out.matte, &paths.matte)?;
    Ok((out.light_sz, out.alpha))
}

/// Renders every manifest entry into `out_dir` using up to `jobs` threads. Failures are
/// captured per record; the returned report preserves manifest order.
pub fn batch_render(
    entries: &[std::result::Result<ManifestRecord, (String, String)>],
    defaults: &GlowRecipe,
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<ReportRecord>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // one kernel per distinct (T, q), built up front
    let mut kernels: HashMap<(u64, u64), std::result::Result<ApsfKernel2D, String>> =
        HashMap::new();
    for rec in entries.iter().flatten() {
        let recipe = record_recipe(defaults, rec);
        kernels
            .entry(kernel_key(&recipe))
            .or_insert_with(|| recipe.kernel().map_err(|e| e.to_string()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot build thread pool: {e}")))?;

    let report = pool.install(|| {
        entries
            .par_iter()
            .enumerate()
            .map(|(index, entry)| {
                let start = Instant::now();
                let rec = match entry {
                    Ok(rec) => rec,
                    Err((line, why)) => {
                        return ReportRecord {
                            input: line.clone(),
                            light_sz: None,
                            alpha: None,
                            ms: 0.0,
                            status: format!("error: {why}"),
                        }
                    }
                };
                let recipe = record_recipe(defaults, rec);
                let result = match &kernels[&kernel_key(&recipe)] {
                    Ok(kernel) => render_record(index, rec, &recipe, kernel, out_dir),
                    Err(why) => Err(Error::Parameter(why.clone())),
                };
                let ms = start.elapsed().as_secs_f64() * 1e3;
                let input = rec.input.display().to_string();
                match result {
                    Ok((light_sz, alpha)) => ReportRecord {
                        input,
                        light_sz: Some(light_sz),
                        alpha: Some(alpha),
                        ms,
                        status: "ok".into(),
                    },
                    Err(e) => {
                        log::warn!("record {index} ({input}) failed: {e}");
                        ReportRecord {
                            input,
                            light_sz: None,
                            alpha: None,
                            ms,
                            status: format!("error: {e}"),
                        }
                    }
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(report)
}

pub fn write_report(path: impl AsRef<Path>, report: &[ReportRecord]) -> Result<()> {
    let mut text = String::new();
    for rec in report {
        text.push_str(&serde_json::to_string(rec).expect("report serializes"));
        text.push('\n');
    }
    crate::imgio::write_atomic(path, text.as_bytes())
}
