//! Subcommand bodies: run experiments and write their artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use sparsect::io::{load_image, save_image, save_png_preview, save_sinogram};
use sparsect::objective::Roi;
use sparsect::projection::{Image2D, Sinogram};

use crate::benchmark::run_benchmark;
use crate::config::ExperimentConfig;
use crate::curves::{run_curves, summary_csv};
use crate::experiment::{configured_method, net_seed, noise_seed, prepare, run_method, thread_pool, Metrics};
use crate::profile::{cnr_table, profile_csv, Entry};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Configuration and derived seeds, enough to regenerate every output.
pub fn write_manifest(cfg: &ExperimentConfig, command: &str, extra: serde_json::Value) -> Result<()> {
    let seeds: Vec<_> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let noise: Vec<_> = cfg
                .views
                .iter()
                .flat_map(|&v| cfg.snr_db.iter().map(move |&snr| json!({"views": v, "snr_db": snr, "seed": noise_seed(s, v, snr)})))
                .collect();
            json!({"seed": s, "net_seed": net_seed(s), "noise_seeds": noise})
        })
        .collect();
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.describe(),
        "seeds": seeds,
        "details": extra,
    });
    write_file(&cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
}

fn save_image_pair(dir: &Path, stem: &str, img: &Image2D) -> Result<()> {
    save_image(&dir.join(format!("{stem}.bin")), img)?;
    save_png_preview(&dir.join(format!("{stem}.png")), img.size(), img.size(), img.values())?;
    Ok(())
}

/// Sinogram preview scaled by its maximum.
fn save_sinogram_pair(dir: &Path, stem: &str, s: &Sinogram) -> Result<()> {
    save_sinogram(&dir.join(format!("{stem}.bin")), s)?;
    let peak = s.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled: Vec<f64> = s.values().iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect();
    save_png_preview(&dir.join(format!("{stem}.png")), s.num_angles(), s.num_detectors(), &scaled)?;
    Ok(())
}

fn single<T: Copy>(name: &str, v: &[T]) -> Result<T> {
    match v {
        [x] => Ok(*x),
        _ => bail!("{name} takes a single value for this command"),
    }
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let d = cfg.out.join(format!("seed_{seed}"));
    create_dir(&d)?;
    Ok(d)
}

pub fn phantom(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    for &seed in &cfg.seeds {
        let truth = crate::experiment::ground_truth(cfg, seed)?;
        save_image_pair(&cfg.out, &format!("phantom_seed{seed}"), &truth)?;
    }
    write_manifest(cfg, "phantom", json!({}))
}

/// Projects each ground truth (or the image at `input`) and adds noise.
pub fn project(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<()> {
    create_dir(&cfg.out)?;
    let views = single("views", &cfg.views)?;
    let snr = single("snr_db", &cfg.snr_db)?;
    for &seed in &cfg.seeds {
        let dir = seed_dir(cfg, seed)?;
        let inst = match input {
            Some(p) => {
                let truth = load_image(p).with_context(|| format!("loading {}", p.display()))?;
                let geom = sparsect::Geometry::new(truth.size(), views)?;
                let clean = sparsect::projection::forward_project(&truth, &geom)?;
                let noisy = sparsect::data::add_awgn(
                    &clean,
                    &sparsect::data::NoiseSpec {
                        snr_db: snr,
                        seed: noise_seed(seed, views, snr),
                    },
                )?;
                crate::experiment::Instance {
                    seed,
                    truth,
                    geom,
                    clean,
                    noisy,
                    snr_db: snr,
                }
            }
            None => prepare(cfg, seed, views, snr)?,
        };
        save_image_pair(&dir, "truth", &inst.truth)?;
        save_sinogram_pair(&dir, "sinogram", &inst.clean)?;
        save_sinogram_pair(&dir, "sinogram_noisy", &inst.noisy)?;
    }
    write_manifest(cfg, "project", json!({"input": input.map(|p| p.display().to_string())}))
}

#[derive(Serialize)]
struct MetricsRecord {
    seed: u64,
    method: &'static str,
    views: usize,
    snr_db: f64,
    #[serde(flatten)]
    metrics: Metrics,
    best_psnr: Option<f64>,
    best_iteration: Option<usize>,
    stopped_at: Option<usize>,
}

pub fn reconstruct(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let views = single("views", &cfg.views)?;
    let snr = single("snr_db", &cfg.snr_db)?;
    let method = configured_method(cfg);
    let mut lines = String::new();
    for &seed in &cfg.seeds {
        let dir = seed_dir(cfg, seed)?;
        let inst = prepare(cfg, seed, views, snr)?;
        save_image_pair(&dir, "truth", &inst.truth)?;
        save_sinogram_pair(&dir, "sinogram", &inst.clean)?;
        save_sinogram_pair(&dir, "sinogram_noisy", &inst.noisy)?;
        let run = run_method(&inst, &method)?;
        save_image_pair(&dir, "recon", &run.image)?;
        if let Some(h) = &run.history {
            let mut f = fs::File::create(dir.join("history.csv"))?;
            h.write_csv(&mut f)?;
            f.flush()?;
        }
        if let Some(b) = &run.best {
            save_image_pair(&dir, "recon_best", &b.image)?;
        }
        let rec = MetricsRecord {
            seed,
            method: method.name(),
            views,
            snr_db: snr,
            metrics: run.metrics,
            best_psnr: run.best.as_ref().map(|b| b.psnr),
            best_iteration: run.best.as_ref().map(|b| b.iteration),
            stopped_at: run.stopped_at,
        };
        lines.push_str(&serde_json::to_string(&rec)?);
        lines.push('\n');
        eprintln!(
            "seed {seed}: {} psnr {:.2} dB, ssim {:.4}, {:.1} s",
            method.name(),
            run.metrics.psnr,
            run.metrics.ssim,
            run.metrics.runtime_s
        );
    }
    write_file(&cfg.out.join("metrics.jsonl"), lines)?;
    write_manifest(cfg, "reconstruct", json!({}))
}

pub fn benchmark(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let pool = thread_pool()?;
    let b = run_benchmark(cfg, &pool)?;
    write_file(&cfg.out.join("table.csv"), b.table_csv())?;
    let text = b.table_text();
    write_file(&cfg.out.join("table.txt"), &text)?;
    let mut lines = String::new();
    for r in &b.runs {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    write_file(&cfg.out.join("runs.jsonl"), lines)?;
    for r in b.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "failed: {} {} views seed {}: {}",
            r.method,
            r.views,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    print!("{text}");
    write_manifest(cfg, "benchmark", json!({"threads": pool.current_num_threads()}))
}

/// Feature and background ROIs, with optional per-phantom overrides.
pub struct RoiSpec {
    pub default: Option<(Roi, Roi)>,
    pub per_phantom: Vec<(String, Roi, Roi)>,
}

impl RoiSpec {
    fn lookup(&self, phantom: &str) -> Option<(Roi, Roi)> {
        self.per_phantom
            .iter()
            .find(|(p, _, _)| p == phantom)
            .map(|(_, f, b)| (*f, *b))
            .or(self.default)
    }
}

/// `images` are `(phantom, method, path)` triples.
pub fn profile(out: &Path, images: &[(String, String, PathBuf)], row: usize, rois: &RoiSpec) -> Result<()> {
    if images.is_empty() {
        bail!("profile needs at least one --image");
    }
    create_dir(out)?;
    let entries: Vec<Entry> = images
        .iter()
        .map(|(p, m, path)| {
            Ok(Entry {
                phantom: p.clone(),
                method: m.clone(),
                image: load_image(path).with_context(|| format!("loading {}", path.display()))?,
            })
        })
        .collect::<Result<_>>()?;
    write_file(&out.join("profile.csv"), profile_csv(&entries, row)?)?;
    if rois.default.is_some() || !rois.per_phantom.is_empty() {
        let table = cnr_table(&entries, &|p| rois.lookup(p));
        write_file(&out.join("cnr.csv"), table.csv())?;
        for f in table.flagged() {
            eprintln!("flagged CNR cell {f}");
        }
    }
    Ok(())
}

pub fn curves(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let pool = thread_pool()?;
    let curves = run_curves(cfg, &pool)?;
    for c in &curves {
        let mut f = fs::File::create(cfg.out.join(c.file_name()))?;
        c.history.write_csv(&mut f)?;
        f.flush()?;
    }
    let summary = summary_csv(&curves);
    write_file(&cfg.out.join("curves_summary.csv"), &summary)?;
    print!("{summary}");
    write_manifest(cfg, "curves", json!({"threads": pool.current_num_threads()}))
}
