//! Dataset instances and single reconstruction runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sparsect::classical::{fbp, sart, sart_tv, FbpFilter, SartConfig, SartTvConfig};
use sparsect::data::{add_awgn, load_hu_slice, random_ellipses, shepp_logan, NoiseSpec, SquarePolicy};
use sparsect::dgr::{dgr_reconstruct, BestIterate, DgrConfig, RunHistory};
use sparsect::objective::{psnr, ssim, SsimParams};
use sparsect::projection::{forward_project, Geometry, Image2D, Sinogram};

use crate::config::{Dataset, ExperimentConfig};

const NOISE_TAG: u64 = 0x6e6f697365;
const NET_TAG: u64 = 0x6e6574;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-purpose seed from a run's master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag))
}

/// Seed of the measurement noise for one image at one view count and SNR.
pub fn noise_seed(master: u64, views: usize, snr_db: f64) -> u64 {
    derive_seed(master, NOISE_TAG ^ ((views as u64) << 20) ^ snr_db.to_bits())
}

/// Seed of the generator parameters and input for one image.
pub fn net_seed(master: u64) -> u64 {
    derive_seed(master, NET_TAG)
}

/// One ground-truth image with its clean and noisy measurements.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub truth: Image2D,
    pub geom: Geometry,
    pub clean: Sinogram,
    pub noisy: Sinogram,
    pub snr_db: f64,
}

fn slice_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_none_or(|e| e != "dims"))
        .collect();
    files.sort();
    Ok(files)
}

/// Area-averages a square image down by an integer factor.
fn downsample(img: &Image2D, n: usize) -> Result<Image2D> {
    let m = img.size();
    if m == n {
        return Ok(img.clone());
    }
    if m < n || !m.is_multiple_of(n) {
        bail!("a {m}x{m} slice cannot be reduced to {n}x{n}");
    }
    let f = m / n;
    let norm = (f * f) as f64;
    Ok(Image2D::from_fn(n, |i, j| {
        let mut s = 0.0;
        for a in 0..f {
            for b in 0..f {
                s += img.get(i * f + a, j * f + b);
            }
        }
        s / norm
    }))
}

/// Number of images the dataset can supply, if bounded.
pub fn dataset_len(cfg: &ExperimentConfig) -> Result<Option<usize>> {
    match &cfg.dataset {
        Dataset::Slices { dir } => Ok(Some(slice_files(dir)?.len())),
        _ => Ok(None),
    }
}

/// Ground truth for `seed`. For slice datasets the seed indexes the sorted
/// file list.
pub fn ground_truth(cfg: &ExperimentConfig, seed: u64) -> Result<Image2D> {
    let n = cfg.image_size;
    Ok(match &cfg.dataset {
        Dataset::SheppLogan => shepp_logan(n)?,
        Dataset::Ellipses { count } => random_ellipses(n, seed, *count)?,
        Dataset::Slices { dir } => {
            let files = slice_files(dir)?;
            let Some(path) = files.get(seed as usize) else {
                bail!("slice index {seed} out of range ({} files in {})", files.len(), dir.display());
            };
            let img = load_hu_slice(path, cfg.hu_window, SquarePolicy::Reject)
                .with_context(|| format!("loading {}", path.display()))?;
            downsample(&img, n)?
        }
    })
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64, views: usize, snr_db: f64) -> Result<Instance> {
    let truth = ground_truth(cfg, seed)?;
    let geom = Geometry::new(cfg.image_size, views)?;
    let clean = forward_project(&truth, &geom)?;
    let noisy = add_awgn(
        &clean,
        &NoiseSpec {
            snr_db,
            seed: noise_seed(seed, views, snr_db),
        },
    )?;
    Ok(Instance {
        seed,
        truth,
        geom,
        clean,
        noisy,
        snr_db,
    })
}

#[derive(Debug, Clone)]
pub enum Method {
    Fbp(FbpFilter),
    Sart(SartConfig),
    SartTv(SartTvConfig),
    /// The SART configuration produces the SSIM-term reference image.
    Dgr { dgr: DgrConfig, reference: SartConfig },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fbp(_) => "fbp",
            Self::Sart(_) => "sart",
            Self::SartTv(_) => "sart_tv",
            Self::Dgr { .. } => "dgr",
        }
    }
}

/// Metrics of one run, as written to the JSON-lines record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub image: Image2D,
    pub metrics: Metrics,
    pub history: Option<RunHistory>,
    pub best: Option<BestIterate>,
    pub stopped_at: Option<usize>,
}

impl RunResult {
    /// Iteration of the highest tracked PSNR.
    pub fn argmax_psnr(&self) -> Option<usize> {
        self.history.as_ref().and_then(|h| h.argmax_psnr())
    }
}

pub fn score(image: &Image2D, truth: &Image2D) -> Result<(f64, f64)> {
    Ok((psnr(image, truth, 1.0)?, ssim(image, truth, &SsimParams::default())?))
}

/// Runs `method` on the noisy measurements. DGR runs take their seed from
/// the instance and track PSNR against its ground truth.
pub fn run_method(inst: &Instance, method: &Method) -> Result<RunResult> {
    let t = Instant::now();
    let y = &inst.noisy;
    let g = &inst.geom;
    let (image, history, best, stopped_at) = match method {
        Method::Fbp(f) => (fbp(y, g, *f)?.clipped(), None, None, None),
        Method::Sart(c) => (sart(y, g, c)?, None, None, None),
        Method::SartTv(c) => (sart_tv(y, g, c)?, None, None, None),
        Method::Dgr { dgr, reference } => {
            let x0 = sart(y, g, reference)?;
            let cfg = DgrConfig {
                seed: net_seed(inst.seed),
                track_psnr_against: Some(inst.truth.clone()),
                ..dgr.clone()
            };
            let out = dgr_reconstruct(y, g, &x0, &cfg)?;
            (out.image, Some(out.history), out.best, out.stopped_at)
        }
    };
    let runtime_s = t.elapsed().as_secs_f64();
    let (p, s) = score(&image, &inst.truth)?;
    Ok(RunResult {
        image,
        metrics: Metrics {
            psnr: p,
            ssim: s,
            runtime_s,
        },
        history,
        best,
        stopped_at,
    })
}

/// The method named by `cfg.method` with its configured parameters.
pub fn configured_method(cfg: &ExperimentConfig) -> Method {
    use crate::config::MethodKind;
    match cfg.method {
        MethodKind::Fbp => Method::Fbp(cfg.fbp_filter),
        MethodKind::Sart => Method::Sart(cfg.sart.clone()),
        MethodKind::SartTv => Method::SartTv(cfg.sart_tv.clone()),
        MethodKind::Dgr => Method::Dgr {
            dgr: cfg.dgr.clone(),
            reference: cfg.sart.clone(),
        },
    }
}

/// Worker pool sized by `SPARSECT_THREADS` (default: all cores).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("SPARSECT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("SPARSECT_THREADS must be a positive integer, got `{v}`"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}
