//! Compares the baselines with one generator fit on a random-ellipse phantom.
//!
//! Settings come from environment variables: SIZE, VIEWS, SNR, SEED, ITERS,
//! LR, NET, W (as `meas/ssim/tv`).

use std::time::Instant;

use sparsect::classical::{fbp, sart, sart_tv, FbpFilter, SartConfig, SartTvConfig};
use sparsect::data::{add_awgn, random_ellipses, NoiseSpec};
use sparsect::dgr::{dgr_reconstruct, DgrConfig};
use sparsect::objective::{psnr, ssim, LossWeights, SsimParams};
use sparsect::projection::{forward_project, Geometry};
use sparsect_neural::SkipNetConfig;

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = env("SIZE", 128);
    let views: usize = env("VIEWS", 64);
    let snr: f64 = env("SNR", 39.0);
    let seed: u64 = env("SEED", 0);
    let w: String = env("W", "0.9/0/0.1".to_string());
    let w: Vec<f64> = w.split('/').map(|s| s.parse().unwrap()).collect();

    let truth = random_ellipses(n, seed, (5, 15))?;
    let geom = Geometry::new(n, views)?;
    let clean = forward_project(&truth, &geom)?;
    let y = add_awgn(&clean, &NoiseSpec { snr_db: snr, seed: seed + 1000 })?;
    let p = SsimParams::default();
    let report = |name: &str, x: &sparsect::Image2D| {
        println!("{name:8} psnr {:6.2} ssim {:6.4}", psnr(x, &truth, 1.0).unwrap(), ssim(x, &truth, &p).unwrap());
    };
    report("fbp", &fbp(&y, &geom, FbpFilter::Ramp)?.clipped());
    let x0 = sart(&y, &geom, &SartConfig::default())?;
    report("sart", &x0);
    report("sart_tv", &sart_tv(&y, &geom, &SartTvConfig::default())?);

    let cfg = DgrConfig {
        weights: LossWeights::new(w[0], w[1], w[2])?,
        iterations: env("ITERS", 800),
        lr: env("LR", 1e-3),
        net: SkipNetConfig::by_name(&env("NET", "v1".to_string())).unwrap(),
        seed,
        track_psnr_against: Some(truth.clone()),
        ..DgrConfig::default()
    };
    let t = Instant::now();
    let out = dgr_reconstruct(&y, &geom, &x0, &cfg)?;
    report("dgr", &out.image);
    let best = out.best.unwrap();
    println!("best iter {} psnr {:.2}; {:.1}s", best.iteration, best.psnr, t.elapsed().as_secs_f64());
    let h = &out.history.records;
    for r in h.iter().step_by((h.len() / 16).max(1)) {
        println!("  {:5} loss {:.3e} meas {:.3e} psnr {:.2}", r.iteration, r.loss_total, r.loss_meas, r.psnr.unwrap());
    }
    Ok(())
}
