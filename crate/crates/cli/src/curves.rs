//! PSNR/SSIM-versus-iteration series across noise levels and architectures.

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use sparsect::dgr::{DgrConfig, RunHistory};
use sparsect_neural::SkipNetConfig;

use crate::config::{net_by_name, ExperimentConfig};
use crate::experiment::{prepare, run_method, Method};

#[derive(Debug, Clone)]
pub struct Curve {
    pub snr_db: f64,
    pub arch: String,
    pub seed: u64,
    pub history: RunHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSummary {
    pub snr_db: f64,
    pub seed: u64,
    pub argmax_iteration: usize,
    pub best_psnr: f64,
    pub final_iteration: usize,
    pub final_psnr: f64,
}

impl Curve {
    pub fn file_name(&self) -> String {
        format!("curve_snr{}_{}_seed{}.csv", self.snr_db, self.arch, self.seed)
    }

    pub fn summary(&self) -> Option<CurveSummary> {
        let i = self.history.argmax_psnr()?;
        let last = self.history.records.last()?;
        Some(CurveSummary {
            snr_db: self.snr_db,
            seed: self.seed,
            argmax_iteration: self.history.records[i].iteration,
            best_psnr: self.history.records[i].psnr?,
            final_iteration: last.iteration,
            final_psnr: last.psnr?,
        })
    }
}

/// One tracked DGR run per (SNR, architecture, seed), at the first
/// configured view count.
pub fn run_curves(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Vec<Curve>> {
    let Some(&views) = cfg.views.first() else {
        bail!("curves needs a view count");
    };
    let mut jobs = Vec::new();
    for &snr in &cfg.snr_db {
        for arch in &cfg.archs {
            for &seed in &cfg.seeds {
                jobs.push((snr, arch.clone(), seed));
            }
        }
    }
    pool.install(|| {
        jobs.par_iter()
            .map(|(snr, arch, seed)| {
                let inst = prepare(cfg, *seed, views, *snr)?;
                let net = SkipNetConfig {
                    upsample: cfg.dgr.net.upsample,
                    ..net_by_name(arch)?
                };
                let method = Method::Dgr {
                    dgr: DgrConfig {
                        net,
                        ..cfg.dgr.clone()
                    },
                    reference: cfg.sart.clone(),
                };
                let run = run_method(&inst, &method)?;
                Ok(Curve {
                    snr_db: *snr,
                    arch: arch.clone(),
                    seed: *seed,
                    history: run.history.unwrap_or_default(),
                })
            })
            .collect()
    })
}

pub fn summary_csv(curves: &[Curve]) -> String {
    let mut s = String::from("snr_db,arch,seed,argmax_iteration,best_psnr,final_iteration,final_psnr\n");
    for c in curves {
        if let Some(m) = c.summary() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m.snr_db, c.arch, m.seed, m.argmax_iteration, m.best_psnr, m.final_iteration, m.final_psnr
            ));
        }
    }
    s
}
