//! Method-by-views benchmark tables.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use sparsect::dgr::DgrConfig;
use sparsect::objective::LossWeights;

use crate::config::{parse_weights, ExperimentConfig};
use crate::experiment::{dataset_len, prepare, run_method, Method, Metrics};

/// The DGR weight rows `(w_meas, w_ssim, w_tv)` of the reference table.
pub const DGR_WEIGHT_ROWS: [(f64, f64, f64); 13] = [
    (1.0, 0.0, 0.0),
    (0.999, 0.001, 0.0),
    (0.99, 0.01, 0.0),
    (0.99, 0.0, 0.01),
    (0.98, 0.01, 0.01),
    (0.9, 0.1, 0.0),
    (0.9, 0.0, 0.1),
    (0.8, 0.1, 0.1),
    (0.5, 0.5, 0.0),
    (0.33, 0.33, 0.33),
    (0.0, 1.0, 0.0),
    (0.0, 0.99, 0.01),
    (0.0, 0.9, 0.1),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Fbp,
    Sart,
    SartTv,
    Dgr(LossWeights),
}

impl Row {
    /// `fbp`, `sart`, `sart_tv` or `dgr:meas/ssim/tv`. Weights that do not
    /// sum to one (such as `0.33/0.33/0.33`) are normalized.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fbp" => Self::Fbp,
            "sart" => Self::Sart,
            "sart_tv" => Self::SartTv,
            _ => match s.strip_prefix("dgr:") {
                Some(w) => Self::Dgr(parse_weights(w).or_else(|_| {
                    let v: Vec<f64> = w.split('/').filter_map(|x| x.parse().ok()).collect();
                    if v.len() != 3 {
                        bail!("weights must be written meas/ssim/tv, got `{w}`");
                    }
                    Ok(LossWeights::normalized(v[0], v[1], v[2])?)
                })?),
                None => bail!("unknown benchmark row `{s}`"),
            },
        })
    }

    pub fn label(&self) -> String {
        match self {
            Self::Fbp => "FBP".into(),
            Self::Sart => "SART".into(),
            Self::SartTv => "SART+TV".into(),
            Self::Dgr(_) => "DGR".into(),
        }
    }

    /// Loss weights of a DGR row.
    pub fn weights(&self) -> Option<LossWeights> {
        match self {
            Self::Dgr(w) => Some(*w),
            _ => None,
        }
    }

    pub fn method(&self, cfg: &ExperimentConfig) -> Method {
        match self {
            Self::Fbp => Method::Fbp(cfg.fbp_filter),
            Self::Sart => Method::Sart(cfg.sart.clone()),
            Self::SartTv => Method::SartTv(cfg.sart_tv.clone()),
            Self::Dgr(w) => Method::Dgr {
                dgr: DgrConfig {
                    weights: *w,
                    ..cfg.dgr.clone()
                },
                reference: cfg.sart.clone(),
            },
        }
    }
}

/// The full table: three baselines followed by the thirteen DGR rows.
pub fn all_rows() -> Vec<Row> {
    let mut rows = vec![Row::Fbp, Row::Sart, Row::SartTv];
    for (m, s, t) in DGR_WEIGHT_ROWS {
        let w = LossWeights::new(m, s, t).or_else(|_| LossWeights::normalized(m, s, t));
        rows.push(Row::Dgr(w.expect("table weights are valid")));
    }
    rows
}

pub fn selected_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    match &cfg.rows {
        None => Ok(all_rows()),
        Some(names) => names.iter().map(|s| Row::parse(s)).collect(),
    }
}

/// One run of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub row: usize,
    pub method: String,
    pub weights: Option<String>,
    pub views: usize,
    pub seed: u64,
    pub snr_db: f64,
    #[serde(flatten)]
    pub metrics: Option<Metrics>,
    /// Highest tracked PSNR over the DGR iterations and its iteration.
    pub best_psnr: Option<f64>,
    pub best_iteration: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim100_mean: f64,
    pub ssim100_std: f64,
    pub n: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub rows: Vec<Row>,
    pub views: Vec<usize>,
    pub runs: Vec<RunRecord>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

impl Benchmark {
    /// Statistics of the successful runs in one cell.
    pub fn cell(&self, row: usize, views: usize) -> CellStats {
        let runs: Vec<&RunRecord> = self.runs.iter().filter(|r| r.row == row && r.views == views).collect();
        let ok: Vec<&Metrics> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let (pm, ps) = mean_std(&ok.iter().map(|m| m.psnr).collect::<Vec<_>>());
        let (sm, ss) = mean_std(&ok.iter().map(|m| 100.0 * m.ssim).collect::<Vec<_>>());
        CellStats {
            psnr_mean: pm,
            psnr_std: ps,
            ssim100_mean: sm,
            ssim100_std: ss,
            n: ok.len(),
            failed: runs.len() - ok.len(),
        }
    }

    /// Machine-readable table: one line per row, six columns per view count.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("method,w_meas,w_ssim,w_tv");
        for v in &self.views {
            let _ = write!(s, ",psnr_mean_{v},psnr_std_{v},ssim100_mean_{v},ssim100_std_{v},n_{v},failed_{v}");
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let w = row.weights();
            let f = |x: Option<f64>| x.map(|x| x.to_string()).unwrap_or_default();
            let _ = write!(
                s,
                "{},{},{},{}",
                row.label(),
                f(w.map(|w| w.w_meas)),
                f(w.map(|w| w.w_ssim)),
                f(w.map(|w| w.w_tv))
            );
            for &v in &self.views {
                let c = self.cell(i, v);
                let _ = write!(
                    s,
                    ",{},{},{},{},{},{}",
                    c.psnr_mean, c.psnr_std, c.ssim100_mean, c.ssim100_std, c.n, c.failed
                );
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable table with `mean±std` cells; cells with failed runs
    /// are flagged with the failure count.
    pub fn table_text(&self) -> String {
        let mut s = format!("{:<8} {:>6} {:>6} {:>6}", "", "w_meas", "w_ssim", "w_tv");
        for v in &self.views {
            let _ = write!(s, " | {:^29}", format!("{v} views"));
        }
        s.push('\n');
        let _ = write!(s, "{:<8} {:>6} {:>6} {:>6}", "", "", "", "");
        for _ in &self.views {
            let _ = write!(s, " | {:>13} {:>13} {:>1}", "PSNR", "SSIM", "N");
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            match row.weights() {
                Some(w) => {
                    let _ = write!(s, "{:<8} {:>6.3} {:>6.3} {:>6.3}", row.label(), w.w_meas, w.w_ssim, w.w_tv);
                }
                None => {
                    let _ = write!(s, "{:<8} {:>6} {:>6} {:>6}", row.label(), "", "", "");
                }
            }
            for &v in &self.views {
                let c = self.cell(i, v);
                let pm = format!("{:.2}±{:.2}", c.psnr_mean, c.psnr_std);
                let sm = format!("{:.2}±{:.2}", c.ssim100_mean, c.ssim100_std);
                let _ = write!(s, " | {pm:>13} {sm:>13} {}", c.n);
                if c.failed > 0 {
                    let _ = write!(s, " ({} failed)", c.failed);
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every row at every view count over every seed in a worker pool.
/// Failures are recorded per run; the grid always completes.
pub fn run_benchmark(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Benchmark> {
    if cfg.seeds.is_empty() || dataset_len(cfg)? == Some(0) {
        bail!("the benchmark dataset is empty");
    }
    if cfg.snr_db.len() != 1 {
        bail!("benchmark takes a single snr_db value");
    }
    let snr = cfg.snr_db[0];
    let rows = selected_rows(cfg)?;
    let mut jobs = Vec::new();
    for (ri, _) in rows.iter().enumerate() {
        for &v in &cfg.views {
            for &seed in &cfg.seeds {
                jobs.push((ri, v, seed));
            }
        }
    }
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ri, views, seed)| {
                let row = &rows[ri];
                let outcome = prepare(cfg, seed, views, snr).and_then(|inst| run_method(&inst, &row.method(cfg)));
                let (metrics, best, error) = match outcome {
                    Ok(r) => (Some(r.metrics), r.best.map(|b| (b.psnr, b.iteration)), None),
                    Err(e) => (None, None, Some(format!("{e:#}"))),
                };
                RunRecord {
                    row: ri,
                    method: row.label(),
                    weights: row.weights().map(|w| w.to_string()),
                    views,
                    seed,
                    snr_db: snr,
                    metrics,
                    best_psnr: best.map(|b| b.0),
                    best_iteration: best.map(|b| b.1),
                    error,
                }
            })
            .collect()
    });
    Ok(Benchmark {
        rows,
        views: cfg.views.clone(),
        runs,
    })
}
