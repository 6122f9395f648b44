//! Reconstruction by fitting a randomly initialized SkipNet to the
//! measurements.
//!
//! Each iteration perturbs the fixed network input `z` with fresh Gaussian
//! noise, evaluates the weighted objective on the generated image (restricted
//! to the reconstruction support) and takes one Adam step. The returned image
//! is generated from the unperturbed `z`.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sparsect_neural::{adam_step, AdamConfig, AdamState, SkipNet, SkipNetConfig, Tape, Tensor};

use crate::error::{config, Error, Result};
use crate::objective::{self, image_tensor, LossWeights, ObjectiveInputs, ProjectionOp, SsimParams};
use crate::projection::{Geometry, Image2D, Sinogram};

/// Loss-based stopping rule; see [`EarlyStopPolicy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgrConfig {
    pub weights: LossWeights,
    pub iterations: usize,
    pub input_noise_variance: f64,
    pub lr: f64,
    pub net: SkipNetConfig,
    pub seed: u64,
    /// Ground truth for PSNR/SSIM tracking. Never used by the optimization.
    pub track_psnr_against: Option<Image2D>,
    pub early_stop: Option<EarlyStop>,
    pub ssim: SsimParams,
}

impl Default for DgrConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights {
                w_meas: 0.9,
                w_ssim: 0.0,
                w_tv: 0.1,
            },
            iterations: 4000,
            input_noise_variance: 0.01,
            lr: 1e-3,
            net: SkipNetConfig::v1(),
            seed: 0,
            track_psnr_against: None,
            early_stop: None,
            ssim: SsimParams::default(),
        }
    }
}

impl DgrConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.iterations == 0 {
            return Err(config("iterations must be at least 1"));
        }
        if !(self.input_noise_variance >= 0.0) {
            return Err(config("input noise variance must be non-negative"));
        }
        if !(self.lr > 0.0) {
            return Err(config("learning rate must be positive"));
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 {
                return Err(config("early-stop window must be at least 1"));
            }
        }
        self.net.validate()?;
        Ok(())
    }
}

/// One optimization step. Losses describe the parameters before the step's
/// update; `psnr`/`ssim` compare that step's generated image to the tracked
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss_total: f64,
    pub loss_meas: f64,
    pub loss_ssim: f64,
    pub loss_tv: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the record with the highest tracked PSNR (first on ties).
    pub fn argmax_psnr(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.records.iter().enumerate() {
            if let Some(p) = r.psnr {
                if best.is_none_or(|(_, b)| p > b) {
                    best = Some((i, p));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,loss_total,loss_meas,loss_ssim,loss_tv,psnr,ssim")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.loss_total,
                r.loss_meas,
                r.loss_ssim,
                r.loss_tv,
                opt(r.psnr),
                opt(r.ssim)
            )?;
        }
        Ok(())
    }
}

/// Stops once the moving average of the total loss over `window` iterations
/// has gone `window` consecutive iterations without improving on its best
/// value by more than `min_delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopPolicy {
    cfg: EarlyStop,
    recent: std::collections::VecDeque<f64>,
    sum: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopPolicy {
    pub fn new(cfg: EarlyStop) -> Self {
        Self {
            cfg,
            recent: std::collections::VecDeque::with_capacity(cfg.window + 1),
            sum: 0.0,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Feeds one loss value; returns true when optimization should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.recent.push_back(loss);
        self.sum += loss;
        if self.recent.len() > self.cfg.window {
            self.sum -= self.recent.pop_front().unwrap_or(0.0);
        }
        if self.recent.len() < self.cfg.window {
            return false;
        }
        // recomputed rather than tracked incrementally so rounding cannot drift
        let avg = self.recent.iter().sum::<f64>() / self.cfg.window as f64;
        if avg < self.best - self.cfg.min_delta {
            self.best = avg;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.cfg.window
    }
}

/// Replays `losses` through the policy, returning the index of the iteration
/// at which it would stop.
pub fn early_stop_index(losses: &[f64], cfg: EarlyStop) -> Option<usize> {
    let mut p = EarlyStopPolicy::new(cfg);
    losses.iter().position(|&l| p.observe(l))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestIterate {
    pub iteration: usize,
    pub psnr: f64,
    pub image: Image2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgrOutcome {
    /// Generated from the unperturbed input at the final parameters, clipped
    /// to `[0, 1]`.
    pub image: Image2D,
    pub history: RunHistory,
    /// Highest-PSNR iterate when ground truth is tracked.
    pub best: Option<BestIterate>,
    /// Iteration at which the early-stop policy fired.
    pub stopped_at: Option<usize>,
}

fn to_image(t: &Tensor<f32>, n: usize) -> Image2D {
    Image2D::from_fn(n, |i, j| (t.data()[i * n + j] as f64).clamp(0.0, 1.0))
}

/// Fits a SkipNet to `y` starting from random parameters and returns the
/// generated reconstruction. `x0` is the reference for the SSIM term.
pub fn dgr_reconstruct(y: &Sinogram, geom: &Geometry, x0: &Image2D, cfg: &DgrConfig) -> Result<DgrOutcome> {
    cfg.validate()?;
    geom.check_sinogram(y)?;
    geom.check_image(x0)?;
    if let Some(t) = &cfg.track_psnr_against {
        geom.check_image(t)?;
    }
    let n = geom.image_size();
    let net_cfg = SkipNetConfig {
        seed: cfg.seed,
        ..cfg.net.clone()
    };
    net_cfg.check_input_size(n, n)?;
    let (net, mut params) = SkipNet::build::<f32>(&net_cfg)?;
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };

    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(k);
        r
    };
    let mut z_rng = stream(1);
    let z = Tensor::<f32>::from_fn(&net.input_shape(n, n), |_| StandardNormal.sample(&mut z_rng));
    let mut noise_rng = stream(2);
    let noise = Normal::new(0.0f32, cfg.input_noise_variance.sqrt() as f32)
        .map_err(|e| config(e.to_string()))?;
    let mut dropout_rng = stream(3);

    let op = Arc::new(ProjectionOp::new(geom));
    let y_t = Tensor::<f32>::from_fn(&[1, 1, geom.num_angles(), geom.num_detectors()], |p| y.values()[p] as f32);
    let x0_t = image_tensor::<f32>(x0);
    let mask_t = Tensor::<f32>::from_fn(&[1, 1, n, n], |p| if geom.support_mask()[p] { 1.0 } else { 0.0 });
    let mask_vals = mask_t.clone();

    let mut history = RunHistory::default();
    let mut best: Option<BestIterate> = None;
    let mut stopper = cfg.early_stop.map(EarlyStopPolicy::new);
    let mut stopped_at = None;

    for it in 0..cfg.iterations {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let z_it = if cfg.input_noise_variance > 0.0 {
            Tensor::from_fn(z.shape(), |p| z.data()[p] + noise.sample(&mut noise_rng))
        } else {
            z.clone()
        };
        let zv = tape.constant(z_it);
        let dropout = (net_cfg.dropout > 0.0).then_some(&mut dropout_rng);
        let raw = net.forward(&mut tape, &vars, zv, dropout)?;
        let mask = tape.constant(mask_t.clone());
        let x = tape.mul(raw, mask)?;
        let inputs = ObjectiveInputs {
            op: &op,
            y: tape.constant(y_t.clone()),
            x0: tape.constant(x0_t.clone()),
            weights: cfg.weights,
            ssim: cfg.ssim,
        };
        let terms = objective::total_loss(&mut tape, x, &inputs)?;
        let value = |v| tape.value(v).item() as f64;
        let mut rec = IterationRecord {
            iteration: it,
            loss_total: value(terms.total),
            loss_meas: value(terms.meas),
            loss_ssim: value(terms.ssim),
            loss_tv: value(terms.tv),
            psnr: None,
            ssim: None,
        };
        if ![rec.loss_total, rec.loss_meas, rec.loss_ssim, rec.loss_tv]
            .iter()
            .all(|v| v.is_finite())
        {
            history.records.push(rec);
            return Err(Error::Diverged {
                iteration: it,
                history: Box::new(history),
            });
        }
        if let Some(truth) = &cfg.track_psnr_against {
            let img = to_image(tape.value(x), n);
            let p = objective::psnr(&img, truth, 1.0)?;
            rec.psnr = Some(p);
            rec.ssim = Some(objective::ssim(&img, truth, &cfg.ssim)?);
            if best.as_ref().is_none_or(|b| p > b.psnr) {
                best = Some(BestIterate {
                    iteration: it,
                    psnr: p,
                    image: img,
                });
            }
        }
        let mut grads = tape.backward(terms.total)?;
        let g = grads.take_all(&vars);
        adam_step(&mut params, &g, &mut adam, &adam_cfg)?;
        history.records.push(rec);
        if let Some(s) = stopper.as_mut() {
            if s.observe(rec.loss_total) {
                stopped_at = Some(it);
                break;
            }
        }
    }

    let out = net.generate(&params, &z)?;
    let masked = Tensor::from_fn(out.shape(), |p| out.data()[p] * mask_vals.data()[p]);
    Ok(DgrOutcome {
        image: to_image(&masked, n),
        history,
        best,
        stopped_at,
    })
}
