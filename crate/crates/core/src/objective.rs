//! Loss terms for generator fitting and image quality metrics.
//!
//! Losses are recorded on a [`Tape`] over images shaped `[1, 1, n, n]`:
//! the mean squared sinogram residual, `1 - SSIM` against a reference image,
//! and a smoothed isotropic total variation. Metrics work on [`Image2D`].

use std::sync::Arc;

use sparsect_neural::{LinearMap, Real, Tape, Tensor, Var};

use crate::error::{config, Error, Result};
use crate::projection::{Geometry, Image2D, Projector};

/// Smoothing inside the TV square root.
pub const TV_EPS: f64 = 1e-8;

/// Weights of the three loss terms; they must sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_meas: f64,
    pub w_ssim: f64,
    pub w_tv: f64,
}

impl LossWeights {
    pub fn new(w_meas: f64, w_ssim: f64, w_tv: f64) -> Result<Self> {
        let w = Self { w_meas, w_ssim, w_tv };
        w.validate()?;
        Ok(w)
    }

    /// Rescales non-negative weights to sum to one, e.g. `0.33/0.33/0.33`
    /// becomes thirds.
    pub fn normalized(w_meas: f64, w_ssim: f64, w_tv: f64) -> Result<Self> {
        let sum = w_meas + w_ssim + w_tv;
        if [w_meas, w_ssim, w_tv].iter().any(|w| !(*w >= 0.0)) || !(sum > 0.0) {
            return Err(config(format!("cannot normalize weights {w_meas}/{w_ssim}/{w_tv}")));
        }
        Self::new(w_meas / sum, w_ssim / sum, w_tv / sum)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_meas, self.w_ssim, self.w_tv];
        if ws.iter().any(|w| !(*w >= 0.0)) {
            return Err(config(format!("negative loss weight in {ws:?}")));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(config(format!("loss weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl std::fmt::Display for LossWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}/{:.3}/{:.3}", self.w_meas, self.w_ssim, self.w_tv)
    }
}

/// The projector as a differentiable node: `[1, 1, n, n]` images to
/// `[1, 1, num_angles, num_detectors]` sinograms.
#[derive(Debug, Clone)]
pub struct ProjectionOp(Projector);

impl ProjectionOp {
    pub fn new(geom: &Geometry) -> Self {
        Self(Projector::new(geom))
    }

    pub fn projector(&self) -> &Projector {
        &self.0
    }
}

impl<T: Real> LinearMap<T> for ProjectionOp {
    fn input_shape(&self) -> Vec<usize> {
        let n = self.0.geometry().image_size();
        vec![1, 1, n, n]
    }

    fn output_shape(&self) -> Vec<usize> {
        let g = self.0.geometry();
        vec![1, 1, g.num_angles(), g.num_detectors()]
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        self.0.forward(x, out);
    }

    fn adjoint(&self, y: &[T], out: &mut [T]) {
        self.0.adjoint(y, out);
    }
}

/// Records `A x`.
pub fn projection_node<T: Real>(tape: &mut Tape<T>, x: Var, op: &Arc<ProjectionOp>) -> Result<Var> {
    Ok(tape.linear(x, op.clone() as Arc<dyn LinearMap<T>>)?)
}

/// `mean((A x - y)^2)` with `y` a constant `[1, 1, angles, detectors]` node.
pub fn measurement_loss<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, op: &Arc<ProjectionOp>) -> Result<Var> {
    let ax = projection_node(tape, x, op)?;
    let r = tape.sub(ax, y)?;
    let r2 = tape.square(r);
    Ok(tape.mean(r2))
}

/// Windowed SSIM settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let k: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }

    fn constants(&self) -> (f64, f64) {
        ((self.k1 * self.data_range).powi(2), (self.k2 * self.data_range).powi(2))
    }

    fn validate(&self, size: usize) -> Result<()> {
        if self.window == 0 || !(self.sigma > 0.0) || !(self.data_range > 0.0) {
            return Err(config("SSIM needs a positive window, sigma and data range"));
        }
        if size < self.window {
            return Err(config(format!("{size}x{size} image is smaller than the {} window", self.window)));
        }
        Ok(())
    }
}

/// Mean local SSIM between two `[1, 1, h, w]` nodes over every full window.
pub fn ssim_node<T: Real>(tape: &mut Tape<T>, x: Var, r: Var, p: &SsimParams) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 4 {
        return Err(config(format!("SSIM expects a [1, 1, h, w] image, got {shape:?}")));
    }
    p.validate(shape[2].min(shape[3]))?;
    let k = p.kernel();
    let (c1, c2) = p.constants();
    let mx = tape.gaussian_valid(x, &k)?;
    let mr = tape.gaussian_valid(r, &k)?;
    let xx = tape.mul(x, x)?;
    let rr = tape.mul(r, r)?;
    let xr = tape.mul(x, r)?;
    let exx = tape.gaussian_valid(xx, &k)?;
    let err = tape.gaussian_valid(rr, &k)?;
    let exr = tape.gaussian_valid(xr, &k)?;
    let mx2 = tape.mul(mx, mx)?;
    let mr2 = tape.mul(mr, mr)?;
    let mxr = tape.mul(mx, mr)?;
    let sxx = tape.sub(exx, mx2)?;
    let srr = tape.sub(err, mr2)?;
    let sxr = tape.sub(exr, mxr)?;

    let a = tape.scale(mxr, 2.0);
    let a = tape.offset(a, c1);
    let b = tape.scale(sxr, 2.0);
    let b = tape.offset(b, c2);
    let num = tape.mul(a, b)?;
    let c = tape.add(mx2, mr2)?;
    let c = tape.offset(c, c1);
    let d = tape.add(sxx, srr)?;
    let d = tape.offset(d, c2);
    let den = tape.mul(c, d)?;
    let map = tape.div(num, den)?;
    Ok(tape.mean(map))
}

/// `1 - SSIM(x, r)`.
pub fn ssim_loss<T: Real>(tape: &mut Tape<T>, x: Var, r: Var, p: &SsimParams) -> Result<Var> {
    let s = ssim_node(tape, x, r, p)?;
    let neg = tape.scale(s, -1.0);
    Ok(tape.offset(neg, 1.0))
}

/// Mean per-pixel TV; each pixel averages its forward- and backward-difference
/// gradient magnitudes, so the value is unchanged by transposition or a
/// half-turn of the image.
pub fn tv_loss<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    Ok(tape.total_variation(x, TV_EPS)?)
}

/// Loss nodes of one evaluation. `total` sums only the terms with nonzero
/// weight; the others are still recorded for reporting.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub meas: Var,
    pub ssim: Var,
    pub tv: Var,
}

/// Constant inputs of the weighted objective.
pub struct ObjectiveInputs<'a> {
    pub op: &'a Arc<ProjectionOp>,
    /// Measured sinogram node, `[1, 1, angles, detectors]`.
    pub y: Var,
    /// Reference image node for the SSIM term, `[1, 1, n, n]`.
    pub x0: Var,
    pub weights: LossWeights,
    pub ssim: SsimParams,
}

/// `w_meas * l_meas + w_ssim * l_ssim + w_tv * l_tv`.
pub fn total_loss<T: Real>(tape: &mut Tape<T>, x: Var, inp: &ObjectiveInputs) -> Result<LossTerms> {
    inp.weights.validate()?;
    let meas = measurement_loss(tape, x, inp.y, inp.op)?;
    let ssim = ssim_loss(tape, x, inp.x0, &inp.ssim)?;
    let tv = tv_loss(tape, x)?;
    let w = inp.weights;
    let mut total: Option<Var> = None;
    for (term, weight) in [(meas, w.w_meas), (ssim, w.w_ssim), (tv, w.w_tv)] {
        if weight == 0.0 {
            continue;
        }
        let t = if weight == 1.0 { term } else { tape.scale(term, weight) };
        total = Some(match total {
            None => t,
            Some(acc) => tape.add(acc, t)?,
        });
    }
    let total = total.ok_or_else(|| config("all loss weights are zero"))?;
    Ok(LossTerms { total, meas, ssim, tv })
}

/// Wraps an image as a `[1, 1, n, n]` tensor.
pub fn image_tensor<T: Real>(image: &Image2D) -> Tensor<T> {
    let n = image.size();
    Tensor::from_fn(&[1, 1, n, n], |p| T::from_f64(image.values()[p]))
}

fn check_same(a: &Image2D, b: &Image2D) -> Result<()> {
    if a.size() != b.size() {
        return Err(config(format!("image sizes differ: {} vs {}", a.size(), b.size())));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`; identical images give `+inf`.
pub fn psnr(x: &Image2D, reference: &Image2D, peak: f64) -> Result<f64> {
    check_same(x, reference)?;
    let mse = x
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / x.values().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn filter_valid(n: usize, k: &[f64], src: &[f64]) -> Vec<f64> {
    let m = n + 1 - k.len();
    let mut tmp = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            tmp[i * m + j] = k.iter().enumerate().map(|(t, w)| w * src[i * n + j + t]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = k.iter().enumerate().map(|(t, w)| w * tmp[(i + t) * m + j]).sum();
        }
    }
    out
}

/// Mean SSIM over every full Gaussian window.
pub fn ssim(x: &Image2D, reference: &Image2D, p: &SsimParams) -> Result<f64> {
    check_same(x, reference)?;
    let n = x.size();
    p.validate(n)?;
    let k = p.kernel();
    let (c1, c2) = p.constants();
    let (a, b) = (x.values(), reference.values());
    let prod = |f: &dyn Fn(usize) -> f64| (0..n * n).map(f).collect::<Vec<f64>>();
    let mx = filter_valid(n, &k, a);
    let mr = filter_valid(n, &k, b);
    let exx = filter_valid(n, &k, &prod(&|i| a[i] * a[i]));
    let err = filter_valid(n, &k, &prod(&|i| b[i] * b[i]));
    let exr = filter_valid(n, &k, &prod(&|i| a[i] * b[i]));
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (mx2, mr2, mxr) = (mx[i] * mx[i], mr[i] * mr[i], mx[i] * mr[i]);
            let (sxx, srr, sxr) = (exx[i] - mx2, err[i] - mr2, exr[i] - mxr);
            ((2.0 * mxr + c1) * (2.0 * sxr + c2)) / ((mx2 + mr2 + c1) * (sxx + srr + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Sum over pixels of the forward-difference gradient magnitude.
pub fn tv_norm(x: &Image2D) -> f64 {
    let n = x.size();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = x.get(i, j);
            let dx = if j + 1 < n { x.get(i, j + 1) - v } else { 0.0 };
            let dy = if i + 1 < n { x.get(i + 1, j) - v } else { 0.0 };
            acc += (dx * dx + dy * dy).sqrt();
        }
    }
    acc
}

/// Rectangular region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Roi {
    pub fn validate(&self, size: usize) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.row0 + self.rows > size || self.col0 + self.cols > size {
            return Err(config(format!("{self:?} does not fit in a {size}x{size} image")));
        }
        Ok(())
    }

    /// Mean and population standard deviation of the pixels inside.
    pub fn stats(&self, x: &Image2D) -> Result<(f64, f64)> {
        self.validate(x.size())?;
        let vals: Vec<f64> = (self.row0..self.row0 + self.rows)
            .flat_map(|i| (self.col0..self.col0 + self.cols).map(move |j| (i, j)))
            .map(|(i, j)| x.get(i, j))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        Ok((mean, var.sqrt()))
    }
}

/// Decibel convention for [`cnr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DbScale {
    /// `20 log10`, treating the ratio as an amplitude.
    #[default]
    Amplitude,
    /// `10 log10`, treating the ratio as a power.
    Power,
}

/// Contrast-to-noise ratio `|mu_f - mu_b| / sigma_b` in dB. A zero contrast
/// gives `-inf`.
pub fn cnr(x: &Image2D, feature: &Roi, background: &Roi, scale: DbScale) -> Result<f64> {
    let (mf, _) = feature.stats(x)?;
    let (mb, sb) = background.stats(x)?;
    if sb <= 1e-12 * mb.abs().max(1.0) {
        return Err(Error::Degenerate("background ROI has zero standard deviation".into()));
    }
    let ratio = (mf - mb).abs() / sb;
    Ok(match scale {
        DbScale::Amplitude => 20.0 * ratio.log10(),
        DbScale::Power => 10.0 * ratio.log10(),
    })
}
