//! Analytic and algebraic baseline reconstructors.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{config, Result};
use crate::projection::{Geometry, Image2D, Projector, Sinogram};

/// Frequency response applied to each projection row by [`fbp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbpFilter {
    #[default]
    Ramp,
    /// Ramp multiplied by a Hann window reaching zero at Nyquist.
    Hann,
}

/// Filtered backprojection. Linear in `sino`; values are not clipped.
///
/// Rows are zero-padded to the next power of two at least twice the detector
/// count and multiplied by `|f|`, where `f` is normalized so Nyquist is 1;
/// the backprojection is scaled by `pi / (2 * num_angles)`.
pub fn fbp(sino: &Sinogram, geom: &Geometry, filter: FbpFilter) -> Result<Image2D> {
    geom.check_sinogram(sino)?;
    let nd = geom.num_detectors();
    if nd < 2 {
        return Err(config("filtered backprojection needs at least 2 detectors"));
    }
    let len = (2 * nd).next_power_of_two();
    let response: Vec<f64> = (0..len)
        .map(|k| {
            let f = 2.0 * k.min(len - k) as f64 / len as f64;
            match filter {
                FbpFilter::Ramp => f,
                FbpFilter::Hann => f * 0.5 * (1.0 + (PI * f).cos()),
            }
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut filtered = Sinogram::zeros(geom);
    for a in 0..geom.num_angles() {
        buf.fill(Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(sino.row(a)) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        let row = &mut filtered.values_mut()[a * nd..(a + 1) * nd];
        for (r, b) in row.iter_mut().zip(&buf) {
            *r = b.re / len as f64;
        }
    }

    let mut out = Image2D::zeros(geom.image_size());
    Projector::new(geom).adjoint(filtered.values(), out.values_mut());
    let scale = PI / (2.0 * geom.num_angles() as f64);
    out.values_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// How SART visits the views within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SartOrdering {
    /// One update per view, in acquisition order.
    #[default]
    Sequential,
    /// One update per sweep from all views at once.
    Simultaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SartConfig {
    pub iterations: usize,
    pub relaxation: f64,
    pub initial: Option<Image2D>,
    pub epsilon: f64,
    pub ordering: SartOrdering,
}

impl Default for SartConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            relaxation: 0.15,
            initial: None,
            epsilon: 1e-8,
            ordering: SartOrdering::Sequential,
        }
    }
}

impl SartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(config("SART needs at least one sweep"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 2.0) {
            return Err(config(format!("relaxation {} outside (0, 2]", self.relaxation)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(config("epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// SART iteration state: normalizers are computed once per geometry.
pub struct Sart<'a> {
    proj: Projector,
    sino: &'a Sinogram,
    cfg: SartConfig,
    row_sums: Vec<f64>,
    /// Per-view `A_a^T 1` for sequential sweeps, or the single global
    /// `A^T 1` for simultaneous sweeps.
    col_sums: Vec<Vec<f64>>,
    x: Vec<f64>,
}

impl<'a> Sart<'a> {
    pub fn new(sino: &'a Sinogram, geom: &Geometry, cfg: &SartConfig) -> Result<Self> {
        cfg.validate()?;
        geom.check_sinogram(sino)?;
        let x = match &cfg.initial {
            Some(init) => {
                geom.check_image(init)?;
                init.values().to_vec()
            }
            None => vec![0.0; geom.num_pixels()],
        };
        let proj = Projector::new(geom);
        let mut row_sums = vec![0.0; geom.num_measurements()];
        proj.forward(&vec![1.0; geom.num_pixels()], &mut row_sums);
        let col_sums = match cfg.ordering {
            SartOrdering::Sequential => (0..geom.num_angles()).map(|a| proj.angle_col_sums(a)).collect(),
            SartOrdering::Simultaneous => {
                let mut c = vec![0.0; geom.num_pixels()];
                proj.adjoint(&vec![1.0; geom.num_measurements()], &mut c);
                vec![c]
            }
        };
        Ok(Self {
            proj,
            sino,
            cfg: cfg.clone(),
            row_sums,
            col_sums,
            x,
        })
    }

    /// One pass over all views followed by clipping to `[0, 1]`.
    pub fn sweep(&mut self) {
        let nd = self.proj.geometry().num_detectors();
        let na = self.proj.geometry().num_angles();
        let eps = self.cfg.epsilon;
        let relax = self.cfg.relaxation;
        let y = self.sino.values();
        match self.cfg.ordering {
            SartOrdering::Sequential => {
                let mut r = vec![0.0; nd];
                let mut bp = vec![0.0; self.x.len()];
                for a in 0..na {
                    self.proj.forward_angle(a, &self.x, &mut r);
                    for d in 0..nd {
                        let m = a * nd + d;
                        r[d] = (y[m] - r[d]) / (self.row_sums[m] + eps);
                    }
                    bp.fill(0.0);
                    self.proj.back_angle_add(a, &r, &mut bp);
                    for ((x, b), c) in self.x.iter_mut().zip(&bp).zip(&self.col_sums[a]) {
                        *x += relax * b / (c + eps);
                    }
                }
            }
            SartOrdering::Simultaneous => {
                let mut r = vec![0.0; y.len()];
                self.proj.forward(&self.x, &mut r);
                for (m, rv) in r.iter_mut().enumerate() {
                    *rv = (y[m] - *rv) / (self.row_sums[m] + eps);
                }
                let mut bp = vec![0.0; self.x.len()];
                self.proj.adjoint(&r, &mut bp);
                for ((x, b), c) in self.x.iter_mut().zip(&bp).zip(&self.col_sums[0]) {
                    *x += relax * b / (c + eps);
                }
            }
        }
        self.x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    pub fn current(&self) -> &[f64] {
        &self.x
    }

    pub fn current_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    /// Root-mean-square sinogram residual of the current estimate.
    pub fn residual_rms(&self) -> f64 {
        let mut ax = vec![0.0; self.sino.values().len()];
        self.proj.forward(&self.x, &mut ax);
        let ss: f64 = ax.iter().zip(self.sino.values()).map(|(a, y)| (a - y).powi(2)).sum();
        (ss / ax.len() as f64).sqrt()
    }

    pub fn into_image(self) -> Image2D {
        Image2D::from_fn(self.proj.geometry().image_size(), |i, j| {
            self.x[i * self.proj.geometry().image_size() + j]
        })
    }
}

pub fn sart(sino: &Sinogram, geom: &Geometry, cfg: &SartConfig) -> Result<Image2D> {
    let mut s = Sart::new(sino, geom, cfg)?;
    for _ in 0..cfg.iterations {
        s.sweep();
    }
    Ok(s.into_image())
}

/// Chambolle's dual projection algorithm for
/// `min_u ||u - f||^2 / 2 + weight * TV(u)`, run for a fixed iteration count.
pub fn tv_denoise(image: &Image2D, weight: f64, inner_iters: usize) -> Image2D {
    if weight <= 0.0 || inner_iters == 0 {
        return image.clone();
    }
    let n = image.size();
    let f = image.values();
    let mut px = vec![0.0; n * n];
    let mut py = vec![0.0; n * n];
    let mut out = f.to_vec();
    let tau = 0.25;
    for it in 0..inner_iters {
        if it > 0 {
            for i in 0..n {
                for j in 0..n {
                    let p = i * n + j;
                    let mut d = -px[p] - py[p];
                    if j > 0 {
                        d += px[p - 1];
                    }
                    if i > 0 {
                        d += py[p - n];
                    }
                    out[p] = f[p] + d;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let p = i * n + j;
                let gx = if j + 1 < n { out[p + 1] - out[p] } else { 0.0 };
                let gy = if i + 1 < n { out[p + n] - out[p] } else { 0.0 };
                let norm = 1.0 + tau / weight * (gx * gx + gy * gy).sqrt();
                px[p] = (px[p] - tau * gx) / norm;
                py[p] = (py[p] - tau * gy) / norm;
            }
        }
    }
    Image2D::from_fn(n, |i, j| out[i * n + j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SartTvConfig {
    pub sart: SartConfig,
    pub tv_weight: f64,
    /// Chambolle weight applied after every sweep.
    pub denoise_step: f64,
    pub denoise_inner_iters: usize,
}

impl Default for SartTvConfig {
    fn default() -> Self {
        Self::with_tv_weight(0.9)
    }
}

impl SartTvConfig {
    /// Denoise step tied to the TV weight as `tv_weight * 0.02`.
    pub fn with_tv_weight(tv_weight: f64) -> Self {
        Self {
            sart: SartConfig::default(),
            tv_weight,
            denoise_step: tv_weight * 0.02,
            denoise_inner_iters: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sart.validate()?;
        if !(self.tv_weight >= 0.0) || !(self.denoise_step >= 0.0) {
            return Err(config("TV weight and denoise step must be non-negative"));
        }
        Ok(())
    }
}

/// SART with a TV denoising step after every sweep.
pub fn sart_tv(sino: &Sinogram, geom: &Geometry, cfg: &SartTvConfig) -> Result<Image2D> {
    cfg.validate()?;
    let n = geom.image_size();
    let mut s = Sart::new(sino, geom, &cfg.sart)?;
    for _ in 0..cfg.sart.iterations {
        s.sweep();
        if cfg.denoise_step > 0.0 {
            let cur = Image2D::from_fn(n, |i, j| s.current()[i * n + j]);
            let den = tv_denoise(&cur, cfg.denoise_step, cfg.denoise_inner_iters);
            for (x, v) in s.current_mut().iter_mut().zip(den.values()) {
                *x = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(s.into_image())
}
