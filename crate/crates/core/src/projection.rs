//! Parallel-beam geometry and the Joseph ray-driven projector.
//!
//! Pixel `(i, j)` of an `n x n` image has its center at `x = j - c`,
//! `y = c - i` with `c = (n - 1) / 2`. Detector `k` measures the line
//! `x cos(theta) + y sin(theta) = k - c`. Along each ray the projector takes
//! unit steps over the axis the ray is closer to, linearly interpolating
//! across the other axis, and scales by the path length of one step.
//! Pixels whose centers fall outside the inscribed circle are treated as zero
//! on both the input side of [`forward_project`] and the output side of
//! [`back_project`], so the pair is an exact transpose.

use std::f64::consts::PI;

use sparsect_neural::Real;

use crate::error::{config, Result};

/// Acquisition geometry: a square grid and uniformly spaced view angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    image_size: usize,
    angles: Vec<f64>,
}

impl Geometry {
    /// `num_angles` views at `k * pi / num_angles`.
    pub fn new(image_size: usize, num_angles: usize) -> Result<Self> {
        if num_angles == 0 {
            return Err(config("at least one view angle is required"));
        }
        let angles = (0..num_angles).map(|k| k as f64 * PI / num_angles as f64).collect();
        Self::with_angles(image_size, angles)
    }

    /// Custom angles, which must be strictly increasing within `[0, pi)`.
    pub fn with_angles(image_size: usize, angles: Vec<f64>) -> Result<Self> {
        if image_size < 2 {
            return Err(config(format!("image size {image_size} is below 2")));
        }
        if angles.is_empty() {
            return Err(config("at least one view angle is required"));
        }
        if angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(config("angles must lie in [0, pi)"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config("angles must be strictly increasing"));
        }
        Ok(Self { image_size, angles })
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_detectors(&self) -> usize {
        self.image_size
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Pixel count `n * n`.
    pub fn num_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    /// Measurement count `num_angles * num_detectors`.
    pub fn num_measurements(&self) -> usize {
        self.num_angles() * self.num_detectors()
    }

    /// Whether pixel `(i, j)` lies in the reconstruction support.
    pub fn in_support(&self, i: usize, j: usize) -> bool {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        let r = self.image_size as f64 / 2.0;
        let (x, y) = (j as f64 - c, c - i as f64);
        x * x + y * y <= r * r
    }

    /// Row-major support indicator.
    pub fn support_mask(&self) -> Vec<bool> {
        let n = self.image_size;
        (0..n * n).map(|p| self.in_support(p / n, p % n)).collect()
    }

    pub(crate) fn check_image(&self, image: &Image2D) -> Result<()> {
        if image.size() != self.image_size {
            return Err(config(format!(
                "image is {0}x{0}, geometry expects {1}x{1}",
                image.size(),
                self.image_size
            )));
        }
        Ok(())
    }

    pub(crate) fn check_sinogram(&self, sino: &Sinogram) -> Result<()> {
        if sino.num_angles() != self.num_angles() || sino.num_detectors() != self.num_detectors() {
            return Err(config(format!(
                "sinogram is {}x{}, geometry expects {}x{}",
                sino.num_angles(),
                sino.num_detectors(),
                self.num_angles(),
                self.num_detectors()
            )));
        }
        Ok(())
    }
}

/// Square row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    size: usize,
    values: Vec<f64>,
}

impl Image2D {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(config(format!("{} values do not form a {size}x{size} image", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config("image contains non-finite values"));
        }
        Ok(Self { size, values })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            values: vec![0.0; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..size * size).map(|p| f(p / size, p % size)).collect();
        Self { size, values }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clipped(&self) -> Self {
        let values = self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { size: self.size, values }
    }
}

/// Projection data, one row per view angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(num_angles: usize, num_detectors: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_angles * num_detectors {
            return Err(config(format!(
                "{} values do not form a {num_angles}x{num_detectors} sinogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config("sinogram contains non-finite values"));
        }
        Ok(Self {
            num_angles,
            num_detectors,
            values,
        })
    }

    pub fn zeros(geom: &Geometry) -> Self {
        Self {
            num_angles: geom.num_angles(),
            num_detectors: geom.num_detectors(),
            values: vec![0.0; geom.num_measurements()],
        }
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.num_detectors..(a + 1) * self.num_detectors]
    }
}

/// Visits every `(pixel index, weight)` tap of the ray at detector offset `s`.
/// Taps outside the grid are dropped; the support mask is not applied here.
#[inline]
fn for_each_tap(n: usize, sin: f64, cos: f64, s: f64, mut f: impl FnMut(usize, f64)) {
    let c = (n as f64 - 1.0) / 2.0;
    let last = n as isize - 1;
    if cos.abs() >= sin.abs() {
        let w = 1.0 / cos.abs();
        for i in 0..n {
            let y = c - i as f64;
            let jf = (s - y * sin) / cos + c;
            let j0 = jf.floor();
            let t = jf - j0;
            let j0 = j0 as isize;
            if (0..=last).contains(&j0) {
                f(i * n + j0 as usize, w * (1.0 - t));
            }
            if (0..=last).contains(&(j0 + 1)) {
                f(i * n + (j0 + 1) as usize, w * t);
            }
        }
    } else {
        let w = 1.0 / sin.abs();
        for j in 0..n {
            let x = j as f64 - c;
            let fi = c - (s - x * cos) / sin;
            let i0 = fi.floor();
            let t = fi - i0;
            let i0 = i0 as isize;
            if (0..=last).contains(&i0) {
                f(i0 as usize * n + j, w * (1.0 - t));
            }
            if (0..=last).contains(&(i0 + 1)) {
                f((i0 + 1) as usize * n + j, w * t);
            }
        }
    }
}

/// Slice-level projector shared by the `f64` reconstruction code and the
/// `f32` network loss.
#[derive(Debug, Clone)]
pub struct Projector {
    geom: Geometry,
    mask: Vec<bool>,
    trig: Vec<(f64, f64)>,
}

impl Projector {
    pub fn new(geom: &Geometry) -> Self {
        Self {
            geom: geom.clone(),
            mask: geom.support_mask(),
            trig: geom.angles().iter().map(|a| a.sin_cos()).collect(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// One sinogram row: `out[d] = sum_p A[(a, d), p] * x[p]`.
    pub fn forward_angle<T: Real>(&self, a: usize, x: &[T], out: &mut [T]) {
        let n = self.geom.image_size;
        let c = (n as f64 - 1.0) / 2.0;
        let (sin, cos) = self.trig[a];
        for (d, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for_each_tap(n, sin, cos, d as f64 - c, |p, w| {
                if self.mask[p] {
                    acc += w * x[p].to_f64();
                }
            });
            *o = T::from_f64(acc);
        }
    }

    /// Adds the transpose of one view, `A_a^T r`, into `out`.
    pub fn back_angle_add<T: Real>(&self, a: usize, r: &[T], out: &mut [T]) {
        let n = self.geom.image_size;
        let c = (n as f64 - 1.0) / 2.0;
        let (sin, cos) = self.trig[a];
        for (d, &rv) in r.iter().enumerate() {
            let rv = rv.to_f64();
            if rv == 0.0 {
                continue;
            }
            for_each_tap(n, sin, cos, d as f64 - c, |p, w| {
                if self.mask[p] {
                    out[p] += T::from_f64(w * rv);
                }
            });
        }
    }

    /// Full sinogram `A x` into `out` (row-major, angles by detectors).
    pub fn forward<T: Real>(&self, x: &[T], out: &mut [T]) {
        let nd = self.geom.num_detectors();
        for (a, row) in out.chunks_exact_mut(nd).enumerate() {
            self.forward_angle(a, x, row);
        }
    }

    /// Full backprojection `A^T y` into `out`, overwriting it.
    pub fn adjoint<T: Real>(&self, y: &[T], out: &mut [T]) {
        out.fill(T::ZERO);
        let nd = self.geom.num_detectors();
        for (a, row) in y.chunks_exact(nd).enumerate() {
            self.back_angle_add(a, row, out);
        }
    }

    /// `A_a^T 1` for view `a`: how much one view touches each pixel.
    pub fn angle_col_sums(&self, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.geom.num_pixels()];
        self.back_angle_add(a, &vec![1.0; self.geom.num_detectors()], &mut out);
        out
    }
}

/// `A x`.
pub fn forward_project(image: &Image2D, geom: &Geometry) -> Result<Sinogram> {
    geom.check_image(image)?;
    let mut out = Sinogram::zeros(geom);
    Projector::new(geom).forward(image.values(), out.values_mut());
    Ok(out)
}

/// `A^T y`.
pub fn back_project(sino: &Sinogram, geom: &Geometry) -> Result<Image2D> {
    geom.check_sinogram(sino)?;
    let mut out = Image2D::zeros(geom.image_size());
    Projector::new(geom).adjoint(sino.values(), out.values_mut());
    Ok(out)
}

/// Row sums `A 1` and column sums `A^T 1`.
pub fn operator_sums(geom: &Geometry) -> (Sinogram, Image2D) {
    let p = Projector::new(geom);
    let mut rows = Sinogram::zeros(geom);
    p.forward(&vec![1.0; geom.num_pixels()], rows.values_mut());
    let mut cols = Image2D::zeros(geom.image_size());
    p.adjoint(&vec![1.0; geom.num_measurements()], cols.values_mut());
    (rows, cols)
}
