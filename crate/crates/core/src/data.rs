//! Phantoms, HU slice ingestion and measurement noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config, Error, Result};
use crate::projection::{Image2D, Sinogram};

/// Ellipse in normalized coordinates, where the inscribed circle of the grid
/// is the unit disk and `y` points up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    pub intensity: f64,
}

impl EllipseSpec {
    /// Membership test in normalized coordinates (boundary included).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

/// Normalized coordinates of the center of pixel `(i, j)`.
pub fn pixel_coords(n: usize, i: usize, j: usize) -> (f64, f64) {
    let c = (n as f64 - 1.0) / 2.0;
    let r = n as f64 / 2.0;
    ((j as f64 - c) / r, (c - i as f64) / r)
}

/// Sums ellipse intensities at every pixel center, then clips to `[0, 1]`.
pub fn rasterize(n: usize, ellipses: &[EllipseSpec]) -> Image2D {
    Image2D::from_fn(n, |i, j| {
        let (x, y) = pixel_coords(n, i, j);
        let v = ellipses.iter().filter(|e| e.contains(x, y)).fold(0.0, |acc, e| acc + e.intensity);
        v.clamp(0.0, 1.0)
    })
}

/// The ten ellipses of the modified (high-contrast) Shepp-Logan phantom.
pub fn shepp_logan_ellipses() -> Vec<EllipseSpec> {
    // intensity, a, b, x0, y0, rotation in degrees
    const TABLE: [[f64; 6]; 10] = [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
        [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
        [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
        [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
        [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
        [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
        [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
        [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
        [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
    ];
    TABLE
        .iter()
        .map(|r| EllipseSpec {
            center: (r[3], r[4]),
            axes: (r[1], r[2]),
            rotation: r[5].to_radians(),
            intensity: r[0],
        })
        .collect()
}

pub fn shepp_logan(n: usize) -> Result<Image2D> {
    if n < 16 {
        return Err(config(format!("phantom size {n} is below 16")));
    }
    Ok(rasterize(n, &shepp_logan_ellipses()))
}

/// Draws the ellipse set used by [`random_ellipses`].
///
/// Semi-axes are uniform in `[0.05, 0.4]` (fractions of the half-width),
/// rotations uniform in `[0, pi)`, intensities uniform in `[0.1, 0.6]`. Each
/// center is uniform over the disk that keeps the whole ellipse inside the
/// inscribed circle.
pub fn sample_ellipses(seed: u64, count_range: (usize, usize)) -> Result<Vec<EllipseSpec>> {
    let (lo, hi) = count_range;
    if lo == 0 || hi < lo {
        return Err(config(format!("invalid ellipse count range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(lo..=hi);
    Ok((0..count)
        .map(|_| {
            let a = rng.random_range(0.05..=0.4);
            let b = rng.random_range(0.05..=0.4);
            let reach = 1.0 - f64::max(a, b);
            let rho = reach * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            EllipseSpec {
                center: (rho * phi.cos(), rho * phi.sin()),
                axes: (a, b),
                rotation: rng.random_range(0.0..std::f64::consts::PI),
                intensity: rng.random_range(0.1..=0.6),
            }
        })
        .collect())
}

/// Additive random-ellipse phantom, deterministic per seed.
pub fn random_ellipses(n: usize, seed: u64, count_range: (usize, usize)) -> Result<Image2D> {
    if n < 16 {
        return Err(config(format!("phantom size {n} is below 16")));
    }
    Ok(rasterize(n, &sample_ellipses(seed, count_range)?))
}

/// Maps Hounsfield units to `[0, 1]` through `window = (lo, hi)`.
pub fn window_hu(hu: f64, window: (f64, f64)) -> f64 {
    ((hu - window.0) / (window.1 - window.0)).clamp(0.0, 1.0)
}

/// Offset added to HU values when they are stored as unsigned 16-bit pixels.
pub const PNG_HU_OFFSET: f64 = 32768.0;

/// What to do with slices that are not square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquarePolicy {
    #[default]
    Reject,
    /// Bilinear resampling to the larger side.
    Resample,
}

/// Loads a CT slice and windows it to `[0, 1]`.
///
/// Supported inputs: a 16-bit grayscale PNG whose pixels hold
/// `HU + 32768`, or raw little-endian int16 HU values (any other extension)
/// with a sidecar `<file>.dims` text file holding `rows cols`.
pub fn load_hu_slice(path: &Path, window: (f64, f64), policy: SquarePolicy) -> Result<Image2D> {
    if !(window.1 > window.0) {
        return Err(config(format!("empty HU window [{}, {}]", window.0, window.1)));
    }
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let (rows, cols, hu) = if is_png {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let hu: Vec<f64> = img.into_raw().into_iter().map(|v| v as f64 - PNG_HU_OFFSET).collect();
        (h as usize, w as usize, hu)
    } else {
        read_raw_hu(path)?
    };
    let values: Vec<f64> = hu.iter().map(|&v| window_hu(v, window)).collect();
    if rows == cols {
        return Image2D::new(rows, values);
    }
    match policy {
        SquarePolicy::Reject => Err(Error::Format(format!("slice is {rows}x{cols}, not square"))),
        SquarePolicy::Resample => Ok(resample_square(rows, cols, &values)),
    }
}

fn read_raw_hu(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut dims_path = path.as_os_str().to_owned();
    dims_path.push(".dims");
    let dims = std::fs::read_to_string(&dims_path)?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("dims file: {e}")))?;
    let [rows, cols] = parsed[..] else {
        return Err(Error::Format("dims file must hold `rows cols`".into()));
    };
    let bytes = std::fs::read(path)?;
    if bytes.len() != rows * cols * 2 {
        return Err(Error::Format(format!(
            "{} bytes do not hold {rows}x{cols} int16 values",
            bytes.len()
        )));
    }
    let hu = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64)
        .collect();
    Ok((rows, cols, hu))
}

fn resample_square(rows: usize, cols: usize, v: &[f64]) -> Image2D {
    let n = rows.max(cols);
    let sample = |len: usize, k: usize| -> (usize, usize, f64) {
        let pos = ((k as f64 + 0.5) * len as f64 / n as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        (lo, (lo + 1).min(len - 1), pos - lo as f64)
    };
    Image2D::from_fn(n, |i, j| {
        let (r0, r1, tr) = sample(rows, i);
        let (c0, c1, tc) = sample(cols, j);
        let top = v[r0 * cols + c0] * (1.0 - tc) + v[r0 * cols + c1] * tc;
        let bottom = v[r1 * cols + c0] * (1.0 - tc) + v[r1 * cols + c1] * tc;
        top * (1.0 - tr) + bottom * tr
    })
}

/// Target SNR of additive white Gaussian noise. An infinite SNR means no
/// noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Noise standard deviation giving `snr_db` relative to the mean squared
/// sinogram value.
pub fn awgn_sigma(sino: &Sinogram, snr_db: f64) -> f64 {
    let power = sino.values().iter().map(|v| v * v).sum::<f64>() / sino.values().len() as f64;
    (power * 10f64.powf(-snr_db / 10.0)).sqrt()
}

pub fn add_awgn(sino: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    if spec.snr_db.is_nan() || spec.snr_db == f64::NEG_INFINITY {
        return Err(config(format!("invalid SNR {}", spec.snr_db)));
    }
    if sino.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("cannot set an SNR on an all-zero sinogram".into()));
    }
    if spec.snr_db == f64::INFINITY {
        return Ok(sino.clone());
    }
    let sigma = awgn_sigma(sino, spec.snr_db);
    let normal = Normal::new(0.0, sigma).map_err(|e| config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = sino.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    Sinogram::new(sino.num_angles(), sino.num_detectors(), values)
}
