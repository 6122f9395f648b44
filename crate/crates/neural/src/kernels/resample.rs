use crate::scalar::Real;

/// Interpolation used when doubling spatial resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpsampleMode {
    Nearest,
    #[default]
    Bilinear,
}

/// Source taps `(index, weight)` for each output position along one axis.
///
/// Bilinear uses half-pixel centres with edge clamping, so every output
/// position draws from at most two inputs and weights sum to one.
fn taps(mode: UpsampleMode, n: usize) -> Vec<[(usize, f64); 2]> {
    (0..2 * n)
        .map(|o| match mode {
            UpsampleMode::Nearest => [(o / 2, 1.0), (o / 2, 0.0)],
            UpsampleMode::Bilinear => {
                let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                let f = src - i0 as f64;
                [(i0, 1.0 - f), (i1, f)]
            }
        })
        .collect()
}

pub(crate) fn forward<T: Real>(mode: UpsampleMode, planes: usize, h: usize, w: usize, x: &[T], out: &mut [T]) {
    let ty = taps(mode, h);
    let tx = taps(mode, w);
    let (ho, wo) = (2 * h, 2 * w);
    let mut row = vec![T::ZERO; wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for (oy, t) in ty.iter().enumerate() {
            for (ox, r) in row.iter_mut().enumerate() {
                let [(a, wa), (b, wb)] = tx[ox];
                let mut acc = T::ZERO;
                for &(iy, wy) in t {
                    if wy == 0.0 {
                        continue;
                    }
                    let line = &src[iy * w..];
                    acc += T::from_f64(wy) * (T::from_f64(wa) * line[a] + T::from_f64(wb) * line[b]);
                }
                *r = acc;
            }
            dst[oy * wo..(oy + 1) * wo].copy_from_slice(&row);
        }
    }
}

pub(crate) fn backward<T: Real>(mode: UpsampleMode, planes: usize, h: usize, w: usize, grad_out: &[T], dx: &mut [T]) {
    let ty = taps(mode, h);
    let tx = taps(mode, w);
    let (ho, wo) = (2 * h, 2 * w);
    for p in 0..planes {
        let go = &grad_out[p * ho * wo..(p + 1) * ho * wo];
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, t) in ty.iter().enumerate() {
            for &(iy, wy) in t {
                if wy == 0.0 {
                    continue;
                }
                let wy = T::from_f64(wy);
                let line = &mut d[iy * w..(iy + 1) * w];
                for (ox, &g) in go[oy * wo..(oy + 1) * wo].iter().enumerate() {
                    let [(a, wa), (b, wb)] = tx[ox];
                    line[a] += wy * T::from_f64(wa) * g;
                    line[b] += wy * T::from_f64(wb) * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_weights_partition_unity() {
        for n in [1, 2, 5] {
            for t in taps(UpsampleMode::Bilinear, n) {
                assert!((t[0].1 + t[1].1 - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_plane_stays_constant() {
        let x = vec![2.5f64; 3 * 4];
        let mut out = vec![0.0; 6 * 8];
        forward(UpsampleMode::Bilinear, 1, 3, 4, &x, &mut out);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn nearest_replicates() {
        let x = vec![1.0f64, 2.0, 3.0, 4.0];
        let mut out = vec![0.0; 16];
        forward(UpsampleMode::Nearest, 1, 2, 2, &x, &mut out);
        assert_eq!(&out[..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&out[12..], &[3.0, 3.0, 4.0, 4.0]);
    }
}
