use crate::scalar::Real;

/// Per-(sample, channel) spatial normalisation followed by a learned affine map.
///
/// Returns the normalised activations and the per-plane inverse standard
/// deviations, both needed by [`backward`].
pub(crate) fn forward<T: Real>(
    planes: usize,
    channels: usize,
    plane_len: usize,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
    out: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let mut xhat = vec![T::ZERO; x.len()];
    let mut inv_std = vec![T::ZERO; planes];
    let len = T::from_f64(plane_len as f64);
    for p in 0..planes {
        let c = p % channels;
        let src = &x[p * plane_len..(p + 1) * plane_len];
        let mean = src.iter().copied().sum::<T>() / len;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / len;
        let is = T::ONE / (var + eps).sqrt();
        inv_std[p] = is;
        let xh = &mut xhat[p * plane_len..(p + 1) * plane_len];
        let dst = &mut out[p * plane_len..(p + 1) * plane_len];
        for ((h, o), &v) in xh.iter_mut().zip(dst.iter_mut()).zip(src) {
            *h = (v - mean) * is;
            *o = gamma[c] * *h + beta[c];
        }
    }
    (xhat, inv_std)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    channels: usize,
    plane_len: usize,
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    grad_out: &[T],
    mut dx: Option<&mut [T]>,
    mut dgamma: Option<&mut [T]>,
    mut dbeta: Option<&mut [T]>,
) {
    let len = T::from_f64(plane_len as f64);
    for (p, &is) in inv_std.iter().enumerate() {
        let c = p % channels;
        let go = &grad_out[p * plane_len..(p + 1) * plane_len];
        let xh = &xhat[p * plane_len..(p + 1) * plane_len];
        let sum_g: T = go.iter().copied().sum();
        let sum_gx: T = go.iter().zip(xh).map(|(&g, &h)| g * h).sum();
        if let Some(dg) = dgamma.as_deref_mut() {
            dg[c] += sum_gx;
        }
        if let Some(db) = dbeta.as_deref_mut() {
            db[c] += sum_g;
        }
        if let Some(dx) = dx.as_deref_mut() {
            let scale = gamma[c] * is;
            let mean_g = sum_g / len;
            let mean_gx = sum_gx / len;
            let d = &mut dx[p * plane_len..(p + 1) * plane_len];
            for ((dv, &g), &h) in d.iter_mut().zip(go).zip(xh) {
                *dv += scale * (g - mean_g - h * mean_gx);
            }
        }
    }
}
