use super::reflect;
use crate::scalar::{matmul, matmul_at, matmul_bt, Real};

/// Spatial bookkeeping of one 2-d convolution with reflection padding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn h_out(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn w_out(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.h_out() * self.w_out()
    }

    /// A 1x1 stride-1 convolution reads the input directly as its column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source index of each (kernel offset, output position) pair along one axis.
    fn axis_table(&self, len: usize, out: usize) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.k * out);
        for kk in 0..self.k {
            for o in 0..out {
                let src = (o * self.stride + kk) as isize - self.pad as isize;
                t.push(reflect(src, len));
            }
        }
        t
    }
}

/// Output positions `[lo, hi)` whose source index along one axis needs no
/// reflection, for kernel offset `kk`.
fn interior(kk: usize, pad: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    // src = o * stride + kk - pad must lie in [0, len)
    let lo = pad.saturating_sub(kk).div_ceil(stride);
    let hi = if len + pad > kk {
        ((len + pad - kk - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let rows = g.axis_table(g.h, ho);
    let colt = g.axis_table(g.w, wo);
    let p = ho * wo;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                let ct = &colt[kx * wo..(kx + 1) * wo];
                let (lo, hi) = interior(kx, g.pad, g.stride, g.w, wo);
                for oy in 0..ho {
                    let src_row = &plane[rows[ky * ho + oy] * g.w..][..g.w];
                    let d = &mut dst[oy * wo..(oy + 1) * wo];
                    for ox in (0..lo).chain(hi..wo) {
                        d[ox] = src_row[ct[ox]];
                    }
                    if hi > lo {
                        let first = lo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            d[lo..hi].copy_from_slice(&src_row[first..first + hi - lo]);
                        } else {
                            for (dv, &sv) in d[lo..hi].iter_mut().zip(src_row[first..].iter().step_by(g.stride)) {
                                *dv = sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let rows = g.axis_table(g.h, ho);
    let colt = g.axis_table(g.w, wo);
    let p = ho * wo;
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let src = &cols[r * p..(r + 1) * p];
                let ct = &colt[kx * wo..(kx + 1) * wo];
                let (lo, hi) = interior(kx, g.pad, g.stride, g.w, wo);
                for oy in 0..ho {
                    let base = rows[ky * ho + oy] * g.w;
                    let line = &mut plane[base..base + g.w];
                    let s = &src[oy * wo..(oy + 1) * wo];
                    for ox in (0..lo).chain(hi..wo) {
                        line[ct[ox]] += s[ox];
                    }
                    if hi > lo {
                        let first = lo * g.stride + kx - g.pad;
                        for (dv, &sv) in line[first..].iter_mut().step_by(g.stride).zip(&s[lo..hi]) {
                            *dv += sv;
                        }
                    }
                }
            }
        }
    }
}

/// `out[n] = W * cols(x[n]) + b` for a batch of `n` images.
///
/// Returns the column matrices of the whole batch (empty for pointwise
/// kernels, which read `x` directly) for reuse by [`backward`].
pub(crate) fn forward<T: Real>(
    g: &ConvGeom,
    batch: usize,
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    out: &mut [T],
) -> Vec<T> {
    let in_len = g.c_in * g.h * g.w;
    let p = g.out_pixels();
    let out_len = g.c_out * p;
    let col_len = g.patch_len() * p;
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::ZERO; batch * col_len]
    };
    for n in 0..batch {
        let xn = &x[n * in_len..(n + 1) * in_len];
        let on = &mut out[n * out_len..(n + 1) * out_len];
        let src: &[T] = if g.is_pointwise() {
            xn
        } else {
            let c = &mut cols[n * col_len..(n + 1) * col_len];
            im2col(g, xn, c);
            c
        };
        match bias {
            Some(b) => {
                for (co, row) in on.chunks_mut(p).enumerate() {
                    row.fill(b[co]);
                }
                matmul(g.c_out, g.patch_len(), p, weight, src, T::ONE, on);
            }
            None => matmul(g.c_out, g.patch_len(), p, weight, src, T::ZERO, on),
        }
    }
    cols
}

/// Accumulates input, weight and bias gradients from the output gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    g: &ConvGeom,
    batch: usize,
    x: &[T],
    cols: &[T],
    weight: &[T],
    grad_out: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let in_len = g.c_in * g.h * g.w;
    let p = g.out_pixels();
    let out_len = g.c_out * p;
    let k = g.patch_len();
    let mut dcols = vec![T::ZERO; if dx.is_some() { k * p } else { 0 }];
    for n in 0..batch {
        let go = &grad_out[n * out_len..(n + 1) * out_len];
        let xn = &x[n * in_len..(n + 1) * in_len];
        if let Some(dw) = dw.as_deref_mut() {
            let src: &[T] = if g.is_pointwise() {
                xn
            } else {
                &cols[n * k * p..(n + 1) * k * p]
            };
            matmul_bt(g.c_out, p, k, go, src, T::ONE, dw);
        }
        if let Some(db) = db.as_deref_mut() {
            for (co, row) in go.chunks(p).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * in_len..(n + 1) * in_len];
            if g.is_pointwise() {
                matmul_at(k, g.c_out, p, weight, go, T::ONE, dxn);
            } else {
                matmul_at(k, g.c_out, p, weight, go, T::ZERO, &mut dcols);
                col2im(g, &dcols, dxn);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution with reflection padding.
    fn direct(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (ho, wo) = (g.h_out(), g.w_out());
        let mut out = vec![0.0; g.c_out * ho * wo];
        for co in 0..g.c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..g.c_in {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = reflect((oy * g.stride + ky) as isize - g.pad as isize, g.h);
                                let ix = reflect((ox * g.stride + kx) as isize - g.pad as isize, g.w);
                                acc += w[((co * g.c_in + ci) * g.k + ky) * g.k + kx]
                                    * x[(ci * g.h + iy) * g.w + ix];
                            }
                        }
                    }
                    out[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loops() {
        for &(k, stride, pad, h, w) in &[(3, 1, 1, 6, 8), (3, 2, 1, 6, 8), (1, 1, 0, 6, 8), (3, 2, 1, 7, 5), (3, 1, 1, 2, 3)] {
            let g = ConvGeom { c_in: 3, c_out: 4, h, w, k, stride, pad };
            let x: Vec<f64> = (0..3 * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let w: Vec<f64> = (0..4 * 3 * k * k).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
            let b = vec![0.5, -0.25, 1.0, 0.0];
            let mut out = vec![0.0; 4 * g.h_out() * g.w_out()];
            let cols = forward(&g, 1, &x, &w, Some(&b), &mut out);
            let go: Vec<f64> = (0..out.len()).map(|i| (i % 5) as f64 - 2.0).collect();
            let mut dx = vec![0.0; x.len()];
            backward(&g, 1, &x, &cols, &w, &go, Some(&mut dx), None, None);
            // <dx, x> == <go, W x> since the map is linear in x
            let mut wx = vec![0.0; out.len()];
            forward(&g, 1, &x, &w, None, &mut wx);
            let lhs: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
            let rhs: f64 = go.iter().zip(&wx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
            let want = direct(&g, &x, &w, &b);
            for (a, e) in out.iter().zip(&want) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        let g = ConvGeom { c_in: 1, c_out: 1, h: 16, w: 16, k: 3, stride: 2, pad: 1 };
        assert_eq!((g.h_out(), g.w_out()), (8, 8));
    }
}
