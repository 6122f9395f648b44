use crate::scalar::Real;

/// Separable "valid" correlation of each plane with `kernel ⊗ kernel`.
pub(crate) fn forward<T: Real>(planes: usize, h: usize, w: usize, kernel: &[T], x: &[T], out: &mut [T]) {
    let k = kernel.len();
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![T::ZERO; h * wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for ox in 0..wo {
                let mut acc = T::ZERO;
                for (j, &kv) in kernel.iter().enumerate() {
                    acc += kv * line[ox + j];
                }
                tmp[y * wo + ox] = acc;
            }
        }
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        dst.fill(T::ZERO);
        for oy in 0..ho {
            let d = &mut dst[oy * wo..(oy + 1) * wo];
            for (j, &kv) in kernel.iter().enumerate() {
                let t = &tmp[(oy + j) * wo..(oy + j + 1) * wo];
                for (dv, &tv) in d.iter_mut().zip(t) {
                    *dv += kv * tv;
                }
            }
        }
    }
}

pub(crate) fn backward<T: Real>(planes: usize, h: usize, w: usize, kernel: &[T], grad_out: &[T], dx: &mut [T]) {
    let k = kernel.len();
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![T::ZERO; h * wo];
    for p in 0..planes {
        let go = &grad_out[p * ho * wo..(p + 1) * ho * wo];
        tmp.fill(T::ZERO);
        for oy in 0..ho {
            let g = &go[oy * wo..(oy + 1) * wo];
            for (j, &kv) in kernel.iter().enumerate() {
                let t = &mut tmp[(oy + j) * wo..(oy + j + 1) * wo];
                for (tv, &gv) in t.iter_mut().zip(g) {
                    *tv += kv * gv;
                }
            }
        }
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &mut d[y * w..(y + 1) * w];
            for ox in 0..wo {
                let g = tmp[y * wo + ox];
                for (j, &kv) in kernel.iter().enumerate() {
                    line[ox + j] += kv * g;
                }
            }
        }
    }
}
