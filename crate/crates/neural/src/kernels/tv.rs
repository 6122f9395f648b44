use crate::scalar::Real;

// Each pixel contributes two isotropic magnitudes: one from forward
// differences (zero past the last row/column) and one from backward
// differences (zero before the first). Pairing both keeps the sum invariant
// under transposition and 180 degree rotation.

#[inline]
fn at<T: Real>(x: &[T], w: usize, i: usize, j: usize) -> T {
    x[i * w + j]
}

/// Sum over pixels of the two smoothed gradient magnitudes of one plane.
pub(crate) fn plane_sum<T: Real>(h: usize, w: usize, x: &[T], eps: T) -> T {
    let mut acc = T::ZERO;
    for i in 0..h {
        for j in 0..w {
            let v = at(x, w, i, j);
            let fx = if j + 1 < w { at(x, w, i, j + 1) - v } else { T::ZERO };
            let fy = if i + 1 < h { at(x, w, i + 1, j) - v } else { T::ZERO };
            let bx = if j > 0 { v - at(x, w, i, j - 1) } else { T::ZERO };
            let by = if i > 0 { v - at(x, w, i - 1, j) } else { T::ZERO };
            acc += (fx * fx + fy * fy + eps).sqrt() + (bx * bx + by * by + eps).sqrt();
        }
    }
    acc
}

/// Adds `scale * d(plane_sum)/dx` into `dx`.
pub(crate) fn plane_grad<T: Real>(h: usize, w: usize, x: &[T], eps: T, scale: T, dx: &mut [T]) {
    for i in 0..h {
        for j in 0..w {
            let v = at(x, w, i, j);
            let fx = if j + 1 < w { at(x, w, i, j + 1) - v } else { T::ZERO };
            let fy = if i + 1 < h { at(x, w, i + 1, j) - v } else { T::ZERO };
            let f = scale / (fx * fx + fy * fy + eps).sqrt();
            dx[i * w + j] -= f * (fx + fy);
            if j + 1 < w {
                dx[i * w + j + 1] += f * fx;
            }
            if i + 1 < h {
                dx[(i + 1) * w + j] += f * fy;
            }
            let bx = if j > 0 { v - at(x, w, i, j - 1) } else { T::ZERO };
            let by = if i > 0 { v - at(x, w, i - 1, j) } else { T::ZERO };
            let b = scale / (bx * bx + by * by + eps).sqrt();
            dx[i * w + j] += b * (bx + by);
            if j > 0 {
                dx[i * w + j - 1] -= b * bx;
            }
            if i > 0 {
                dx[(i - 1) * w + j] -= b * by;
            }
        }
    }
}
