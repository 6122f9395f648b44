//! Forward and backward kernels on raw slices. The tape owns shapes and
//! bookkeeping; these functions only do arithmetic.

pub(crate) mod conv;
pub(crate) mod filter;
pub(crate) mod norm;
pub(crate) mod resample;
pub(crate) mod tv;

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}
