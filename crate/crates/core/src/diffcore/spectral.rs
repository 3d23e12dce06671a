//! Spectral normalization via power iteration.
//!
//! Weight tensors are viewed as a (rows x cols) matrix, rows = output
//! channels. `u` and `v` are persistent estimates of the top singular
//! vectors; they are updated by power iteration during training and treated
//! as constants by the backward pass, while the bilinear form
//! `sigma = u^T W v` itself is differentiated (quotient rule).

use super::scalar::Scalar;

/// Floor applied to degenerate singular-value estimates (zero weights).
pub const SIGMA_FLOOR: f64 = 1e-12;

fn normalize_in_place<T: Scalar>(v: &mut [T]) {
    let mut norm = T::ZERO;
    for &x in v.iter() {
        norm += x * x;
    }
    let norm = norm.sqrt();
    if norm.to_f64() > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// One or more power-iteration rounds: v <- norm(W^T u); u <- norm(W v).
pub fn power_iteration<T: Scalar>(
    w: &[T],
    rows: usize,
    cols: usize,
    u: &mut [T],
    v: &mut [T],
    n_iters: usize,
) {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(u.len(), rows);
    assert_eq!(v.len(), cols);
    for _ in 0..n_iters.max(1) {
        // v = W^T u
        v.fill(T::ZERO);
        for r in 0..rows {
            let ur = u[r];
            let row = &w[r * cols..(r + 1) * cols];
            for c in 0..cols {
                v[c] += ur * row[c];
            }
        }
        normalize_in_place(v);
        // u = W v
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = T::ZERO;
            for c in 0..cols {
                acc += row[c] * v[c];
            }
            u[r] = acc;
        }
        normalize_in_place(u);
    }
}

/// Estimated top singular value u^T W v, floored away from zero.
pub fn sigma_hat<T: Scalar>(w: &[T], rows: usize, cols: usize, u: &[T], v: &[T]) -> T {
    let mut sigma = T::ZERO;
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::ZERO;
        for c in 0..cols {
            acc += row[c] * v[c];
        }
        sigma += u[r] * acc;
    }
    sigma.smax(T::from_f64(SIGMA_FLOOR))
}

/// Normalizes `w` by its estimated spectral norm after `n_iters` power
/// iterations; `u` is updated in place and the internal `v` is returned so
/// callers can persist it.
pub fn spectral_normalize<T: Scalar>(
    w: &[T],
    rows: usize,
    cols: usize,
    u: &mut [T],
    n_iters: usize,
) -> (Vec<T>, Vec<T>, T) {
    let mut v = vec![T::ZERO; cols];
    power_iteration(w, rows, cols, u, &mut v, n_iters);
    let sigma = sigma_hat(w, rows, cols, u, &v);
    let normalized = w.iter().map(|&x| x / sigma).collect();
    (normalized, v, sigma)
}
