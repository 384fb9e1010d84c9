//! Halton low-discrepancy sequences for simulated maximum likelihood.

/// Prime bases, one per random coefficient dimension.
pub const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// The `index`-th element (1-based) of the Halton sequence in `base` via the
/// radical inverse; lies strictly inside (0, 1) for index >= 1.
pub fn halton(index: u64, base: u64) -> f64 {
    debug_assert!(base > 1);
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}
