//! Conditional data-parallel helpers.
//!
//! All reductions run over fixed-size blocks that are summed in index order,
//! so results are bit-identical whether the work runs sequentially or on a
//! rayon pool of any size. The `parallel` feature selects the default
//! execution path; the sequential variants are always available.

/// Items per reduction block. Fixed so block boundaries never depend on the
/// worker count.
const BLOCK: usize = 256;

/// Slices shorter than this are not worth scheduling.
const MIN_PARALLEL_LEN: usize = 256;

/// Ordered map over a slice, parallel when the `parallel` feature is enabled
/// and the slice is long enough to amortize scheduling.
pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= MIN_PARALLEL_LEN {
            return items.par_iter().map(f).collect();
        }
    }
    ordered_map_seq(items, f)
}

/// Ordered map on the current thread regardless of features.
pub fn ordered_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sum of `f(item)` over the slice with a fixed reduction order.
pub fn sum_ordered<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= MIN_PARALLEL_LEN {
            let partials: Vec<f64> = items
                .par_chunks(BLOCK)
                .map(|chunk| chunk.iter().map(&f).sum::<f64>())
                .collect();
            return partials.iter().sum();
        }
    }
    sum_ordered_seq(items, f)
}

/// Sequential counterpart of [`sum_ordered`] with identical block structure,
/// hence identical floating-point results.
pub fn sum_ordered_seq<T, F>(items: &[T], f: F) -> f64
where
    F: Fn(&T) -> f64,
{
    items
        .chunks(BLOCK)
        .map(|chunk| chunk.iter().map(&f).sum::<f64>())
        .sum()
}

/// Element-wise sum of per-item vectors of length `len`, accumulated per
/// block and combined in index order. `f` adds item contributions into the
/// provided accumulator.
pub fn sum_vectors<T, F>(items: &[T], len: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= MIN_PARALLEL_LEN {
            let partials: Vec<Vec<f64>> = items
                .par_chunks(BLOCK)
                .map(|chunk| {
                    let mut acc = vec![0.0; len];
                    for item in chunk {
                        f(item, &mut acc);
                    }
                    acc
                })
                .collect();
            let mut total = vec![0.0; len];
            for part in &partials {
                for (t, p) in total.iter_mut().zip(part) {
                    *t += *p;
                }
            }
            return total;
        }
    }
    sum_vectors_seq(items, len, f)
}

/// Sequential counterpart of [`sum_vectors`] with identical block structure.
pub fn sum_vectors_seq<T, F>(items: &[T], len: usize, f: F) -> Vec<f64>
where
    F: Fn(&T, &mut [f64]),
{
    let mut total = vec![0.0; len];
    for chunk in items.chunks(BLOCK) {
        let mut acc = vec![0.0; len];
        for item in chunk {
            f(item, &mut acc);
        }
        for (t, p) in total.iter_mut().zip(&acc) {
            *t += *p;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_sums_are_bit_identical() {
        // Values with enough spread that reduction order matters.
        let items: Vec<f64> = (0..10_000)
            .map(|i| ((i * 2654435761u64.wrapping_mul(i as u64 + 1) as usize) % 997) as f64 * 1e-7
                + (i as f64).sin() * 1e3)
            .collect();
        let a = sum_ordered(&items, |x| *x);
        let b = sum_ordered_seq(&items, |x| *x);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn vector_sums_are_bit_identical() {
        let items: Vec<f64> = (0..5_000).map(|i| (i as f64).cos() * 10.0).collect();
        let a = sum_vectors(&items, 3, |x, acc| {
            acc[0] += x;
            acc[1] += x * x;
            acc[2] += x.abs().sqrt();
        });
        let b = sum_vectors_seq(&items, 3, |x, acc| {
            acc[0] += x;
            acc[1] += x * x;
            acc[2] += x.abs().sqrt();
        });
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn ordered_map_preserves_order() {
        let items: Vec<usize> = (0..3_000).collect();
        let mapped = ordered_map(&items, |&i| i * 2);
        for (i, v) in mapped.iter().enumerate() {
            assert_eq!(*v, i * 2);
        }
    }
}
