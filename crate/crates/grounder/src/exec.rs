//! Data-parallel map with a sequential fallback.
//!
//! Work items (per-sample gradients, per-variant forwards, per-query metrics)
//! are independent and keyed by index, so parallel execution preserves both
//! order and bit-level determinism. Built without the `parallel` feature,
//! everything runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

/// Order-preserving indexed map over a slice.
pub fn map_indexed<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            return items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect();
        }
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..500).collect();
        let f = |i: usize, x: &u64| (i as u64).wrapping_mul(*x ^ 0x9e37);
        let seq = map_indexed(ExecMode::Sequential, &items, f);
        let par = map_indexed(ExecMode::Parallel, &items, f);
        assert_eq!(seq, par);

        let g = |i: usize| (i * i) as u64;
        assert_eq!(
            map_range(ExecMode::Sequential, 100, g),
            map_range(ExecMode::Parallel, 100, g)
        );
    }
}
