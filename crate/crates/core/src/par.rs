//! Thin switch between rayon data-parallel loops and their sequential
//! fallbacks. With the `parallel` feature disabled the crate builds without
//! rayon and every helper runs serially; with it enabled the caller still
//! chooses per call, so benchmarks can compare both paths in one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub(crate) fn pmap<T, R, F>(parallel: bool, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Map `f` over chunks of `items` and concatenate the produced vectors.
pub(crate) fn pchunk_flat_map<T, R, F>(parallel: bool, items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Vec<R> + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_chunks(chunk).flat_map_iter(f).collect();
    }
    let _ = parallel;
    items.chunks(chunk).flat_map(&f).collect()
}

/// Unstable sort, parallel when available.
pub(crate) fn psort_u64(parallel: bool, items: &mut [u64]) {
    #[cfg(feature = "parallel")]
    if parallel {
        items.par_sort_unstable();
        return;
    }
    let _ = parallel;
    items.sort_unstable();
}
