//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always partitioned into the same chunks, and each chunk is
//! computed by a single closure invocation, so enabling or disabling
//! parallelism never changes results.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Toggle the rayon path at runtime. Has no effect without the `parallel`
/// feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Run `f(index, chunk)` over consecutive `chunk_len`-sized chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() && data.len() > chunk_len {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Ordered map over `0..count`.
pub fn map_indices<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() && count > 1 {
            use rayon::prelude::*;
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_everything_in_order() {
        let mut v = vec![0usize; 10];
        for_each_chunk_mut(&mut v, 3, |i, c| {
            for x in c.iter_mut() {
                *x = i;
            }
        });
        assert_eq!(v, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }

    #[test]
    fn map_indices_is_ordered() {
        let v = map_indices(50, |i| i * 2);
        assert_eq!(v, (0..50).map(|i| i * 2).collect::<Vec<_>>());
    }
}
