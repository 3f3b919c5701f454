//! Data-parallel map over independent work items.
//!
//! Sample batches and benchmark sweeps are embarrassingly parallel; rayon is
//! used when the `parallel` feature (default) is enabled, with a sequential
//! fallback otherwise. Output order always matches input order, so results
//! are identical across parallelism levels. The rayon pool honors
//! `RAYON_NUM_THREADS`.

/// Map `f` over `items`, in parallel when built with the `parallel` feature.
pub fn maybe_par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map with the same shape as [`maybe_par_map`]; the criterion
/// bench compares the two directly.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}
