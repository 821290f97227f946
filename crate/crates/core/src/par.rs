//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these fan out over rayon's
//! global pool; without it they run on the calling thread. Both paths
//! return results in input order, so reductions over the output are
//! independent of the thread count.

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` when the crate was built with rayon, `Sequential` otherwise.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Maps `f` over `0..len`, returning results in index order.
pub fn map_indices<T, F>(exec: Exec, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..len).into_par_iter().map(f).collect()
        }
        _ => (0..len).map(f).collect(),
    }
}

/// Maps `f` over a slice, returning results in slice order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indices(exec, items.len(), |i| f(&items[i]))
}

/// Fallible variant of [`map_indices`]; the first error in index order wins.
pub fn try_map_indices<T, E, F>(exec: Exec, len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(exec, len, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_order() {
        let seq = map_indices(Exec::Sequential, 100, |i| i * i);
        let par = map_indices(Exec::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn first_error_in_order_is_reported() {
        let r: Result<Vec<usize>, usize> =
            try_map_indices(Exec::Parallel, 50, |i| if i % 10 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
