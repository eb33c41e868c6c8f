//! Execution strategy for the data-parallel kernels.
//!
//! Every kernel that fans out over records (ingestion, scoring, overlap
//! matching, batched generation) takes an [`Exec`]. With the `parallel`
//! feature the default is [`Exec::Parallel`]; without it only the sequential
//! path exists. Both paths return results in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Exec::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Exec::Sequential;
    }
}

impl Exec {
    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Order-preserving map over an index range.
    pub fn map_range<U, F>(self, len: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..len).into_par_iter().map(f).collect(),
        }
    }

    /// Counts the items satisfying `pred`.
    pub fn count<T, F>(self, items: &[T], pred: F) -> usize
    where
        T: Sync,
        F: Fn(&T) -> bool + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().filter(|x| pred(x)).count(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().filter(|x| pred(x)).count(),
        }
    }

    /// Folds fixed-size chunks with `fold` and merges the partial results
    /// with the associative `merge`.
    pub fn fold_chunks<T, A, F, M>(self, items: &[T], chunk: usize, init: A, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Send + Sync + Clone,
        F: Fn(A, &[T]) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            Exec::Sequential => items
                .chunks(chunk)
                .fold(init.clone(), |acc, c| merge(acc, fold(init.clone(), c))),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items
                .par_chunks(chunk)
                .map(|c| fold(init.clone(), c))
                .reduce(|| init.clone(), &merge),
        }
    }

    pub fn is_parallel(self) -> bool {
        !matches!(self, Exec::Sequential)
    }
}
