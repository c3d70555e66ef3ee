//! Serial / parallel execution switch.
//!
//! Every data-parallel loop in the crate goes through the helpers here so the
//! two code paths stay in one place. Work items are always evaluated
//! independently and collected in index order, which keeps parallel output
//! identical to serial output.

/// How data-parallel loops are evaluated.
///
/// Without the `parallel` feature, [`Execution::Parallel`] falls back to the
/// serial path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over a slice, returning results in input order.
    pub fn map_slice<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Sorts with a comparator that must be a total order on distinct keys,
    /// so stable and unstable sorts agree.
    pub fn sort_by<T, F>(self, items: &mut [T], cmp: F)
    where
        T: Send,
        F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            items.par_sort_unstable_by(cmp);
            return;
        }
        items.sort_unstable_by(cmp);
    }

    /// Reduces `f(i)` over `0..n` to the element minimal under `less`.
    /// `less` must be a strict total order so the result is schedule-independent.
    pub fn min_by_range<R, F, L>(self, n: usize, f: F, less: L) -> Option<R>
    where
        R: Send,
        F: Fn(usize) -> Option<R> + Sync + Send,
        L: Fn(&R, &R) -> bool + Sync + Send,
    {
        let pick = |a: Option<R>, b: Option<R>| match (a, b) {
            (Some(a), Some(b)) => Some(if less(&b, &a) { b } else { a }),
            (a, None) => a,
            (None, b) => b,
        };
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(&f).reduce(|| None, pick);
        }
        (0..n).map(f).fold(None, pick)
    }
}
