//! Serial / parallel dispatch for the data-parallel loops.
//!
//! Every parallel loop in the crate maps independent items to owned results
//! and collects them in index order, so the reduction that follows is the same
//! sequence of floating-point operations under either strategy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Uses rayon when the `parallel` feature is on; serial otherwise.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel; output order is index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let serial = Execution::Serial.map_range(1000, |i| i * 3);
        let parallel = Execution::Parallel.map_range(1000, |i| i * 3);
        assert_eq!(serial, parallel);
        assert_eq!(serial[999], 2997);
    }
}
