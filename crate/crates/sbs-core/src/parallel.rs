//! Execution-mode switch for the data-parallel stages (seed refinement,
//! separatrix tracing, sweep samples).
//!
//! With the `parallel` feature (default) work runs on rayon; without it, or
//! with `ExecMode::Sequential`, everything stays on one thread. Results are
//! collected in input order either way, so outputs are identical bit for bit
//! across modes and thread counts.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for ExecMode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecMode::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Sequential
        }
    }
}

/// Order-preserving map over a slice, parallel when the mode allows it.
pub fn map_items<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Rayon => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
    }
}

/// Order-preserving indexed map.
pub fn map_indices<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Rayon => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_default_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map_items(ExecMode::Sequential, &items, |x| x * x + 1);
        let b = map_items(ExecMode::default(), &items, |x| x * x + 1);
        assert_eq!(a, b);
        let c = map_indices(ExecMode::default(), 100, |i| i as f64 * 0.5);
        assert_eq!(c[3], 1.5);
    }
}
