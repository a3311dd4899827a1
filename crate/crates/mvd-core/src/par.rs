//! Execution-mode switch for embarrassingly parallel work (refinement
//! ladder levels). With the `parallel` feature the parallel path uses
//! rayon; without it only the sequential path exists.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    /// Parallel when compiled in, sequential otherwise.
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecMode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `0..count`, in index order in the result. This is the
/// fan-out used for ladder levels; it suits any set of independent
/// same-shaped runs (parameter sweeps, repeated trials).
pub fn map_indexed<R, F>(mode: ExecMode, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..count).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..count).into_par_iter().map(f).collect(),
    }
}
