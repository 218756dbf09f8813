//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop here partitions work into independent lines (grid rows
//! or columns) and never reduces floating-point values across threads, so the
//! parallel and sequential paths produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to [`Execution::Sequential`].
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Runs `f(line, a_chunk, b_chunk)` for every pair of matching chunks.
pub(crate) fn for_each_line2<A, B, F>(
    exec: Execution,
    a: &mut [A],
    a_len: usize,
    b: &mut [B],
    b_len: usize,
    f: F,
) where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync + Send,
{
    debug_assert_eq!(a.len() / a_len, b.len() / b_len);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(a_len)
            .zip(b.par_chunks_mut(b_len))
            .enumerate()
            .for_each(|(l, (ca, cb))| f(l, ca, cb));
        return;
    }
    let _ = exec;
    a.chunks_mut(a_len)
        .zip(b.chunks_mut(b_len))
        .enumerate()
        .for_each(|(l, (ca, cb))| f(l, ca, cb));
}

/// Fills `out` chunk by chunk with `f(line, chunk)`.
pub(crate) fn for_each_line<A, F>(exec: Execution, out: &mut [A], len: usize, f: F)
where
    A: Send,
    F: Fn(usize, &mut [A]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(len)
            .enumerate()
            .for_each(|(l, c)| f(l, c));
        return;
    }
    let _ = exec;
    out.chunks_mut(len).enumerate().for_each(|(l, c)| f(l, c));
}

/// Sum of `f(line)` over `lines`, with per-line partials combined in order.
pub(crate) fn sum_lines<F>(exec: Execution, lines: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut partial = vec![0.0; lines];
    for_each_line(exec, &mut partial, 1, |l, p| p[0] = f(l));
    partial.iter().sum()
}
