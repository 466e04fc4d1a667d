//! Index-parallel map with a sequential fallback. Results always come back in
//! index order, so callers get the same output whichever path runs.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "FWSP_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

/// Thread cap from `FWSP_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
    }
}

/// `(0..n).map(f)` evaluated under `mode`.
pub fn map_indices<T, F>(n: usize, mode: ExecMode, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => Ok((0..n).map(f).collect()),
        ExecMode::Parallel => parallel_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    match thread_limit()? {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    thread_limit()?;
    Ok((0..n).map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = map_indices(1000, ExecMode::Parallel, f).unwrap();
        let b = map_indices(1000, ExecMode::Sequential, f).unwrap();
        assert_eq!(a, b);
    }
}
