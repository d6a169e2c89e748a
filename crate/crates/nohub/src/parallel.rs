//! Episode-parallel benchmarking.
//!
//! Episodes are independent and each one is generated from its own derived
//! seed, so the aggregate is identical to the sequential
//! [`nohub_core::fslbench::run_benchmark`] whatever the thread count.

use nohub_core::fslbench::{aggregate, evaluate_episode, AggregateStats, BenchConfig, EpisodeResult, EpisodeSource, Method};
use nohub_core::{Error, Result};
use rayon::prelude::*;

use crate::CliError;

/// Evaluates episodes `0..episodes` on the current rayon pool. Results are
/// returned in episode order; the lowest-index failure is reported.
pub fn evaluate_episodes<S>(source: &S, method: &Method, bench: &BenchConfig, episodes: usize) -> Result<Vec<EpisodeResult>>
where
    S: EpisodeSource + Sync + ?Sized,
{
    let results: Vec<Result<EpisodeResult>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            source
                .episode(i)
                .and_then(|ep| evaluate_episode(&ep, method, bench))
                .map_err(|e| Error::EpisodeFailed {
                    index: i,
                    seed: source.episode_seed(i),
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}

/// Parallel counterpart of `run_benchmark`, also returning per-episode results.
pub fn run_benchmark<S>(
    source: &S,
    method: &Method,
    bench: &BenchConfig,
    episodes: usize,
) -> Result<(AggregateStats, Vec<EpisodeResult>)>
where
    S: EpisodeSource + Sync + ?Sized,
{
    let results = evaluate_episodes(source, method, bench, episodes)?;
    Ok((aggregate(&results)?, results))
}

/// Runs `f` on a dedicated pool with `threads` workers (0 means one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> std::result::Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
