//! Few-shot episode machinery: synthetic and pool-sampled episodes, baseline
//! embeddings, nearest-centroid classification, and per-episode evaluation
//! with aggregation.

mod baseline;
mod bench;
mod classify;
mod episode;

pub use baseline::{baseline_embed, Baseline};
pub use bench::{
    aggregate, evaluate_episode, run_benchmark, AggregateStats, BenchConfig, EpisodeResult, Method,
};
pub use classify::{simpleshot_classify, ClassifierMetric};
pub use episode::{
    sample_episode, synth_episode, synth_pool, Episode, EpisodeSource, PoolSource, SyntheticParams,
    SyntheticSource,
};
