use alloc::boxed::Box;
use alloc::vec::Vec;

use super::baseline::{baseline_embed, Baseline};
use super::classify::{simpleshot_classify, ClassifierMetric};
use super::episode::{Episode, EpisodeSource};
use crate::affinity::SupportLabelInfo;
use crate::geometry::FeatureMatrix;
use crate::hubness::{hubness_report, HubnessReport, Metric};
use crate::math::sqrt;
use crate::nohub::{embed, NoHubConfig, Variant};
use crate::{Error, Result};

/// Embedding applied to an episode before classification.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Baseline(Baseline),
    /// Either variant, selected by `config.variant`.
    NoHub(NoHubConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline(b) => b.name(),
            Method::NoHub(c) => match c.variant {
                Variant::NoHub => "nohub",
                Variant::NoHubS => "nohub-s",
            },
        }
    }

    /// Embeds support and query rows jointly (support first).
    pub fn embed_episode(&self, ep: &Episode) -> Result<crate::Matrix> {
        let x = ep.all_features();
        match self {
            Method::Baseline(b) => baseline_embed(&x, *b),
            Method::NoHub(config) => {
                let info = SupportLabelInfo::support_then_query(&ep.support_y, ep.query_x.rows());
                let res = embed(&FeatureMatrix::new(x)?, config, Some(&info))?;
                Ok(res.embeddings.into_inner())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub classifier: ClassifierMetric,
    /// Neighbourhood size for the hubness metrics.
    pub k_hubness: usize,
    pub hubness_metric: Metric,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierMetric::Euclidean,
            k_hubness: 5,
            hubness_metric: Metric::CosineDistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// `correct / queries`
    pub accuracy: f64,
    pub hubness: HubnessReport,
    pub method: &'static str,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    pub mean_accuracy: f64,
    /// `1.96 · σ / √m` with the population standard deviation σ.
    pub ci95_halfwidth: f64,
    pub mean_skewness: f64,
    pub mean_hub_occurrence: f64,
    pub episode_count: usize,
}

/// Embeds one episode transductively, classifies its queries and measures
/// hubness over all embedded points.
pub fn evaluate_episode(ep: &Episode, method: &Method, bench: &BenchConfig) -> Result<EpisodeResult> {
    let z = method.embed_episode(ep)?;
    let ns = ep.support_x.rows();
    let support: Vec<usize> = (0..ns).collect();
    let query: Vec<usize> = (ns..z.rows()).collect();
    let predictions = simpleshot_classify(
        &z.select_rows(&support),
        &ep.support_y,
        &z.select_rows(&query),
        bench.classifier,
    )?;
    let correct = predictions.iter().zip(&ep.query_y).filter(|(p, y)| p == y).count();
    let hubness = hubness_report(&z, bench.k_hubness, bench.hubness_metric)?;
    Ok(EpisodeResult {
        accuracy: correct as f64 / ep.query_y.len() as f64,
        hubness,
        method: method.name(),
        predictions,
    })
}

/// Means and the 95% half-width of the accuracy.
pub fn aggregate(results: &[EpisodeResult]) -> Result<AggregateStats> {
    let m = results.len();
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "episodes",
            reason: "must be at least 1",
        });
    }
    let mf = m as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / mf;
    let mean_accuracy = mean(&|r| r.accuracy);
    let var = results.iter().map(|r| (r.accuracy - mean_accuracy) * (r.accuracy - mean_accuracy)).sum::<f64>() / mf;
    Ok(AggregateStats {
        mean_accuracy,
        ci95_halfwidth: 1.96 * sqrt(var) / sqrt(mf),
        mean_skewness: mean(&|r| r.hubness.skewness),
        mean_hub_occurrence: mean(&|r| r.hubness.hub_occurrence),
        episode_count: m,
    })
}

/// Evaluates episodes `0..episodes` from `source` in order and aggregates.
/// The first failing episode aborts the run and is reported with its seed.
pub fn run_benchmark<S: EpisodeSource + ?Sized>(
    source: &S,
    method: &Method,
    bench: &BenchConfig,
    episodes: usize,
) -> Result<AggregateStats> {
    let mut results = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let res = source
            .episode(i)
            .and_then(|ep| evaluate_episode(&ep, method, bench))
            .map_err(|e| Error::EpisodeFailed {
                index: i,
                seed: source.episode_seed(i),
                source: Box::new(e),
            })?;
        results.push(res);
    }
    aggregate(&results)
}
