//! Argument definitions and subcommand implementations for the `nohub`
//! binary.
//!
//! Every flag can also be set through an environment variable named
//! `NOHUB_<FLAG>` (upper case, dashes as underscores). Arguments are fully
//! validated before any input is read or any output file is created.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nohub_core::affinity::SupportLabelInfo;
use nohub_core::fslbench::{
    synth_pool, AggregateStats, Baseline, BenchConfig, ClassifierMetric, EpisodeSource, Method, PoolSource,
    SyntheticParams, SyntheticSource,
};
use nohub_core::geometry::{FeatureMatrix, UNIT_NORM_TOL};
use nohub_core::hubness::{default_hub_threshold, hubness_report_with_threshold, Metric};
use nohub_core::nohub::{embed, NoHubConfig, Variant};
use nohub_core::Matrix;

use crate::formats::{self, FeatureTable, ResultRow};
use crate::parallel::{run_benchmark, with_threads};
use crate::CliError;

/// Class separation of the standard synthetic benchmark: 5-way 1-shot
/// episodes with 15 queries per class in 512 dimensions reach about 70%
/// L2 nearest-centroid accuracy.
pub const STANDARD_SEPARATION: f64 = 6.35;

#[derive(Debug, Parser)]
#[command(name = "nohub", version, about = "Hubness-reducing hyperspherical embeddings for few-shot episodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a labelled synthetic feature pool.
    Synth(SynthArgs),
    /// Embed the rows of a feature file onto the unit sphere.
    Embed(EmbedArgs),
    /// Benchmark embedding methods on few-shot episodes.
    Eval(EvalArgs),
    /// Report k-occurrence skewness and hub occurrence of a feature file.
    Hubness(HubnessArgs),
    /// Benchmark one noHub variant over a grid of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Nohub,
    NohubS,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Nohub => Variant::NoHub,
            VariantArg::NohubS => Variant::NoHubS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    None,
    L2,
    Cl2,
    Zn,
    Nohub,
    NohubS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::CosineDistance,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Alpha,
    Kappa,
    Epsilon,
}

/// Embedding hyperparameters shared by `embed`, `eval` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct NoHubArgs {
    /// Weight of the structure-preserving term.
    #[arg(long, env = "NOHUB_ALPHA", default_value_t = 0.2)]
    pub alpha: f64,
    /// Concentration of embedding similarities.
    #[arg(long, env = "NOHUB_KAPPA", default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, env = "NOHUB_PERPLEXITY", default_value_t = 45.0)]
    pub perplexity: f64,
    /// Optimizer iterations [default: 50 for nohub, 150 for nohub-s].
    #[arg(long, env = "NOHUB_ITERATIONS")]
    pub iterations: Option<usize>,
    #[arg(long, env = "NOHUB_LEARNING_RATE", default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Embedding dimensionality.
    #[arg(long, env = "NOHUB_DIM", default_value_t = 400)]
    pub dim: usize,
    /// Between-class support similarity multiplier (nohub-s only).
    #[arg(long, env = "NOHUB_EPSILON", default_value_t = 8.0)]
    pub epsilon: f64,
}

impl NoHubArgs {
    pub fn config(&self, variant: Variant, seed: u64) -> Result<NoHubConfig, CliError> {
        let base = NoHubConfig::for_variant(variant);
        let config = NoHubConfig {
            alpha: self.alpha,
            kappa: self.kappa,
            perplexity: self.perplexity,
            iterations: self.iterations.unwrap_or(base.iterations),
            learning_rate: self.learning_rate,
            dim: self.dim,
            epsilon: self.epsilon,
            seed,
            ..base
        };
        config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(config)
    }
}

/// Where episodes come from: a labelled pool file or the synthetic family.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Labelled feature pool; synthetic episodes are drawn when omitted.
    #[arg(long, env = "NOHUB_POOL")]
    pub pool: Option<PathBuf>,
    #[arg(long, env = "NOHUB_WAYS", default_value_t = 5)]
    pub ways: usize,
    /// Query rows per class.
    #[arg(long, env = "NOHUB_QUERIES", default_value_t = 15)]
    pub queries: usize,
    /// Feature dimensionality of synthetic episodes.
    #[arg(long, env = "NOHUB_FEATURE_DIM", default_value_t = 512)]
    pub feature_dim: usize,
    /// Norm of the synthetic class means.
    #[arg(long, env = "NOHUB_SEPARATION", default_value_t = STANDARD_SEPARATION)]
    pub separation: f64,
    /// Standard deviation of synthetic within-class noise.
    #[arg(long, env = "NOHUB_SPREAD", default_value_t = 1.0)]
    pub spread: f64,
}

/// Benchmark protocol shared by `eval` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    #[arg(long, env = "NOHUB_EPISODES", default_value_t = 500)]
    pub episodes: usize,
    /// Neighbourhood size for hubness metrics.
    #[arg(long = "k", env = "NOHUB_K", default_value_t = 5)]
    pub k: usize,
    #[arg(long, env = "NOHUB_CLASSIFIER", value_enum, default_value_t = ClassifierArg::Euclidean)]
    pub classifier: ClassifierArg,
    #[arg(long, env = "NOHUB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "NOHUB_THREADS", default_value_t = 0)]
    pub threads: usize,
}

impl ProtocolArgs {
    fn bench(&self) -> Result<BenchConfig, CliError> {
        if self.episodes < 1 {
            return Err(CliError::Validation("--episodes must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(CliError::Validation("--k must be at least 1".into()));
        }
        Ok(BenchConfig {
            classifier: match self.classifier {
                ClassifierArg::Euclidean => ClassifierMetric::Euclidean,
                ClassifierArg::Cosine => ClassifierMetric::Cosine,
            },
            k_hubness: self.k,
            hubness_metric: Metric::CosineDistance,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, env = "NOHUB_CLASSES", default_value_t = 20)]
    pub classes: usize,
    #[arg(long, env = "NOHUB_PER_CLASS", default_value_t = 50)]
    pub per_class: usize,
    /// Feature dimensionality.
    #[arg(long, alias = "feature-dim", env = "NOHUB_FEATURE_DIM", default_value_t = 512)]
    pub dim: usize,
    #[arg(long, env = "NOHUB_SEPARATION", default_value_t = STANDARD_SEPARATION)]
    pub separation: f64,
    #[arg(long, env = "NOHUB_SPREAD", default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, env = "NOHUB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file (`.bin`/`.nhub` for binary, CSV otherwise).
    #[arg(short, long, env = "NOHUB_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    /// Feature file (CSV or binary).
    #[arg(short, long, env = "NOHUB_INPUT")]
    pub input: PathBuf,
    /// Embedding output file.
    #[arg(short, long, env = "NOHUB_OUTPUT")]
    pub output: PathBuf,
    /// Loss trace CSV [default: <output stem>.loss.csv].
    #[arg(long, env = "NOHUB_TRACE")]
    pub trace: Option<PathBuf>,
    #[arg(long, env = "NOHUB_VARIANT", value_enum, default_value_t = VariantArg::Nohub)]
    pub variant: VariantArg,
    #[command(flatten)]
    pub nohub: NoHubArgs,
    #[arg(long, env = "NOHUB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Check that every output row has unit norm.
    #[arg(long, env = "NOHUB_VERIFY")]
    pub verify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, env = "NOHUB_METHODS", value_enum, value_delimiter = ',', default_value = "none,l2,cl2,zn,nohub,nohub-s")]
    pub methods: Vec<MethodArg>,
    #[arg(long, env = "NOHUB_SHOTS", value_delimiter = ',', default_value = "1")]
    pub shots: Vec<usize>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub nohub: NoHubArgs,
    /// Result table CSV.
    #[arg(short, long, env = "NOHUB_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct HubnessArgs {
    #[arg(short, long, env = "NOHUB_INPUT")]
    pub input: PathBuf,
    #[arg(long = "k", env = "NOHUB_K", default_value_t = 5)]
    pub k: usize,
    #[arg(long, env = "NOHUB_METRIC", value_enum, default_value_t = MetricArg::Cosine)]
    pub metric: MetricArg,
    /// Points with more than this many occurrences are hubs [default: 2k].
    #[arg(long, env = "NOHUB_HUB_THRESHOLD")]
    pub hub_threshold: Option<usize>,
    /// Report CSV; printed to stdout when omitted.
    #[arg(short, long, env = "NOHUB_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, env = "NOHUB_PARAM", value_enum)]
    pub param: SweepParam,
    #[arg(long, env = "NOHUB_VALUES", value_delimiter = ',', num_args = 0..)]
    pub values: Vec<f64>,
    #[arg(long, env = "NOHUB_VARIANT", value_enum, default_value_t = VariantArg::Nohub)]
    pub variant: VariantArg,
    #[arg(long, env = "NOHUB_SHOTS", default_value_t = 1)]
    pub shots: usize,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub nohub: NoHubArgs,
    #[arg(short, long, env = "NOHUB_OUTPUT")]
    pub output: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Embed(a) => cmd_embed(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Hubness(a) => cmd_hubness(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn header(command: &str, args: &impl std::fmt::Debug, extra: &[String]) -> Vec<String> {
    let mut lines = vec![
        format!("nohub {} {command}", env!("CARGO_PKG_VERSION")),
        format!("args: {args:?}"),
    ];
    lines.extend_from_slice(extra);
    lines
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    SyntheticParams {
        ways: a.classes,
        shots: a.per_class,
        queries: 1,
        dim: a.dim,
        separation: a.separation,
        within_spread: a.spread,
    }
    .validate()
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let (x, y) = synth_pool(a.classes, a.per_class, a.dim, a.separation, a.spread, a.seed)?;
    let table = FeatureTable {
        x,
        labels: Some(y.into_iter().map(|l| l as i64).collect()),
    };
    formats::write_features(&a.output, &table, &header("synth", a, &[]))?;
    Ok(())
}

pub fn cmd_embed(a: &EmbedArgs) -> Result<(), CliError> {
    let variant = Variant::from(a.variant);
    let config = a.nohub.config(variant, a.seed)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| formats::trace_path_for(&a.output));

    let table = formats::read_features(&a.input)?;
    let info = match (variant, &table.labels) {
        (Variant::NoHubS, None) => {
            return Err(CliError::Validation(format!(
                "--variant nohub-s needs a label column in {}",
                a.input.display()
            )))
        }
        (Variant::NoHubS, Some(labels)) => {
            Some(SupportLabelInfo::from_signed(labels).map_err(|e| CliError::Validation(e.to_string()))?)
        }
        (Variant::NoHub, _) => None,
    };
    let x = FeatureMatrix::new(table.x)?;
    let res = embed(&x, &config, info.as_ref())?;
    if res.init_padded {
        eprintln!("warning: the data has fewer informative directions than --dim; the rest start at zero");
    }
    if !res.kappas.all_converged() {
        let missed = res.kappas.converged.iter().filter(|c| !**c).count();
        eprintln!("warning: perplexity calibration did not converge for {missed} rows");
    }
    if a.verify {
        verify_unit_rows(&res.embeddings)?;
        eprintln!("verified: {} rows have unit norm", res.embeddings.rows());
    }

    let comments = header("embed", a, &[format!("config: {config:?}")]);
    let out = FeatureTable {
        x: res.embeddings.into_inner(),
        labels: table.labels,
    };
    formats::write_features(&a.output, &out, &comments)?;
    formats::write_loss_trace(&trace_path, &res.loss_trace, &comments)?;
    Ok(())
}

fn verify_unit_rows(z: &Matrix) -> Result<(), CliError> {
    for (i, row) in z.iter_rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(CliError::Runtime(format!("row {i} has norm {norm}")));
        }
    }
    Ok(())
}

/// Rows and class indices of a labelled pool file.
struct Pool {
    x: Matrix,
    y: Vec<usize>,
}

impl SourceArgs {
    fn validate(&self, shots: &[usize]) -> Result<(), CliError> {
        for &s in shots {
            SyntheticParams {
                ways: self.ways,
                shots: s,
                queries: self.queries,
                dim: self.feature_dim,
                separation: self.separation,
                within_spread: self.spread,
            }
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        }
        Ok(())
    }

    fn load(&self) -> Result<Option<Pool>, CliError> {
        let Some(path) = &self.pool else { return Ok(None) };
        let table = formats::read_features(path)?;
        let labels = table
            .labels
            .ok_or_else(|| CliError::Validation(format!("pool {} has no label column", path.display())))?;
        let y = labels
            .iter()
            .map(|&l| usize::try_from(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Validation(format!("pool {} has unlabelled rows", path.display())))?;
        Ok(Some(Pool { x: table.x, y }))
    }

    fn benchmark(
        &self,
        pool: Option<&Pool>,
        shots: usize,
        method: &Method,
        protocol: &ProtocolArgs,
    ) -> Result<AggregateStats, CliError> {
        let bench = protocol.bench()?;
        let run = |source: &(dyn EpisodeSource + Sync)| {
            with_threads(protocol.threads, || run_benchmark(source, method, &bench, protocol.episodes))
        };
        let stats = match pool {
            Some(p) => run(&PoolSource {
                x: &p.x,
                y: &p.y,
                ways: self.ways,
                shots,
                queries: self.queries,
                seed: protocol.seed,
            })?,
            None => run(&SyntheticSource {
                params: SyntheticParams {
                    ways: self.ways,
                    shots,
                    queries: self.queries,
                    dim: self.feature_dim,
                    separation: self.separation,
                    within_spread: self.spread,
                },
                seed: protocol.seed,
            })?,
        }?;
        Ok(stats.0)
    }
}

fn row(method: &str, variant: String, shots: usize, s: &AggregateStats, seed: u64) -> ResultRow {
    ResultRow {
        method: method.into(),
        variant,
        shots,
        accuracy_mean: s.mean_accuracy,
        accuracy_ci: s.ci95_halfwidth,
        sk_mean: s.mean_skewness,
        ho_mean: s.mean_hub_occurrence,
        episodes: s.episode_count,
        seed,
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    if a.methods.is_empty() {
        return Err(CliError::Validation("--methods must name at least one method".into()));
    }
    if a.shots.is_empty() {
        return Err(CliError::Validation("--shots must list at least one value".into()));
    }
    a.source.validate(&a.shots)?;
    a.protocol.bench()?;
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|m| {
            Ok(match m {
                MethodArg::None => Method::Baseline(Baseline::None),
                MethodArg::L2 => Method::Baseline(Baseline::L2),
                MethodArg::Cl2 => Method::Baseline(Baseline::CL2),
                MethodArg::Zn => Method::Baseline(Baseline::ZN),
                MethodArg::Nohub => Method::NoHub(a.nohub.config(Variant::NoHub, a.protocol.seed)?),
                MethodArg::NohubS => Method::NoHub(a.nohub.config(Variant::NoHubS, a.protocol.seed)?),
            })
        })
        .collect::<Result<_, CliError>>()?;

    let pool = a.source.load()?;
    let mut rows = Vec::new();
    for &shots in &a.shots {
        for method in &methods {
            let stats = a.source.benchmark(pool.as_ref(), shots, method, &a.protocol)?;
            rows.push(row(method.name(), "default".into(), shots, &stats, a.protocol.seed));
        }
    }
    let configs: Vec<String> = methods
        .iter()
        .filter_map(|m| match m {
            Method::NoHub(c) => Some(format!("config {}: {c:?}", m.name())),
            Method::Baseline(_) => None,
        })
        .collect();
    formats::write_result_table(&a.output, &rows, &header("eval", a, &configs))?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    if a.values.is_empty() {
        return Err(CliError::Validation("--values must list at least one grid value".into()));
    }
    a.source.validate(&[a.shots])?;
    a.protocol.bench()?;
    let variant = Variant::from(a.variant);
    let base = a.nohub.config(variant, a.protocol.seed)?;
    let (name, configs) = sweep_configs(&base, a.param, &a.values)?;

    let pool = a.source.load()?;
    let mut rows = Vec::new();
    for (value, config) in a.values.iter().zip(configs) {
        let method = Method::NoHub(config);
        let stats = a.source.benchmark(pool.as_ref(), a.shots, &method, &a.protocol)?;
        rows.push(row(
            method.name(),
            format!("{name}={}", formats::format_f64(*value)),
            a.shots,
            &stats,
            a.protocol.seed,
        ));
    }
    let comments = header("sweep", a, &[format!("config: {base:?}")]);
    formats::write_result_table(&a.output, &rows, &comments)?;
    Ok(())
}

/// One validated configuration per grid value.
pub fn sweep_configs(
    base: &NoHubConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<(&'static str, Vec<NoHubConfig>), CliError> {
    let name = match param {
        SweepParam::Alpha => "alpha",
        SweepParam::Kappa => "kappa",
        SweepParam::Epsilon => "epsilon",
    };
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            match param {
                SweepParam::Alpha => c.alpha = v,
                SweepParam::Kappa => c.kappa = v,
                SweepParam::Epsilon => c.epsilon = v,
            }
            c.validate()
                .map_err(|e| CliError::Validation(format!("{name}={v}: {e}")))?;
            Ok(c)
        })
        .collect::<Result<_, CliError>>()?;
    Ok((name, configs))
}

pub fn cmd_hubness(a: &HubnessArgs) -> Result<(), CliError> {
    if a.k < 1 {
        return Err(CliError::Validation("--k must be at least 1".into()));
    }
    let table = formats::read_features(&a.input)?;
    let threshold = a.hub_threshold.unwrap_or_else(|| default_hub_threshold(a.k));
    let report = hubness_report_with_threshold(&table.x, a.k, a.metric.into(), threshold)?;
    let mut text = String::new();
    for line in header("hubness", a, &[]) {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str("n,k,hub_threshold,skewness,hub_occurrence\n");
    text.push_str(&format!(
        "{},{},{},{},{}\n",
        report.n,
        report.k,
        report.hub_threshold,
        formats::format_f64(report.skewness),
        formats::format_f64(report.hub_occurrence)
    ));
    match &a.output {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| crate::FormatError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let cli = Cli::try_parse_from(["nohub", "embed", "-i", "a.csv", "-o", "b.csv"]).unwrap();
        let Command::Embed(a) = cli.command else { panic!() };
        assert_eq!(a.nohub.config(Variant::NoHub, 0).unwrap(), NoHubConfig::nohub());
        assert_eq!(a.nohub.config(Variant::NoHubS, 0).unwrap(), NoHubConfig::nohub_s());
    }

    #[test]
    fn sweep_grid_builds_one_config_per_value() {
        let (name, configs) = sweep_configs(&NoHubConfig::nohub(), SweepParam::Alpha, &[0.0, 0.2, 0.5, 0.9, 1.0]).unwrap();
        assert_eq!(name, "alpha");
        assert_eq!(configs.len(), 5);
        assert_eq!(configs[3].alpha, 0.9);
        assert!(sweep_configs(&NoHubConfig::nohub(), SweepParam::Alpha, &[1.5]).is_err());
    }

    #[test]
    fn method_lists_parse() {
        let cli = Cli::try_parse_from(["nohub", "eval", "--methods", "none,nohub-s", "--shots", "1,5", "-o", "r.csv"]).unwrap();
        let Command::Eval(a) = cli.command else { panic!() };
        assert_eq!(a.methods, vec![MethodArg::None, MethodArg::NohubS]);
        assert_eq!(a.shots, vec![1, 5]);
    }
}
