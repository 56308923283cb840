//! Seeded comparison harness: for each seed, generate data, combine the base
//! models with every requested method, evaluate, and aggregate across seeds.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlcmError, Result};
use crate::metrics::{evaluate, EvalOptions, MetricReport};
use crate::mlcma::mlcm_a;
use crate::mlcmr::{bgcm_binary_relevance, mlcm_r};
use crate::synth::{generate, SynthSpec};
use crate::types::{average_predictions, ConsensusConfig, PredictionSet, ScoreMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mv")]
    Mv,
    #[serde(rename = "bgcm-br")]
    BgcmBr,
    #[serde(rename = "mlcm-r")]
    MlcmR,
    #[serde(rename = "mlcm-a")]
    MlcmA,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mv, Method::BgcmBr, Method::MlcmR, Method::MlcmA];

    pub fn id(self) -> &'static str {
        match self {
            Method::Mv => "mv",
            Method::BgcmBr => "bgcm-br",
            Method::MlcmR => "mlcm-r",
            Method::MlcmA => "mlcm-a",
        }
    }

    fn table_name(self) -> &'static str {
        match self {
            Method::Mv => "MV",
            Method::BgcmBr => "BGCM-BR",
            Method::MlcmR => "MLCM-r",
            Method::MlcmA => "MLCM-a",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = MlcmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| MlcmError::UnknownMethod(s.to_string()))
    }
}

/// Runs one combiner.
pub fn combine(method: Method, set: &PredictionSet, config: &ConsensusConfig) -> Result<ScoreMatrix> {
    match method {
        Method::Mv => {
            config.validate()?;
            Ok(average_predictions(set))
        }
        Method::BgcmBr => bgcm_binary_relevance(set, config),
        Method::MlcmR => mlcm_r(set, config),
        Method::MlcmA => mlcm_a(set, config),
    }
}

/// The four metric values, without bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub micro_auc: f64,
    pub one_error: f64,
    pub ranking_loss: f64,
    pub avg_precision: f64,
}

impl From<MetricReport> for MetricValues {
    fn from(r: MetricReport) -> Self {
        Self {
            micro_auc: r.micro_auc,
            one_error: r.one_error,
            ranking_loss: r.ranking_loss,
            avg_precision: r.avg_precision,
        }
    }
}

impl MetricValues {
    fn to_array(self) -> [f64; 4] {
        [self.micro_auc, self.one_error, self.ranking_loss, self.avg_precision]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            micro_auc: a[0],
            one_error: a[1],
            ranking_loss: a[2],
            avg_precision: a[3],
        }
    }

    fn mean_of(items: &[MetricValues]) -> Self {
        let mut acc = [0.0; 4];
        for v in items {
            for (a, x) in acc.iter_mut().zip(v.to_array()) {
                *a += x;
            }
        }
        Self::from_array(acc.map(|a| a / items.len() as f64))
    }

    /// Sample standard deviation (zero for fewer than two items).
    fn std_of(items: &[MetricValues], mean: &MetricValues) -> Self {
        if items.len() < 2 {
            return Self::default();
        }
        let mu = mean.to_array();
        let mut acc = [0.0; 4];
        for v in items {
            for ((a, x), m) in acc.iter_mut().zip(v.to_array()).zip(mu) {
                *a += (x - m) * (x - m);
            }
        }
        Self::from_array(acc.map(|a| (a / (items.len() - 1) as f64).sqrt()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Data spec; its `seed` is replaced by each entry of `seeds`.
    pub spec: SynthSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub consensus: ConsensusConfig,
    pub eval: EvalOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            spec: SynthSpec::default(),
            seeds: (1..=10).collect(),
            methods: Method::ALL.to_vec(),
            consensus: ConsensusConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `"bm"` for the base-model average, otherwise a method id.
    pub name: String,
    pub mean: MetricValues,
    pub std: MetricValues,
    /// Seeds that completed, in the order of `per_seed`.
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricValues>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub seed: u64,
    pub name: String,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
}

impl BenchReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Per-seed metric values of `name`, keyed by seed.
    pub fn seed_values(&self, name: &str, seed: u64) -> Option<MetricValues> {
        let row = self.row(name)?;
        row.seeds.iter().position(|&s| s == seed).map(|p| row.per_seed[p])
    }

    /// Markdown table, 4 decimals, mean ± std per metric.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| method | microAUC | one error | ranking loss | avg precision |\n");
        out.push_str("|---|---|---|---|---|\n");
        for row in &self.rows {
            let name = match row.name.parse::<Method>() {
                Ok(m) => m.table_name(),
                Err(_) => "BM",
            };
            let _ = write!(out, "| {name} ");
            for (m, s) in row.mean.to_array().into_iter().zip(row.std.to_array()) {
                let _ = write!(out, "| {m:.4} ± {s:.4} ");
            }
            out.push_str("|\n");
        }
        for f in &self.failures {
            let _ = writeln!(out, "\nFAILED seed {} {}: {} ({})", f.seed, f.name, f.message, f.kind);
        }
        out
    }
}

/// Results of a single seed: one entry per row name, `Err` on failure.
type SeedOutcome = Vec<(String, std::result::Result<MetricValues, (String, String)>)>;

fn run_seed(config: &BenchConfig, seed: u64) -> SeedOutcome {
    let spec = config.spec.with_seed(seed);
    let consensus = ConsensusConfig { seed, ..config.consensus.clone() };
    let fail = |e: MlcmError| (e.kind().to_string(), e.to_string());

    let (truth, set) = match generate(&spec) {
        Ok(data) => data,
        Err(e) => {
            let err = fail(e);
            return std::iter::once("bm".to_string())
                .chain(config.methods.iter().map(|m| m.id().to_string()))
                .map(|name| (name, Err(err.clone())))
                .collect();
        }
    };

    let mut out = Vec::with_capacity(config.methods.len() + 1);
    let bm = set
        .models()
        .iter()
        .map(|y| evaluate(&y.to_f64(), &truth, &config.eval).map(MetricValues::from))
        .collect::<Result<Vec<_>>>()
        .map(|per_model| MetricValues::mean_of(&per_model))
        .map_err(fail);
    out.push(("bm".to_string(), bm));

    for &method in &config.methods {
        let result = combine(method, &set, &consensus)
            .and_then(|scores| evaluate(&scores, &truth, &config.eval))
            .map(MetricValues::from)
            .map_err(fail);
        out.push((method.id().to_string(), result));
    }
    out
}

fn validate_bench(config: &BenchConfig) -> Result<()> {
    config.spec.validate()?;
    config.consensus.validate()?;
    if config.seeds.is_empty() {
        return Err(MlcmError::InvalidConfig("no seeds given".into()));
    }
    if config.methods.is_empty() {
        return Err(MlcmError::InvalidConfig("no methods given".into()));
    }
    Ok(())
}

/// Runs the benchmark on the current rayon pool. Seeds run in parallel; the
/// report is assembled in seed order so it does not depend on scheduling.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    validate_bench(config)?;
    let outcomes: Vec<(u64, SeedOutcome)> = config
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(config, seed)))
        .collect();

    let names: Vec<String> = std::iter::once("bm".to_string())
        .chain(config.methods.iter().map(|m| m.id().to_string()))
        .collect();
    let mut rows = Vec::with_capacity(names.len());
    let mut failures = Vec::new();
    for (idx, name) in names.iter().enumerate() {
        let mut seeds = Vec::new();
        let mut per_seed = Vec::new();
        for (seed, outcome) in &outcomes {
            match &outcome[idx].1 {
                Ok(v) => {
                    seeds.push(*seed);
                    per_seed.push(*v);
                }
                Err((kind, message)) => failures.push(BenchFailure {
                    seed: *seed,
                    name: name.clone(),
                    kind: kind.clone(),
                    message: message.clone(),
                }),
            }
        }
        let (mean, std) = if per_seed.is_empty() {
            let nan = MetricValues::from_array([f64::NAN; 4]);
            (nan, nan)
        } else {
            let mean = MetricValues::mean_of(&per_seed);
            (mean, MetricValues::std_of(&per_seed, &mean))
        };
        rows.push(BenchRow {
            name: name.clone(),
            mean,
            std,
            seeds,
            per_seed,
        });
    }
    failures.sort_by(|a, b| (a.seed, &a.name).cmp(&(b.seed, &b.name)));
    Ok(BenchReport {
        config: config.clone(),
        rows,
        failures,
    })
}

/// Runs the benchmark on a dedicated pool of `threads` workers.
pub fn run_bench_with_threads(config: &BenchConfig, threads: usize) -> Result<BenchReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| MlcmError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_bench(config))
}
