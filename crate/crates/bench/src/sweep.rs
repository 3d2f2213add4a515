//! Memory sweeps over methods, budgets, query modes and seeds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use optlcms::optimizer::epsilon_for_budget;
use optlcms::{
    build_plain_cms, build_single_threshold_lcms, BuildConfig, FrequencyEstimator,
    FrequencyRankScorer, OptLcms, PlainCms, QueryModel, ScoreOracle, Stream,
};

use crate::error::{BenchError, Result};
use crate::eval::{run_eval, EvalReport};
use crate::workload::StreamSpec;

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "memory_bytes",
    "query_mode",
    "seed",
    "epsilon",
    "intolerable_prob",
    "mean_error",
    "build_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cms,
    Lcms,
    OptLcms,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cms, Method::Lcms, Method::OptLcms];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cms => "cms",
            Method::Lcms => "lcms",
            Method::OptLcms => "optlcms",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected cms, lcms or optlcms)"))
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub memory_list: Vec<usize>,
    pub spec: StreamSpec,
    pub query_modes: Vec<QueryModel>,
    pub seeds: Vec<u64>,
    /// Leading fraction of the stream the scorer is trained on.
    pub train_fraction: f64,
    /// Shared builder settings; query model and seed are set per cell.
    pub build: BuildConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: Method::ALL.to_vec(),
            memory_list: vec![100_000, 250_000, 500_000, 1_000_000, 2_000_000, 4_000_000],
            spec: StreamSpec::default(),
            query_modes: QueryModel::ALL.to_vec(),
            seeds: (0..20).collect(),
            train_fraction: 0.2,
            build: BuildConfig::default(),
        }
    }
}

/// A loaded stream with its exact profile and trained scorer.
pub struct Workload {
    pub stream: Stream,
    pub oracle: Arc<FrequencyRankScorer>,
}

impl Workload {
    pub fn new(stream: Stream, train_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(BenchError::Usage(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let train_len = ((stream.len() as f64 * train_fraction).round() as usize).max(1);
        let oracle = Arc::new(FrequencyRankScorer::train(stream.prefix(train_len))?);
        Ok(Workload { stream, oracle })
    }

    pub fn load(spec: &StreamSpec, train_fraction: f64) -> Result<Self> {
        Self::new(spec.load()?, train_fraction)
    }
}

/// A structure built by one of the compared methods.
pub enum Built {
    Cms(PlainCms),
    Lcms(OptLcms<Arc<FrequencyRankScorer>>),
    OptLcms(OptLcms<Arc<FrequencyRankScorer>>),
}

impl Built {
    pub fn method(&self) -> Method {
        match self {
            Built::Cms(_) => Method::Cms,
            Built::Lcms(_) => Method::Lcms,
            Built::OptLcms(_) => Method::OptLcms,
        }
    }

    /// The score-routed structure behind either learned method.
    pub fn routed(&self) -> Option<&OptLcms<Arc<FrequencyRankScorer>>> {
        match self {
            Built::Cms(_) => None,
            Built::Lcms(s) | Built::OptLcms(s) => Some(s),
        }
    }

    /// `(width, depth)` of every sketch table.
    pub fn table_dims(&self) -> Vec<(usize, usize)> {
        match self {
            Built::Cms(c) => vec![(c.table().width(), c.table().depth())],
            Built::Lcms(s) | Built::OptLcms(s) => {
                s.tables().iter().map(|t| (t.width(), t.depth())).collect()
            }
        }
    }

    pub fn unique_keys(&self) -> usize {
        self.routed().map_or(0, |s| s.unique_bucket().len())
    }
}

impl FrequencyEstimator for Built {
    fn insert(&mut self, key: &[u8], count: u64) {
        match self {
            Built::Cms(c) => c.insert(key, count),
            Built::Lcms(s) | Built::OptLcms(s) => s.insert(key, count),
        }
    }

    fn estimate(&self, key: &[u8]) -> u64 {
        match self {
            Built::Cms(c) => c.estimate(key),
            Built::Lcms(s) | Built::OptLcms(s) => s.estimate(key),
        }
    }

    fn memory_bytes(&self) -> usize {
        match self {
            Built::Cms(c) => c.memory_bytes(),
            Built::Lcms(s) | Built::OptLcms(s) => s.memory_bytes(),
        }
    }
}

/// Per-cell builder settings: the shared config with this cell's query
/// model and seed.
pub fn cell_config(base: &BuildConfig, mode: QueryModel, seed: u64) -> BuildConfig {
    BuildConfig {
        query_model: mode,
        seed,
        ..base.clone()
    }
}

/// Builds one method under the budget and returns it with its
/// construction time: parameter search, table allocation and insertion,
/// not the scorer's training.
pub fn build_method(
    method: Method,
    workload: &Workload,
    budget: usize,
    config: &BuildConfig,
) -> Result<(Built, f64)> {
    let stream = &workload.stream;
    let started = Instant::now();
    let built = match method {
        Method::Cms => Built::Cms(build_plain_cms(stream, budget, config)?.0),
        Method::Lcms => Built::Lcms(
            build_single_threshold_lcms(stream, workload.oracle.clone(), budget, config)?.0,
        ),
        Method::OptLcms => Built::OptLcms(OptLcms::build(
            workload.oracle.clone(),
            stream,
            budget,
            config,
        )?),
    };
    Ok((built, started.elapsed().as_secs_f64()))
}

/// Replays the workload's queries against a built structure.
pub fn evaluate(
    built: &Built,
    workload: &Workload,
    budget: usize,
    config: &BuildConfig,
    build_seconds: f64,
) -> EvalReport {
    let epsilon = config
        .epsilon
        .unwrap_or_else(|| epsilon_for_budget(budget, config.counter_bytes));
    let metrics = run_eval(
        built,
        &workload.stream.unique_counts(),
        config.query_model,
        epsilon,
    );
    let plan = match built {
        Built::OptLcms(s) => Some(s),
        _ => None,
    };
    EvalReport {
        method: built.method().as_str().into(),
        memory_bytes: built.memory_bytes(),
        model_bytes: built.routed().map_or(0, |s| s.oracle().footprint_bytes()),
        epsilon,
        intolerable_prob: metrics.intolerable_prob,
        mean_error: metrics.mean_error,
        build_seconds,
        seed: config.seed,
        query_mode: config.query_model,
        predicted_ub_keys: plan.map(|s| s.plan().ub_keys),
        realized_ub_keys: plan.map(|s| s.unique_bucket().len() as u64),
        failure_bound: plan.map(|s| s.plan().objective()),
    }
}

/// One CSV row's worth: build, time and evaluate.
pub fn run_cell(
    method: Method,
    workload: &Workload,
    budget: usize,
    mode: QueryModel,
    seed: u64,
    base: &BuildConfig,
) -> Result<EvalReport> {
    let config = cell_config(base, mode, seed);
    let (built, seconds) = build_method(method, workload, budget, &config)?;
    Ok(evaluate(&built, workload, budget, &config, seconds))
}

/// Every (seed, mode, budget, method) cell, in that nesting order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &seed in &config.seeds {
        let workload = Workload::load(&config.spec.with_seed(seed), config.train_fraction)?;
        for &mode in &config.query_modes {
            for &budget in &config.memory_list {
                for &method in &config.methods {
                    reports.push(run_cell(
                        method,
                        &workload,
                        budget,
                        mode,
                        seed,
                        &config.build,
                    )?);
                }
            }
        }
    }
    Ok(reports)
}

pub fn write_csv<W: Write>(reports: &[EvalReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.memory_bytes.to_string(),
            r.query_mode.as_str().to_string(),
            r.seed.to_string(),
            r.epsilon.to_string(),
            r.intolerable_prob.to_string(),
            r.mean_error.to_string(),
            format!("{:.6}", r.build_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}
