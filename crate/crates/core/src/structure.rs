//! The assembled score-routed sketch and the two baselines it is measured
//! against, all behind [`FrequencyEstimator`].

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{UniqueBucket, DEFAULT_UB_BYTES};
use crate::optimizer::{
    sweep_ub_boundary, BudgetInputs, Destination, GroupPlan, PartitionPlan, DEFAULT_GROUPS,
};
use crate::score::{QueryModel, ScoreHistogram, ScoreOracle, DEFAULT_NUM_BINS};
use crate::sketch::{check_counter_bytes, CmsParams, SketchTable, DEFAULT_COUNTER_BYTES};
use crate::stream::Stream;

/// A frequency estimator with a byte-accounted footprint.
pub trait FrequencyEstimator {
    fn insert(&mut self, key: &[u8], count: u64);
    fn estimate(&self, key: &[u8]) -> u64;
    fn memory_bytes(&self) -> usize;
}

impl<O: ScoreOracle + ?Sized> ScoreOracle for Arc<O> {
    fn score(&self, key: &[u8]) -> f64 {
        (**self).score(key)
    }

    fn footprint_bytes(&self) -> usize {
        (**self).footprint_bytes()
    }
}

/// Construction settings shared by all three builders.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub max_groups: usize,
    pub num_bins: usize,
    pub query_model: QueryModel,
    pub counter_bytes: usize,
    pub ub_bytes: usize,
    /// Overrides the `e * b / M` default.
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Depths tried by the plain CMS search.
    pub cms_depths: Vec<usize>,
    /// Fractions of the budget the single-threshold baseline may spend on
    /// its unique bucket.
    pub lcms_ub_fractions: Vec<f64>,
    /// Depths tried by the single-threshold baseline.
    pub lcms_depths: Vec<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_groups: DEFAULT_GROUPS,
            num_bins: DEFAULT_NUM_BINS,
            query_model: QueryModel::Uniform,
            counter_bytes: DEFAULT_COUNTER_BYTES,
            ub_bytes: DEFAULT_UB_BYTES,
            epsilon: None,
            seed: 0,
            cms_depths: (1..=8).collect(),
            lcms_ub_fractions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            lcms_depths: vec![1, 2, 3, 4],
        }
    }
}

impl BuildConfig {
    pub fn budget_inputs(&self, memory_bytes: usize) -> BudgetInputs {
        let mut inputs = BudgetInputs::for_budget(memory_bytes, self.counter_bytes, self.ub_bytes);
        if let Some(eps) = self.epsilon {
            inputs.epsilon = eps;
        }
        inputs
    }
}

/// One configuration tried by an empirical parameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchVisit {
    pub label: String,
    pub memory_bytes: usize,
    pub mean_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchLog {
    pub visits: Vec<SearchVisit>,
    pub chosen: usize,
}

/// Query-weighted mean of `estimate - count` over the profile.
pub fn replay_mean_error<E: FrequencyEstimator + ?Sized>(
    estimator: &E,
    profile: &[(&[u8], u64)],
    model: QueryModel,
) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for &(key, count) in profile {
        let w = model.weight(count);
        weighted += w * estimator.estimate(key).saturating_sub(count) as f64;
        total += w;
    }
    if total > 0.0 {
        weighted / total
    } else {
        0.0
    }
}

/// A single Count-Min Sketch sized to the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainCms {
    table: SketchTable,
}

impl PlainCms {
    pub fn new(params: CmsParams, seed: u64) -> Self {
        PlainCms {
            table: SketchTable::new(params, seed),
        }
    }

    pub fn table(&self) -> &SketchTable {
        &self.table
    }
}

impl FrequencyEstimator for PlainCms {
    fn insert(&mut self, key: &[u8], count: u64) {
        self.table.update(key, count)
    }

    fn estimate(&self, key: &[u8]) -> u64 {
        self.table.estimate(key)
    }

    fn memory_bytes(&self) -> usize {
        self.table.memory_bytes()
    }
}

/// Grid search over depths, each using the whole budget
/// (`width = budget / (depth * b)`), keeping the lowest replayed mean error.
pub fn build_plain_cms(
    stream: &Stream,
    budget: usize,
    config: &BuildConfig,
) -> Result<(PlainCms, SearchLog)> {
    check_counter_bytes(config.counter_bytes)?;
    if budget < config.counter_bytes {
        return Err(Error::invalid(
            "budget",
            format!("{budget} bytes cannot hold one counter"),
        ));
    }
    let profile = stream.unique_counts();
    let mut log = SearchLog::default();
    let mut best: Option<(f64, PlainCms)> = None;
    for &depth in &config.cms_depths {
        let width = budget / (depth * config.counter_bytes);
        if width == 0 {
            continue;
        }
        let started = Instant::now();
        let mut cms = PlainCms::new(
            CmsParams::from_dims(width, depth, config.counter_bytes)?,
            config.seed,
        );
        for key in stream.iter() {
            cms.insert(key, 1);
        }
        let err = replay_mean_error(&cms, &profile, config.query_model);
        log.visits.push(SearchVisit {
            label: format!("depth={depth} width={width}"),
            memory_bytes: cms.memory_bytes(),
            mean_error: err,
            seconds: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            log.chosen = log.visits.len() - 1;
            best = Some((err, cms));
        }
    }
    let (_, cms) = best.ok_or_else(|| Error::invalid("cms_depths", "no depth fits the budget"))?;
    Ok((cms, log))
}

/// Score-routed sketch: a unique bucket for high scores and one CMS per
/// score group below it.
#[derive(Debug, Clone)]
pub struct OptLcms<O> {
    oracle: O,
    plan: PartitionPlan,
    tables: Vec<SketchTable>,
    ub: UniqueBucket,
    total: u64,
}

impl<O: ScoreOracle> OptLcms<O> {
    /// Optimises a plan for `stream` and inserts the stream into it.
    pub fn build(oracle: O, stream: &Stream, budget: usize, config: &BuildConfig) -> Result<Self> {
        let plan = Self::optimize(&oracle, &stream.unique_counts(), budget, config)?;
        let mut s = Self::with_plan(oracle, plan, config.seed)?;
        for key in stream.iter() {
            s.insert(key, 1);
        }
        Ok(s)
    }

    /// Histogram plus boundary sweep for a `(key, count)` profile.
    pub fn optimize(
        oracle: &O,
        profile: &[(&[u8], u64)],
        budget: usize,
        config: &BuildConfig,
    ) -> Result<PartitionPlan> {
        let hist = ScoreHistogram::build(
            oracle,
            profile.iter().copied(),
            config.query_model,
            config.num_bins,
        )?;
        sweep_ub_boundary(&hist, config.max_groups, &config.budget_inputs(budget))
    }

    /// Allocates empty tables for `plan`; table `g` draws its hashes from
    /// the `g`-th output of a generator seeded with `seed`.
    pub fn with_plan(oracle: O, plan: PartitionPlan, seed: u64) -> Result<Self> {
        if plan.thresholds.len() != plan.groups.len().max(1) {
            return Err(Error::invalid("plan", "needs one threshold per group"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tables = plan
            .groups
            .iter()
            .map(|g| {
                let params = CmsParams::from_dims(g.width, g.depth, plan.counter_bytes)?;
                Ok(SketchTable::new(params, rng.random()))
            })
            .collect::<Result<Vec<_>>>()?;
        let ub = UniqueBucket::new(plan.ub_bytes);
        Ok(OptLcms {
            oracle,
            plan,
            tables,
            ub,
            total: 0,
        })
    }

    pub(crate) fn from_parts(
        oracle: O,
        plan: PartitionPlan,
        tables: Vec<SketchTable>,
        ub: UniqueBucket,
        total: u64,
    ) -> Self {
        OptLcms {
            oracle,
            plan,
            tables,
            ub,
            total,
        }
    }

    pub fn route(&self, key: &[u8]) -> Destination {
        self.plan.route(self.oracle.score(key))
    }
}

impl<O> OptLcms<O> {
    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn tables(&self) -> &[SketchTable] {
        &self.tables
    }

    pub fn unique_bucket(&self) -> &UniqueBucket {
        &self.ub
    }

    /// Total multiset size inserted.
    pub fn total(&self) -> u64 {
        self.total
    }
}

impl<O: ScoreOracle> FrequencyEstimator for OptLcms<O> {
    fn insert(&mut self, key: &[u8], count: u64) {
        match self.route(key) {
            Destination::UniqueBucket => self.ub.insert(key, count),
            Destination::Group(g) => self.tables[g].update(key, count),
        }
        self.total = self.total.saturating_add(count);
    }

    fn estimate(&self, key: &[u8]) -> u64 {
        match self.route(key) {
            Destination::UniqueBucket => self.ub.query(key).unwrap_or(0),
            Destination::Group(g) => self.tables[g].estimate(key),
        }
    }

    /// Realised footprint: integer tables plus `c` bytes per key actually
    /// held by the unique bucket.
    fn memory_bytes(&self) -> usize {
        self.tables
            .iter()
            .map(SketchTable::memory_bytes)
            .sum::<usize>()
            + self.ub.memory_bytes()
    }
}

/// Single-threshold learned sketch: elements scoring at or above one
/// threshold are counted exactly, the rest share one CMS. Threshold and
/// depth are picked by replaying the stream for every grid point and keeping
/// the lowest mean error.
pub fn build_single_threshold_lcms<O: ScoreOracle + Clone>(
    stream: &Stream,
    oracle: O,
    budget: usize,
    config: &BuildConfig,
) -> Result<(OptLcms<O>, SearchLog)> {
    check_counter_bytes(config.counter_bytes)?;
    if budget < config.counter_bytes {
        return Err(Error::invalid(
            "budget",
            format!("{budget} bytes cannot hold one counter"),
        ));
    }
    if stream.is_empty() {
        return Err(Error::EmptyInput("stream"));
    }
    let profile = stream.unique_counts();
    let thresholds = candidate_thresholds(&oracle, &profile, budget, config);

    let mut log = SearchLog::default();
    let mut best: Option<(f64, OptLcms<O>)> = None;
    for cut in &thresholds {
        for &depth in &config.lcms_depths {
            let sketch_budget = budget - config.ub_bytes * cut.keys as usize;
            let width = sketch_budget / (depth * config.counter_bytes);
            if width == 0 {
                continue;
            }
            let started = Instant::now();
            let plan =
                single_threshold_plan(cut, width, depth, stream.len() as u64, budget, config);
            let mut s = OptLcms::with_plan(oracle.clone(), plan, config.seed)?;
            for key in stream.iter() {
                s.insert(key, 1);
            }
            let err = replay_mean_error(&s, &profile, config.query_model);
            log.visits.push(SearchVisit {
                label: format!(
                    "threshold={} ub_keys={} depth={depth} width={width}",
                    cut.score, cut.keys
                ),
                memory_bytes: s.memory_bytes(),
                mean_error: err,
                seconds: started.elapsed().as_secs_f64(),
            });
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                log.chosen = log.visits.len() - 1;
                best = Some((err, s));
            }
        }
    }
    let (_, s) = best.ok_or_else(|| Error::invalid("budget", "no threshold/depth pair fits"))?;
    Ok((s, log))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ThresholdCut {
    score: f64,
    keys: u64,
    mass: u64,
    query_mass: f64,
}

/// For every budget fraction, the lowest score threshold whose bucket
/// (all keys scoring at or above it) fits in that fraction.
fn candidate_thresholds<O: ScoreOracle>(
    oracle: &O,
    profile: &[(&[u8], u64)],
    budget: usize,
    config: &BuildConfig,
) -> Vec<ThresholdCut> {
    let mut scored: Vec<(f64, u64)> = profile.iter().map(|&(k, c)| (oracle.score(k), c)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_weight: f64 = scored
        .iter()
        .map(|&(_, c)| config.query_model.weight(c))
        .sum();

    // cumulative bucket contents at each distinct score, descending
    let mut levels: Vec<ThresholdCut> = Vec::new();
    let (mut keys, mut mass, mut weight) = (0u64, 0u64, 0f64);
    for (i, &(s, c)) in scored.iter().enumerate() {
        keys += 1;
        mass += c;
        weight += config.query_model.weight(c);
        if scored.get(i + 1).is_none_or(|next| next.0 < s) {
            levels.push(ThresholdCut {
                score: s,
                keys,
                mass,
                query_mass: weight / total_weight,
            });
        }
    }
    let empty = ThresholdCut {
        score: f64::INFINITY,
        keys: 0,
        mass: 0,
        query_mass: 0.0,
    };
    let mut cuts: Vec<ThresholdCut> = Vec::new();
    for &fraction in &config.lcms_ub_fractions {
        let max_keys = (fraction * budget as f64 / config.ub_bytes.max(1) as f64).floor() as u64;
        let cut = levels
            .iter()
            .take_while(|l| l.keys <= max_keys)
            .last()
            .copied()
            .unwrap_or(empty);
        if !cuts.iter().any(|c| c.score == cut.score) {
            cuts.push(cut);
        }
    }
    cuts
}

fn single_threshold_plan(
    cut: &ThresholdCut,
    width: usize,
    depth: usize,
    total_mass: u64,
    budget: usize,
    config: &BuildConfig,
) -> PartitionPlan {
    let epsilon = std::f64::consts::E / width as f64;
    let delta = (-(depth as f64)).exp();
    let query_mass = 1.0 - cut.query_mass;
    PartitionPlan {
        thresholds: vec![cut.score],
        groups: vec![GroupPlan {
            lower: f64::NEG_INFINITY,
            upper: cut.score,
            data_mass: total_mass - cut.mass,
            query_mass,
            epsilon,
            delta,
            width,
            depth,
        }],
        epsilon: config.budget_inputs(budget).epsilon,
        total_mass,
        budget_bytes: budget as f64,
        counter_bytes: config.counter_bytes,
        ub_bytes: config.ub_bytes,
        ub_keys: cut.keys,
        ub_mass: cut.mass,
        ub_query_mass: cut.query_mass,
        kl: 0.0,
        search_objective: delta * query_mass,
        diagnostics: None,
    }
}
