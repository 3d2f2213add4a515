//! Parameter optimisation for a score-partitioned sketch.
//!
//! For every candidate unique-bucket boundary the remaining score range is
//! partitioned by [`dp_partition`]; boundaries are ranked by the closed-form
//! bound `(1 - q_UB) * exp(-A) * exp(-KL)` and the best one is finalised by
//! [`solve_deltas`] and integer rounding.

mod divergence;
mod dp;
mod kkt;

use std::f64::consts::E;
use std::fmt::Write as _;

pub use divergence::{kl_objective, kl_term};
pub use dp::{dp_partition, memory_exponent, DpPartition, Feasibility};
pub use kkt::{
    continuous_memory, solve_deltas, weighted_failure, DeltaSolution, SolverDiagnostics,
};

use crate::error::{Error, Result};
use crate::score::{BoundarySplit, ScoreHistogram};
use crate::sketch::{ceil_tolerant, check_counter_bytes};

pub const DEFAULT_GROUPS: usize = 10;

/// Global knobs shared by every group: the allowable-error scale, the total
/// budget `M`, and the per-counter and per-key byte costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub epsilon: f64,
    pub memory_bytes: f64,
    pub counter_bytes: usize,
    pub ub_bytes: usize,
}

impl BudgetInputs {
    /// Inputs with `epsilon = e * b / M`, the finest error scale a single
    /// full-width row of the budget could support.
    pub fn for_budget(memory_bytes: usize, counter_bytes: usize, ub_bytes: usize) -> Self {
        BudgetInputs {
            epsilon: epsilon_for_budget(memory_bytes, counter_bytes),
            memory_bytes: memory_bytes as f64,
            counter_bytes,
            ub_bytes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(
                "epsilon",
                format!("{} must be positive", self.epsilon),
            ));
        }
        if !(self.memory_bytes > 0.0) {
            return Err(Error::invalid("memory_bytes", "must be positive"));
        }
        check_counter_bytes(self.counter_bytes)
    }
}

/// `e * b / M`: `M` counts bytes, so the counter size converts it to cells.
pub fn epsilon_for_budget(memory_bytes: usize, counter_bytes: usize) -> f64 {
    E * counter_bytes as f64 / memory_bytes as f64
}

/// `ceil(e / eps)`, at least 1.
pub fn table_width(epsilon: f64) -> usize {
    (ceil_tolerant(E / epsilon) as usize).max(1)
}

/// `max(1, ceil(ln(1 / delta)))`.
pub fn table_depth(delta: f64) -> usize {
    depth_for_log_delta(delta.ln())
}

fn depth_for_log_delta(log_delta: f64) -> usize {
    ceil_tolerant(-log_delta).max(1.0) as usize
}

/// Integer `(width, depth)` per group.
pub fn finalize_dims(deltas: &[f64], epsilons: &[f64]) -> Vec<(usize, usize)> {
    deltas
        .iter()
        .zip(epsilons)
        .map(|(&d, &e)| (table_width(e), table_depth(d)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    /// Lowest score served (informational; the first group also takes
    /// everything below it).
    pub lower: f64,
    /// Exclusive upper score.
    pub upper: f64,
    pub data_mass: u64,
    pub query_mass: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub width: usize,
    pub depth: usize,
}

/// Where an element is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Destination {
    Group(usize),
    UniqueBucket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// `t_1 < ... < t_G`; the last entry is the unique-bucket boundary and
    /// may be `+inf` when nothing is counted exactly. A plan without sketch
    /// groups has the single threshold `-inf`.
    pub thresholds: Vec<f64>,
    pub groups: Vec<GroupPlan>,
    pub epsilon: f64,
    pub total_mass: u64,
    pub budget_bytes: f64,
    pub counter_bytes: usize,
    pub ub_bytes: usize,
    pub ub_keys: u64,
    pub ub_mass: u64,
    pub ub_query_mass: f64,
    /// Divergence of the group partition.
    pub kl: f64,
    /// Bound used to rank boundaries during the search.
    pub search_objective: f64,
    pub diagnostics: Option<SolverDiagnostics>,
}

impl PartitionPlan {
    pub fn ub_boundary(&self) -> f64 {
        *self.thresholds.last().expect("plan has a boundary")
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.delta).collect()
    }

    pub fn query_masses(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.query_mass).collect()
    }

    /// Half-open interval routing: scores at or above `t_G` go to the unique
    /// bucket, scores in `[t_{g-1}, t_g)` to group `g`, and everything below
    /// `t_1` to the first group.
    pub fn route(&self, score: f64) -> Destination {
        let (&ub, interior) = self.thresholds.split_last().expect("plan has a boundary");
        if score >= ub || self.groups.is_empty() {
            return Destination::UniqueBucket;
        }
        Destination::Group(interior.partition_point(|&t| t <= score))
    }

    /// `sum_g delta_g * q_g`.
    pub fn objective(&self) -> f64 {
        evaluate_objective(self)
    }

    pub fn sketch_bytes(&self) -> usize {
        self.groups
            .iter()
            .map(|g| g.width * g.depth * self.counter_bytes)
            .sum()
    }

    /// Planned memory: integer sketch tables plus `c * n` for the predicted
    /// unique-bucket keys.
    pub fn memory_bytes(&self) -> usize {
        self.sketch_bytes() + self.ub_bytes * self.ub_keys as usize
    }

    /// Rounding slack tolerated above the nominal budget: one extra row per
    /// group.
    pub fn rounding_slack(&self) -> usize {
        self.groups
            .iter()
            .map(|g| g.width * self.counter_bytes)
            .sum()
    }

    /// Plain `key=value` dump.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "groups={}", self.groups.len());
        let _ = writeln!(
            out,
            "thresholds={}",
            join(&mut self.thresholds.iter().map(|t| t.to_string()))
        );
        let _ = writeln!(out, "ub_boundary={}", self.ub_boundary());
        let _ = writeln!(out, "epsilon={}", self.epsilon);
        let _ = writeln!(
            out,
            "allowable_error={}",
            self.epsilon * self.total_mass as f64
        );
        let _ = writeln!(out, "total_mass={}", self.total_mass);
        let _ = writeln!(out, "budget_bytes={}", self.budget_bytes);
        let _ = writeln!(out, "counter_bytes={}", self.counter_bytes);
        let _ = writeln!(out, "ub_bytes={}", self.ub_bytes);
        let _ = writeln!(out, "ub_keys={}", self.ub_keys);
        let _ = writeln!(out, "ub_mass={}", self.ub_mass);
        let _ = writeln!(out, "ub_query_mass={}", self.ub_query_mass);
        for (i, g) in self.groups.iter().enumerate() {
            let _ = writeln!(out, "group.{i}.range=[{},{})", g.lower, g.upper);
            let _ = writeln!(out, "group.{i}.data_mass={}", g.data_mass);
            let _ = writeln!(out, "group.{i}.query_mass={}", g.query_mass);
            let _ = writeln!(out, "group.{i}.epsilon={}", g.epsilon);
            let _ = writeln!(out, "group.{i}.delta={}", g.delta);
            let _ = writeln!(out, "group.{i}.width={}", g.width);
            let _ = writeln!(out, "group.{i}.depth={}", g.depth);
        }
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(out, "lambda={}", d.lambda);
            let _ = writeln!(
                out,
                "active_set={}",
                join(&mut d.active_set.iter().map(|g| g.to_string()))
            );
            let _ = writeln!(out, "log_term={}", d.log_term);
        }
        let _ = writeln!(out, "kl={}", self.kl);
        let _ = writeln!(out, "objective={}", self.objective());
        let _ = writeln!(out, "search_objective={}", self.search_objective);
        let _ = writeln!(out, "memory_bytes={}", self.memory_bytes());
        out
    }
}

/// `sum_g delta_g * q_g` over the plan's groups.
pub fn evaluate_objective(plan: &PartitionPlan) -> f64 {
    plan.groups
        .iter()
        .fold(0.0, |acc, g| acc + g.delta * g.query_mass)
}

/// The ranking bound `(1 - q_UB) * exp(-A) * exp(-KL)` for one boundary.
pub fn boundary_objective(
    hist: &ScoreHistogram,
    split: &BoundarySplit,
    inputs: &BudgetInputs,
    kl: f64,
) -> f64 {
    split.cms_query_mass * (-memory_exponent(hist, split, inputs) - kl).exp()
}

/// Searches every unique-bucket boundary, partitions the rest with the DP,
/// and returns the finalised plan with the smallest bound.
pub fn sweep_ub_boundary(
    hist: &ScoreHistogram,
    max_groups: usize,
    inputs: &BudgetInputs,
) -> Result<PartitionPlan> {
    inputs.validate()?;
    let hist = hist.merge_empty_bins();
    let bins = hist.num_bins();
    // boundary below every bin: nothing left to sketch, objective 0
    if inputs.ub_bytes as f64 * hist.total_keys() as f64 <= inputs.memory_bytes {
        return Ok(exact_plan(&hist, inputs));
    }
    let mut ranked: Vec<(f64, BoundarySplit, DpPartition)> = Vec::new();
    let mut last_err = None;
    for index in (1..=bins).rev() {
        let split = hist.split_at(index);
        let ub_cost = inputs.ub_bytes as f64 * split.ub_keys as f64;
        if ub_cost >= inputs.memory_bytes || split.cms_mass == 0 {
            continue;
        }
        match dp_partition(&hist, &split, max_groups, inputs, Feasibility::Checked) {
            Ok(dp) => {
                let objective = boundary_objective(&hist, &split, inputs, dp.kl);
                ranked.push((objective, split, dp));
            }
            Err(e) if e.is_infeasible() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (objective, split, dp) in &ranked {
        match finalize_plan(&hist, split, dp, inputs, *objective) {
            Ok(plan) => return Ok(plan),
            Err(e) if e.is_infeasible() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        Error::Infeasible(format!(
            "no unique-bucket boundary fits a budget of {} bytes",
            inputs.memory_bytes
        ))
    }))
}

/// Counts every key exactly; routes all scores to the unique bucket.
pub fn exact_plan(hist: &ScoreHistogram, inputs: &BudgetInputs) -> PartitionPlan {
    PartitionPlan {
        thresholds: vec![f64::NEG_INFINITY],
        groups: Vec::new(),
        epsilon: inputs.epsilon,
        total_mass: hist.total_mass(),
        budget_bytes: inputs.memory_bytes,
        counter_bytes: inputs.counter_bytes,
        ub_bytes: inputs.ub_bytes,
        ub_keys: hist.total_keys(),
        ub_mass: hist.total_mass(),
        ub_query_mass: 1.0,
        kl: 0.0,
        search_objective: 0.0,
        diagnostics: None,
    }
}

/// Turns a boundary and DP partition into a plan with exact deltas and
/// integer table shapes.
///
/// Deltas are solved against the rounded widths, so the continuous memory
/// equality already accounts for width rounding and the only overshoot left
/// is the depth ceiling (strictly less than one row per group).
pub fn finalize_plan(
    hist: &ScoreHistogram,
    split: &BoundarySplit,
    dp: &DpPartition,
    inputs: &BudgetInputs,
    search_objective: f64,
) -> Result<PartitionPlan> {
    let n_total = hist.total_mass();
    let allowable = inputs.epsilon * n_total as f64;
    let ranges = dp.ranges(split.index);
    let stats: Vec<_> = ranges
        .iter()
        .map(|&(lo, hi)| hist.group_stats(split, lo, hi))
        .collect();
    let epsilons: Vec<f64> = stats
        .iter()
        .map(|s| allowable / s.data_mass as f64)
        .collect();
    let widths: Vec<usize> = epsilons.iter().map(|&e| table_width(e)).collect();
    let effective: Vec<f64> = widths.iter().map(|&w| E / w as f64).collect();
    let queries: Vec<f64> = stats.iter().map(|s| s.query_mass).collect();
    let sketch_budget = inputs.memory_bytes - inputs.ub_bytes as f64 * split.ub_keys as f64;
    let solution = solve_deltas(&effective, &queries, sketch_budget, inputs.counter_bytes)?;
    if solution.diagnostics.active_set.len() != epsilons.len() {
        return Err(Error::Infeasible(format!(
            "rounded widths push groups {:?} to delta = 1",
            (0..epsilons.len())
                .filter(|g| !solution.diagnostics.active_set.contains(g))
                .collect::<Vec<_>>()
        )));
    }
    let depths: Vec<usize> = solution
        .log_deltas
        .iter()
        .map(|&l| depth_for_log_delta(l))
        .collect();

    let mut thresholds: Vec<f64> = dp.cuts[1..].iter().map(|&c| hist.edge(c)).collect();
    thresholds.push(hist.edge(split.index));
    let groups = ranges
        .iter()
        .zip(&stats)
        .enumerate()
        .map(|(g, (&(lo, hi), s))| GroupPlan {
            lower: hist.edge(lo),
            upper: hist.edge(hi),
            data_mass: s.data_mass,
            query_mass: s.query_mass,
            epsilon: epsilons[g],
            delta: solution.deltas[g],
            width: widths[g],
            depth: depths[g],
        })
        .collect();
    Ok(PartitionPlan {
        thresholds,
        groups,
        epsilon: inputs.epsilon,
        total_mass: n_total,
        budget_bytes: inputs.memory_bytes,
        counter_bytes: inputs.counter_bytes,
        ub_bytes: inputs.ub_bytes,
        ub_keys: split.ub_keys,
        ub_mass: split.ub_mass,
        ub_query_mass: split.ub_query_mass,
        kl: dp.kl,
        search_objective,
        diagnostics: Some(solution.diagnostics),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_with_thresholds(thresholds: Vec<f64>) -> PartitionPlan {
        let groups = thresholds
            .iter()
            .map(|&t| GroupPlan {
                lower: 0.0,
                upper: t,
                data_mass: 1,
                query_mass: 1.0 / thresholds.len() as f64,
                epsilon: 1.0,
                delta: 0.5,
                width: 3,
                depth: 1,
            })
            .collect();
        PartitionPlan {
            thresholds,
            groups,
            epsilon: 1.0,
            total_mass: 1,
            budget_bytes: 100.0,
            counter_bytes: 4,
            ub_bytes: 20,
            ub_keys: 0,
            ub_mass: 0,
            ub_query_mass: 0.0,
            kl: 0.0,
            search_objective: 0.0,
            diagnostics: None,
        }
    }

    #[test]
    fn routing_uses_half_open_intervals() {
        let plan = plan_with_thresholds(vec![0.3, 0.7]);
        assert_eq!(plan.route(0.2), Destination::Group(0));
        assert_eq!(plan.route(0.5), Destination::Group(1));
        assert_eq!(plan.route(0.9), Destination::UniqueBucket);
        assert_eq!(plan.route(0.3), Destination::Group(1));
        assert_eq!(plan.route(0.7), Destination::UniqueBucket);
        assert_eq!(plan.route(-5.0), Destination::Group(0));
    }

    #[test]
    fn infinite_boundary_never_routes_to_bucket() {
        let plan = plan_with_thresholds(vec![f64::INFINITY]);
        assert_eq!(plan.route(1.0), Destination::Group(0));
        assert_eq!(plan.route(f64::NAN), Destination::Group(0));
    }

    #[test]
    fn objective_sums_weighted_deltas() {
        let mut plan = plan_with_thresholds(vec![0.5]);
        plan.groups[0].delta = 0.25;
        plan.groups[0].query_mass = 0.8;
        assert!((plan.objective() - 0.2).abs() < 1e-15);

        let plan = plan_with_thresholds(vec![0.2, 0.4, 0.6, 0.8]);
        assert!((plan.objective() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn finalize_dims_rounding() {
        let dims = finalize_dims(&[(-3.0f64).exp(), 0.99, 1.0], &[E / 10.0, E / 10.0, 0.5]);
        assert_eq!(dims, vec![(10, 3), (10, 1), (6, 1)]);
    }

    #[test]
    fn integer_memory_dominates_continuous() {
        for &(d, e) in &[(0.3, 0.01), (0.05, 0.2), (0.9, 0.001), (1e-4, 0.05)] {
            let (w, depth) = finalize_dims(&[d], &[e])[0];
            let continuous = continuous_memory(&[e], &[d], 4);
            assert!((w * depth * 4) as f64 >= continuous);
        }
    }

    #[test]
    fn epsilon_rule_matches_full_width_row() {
        let eps = epsilon_for_budget(400_000, 4);
        assert!((E / eps - 100_000.0).abs() < 1e-6);
    }

    #[test]
    fn explain_lists_every_group() {
        let text = plan_with_thresholds(vec![0.3, 0.7]).explain();
        assert!(text.contains("groups=2\n"));
        assert!(text.contains("group.1.width=3\n"));
        assert!(text.contains("thresholds=0.3,0.7\n"));
    }
}
