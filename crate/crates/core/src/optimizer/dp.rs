//! Threshold search by dynamic programming over contiguous bin ranges.
//!
//! `best[p][s]` is the largest divergence reachable by cutting bins `[0, s)`
//! into at most `p` groups. A new group `[y, s)` is only admitted when its
//! optimistic failure estimate
//!
//! ```text
//! delta_hat = (u / v) * exp(-A) * exp(-(candidate + kl([s, K))))
//! ```
//!
//! stays below 1, where the remainder `[s, K)` is scored as one unsplit
//! group. Splitting the remainder later can only raise the divergence (log-sum
//! inequality), so every admitted group keeps `delta < 1` in the final plan.

use super::divergence::kl_term;
use super::BudgetInputs;
use crate::error::{Error, Result};
use crate::score::{BoundarySplit, ScoreHistogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    /// Admit only groups whose optimistic `delta_hat` is below 1.
    Checked,
    /// Pure divergence maximisation.
    Unchecked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpPartition {
    /// First bin of every group, starting with 0.
    pub cuts: Vec<usize>,
    /// Divergence of the chosen partition.
    pub kl: f64,
}

impl DpPartition {
    /// `(lo, hi)` bin ranges of the groups, given the sketch range end.
    pub fn ranges(&self, end: usize) -> Vec<(usize, usize)> {
        self.cuts
            .iter()
            .zip(self.cuts.iter().skip(1).chain(std::iter::once(&end)))
            .map(|(&lo, &hi)| (lo, hi))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Link {
    Inherit,
    Split(usize),
}

/// `epsilon N (M - c n) / (b e (N - N_UB))`: the exponent every group shares.
pub fn memory_exponent(hist: &ScoreHistogram, split: &BoundarySplit, inputs: &BudgetInputs) -> f64 {
    let n_total = hist.total_mass() as f64;
    let sketch_budget = inputs.memory_bytes - inputs.ub_bytes as f64 * split.ub_keys as f64;
    inputs.epsilon * n_total * sketch_budget
        / (inputs.counter_bytes as f64 * std::f64::consts::E * split.cms_mass as f64)
}

pub fn dp_partition(
    hist: &ScoreHistogram,
    split: &BoundarySplit,
    max_groups: usize,
    inputs: &BudgetInputs,
    feasibility: Feasibility,
) -> Result<DpPartition> {
    let end = split.index;
    if max_groups == 0 {
        return Err(Error::invalid("max_groups", "must be at least 1"));
    }
    if end == 0 {
        return Err(Error::invalid(
            "split",
            "no bins left below the unique-bucket boundary",
        ));
    }
    for i in 0..end {
        let (d, q, _) = hist.range_mass(i, i + 1);
        if d == 0 || q <= 0.0 {
            return Err(Error::invalid(
                "histogram",
                format!("bin {i} has data mass {d} and query mass {q}; merge empty bins first"),
            ));
        }
    }
    let exponent = memory_exponent(hist, split, inputs);
    let term = |lo: usize, hi: usize| {
        let s = hist.group_stats(split, lo, hi);
        (kl_term(s.u, s.v), s.u / s.v)
    };
    // remainder [s, end) kept whole
    let tail: Vec<f64> = (0..=end).map(|s| term(s, end).0).collect();

    let groups = max_groups.min(end);
    let mut best = vec![vec![f64::NEG_INFINITY; end + 1]; groups + 1];
    let mut link = vec![vec![Link::Inherit; end + 1]; groups + 1];
    for row in best.iter_mut() {
        row[0] = 0.0;
    }
    for p in 1..=groups {
        for s in 1..=end {
            best[p][s] = best[p - 1][s];
            for y in 0..s {
                let prev = best[p - 1][y];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let (kl, ratio) = term(y, s);
                let candidate = prev + kl;
                if candidate <= best[p][s] {
                    continue;
                }
                if feasibility == Feasibility::Checked {
                    let log_delta_hat = ratio.ln() - exponent - (candidate + tail[s]);
                    if !(log_delta_hat < 0.0) {
                        continue;
                    }
                }
                best[p][s] = candidate;
                link[p][s] = Link::Split(y);
            }
        }
    }

    let kl = best[groups][end];
    if kl == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!(
            "no partition of {end} bins into at most {max_groups} groups keeps every delta below 1 \
             (memory exponent {exponent:.4})"
        )));
    }
    let mut cuts = Vec::new();
    let (mut p, mut s) = (groups, end);
    while s > 0 {
        match link[p][s] {
            Link::Inherit => p -= 1,
            Link::Split(y) => {
                cuts.push(y);
                s = y;
                p -= 1;
            }
        }
    }
    cuts.reverse();
    Ok(DpPartition { cuts, kl })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_bin_hist() -> ScoreHistogram {
        ScoreHistogram::from_bins(
            vec![0.0, 0.3, 0.6],
            vec![500, 300, 200],
            vec![0.2, 0.3, 0.5],
            vec![10, 10, 10],
        )
        .unwrap()
    }

    fn loose_budget() -> BudgetInputs {
        BudgetInputs {
            epsilon: 1e-3,
            memory_bytes: 1e7,
            counter_bytes: 4,
            ub_bytes: 20,
        }
    }

    #[test]
    fn picks_the_larger_divergence_split() {
        let h = three_bin_hist();
        let split = h.split_at(3);
        let dp = dp_partition(&h, &split, 2, &loose_budget(), Feasibility::Unchecked).unwrap();
        assert_eq!(dp.cuts, vec![0, 1]);
        let expect = 0.5 * 2.5f64.ln() + 0.5 * (0.5f64 / 0.8).ln();
        assert!((dp.kl - expect).abs() < 1e-12);
        assert!((dp.kl - 0.2231).abs() < 1e-4);
    }

    #[test]
    fn one_group_has_zero_divergence() {
        let h = three_bin_hist();
        let split = h.split_at(3);
        let dp = dp_partition(&h, &split, 1, &loose_budget(), Feasibility::Checked).unwrap();
        assert_eq!(dp.cuts, vec![0]);
        assert!(dp.kl.abs() < 1e-12);
    }

    #[test]
    fn check_rejects_everything_when_starved() {
        let h = three_bin_hist();
        let split = h.split_at(3);
        let starved = BudgetInputs {
            memory_bytes: 0.0,
            ..loose_budget()
        };
        let err = dp_partition(&h, &split, 1, &starved, Feasibility::Checked).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn empty_bins_must_be_merged_first() {
        let h = ScoreHistogram::from_bins(vec![0.0, 0.5], vec![5, 0], vec![0.5, 0.5], vec![1, 0])
            .unwrap();
        let split = h.split_at(2);
        assert!(dp_partition(&h, &split, 2, &loose_budget(), Feasibility::Unchecked).is_err());
    }

    #[test]
    fn ranges_cover_the_sketch_side() {
        let dp = DpPartition {
            cuts: vec![0, 2, 5],
            kl: 0.0,
        };
        assert_eq!(dp.ranges(7), vec![(0, 2), (2, 5), (5, 7)]);
    }
}
