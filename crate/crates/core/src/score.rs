//! Score oracles and the binned score histogram the optimizer consumes.
//!
//! The histogram discretises the score axis into bins whose lower edges are
//! the candidate partition thresholds. Each bin carries the multiset mass of
//! the elements that score into it (`N_g` contributions), the query
//! probability mass (`q_g` contributions) and the number of distinct keys
//! (needed to price the unique bucket).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_NUM_BINS: usize = 100;

/// Any deterministic map from an element to a score in `[0, 1]`. Only the
/// ordering of scores matters to the pipeline.
pub trait ScoreOracle {
    fn score(&self, key: &[u8]) -> f64;

    /// Bytes the oracle itself occupies; reported next to, not inside, the
    /// structure's memory budget.
    fn footprint_bytes(&self) -> usize {
        0
    }
}

/// Adapts a closure into an oracle.
#[derive(Debug, Clone, Copy)]
pub struct FnOracle<F>(pub F);

impl<F: Fn(&[u8]) -> f64> ScoreOracle for FnOracle<F> {
    fn score(&self, key: &[u8]) -> f64 {
        (self.0)(key)
    }
}

impl<O: ScoreOracle + ?Sized> ScoreOracle for &O {
    fn score(&self, key: &[u8]) -> f64 {
        (**self).score(key)
    }

    fn footprint_bytes(&self) -> usize {
        (**self).footprint_bytes()
    }
}

/// Scores elements by the dense rank of their training frequency,
/// normalised so the most frequent element scores 1. Elements absent from
/// training score 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencyRankScorer {
    scores: HashMap<Box<[u8]>, f64>,
}

impl FrequencyRankScorer {
    pub fn train<'a, I>(training: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [u8]>,
    {
        let mut counts: HashMap<&[u8], u64> = HashMap::new();
        for key in training {
            *counts.entry(key).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts<K: AsRef<[u8]>>(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Self> {
        let counts: Vec<(K, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        if counts.is_empty() {
            return Err(Error::EmptyInput("training stream"));
        }
        let mut distinct: Vec<u64> = counts.iter().map(|&(_, c)| c).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let levels = distinct.len() as f64;
        let scores = counts
            .into_iter()
            .map(|(k, c)| {
                let rank = distinct.binary_search(&c).expect("count present") + 1;
                (Box::from(k.as_ref()), rank as f64 / levels)
            })
            .collect();
        Ok(FrequencyRankScorer { scores })
    }

    pub(crate) fn from_scores(scores: HashMap<Box<[u8]>, f64>) -> Self {
        FrequencyRankScorer { scores }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.scores.iter().map(|(k, &s)| (&**k, s))
    }
}

impl ScoreOracle for FrequencyRankScorer {
    fn score(&self, key: &[u8]) -> f64 {
        self.scores.get(key).copied().unwrap_or(0.0)
    }

    fn footprint_bytes(&self) -> usize {
        self.scores.keys().map(|k| k.len() + 8).sum()
    }
}

/// How queries are distributed over the unique elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryModel {
    /// Every unique element is queried once.
    Uniform,
    /// Elements are queried in proportion to their frequency.
    Weighted,
}

impl QueryModel {
    pub const ALL: [QueryModel; 2] = [QueryModel::Uniform, QueryModel::Weighted];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryModel::Uniform => "uniform",
            QueryModel::Weighted => "weighted",
        }
    }

    /// Unnormalised query weight of an element with stream count `count`.
    pub fn weight(&self, count: u64) -> f64 {
        match self {
            QueryModel::Uniform => 1.0,
            QueryModel::Weighted => count as f64,
        }
    }
}

impl fmt::Display for QueryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(QueryModel::Uniform),
            "weighted" => Ok(QueryModel::Weighted),
            other => Err(Error::invalid(
                "query_mode",
                format!("unknown mode `{other}`"),
            )),
        }
    }
}

/// Normalised masses of one contiguous bin range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    /// Share of the sketch-handled multiset.
    pub u: f64,
    /// Share of the sketch-handled query mass.
    pub v: f64,
    /// Multiset size `N_g`.
    pub data_mass: u64,
    /// Query probability `q_g`.
    pub query_mass: f64,
}

/// What a unique-bucket boundary at a given bin index leaves behind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySplit {
    /// First bin routed to the unique bucket; `num_bins()` means no bucket.
    pub index: usize,
    pub ub_keys: u64,
    pub ub_mass: u64,
    pub ub_query_mass: f64,
    pub cms_mass: u64,
    pub cms_query_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    lower: Vec<f64>,
    data_mass: Vec<u64>,
    query_mass: Vec<f64>,
    keys: Vec<u64>,
    degenerate: bool,
    data_prefix: Vec<u64>,
    query_prefix: Vec<f64>,
    keys_prefix: Vec<u64>,
}

impl ScoreHistogram {
    /// Bins the unique elements of a profile `(key, count)` by oracle score.
    /// Bin lower edges sit at empirical quantiles of the per-element score
    /// distribution, deduplicated so edges are strictly increasing.
    pub fn build<'a, O, I>(
        oracle: &O,
        profile: I,
        model: QueryModel,
        num_bins: usize,
    ) -> Result<Self>
    where
        O: ScoreOracle + ?Sized,
        I: IntoIterator<Item = (&'a [u8], u64)>,
    {
        if num_bins < 2 {
            return Err(Error::invalid(
                "num_bins",
                format!("{num_bins} must be at least 2"),
            ));
        }
        let mut scored: Vec<(f64, u64)> = profile
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .map(|(k, c)| (oracle.score(k), c))
            .collect();
        if scored.is_empty() {
            return Err(Error::EmptyInput("profile"));
        }
        if let Some(&(s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
            return Err(Error::invalid("score", format!("oracle returned {s}")));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));

        let n = scored.len();
        let mut lower = vec![scored[0].0];
        for k in 1..num_bins {
            let last = *lower.last().unwrap();
            let start = k * n / num_bins;
            // skip past a tie block so the edge still separates something
            let pos = start + scored[start..].partition_point(|&(s, _)| s <= last);
            if pos < n {
                lower.push(scored[pos].0);
            }
        }
        let degenerate = lower.len() == 1;

        let total_weight: f64 = scored.iter().map(|&(_, c)| model.weight(c)).sum();
        let bins = lower.len();
        let mut data_mass = vec![0u64; bins];
        let mut query_mass = vec![0f64; bins];
        let mut keys = vec![0u64; bins];
        for &(s, c) in &scored {
            let b = lower.partition_point(|&edge| edge <= s) - 1;
            data_mass[b] += c;
            query_mass[b] += model.weight(c) / total_weight;
            keys[b] += 1;
        }
        Ok(Self::assemble(
            lower, data_mass, query_mass, keys, degenerate,
        ))
    }

    /// Builds a histogram from explicit per-bin masses. `query_mass` must be
    /// non-negative and sum to 1.
    pub fn from_bins(
        lower: Vec<f64>,
        data_mass: Vec<u64>,
        query_mass: Vec<f64>,
        keys: Vec<u64>,
    ) -> Result<Self> {
        let bins = lower.len();
        if bins == 0 {
            return Err(Error::EmptyInput("histogram bins"));
        }
        if data_mass.len() != bins || query_mass.len() != bins || keys.len() != bins {
            return Err(Error::invalid("bins", "per-bin vectors differ in length"));
        }
        if lower.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "lower",
                "bin edges must be strictly increasing",
            ));
        }
        if query_mass.iter().any(|&q| !(q >= 0.0)) {
            return Err(Error::invalid("query_mass", "must be non-negative"));
        }
        let qs: f64 = query_mass.iter().sum();
        if (qs - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "query_mass",
                format!("sums to {qs}, expected 1"),
            ));
        }
        Ok(Self::assemble(
            lower,
            data_mass,
            query_mass,
            keys,
            bins == 1,
        ))
    }

    fn assemble(
        lower: Vec<f64>,
        data_mass: Vec<u64>,
        query_mass: Vec<f64>,
        keys: Vec<u64>,
        degenerate: bool,
    ) -> Self {
        let data_prefix = prefix_sums(&data_mass, 0u64, |a, b| a + b);
        let query_prefix = prefix_sums(&query_mass, 0.0, |a, b| a + b);
        let keys_prefix = prefix_sums(&keys, 0u64, |a, b| a + b);
        ScoreHistogram {
            lower,
            data_mass,
            query_mass,
            keys,
            degenerate,
            data_prefix,
            query_prefix,
            keys_prefix,
        }
    }

    /// Merges bins lacking either data or query mass into their left
    /// neighbour (the first bin merges rightwards), so every remaining bin
    /// has `u > 0` and `v > 0`.
    pub fn merge_empty_bins(&self) -> Self {
        let mut lower: Vec<f64> = Vec::with_capacity(self.lower.len());
        let mut data: Vec<u64> = Vec::with_capacity(self.lower.len());
        let mut query: Vec<f64> = Vec::with_capacity(self.lower.len());
        let mut keys: Vec<u64> = Vec::with_capacity(self.lower.len());
        let mut pending: Option<(u64, f64, u64)> = None;
        for i in 0..self.lower.len() {
            let (d, q, k) = (self.data_mass[i], self.query_mass[i], self.keys[i]);
            let empty = d == 0 || q <= 0.0;
            if lower.is_empty() {
                // nothing to the left yet: carry until a healthy bin appears
                let (pd, pq, pk) = pending.take().unwrap_or((0, 0.0, 0));
                if empty {
                    pending = Some((pd + d, pq + q, pk + k));
                    continue;
                }
                lower.push(self.lower[0]);
                data.push(d + pd);
                query.push(q + pq);
                keys.push(k + pk);
            } else if empty {
                *data.last_mut().unwrap() += d;
                *query.last_mut().unwrap() += q;
                *keys.last_mut().unwrap() += k;
            } else {
                lower.push(self.lower[i]);
                data.push(d);
                query.push(q);
                keys.push(k);
            }
        }
        if lower.is_empty() {
            // every bin was degenerate: collapse into one
            let (pd, pq, pk) = pending.unwrap_or((0, 0.0, 0));
            lower.push(self.lower[0]);
            data.push(pd);
            query.push(pq);
            keys.push(pk);
        }
        let degenerate = self.degenerate || lower.len() == 1;
        Self::assemble(lower, data, query, keys, degenerate)
    }

    pub fn num_bins(&self) -> usize {
        self.lower.len()
    }

    /// Lower score edge of each bin; `lower()[i]` for `i >= 1` are the
    /// candidate thresholds.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn data_mass(&self) -> &[u64] {
        &self.data_mass
    }

    pub fn query_mass(&self) -> &[f64] {
        &self.query_mass
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    /// True when every element shares one score and only one bin exists.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Total multiset size `N`.
    pub fn total_mass(&self) -> u64 {
        *self.data_prefix.last().unwrap()
    }

    pub fn total_keys(&self) -> u64 {
        *self.keys_prefix.last().unwrap()
    }

    /// Score at which bin `index` starts; `+inf` past the last bin.
    pub fn edge(&self, index: usize) -> f64 {
        self.lower.get(index).copied().unwrap_or(f64::INFINITY)
    }

    /// Raw masses of bins `[lo, hi)`: (data, query, keys).
    pub fn range_mass(&self, lo: usize, hi: usize) -> (u64, f64, u64) {
        (
            self.data_prefix[hi] - self.data_prefix[lo],
            self.query_prefix[hi] - self.query_prefix[lo],
            self.keys_prefix[hi] - self.keys_prefix[lo],
        )
    }

    /// Fixes the unique-bucket boundary at bin `index`: bins `[index, B)` are
    /// counted exactly.
    pub fn split_at(&self, index: usize) -> BoundarySplit {
        let b = self.num_bins();
        assert!(index <= b, "boundary index {index} beyond {b} bins");
        let (ub_mass, _, ub_keys) = self.range_mass(index, b);
        let (cms_mass, cms_query_mass, _) = self.range_mass(0, index);
        BoundarySplit {
            index,
            ub_keys,
            ub_mass,
            // complement of the sketch side so the two always sum to one
            ub_query_mass: 1.0 - cms_query_mass,
            cms_mass,
            cms_query_mass,
        }
    }

    /// Normalised `(u, v)` of bins `[lo, hi)` relative to the sketch-handled
    /// range below `split`. An empty range yields zero masses.
    pub fn group_stats(&self, split: &BoundarySplit, lo: usize, hi: usize) -> GroupStats {
        assert!(
            lo <= hi && hi <= split.index,
            "group [{lo}, {hi}) outside sketch range"
        );
        let (d, q, _) = self.range_mass(lo, hi);
        let u = if split.cms_mass > 0 {
            d as f64 / split.cms_mass as f64
        } else {
            0.0
        };
        let v = if split.cms_query_mass > 0.0 {
            q / split.cms_query_mass
        } else {
            0.0
        };
        GroupStats {
            u,
            v,
            data_mass: d,
            query_mass: q,
        }
    }
}

fn prefix_sums<T: Copy>(xs: &[T], zero: T, add: impl Fn(T, T) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut acc = zero;
    out.push(acc);
    for &x in xs {
        acc = add(acc, x);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_oracle<'a>(pairs: &'a [(&'static str, f64)]) -> FnOracle<impl Fn(&[u8]) -> f64 + 'a> {
        FnOracle(move |k: &[u8]| {
            pairs
                .iter()
                .find(|(name, _)| name.as_bytes() == k)
                .map(|&(_, s)| s)
                .unwrap_or(0.0)
        })
    }

    #[test]
    fn rank_scorer_orders_by_frequency() {
        let s = FrequencyRankScorer::from_counts([("a", 10u64), ("b", 5), ("c", 1)]).unwrap();
        assert!(s.score(b"a") > s.score(b"b"));
        assert!(s.score(b"b") > s.score(b"c"));
        assert_eq!(s.score(b"a"), 1.0);
        assert_eq!(s.score(b"zzz"), 0.0);
        assert!(s.score(b"c") > 0.0);
    }

    #[test]
    fn rank_scorer_ties_share_a_score() {
        let s = FrequencyRankScorer::train(["x", "y", "x", "y", "z"].iter().map(|t| t.as_bytes()))
            .unwrap();
        assert_eq!(s.score(b"x"), s.score(b"y"));
        assert!(s.score(b"x") > s.score(b"z"));
    }

    #[test]
    fn rank_scorer_rejects_empty_training() {
        assert!(FrequencyRankScorer::train(std::iter::empty()).is_err());
    }

    #[test]
    fn symmetric_two_bin_split() {
        let oracle = table_oracle(&[("a", 0.1), ("b", 0.2), ("c", 0.8), ("d", 0.9)]);
        let profile: Vec<(&[u8], u64)> = vec![(b"a", 1), (b"b", 1), (b"c", 1), (b"d", 1)];
        let h = ScoreHistogram::build(&oracle, profile, QueryModel::Uniform, 2).unwrap();
        assert_eq!(h.lower(), &[0.1, 0.8]);
        assert_eq!(h.data_mass(), &[2, 2]);
        assert_eq!(h.query_mass(), &[0.5, 0.5]);
    }

    #[test]
    fn weighted_queries_follow_frequency() {
        let oracle = table_oracle(&[("a", 0.9), ("b", 0.8), ("c", 0.2), ("d", 0.1)]);
        let profile: Vec<(&[u8], u64)> = vec![(b"a", 6), (b"b", 3), (b"c", 2), (b"d", 1)];
        let h = ScoreHistogram::build(&oracle, profile, QueryModel::Weighted, 2).unwrap();
        assert_eq!(h.data_mass(), &[3, 9]);
        assert!((h.query_mass()[0] - 3.0 / 12.0).abs() < 1e-12);
        assert!((h.query_mass()[1] - 9.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn identical_scores_collapse_to_one_flagged_bin() {
        let oracle = FnOracle(|_: &[u8]| 0.5);
        let profile: Vec<(&[u8], u64)> = vec![(b"a", 1), (b"b", 4)];
        let h = ScoreHistogram::build(&oracle, profile, QueryModel::Uniform, 10).unwrap();
        assert!(h.is_degenerate());
        assert_eq!(h.num_bins(), 1);
        assert_eq!(h.total_mass(), 5);
    }

    #[test]
    fn tie_block_does_not_swallow_higher_scores() {
        // 9 elements tied at 0.1, one at 0.9: the quantile edge lands inside
        // the tie block but the high scorer still gets its own bin.
        let mut names: Vec<String> = (0..9).map(|i| format!("t{i}")).collect();
        names.push("hi".into());
        let oracle = FnOracle(|k: &[u8]| if k == b"hi" { 0.9 } else { 0.1 });
        let profile: Vec<(&[u8], u64)> = names.iter().map(|n| (n.as_bytes(), 1)).collect();
        let h = ScoreHistogram::build(&oracle, profile, QueryModel::Uniform, 2).unwrap();
        assert_eq!(h.lower(), &[0.1, 0.9]);
        assert_eq!(h.keys(), &[9, 1]);
    }

    #[test]
    fn rejects_too_few_bins_and_empty_profile() {
        let oracle = FnOracle(|_: &[u8]| 0.0);
        assert!(
            ScoreHistogram::build(&oracle, vec![(&b"a"[..], 1)], QueryModel::Uniform, 1).is_err()
        );
        assert!(
            ScoreHistogram::build(&oracle, Vec::<(&[u8], u64)>::new(), QueryModel::Uniform, 4)
                .is_err()
        );
    }

    #[test]
    fn group_stats_normalise_below_boundary() {
        let h = ScoreHistogram::from_bins(
            vec![0.0, 0.25, 0.5, 0.75],
            vec![50, 50, 100, 0],
            vec![0.125, 0.375, 0.3, 0.2],
            vec![1, 1, 1, 0],
        )
        .unwrap();
        let split = h.split_at(2);
        assert_eq!(split.ub_mass, 100);
        assert!((split.ub_query_mass - 0.5).abs() < 1e-12);
        let whole = h.group_stats(&split, 0, 2);
        assert!((whole.u - 1.0).abs() < 1e-12 && (whole.v - 1.0).abs() < 1e-12);
        let first = h.group_stats(&split, 0, 1);
        assert!((first.u - 0.5).abs() < 1e-12);
        assert!((first.v - 0.25).abs() < 1e-12);
        let empty = h.group_stats(&split, 1, 1);
        assert_eq!((empty.u, empty.v), (0.0, 0.0));
    }

    #[test]
    fn merge_moves_empty_bins_left() {
        let h = ScoreHistogram::from_bins(
            vec![0.0, 0.1, 0.2, 0.3, 0.4],
            vec![0, 5, 0, 3, 2],
            vec![0.1, 0.4, 0.0, 0.3, 0.2],
            vec![0, 2, 0, 1, 1],
        )
        .unwrap();
        let m = h.merge_empty_bins();
        assert_eq!(m.lower(), &[0.0, 0.3, 0.4]);
        assert_eq!(m.data_mass(), &[5, 3, 2]);
        assert_eq!(m.keys(), &[2, 1, 1]);
        assert!((m.query_mass()[0] - 0.5).abs() < 1e-12);
        assert_eq!(m.total_mass(), h.total_mass());
    }
}
