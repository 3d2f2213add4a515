//! Reference implementations used as test oracles. Nothing here shares code
//! with the library's solvers.

#![allow(dead_code)]

use std::f64::consts::E;

use optlcms::optimizer::kl_term;
use optlcms::score::BoundarySplit;
use optlcms::ScoreHistogram;
use rand::Rng;

/// Minimises `sum_g q_g * exp(-y_g / a_g)` over `y >= 0, sum y = budget`
/// by repeated pairwise exchange, where `a_g = b * e / eps_g` is the byte
/// cost of one unit of `ln(1 / delta_g)`. Returns the deltas.
///
/// Each exchange moves budget between two groups and finds the exact 1-D
/// minimum by bisection on the (monotone) derivative.
pub fn numeric_deltas(epsilons: &[f64], q: &[f64], budget: f64, counter_bytes: usize) -> Vec<f64> {
    let g = epsilons.len();
    let a: Vec<f64> = epsilons
        .iter()
        .map(|e| counter_bytes as f64 * E / e)
        .collect();
    let mut y = vec![budget / g as f64; g];
    let cost = |y: &[f64]| -> f64 { (0..g).map(|i| q[i] * (-y[i] / a[i]).exp()).sum() };
    let mut prev = cost(&y);
    for _ in 0..20_000 {
        for i in 0..g {
            for j in 0..g {
                if i == j {
                    continue;
                }
                // move t from j to i, t in [-y_i, y_j]
                let slope = |t: f64| {
                    -q[i] / a[i] * (-(y[i] + t) / a[i]).exp()
                        + q[j] / a[j] * (-(y[j] - t) / a[j]).exp()
                };
                let (mut lo, mut hi) = (-y[i], y[j]);
                if slope(lo) >= 0.0 {
                    hi = lo;
                } else if slope(hi) <= 0.0 {
                    lo = hi;
                }
                for _ in 0..200 {
                    if hi - lo <= f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if slope(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                let total = y[i] + y[j];
                y[i] = (y[i] + t).clamp(0.0, total);
                y[j] = total - y[i];
            }
        }
        let now = cost(&y);
        if (prev - now).abs() <= 1e-16 * prev.abs() {
            break;
        }
        prev = now;
    }
    (0..g).map(|i| (-y[i] / a[i]).exp()).collect()
}

/// Best `sum u ln(u/v)` over every cut of bins `[0, end)` into at most
/// `max_groups` contiguous groups, by exhaustive enumeration. Returns the
/// group starts and the divergence; ties keep the first partition found in
/// order of (fewer groups, lexicographically smaller cuts).
pub fn brute_force_partition(
    hist: &ScoreHistogram,
    split: &BoundarySplit,
    max_groups: usize,
) -> (Vec<usize>, f64) {
    let end = split.index;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for groups in 1..=max_groups.min(end) {
        // choose groups-1 interior cut points from 1..end
        let mut picks: Vec<usize> = (1..groups).collect();
        loop {
            let mut cuts = vec![0];
            cuts.extend(&picks);
            let kl = partition_kl(hist, split, &cuts);
            if best.as_ref().is_none_or(|(_, b)| kl > *b) {
                best = Some((cuts, kl));
            }
            if !next_combination(&mut picks, end - 1) {
                break;
            }
        }
    }
    best.expect("at least one partition")
}

/// Divergence of the partition with the given group starts.
pub fn partition_kl(hist: &ScoreHistogram, split: &BoundarySplit, cuts: &[usize]) -> f64 {
    let end = split.index;
    let mut kl = 0.0;
    for (k, &lo) in cuts.iter().enumerate() {
        let hi = cuts.get(k + 1).copied().unwrap_or(end);
        let s = hist.group_stats(split, lo, hi);
        kl += kl_term(s.u, s.v);
    }
    kl
}

/// Next ascending combination of values in `1..=max`.
fn next_combination(picks: &mut [usize], max: usize) -> bool {
    let k = picks.len();
    for i in (0..k).rev() {
        if picks[i] < max - (k - 1 - i) {
            picks[i] += 1;
            for j in i + 1..k {
                picks[j] = picks[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `sum a ln(a/b) - A ln(A/B)`; never negative up to rounding.
pub fn log_sum_gap(a: &[f64], b: &[f64]) -> f64 {
    let lhs: f64 = a.iter().zip(b).map(|(&x, &y)| x * (x / y).ln()).sum();
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    lhs - sa * (sa / sb).ln()
}

/// Random histogram with every bin populated and query masses summing to 1.
pub fn random_histogram<R: Rng>(rng: &mut R, bins: usize) -> ScoreHistogram {
    let lower: Vec<f64> = (0..bins).map(|i| i as f64 / bins as f64).collect();
    let data: Vec<u64> = (0..bins).map(|_| rng.random_range(1..5_000)).collect();
    let raw: Vec<f64> = (0..bins).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let query: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let keys: Vec<u64> = (0..bins).map(|_| rng.random_range(1..200)).collect();
    ScoreHistogram::from_bins(lower, data, query, keys).expect("valid histogram")
}
