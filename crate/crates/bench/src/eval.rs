//! Query replay against exact counts.

use optlcms::{FrequencyEstimator, QueryModel};

/// One evaluated (method, budget, query mode, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    /// Accounted structure memory after rounding.
    pub memory_bytes: usize,
    /// Scorer footprint, kept out of `memory_bytes`.
    pub model_bytes: usize,
    pub epsilon: f64,
    pub intolerable_prob: f64,
    pub mean_error: f64,
    pub build_seconds: f64,
    pub seed: u64,
    pub query_mode: QueryModel,
    /// Unique-bucket size the optimizer planned for, when it has one.
    pub predicted_ub_keys: Option<u64>,
    pub realized_ub_keys: Option<u64>,
    /// `sum_g delta_g * q_g` of the plan, when there is one.
    pub failure_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub intolerable_prob: f64,
    pub mean_error: f64,
    /// Number of queries issued.
    pub queries: u64,
    /// `epsilon * N`.
    pub threshold: f64,
}

/// Aggregates `(error, multiplicity)` pairs; an error counts as intolerable
/// when it strictly exceeds `threshold`.
pub fn summarize(errors: impl IntoIterator<Item = (u64, u64)>, threshold: f64) -> ErrorMetrics {
    let (mut queries, mut bad, mut sum) = (0u64, 0u64, 0u128);
    for (err, times) in errors {
        queries += times;
        sum += err as u128 * times as u128;
        if err as f64 > threshold {
            bad += times;
        }
    }
    let q = queries.max(1) as f64;
    ErrorMetrics {
        intolerable_prob: bad as f64 / q,
        mean_error: sum as f64 / q,
        queries,
        threshold,
    }
}

/// Queries every profiled key once (uniform) or `count` times (weighted)
/// and compares against the exact count.
pub fn run_eval<E: FrequencyEstimator + ?Sized>(
    estimator: &E,
    profile: &[(&[u8], u64)],
    mode: QueryModel,
    epsilon: f64,
) -> ErrorMetrics {
    let n: u64 = profile.iter().map(|&(_, c)| c).sum();
    let errors = profile.iter().map(|&(key, count)| {
        let times = match mode {
            QueryModel::Uniform => 1,
            QueryModel::Weighted => count,
        };
        (estimator.estimate(key).saturating_sub(count), times)
    });
    summarize(errors, epsilon * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use optlcms::{Stream, UniqueBucket};

    struct Exact(UniqueBucket);

    impl FrequencyEstimator for Exact {
        fn insert(&mut self, key: &[u8], count: u64) {
            self.0.insert(key, count)
        }
        fn estimate(&self, key: &[u8]) -> u64 {
            self.0.query(key).unwrap_or(0)
        }
        fn memory_bytes(&self) -> usize {
            self.0.memory_bytes()
        }
    }

    #[test]
    fn definition_arithmetic() {
        let m = summarize([(0, 1), (5, 1), (12, 1)], 10.0);
        assert!((m.intolerable_prob - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mean_error - 17.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.queries, 3);
    }

    #[test]
    fn exact_estimator_has_no_error() {
        let stream = Stream::from_tokens(["a", "b", "a", "c", "a"]);
        let mut est = Exact(UniqueBucket::new(20));
        for k in stream.iter() {
            est.insert(k, 1);
        }
        let profile = stream.unique_counts();
        for mode in QueryModel::ALL {
            let m = run_eval(&est, &profile, mode, 0.0);
            assert_eq!(m.intolerable_prob, 0.0);
            assert_eq!(m.mean_error, 0.0);
        }
    }

    #[test]
    fn weighted_mode_repeats_by_count() {
        struct Plus(u64);
        impl FrequencyEstimator for Plus {
            fn insert(&mut self, _: &[u8], _: u64) {}
            fn estimate(&self, key: &[u8]) -> u64 {
                if key == b"a" {
                    3 + self.0
                } else {
                    1
                }
            }
            fn memory_bytes(&self) -> usize {
                0
            }
        }
        let stream = Stream::from_tokens(["a", "b", "a", "a"]);
        let profile = stream.unique_counts();
        let u = run_eval(&Plus(4), &profile, QueryModel::Uniform, 0.5);
        assert_eq!(u.queries, 2);
        assert!((u.mean_error - 2.0).abs() < 1e-12);
        assert!((u.intolerable_prob - 0.5).abs() < 1e-12);
        let w = run_eval(&Plus(4), &profile, QueryModel::Weighted, 0.5);
        assert_eq!(w.queries, 4);
        assert!((w.mean_error - 3.0).abs() < 1e-12);
        assert!((w.threshold - 2.0).abs() < 1e-12);
    }
}
