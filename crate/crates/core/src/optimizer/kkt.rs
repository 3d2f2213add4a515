//! Closed-form allocation of failure probabilities across groups.
//!
//! For fixed group epsilons the continuous problem
//!
//! ```text
//! minimise   sum_g q_g * delta_g
//! subject to b * sum_g (e / eps_g) * ln(1 / delta_g) = budget,  delta_g <= 1
//! ```
//!
//! is convex. Stationarity on the active set `D = {g : delta_g < 1}` gives
//! `delta_g = lambda * b * e / (q_g * eps_g)`, and the memory equality pins
//! `lambda`. The active set is found by starting from all groups and
//! dropping any whose unclipped delta reaches 1; dropping a group only
//! raises `lambda`, so no dropped group ever re-enters.

use std::f64::consts::E;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    /// Multiplier of the memory constraint.
    pub lambda: f64,
    /// Groups with `delta < 1`, ascending.
    pub active_set: Vec<usize>,
    /// `sum_{g in D} (1 / eps_g) * ln(q_g * eps_g)`.
    pub log_term: f64,
    /// Active-set passes until the set stopped shrinking.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSolution {
    pub deltas: Vec<f64>,
    /// `ln(delta_g)`, kept because very large budgets underflow `delta_g`.
    pub log_deltas: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl DeltaSolution {
    pub fn objective(&self, query_masses: &[f64]) -> f64 {
        weighted_failure(&self.deltas, query_masses)
    }
}

/// `sum_g delta_g * q_g`, the bound on the intolerable-error probability.
pub fn weighted_failure(deltas: &[f64], query_masses: &[f64]) -> f64 {
    deltas.iter().zip(query_masses).map(|(d, q)| d * q).sum()
}

/// Optimal `delta_g` for the given epsilons, query masses and sketch budget
/// (bytes left after the unique bucket).
pub fn solve_deltas(
    epsilons: &[f64],
    query_masses: &[f64],
    budget: f64,
    counter_bytes: usize,
) -> Result<DeltaSolution> {
    if epsilons.is_empty() {
        return Err(Error::EmptyInput("groups"));
    }
    if epsilons.len() != query_masses.len() {
        return Err(Error::invalid(
            "query_masses",
            "length differs from epsilons",
        ));
    }
    if let Some(e) = epsilons.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::invalid("epsilons", format!("{e} must be positive")));
    }
    if let Some(q) = query_masses.iter().find(|&&q| !(q > 0.0 && q.is_finite())) {
        return Err(Error::invalid(
            "query_masses",
            format!("{q} must be positive"),
        ));
    }
    if !(budget > 0.0) {
        return Err(Error::Infeasible(format!(
            "sketch budget {budget} bytes is not positive"
        )));
    }
    let b = counter_bytes as f64;
    let scaled_budget = budget / (b * E);

    let mut active: Vec<usize> = (0..epsilons.len()).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let inv_sum: f64 = active.iter().map(|&g| 1.0 / epsilons[g]).sum();
        let log_term: f64 = active
            .iter()
            .map(|&g| (query_masses[g] * epsilons[g]).ln() / epsilons[g])
            .sum();
        // ln(lambda * b * e)
        let log_lbe = -(scaled_budget - log_term) / inv_sum;
        let log_delta = |g: usize| log_lbe - (query_masses[g] * epsilons[g]).ln();
        let before = active.len();
        active.retain(|&g| log_delta(g) < 0.0);
        if active.is_empty() {
            return Err(Error::Infeasible(
                "budget too small: every group's failure probability clips to 1".into(),
            ));
        }
        if active.len() == before {
            let log_deltas: Vec<f64> = (0..epsilons.len())
                .map(|g| {
                    if active.binary_search(&g).is_ok() {
                        log_delta(g)
                    } else {
                        0.0
                    }
                })
                .collect();
            return Ok(DeltaSolution {
                deltas: log_deltas.iter().map(|l| l.exp()).collect(),
                log_deltas,
                diagnostics: SolverDiagnostics {
                    lambda: log_lbe.exp() / (b * E),
                    active_set: active,
                    log_term,
                    iterations,
                },
            });
        }
    }
}

/// Continuous memory `b * sum_g (e / eps_g) * ln(1 / delta_g)`.
pub fn continuous_memory(epsilons: &[f64], deltas: &[f64], counter_bytes: usize) -> f64 {
    counter_bytes as f64
        * epsilons
            .iter()
            .zip(deltas)
            .map(|(e, d)| E / e * (1.0 / d).ln())
            .sum::<f64>()
}
