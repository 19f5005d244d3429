//! Checks that back the acceptance suite: the diminishing-returns property of
//! copy rates, an enumeration oracle for distribution composition, replay
//! audits of simulation traces, and exhaustive optimal schedules for tiny
//! instances with the competitive-ratio comparison built on them.

mod audit;
mod optimal;
pub mod suite;

pub use audit::{audit, Constraint, Violation};
pub use optimal::{
    brute_force_optimal, competitive_bound, competitive_check, CompetitiveCase, CompetitiveReport, OptimalSchedule,
    TinyInstance, TinyJob, WitnessCopy, STATE_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Tolerance for the monotone per-copy rate check.
pub const PROP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRateReport {
    /// `rates[n-1]` is the expected max over the first `n` copies.
    pub rates: Vec<f64>,
    /// `rates[n-1] / n`.
    pub per_copy: Vec<f64>,
    pub holds: bool,
}

/// Expected multi-copy rate `r(n)` for every prefix of `dists`, and whether
/// `r(n)/n` is non-increasing. The copies must be ordered best first, i.e.
/// with non-increasing expectations; otherwise the input is rejected.
pub fn check_marginal_rates(dists: &[EmpiricalDistribution], max_n: usize) -> Result<MarginalRateReport> {
    if dists.is_empty() || max_n == 0 {
        return Err(Error::Precondition("need at least one copy".into()));
    }
    let n = max_n.min(dists.len());
    for w in dists[..n].windows(2) {
        if w[1].expectation() > w[0].expectation() + PROP_TOLERANCE {
            return Err(Error::Precondition("copies must be ordered by non-increasing expectation".into()));
        }
    }
    let mut acc = dists[0].clone();
    let mut rates = vec![acc.expectation()];
    for d in &dists[1..n] {
        acc = acc.max_compose(d, usize::MAX);
        rates.push(acc.expectation());
    }
    let per_copy: Vec<f64> = rates.iter().enumerate().map(|(i, r)| r / (i + 1) as f64).collect();
    let holds = per_copy.windows(2).all(|w| w[1] <= w[0] + PROP_TOLERANCE);
    Ok(MarginalRateReport { rates, per_copy, holds })
}

/// Distribution of `max` (or `min`) over independent draws, by enumerating
/// every joint outcome. Exponential in the number of inputs; meant as an
/// oracle for small cases.
pub fn enumerate_extreme(dists: &[EmpiricalDistribution], take_max: bool) -> Result<EmpiricalDistribution> {
    if dists.is_empty() {
        return Err(Error::NoInputLocations);
    }
    let mut outcomes: Vec<(f64, f64)> = vec![(if take_max { f64::NEG_INFINITY } else { f64::INFINITY }, 1.0)];
    for d in dists {
        let mut next = Vec::with_capacity(outcomes.len() * d.len());
        for &(v, p) in &outcomes {
            for (x, q) in d.iter() {
                next.push((if take_max { v.max(x) } else { v.min(x) }, p * q));
            }
        }
        outcomes = next;
    }
    EmpiricalDistribution::from_weights(outcomes)
}

/// Distribution of the mean of one independent draw from each input, by
/// joint enumeration.
pub fn enumerate_mean(dists: &[EmpiricalDistribution]) -> Result<EmpiricalDistribution> {
    if dists.is_empty() {
        return Err(Error::NoInputLocations);
    }
    let mut outcomes: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for d in dists {
        let mut next = Vec::with_capacity(outcomes.len() * d.len());
        for &(v, p) in &outcomes {
            for (x, q) in d.iter() {
                next.push((v + x, p * q));
            }
        }
        outcomes = next;
    }
    let n = dists.len() as f64;
    EmpiricalDistribution::from_weights(outcomes.into_iter().map(|(v, p)| (v / n, p)))
}
