//! Randomized batches of the individual checks, each summarized as one
//! pass/fail result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{audit, check_marginal_rates, competitive_check, enumerate_extreme, enumerate_mean, TinyInstance};
use crate::dist::EmpiricalDistribution;
use crate::engine;
use crate::error::Result;
use crate::experiment::{ExperimentConfig, SchedulerSpec, SCHEDULER_NAMES};
use crate::workload::Scenario;

/// Agreement required between a composition and its enumeration oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// First few failure descriptions.
    pub details: Vec<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), cases: 0, failures: 0, details: Vec::new() }
    }

    fn fail(&mut self, detail: String) {
        self.failures += 1;
        if self.details.len() < 5 {
            self.details.push(detail);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// A distribution with 1 to `max_support` atoms at values in `[1, 100)`.
pub fn random_distribution(rng: &mut impl Rng, max_support: usize) -> EmpiricalDistribution {
    let n = rng.random_range(1..=max_support);
    let pairs: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(1.0..100.0), rng.random_range(0.05..1.0))).collect();
    EmpiricalDistribution::from_weights(pairs).expect("positive weights and finite values")
}

/// Random copy-rate sequences ordered by non-increasing expectation, checked
/// for diminishing per-copy rate up to `max_n` copies.
pub fn marginal_rate_suite(cases: usize, max_n: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CheckResult::new("marginal_rate");
    for case in 0..cases {
        let n = rng.random_range(1..=max_n);
        let mut dists: Vec<EmpiricalDistribution> = (0..n).map(|_| random_distribution(&mut rng, 5)).collect();
        dists.sort_by(|a, b| b.expectation().total_cmp(&a.expectation()));
        out.cases += 1;
        match check_marginal_rates(&dists, max_n) {
            Ok(r) if r.holds => {}
            Ok(r) => out.fail(format!("case {case}: per-copy rates {:?}", r.per_copy)),
            Err(e) => out.fail(format!("case {case}: {e}")),
        }
    }
    out
}

fn same(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> bool {
    a.max_mass_diff(b) <= ORACLE_TOLERANCE && (a.expectation() - b.expectation()).abs() <= ORACLE_TOLERANCE * a.expectation().abs().max(1.0)
}

/// Max, min and mean compositions of two or three random inputs against
/// joint enumeration.
pub fn composition_suite(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CheckResult::new("composition_oracle");
    for case in 0..cases {
        let n = rng.random_range(2..=3);
        let ds: Vec<EmpiricalDistribution> = (0..n).map(|_| random_distribution(&mut rng, 5)).collect();
        let unbounded = usize::MAX;
        let max = ds[1..].iter().fold(ds[0].clone(), |acc, d| acc.max_compose(d, unbounded));
        let min = ds[1..].iter().fold(ds[0].clone(), |acc, d| acc.min_compose(d, unbounded));
        let mean = EmpiricalDistribution::mean_compose(&ds, unbounded).expect("non-empty");
        let checks = [
            ("max", max, enumerate_extreme(&ds, true)),
            ("min", min, enumerate_extreme(&ds, false)),
            ("mean", mean, enumerate_mean(&ds)),
        ];
        for (what, got, want) in checks {
            out.cases += 1;
            match want {
                Ok(w) if same(&got, &w) => {}
                Ok(w) => out.fail(format!("case {case} {what}: mass diff {:.3e}", got.max_mass_diff(&w))),
                Err(e) => out.fail(format!("case {case} {what}: {e}")),
            }
        }
    }
    out
}

/// Runs every scheduler on every seed of `config` and audits each trace.
pub fn audit_suite(config: &ExperimentConfig) -> Result<CheckResult> {
    let mut out = CheckResult::new("constraint_audit");
    let specs: Vec<SchedulerSpec> = SCHEDULER_NAMES.iter().map(|n| SchedulerSpec::from_name(n)).collect::<Result<_>>()?;
    let points: Vec<(SchedulerSpec, u64)> =
        specs.iter().flat_map(|s| config.seeds.iter().map(move |&seed| (s.clone(), seed))).collect();
    use rayon::prelude::*;
    let results: Vec<(String, u64, Result<usize>)> = points
        .par_iter()
        .map(|(spec, seed)| {
            let run = || -> Result<usize> {
                let scenario = Scenario::generate(&config.topology, &config.workload, *seed)?;
                let mut s = spec.build();
                let trace = engine::run(&scenario, s.as_mut(), &config.engine, *seed)?;
                Ok(audit(&trace, &scenario)?.len())
            };
            (spec.label(), *seed, run())
        })
        .collect();
    for (name, seed, r) in results {
        out.cases += 1;
        match r {
            Ok(0) => {}
            Ok(n) => out.fail(format!("{name} seed {seed}: {n} violations")),
            Err(e) => out.fail(format!("{name} seed {seed}: {e}")),
        }
    }
    Ok(out)
}

/// Random tiny instances checked against the competitive bound.
pub fn competitive_suite(instances: usize, epsilons: &[f64], seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let insts: Vec<TinyInstance> = (0..instances).map(|_| TinyInstance::random(&mut rng)).collect();
    let report = competitive_check(&insts, epsilons)?;
    let mut out = CheckResult::new("competitive_ratio");
    for c in &report.cases {
        out.cases += 1;
        if !c.passed {
            out.fail(format!(
                "instance {} eps {}: ratio {:.4} above bound {:?}",
                c.instance, c.epsilon, c.ratio, c.bound
            ));
        }
    }
    Ok(out)
}
