//! Experiment configuration, parallel runs over seeds and parameter points,
//! and the CSV/JSON files they produce.
//!
//! Every output is rendered with fixed precision from results collected in
//! a fixed order, so identical configs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{Cloning, CloningConfig, Speculative, SpeculativeConfig, StageGreedy};
use crate::engine::{self, EngineConfig, JobOutcome, SimTrace};
use crate::error::{Error, Result};
use crate::insurer::{Insurer, InsurerPolicy};
use crate::sched::Scheduler;
use crate::workload::{Scenario, TopologySpec, WorkloadSpec};

/// A scheduler and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerSpec {
    Insurance {
        #[serde(default)]
        policy: InsurerPolicy,
        /// Name used in outputs; defaults to the scheduler name.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    StageGreedy,
    Speculative {
        #[serde(default)]
        config: SpeculativeConfig,
    },
    Cloning {
        #[serde(default)]
        config: CloningConfig,
    },
}

pub const SCHEDULER_NAMES: [&str; 4] = ["insurance", "stage-greedy", "speculative", "cloning"];

/// Epsilon of the default insurance scheduler: the value the epsilon sweep
/// selects at the medium load of the desk preset.
pub const DESK_EPSILON: f64 = 0.8;

/// Epsilon of the ablation variants.
pub const ABLATION_EPSILON: f64 = 0.6;

impl SchedulerSpec {
    pub fn insurance(policy: InsurerPolicy) -> Self {
        Self::Insurance { policy, label: None }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "insurance" => Self::insurance(InsurerPolicy::with_epsilon(DESK_EPSILON)),
            "stage-greedy" => Self::StageGreedy,
            "speculative" => Self::Speculative { config: SpeculativeConfig::default() },
            "cloning" => Self::Cloning { config: CloningConfig::default() },
            other => {
                return Err(Error::Config(format!(
                    "unknown scheduler '{other}', expected one of {}",
                    SCHEDULER_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            Self::Insurance { label: Some(l), .. } => l.clone(),
            Self::Insurance { .. } => "insurance".into(),
            Self::StageGreedy => "stage-greedy".into(),
            Self::Speculative { .. } => "speculative".into(),
            Self::Cloning { .. } => "cloning".into(),
        }
    }

    pub fn build(&self) -> Box<dyn Scheduler> {
        match self {
            Self::Insurance { policy, .. } => Box::new(Insurer::new(*policy)),
            Self::StageGreedy => Box::new(StageGreedy),
            Self::Speculative { config } => Box::new(Speculative::new(*config)),
            Self::Cloning { config } => Box::new(Cloning::new(*config)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Insurance { policy, .. } => policy.validate(),
            Self::Speculative { config } if !(config.threshold > 0.0 && config.monitor_delay >= 0.0) => {
                Err(Error::Config("speculation threshold must be positive".into()))
            }
            Self::Cloning { config } if !(config.budget >= 0.0 && config.clones >= 1) => {
                Err(Error::Config("clone budget must be non-negative and clones at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        match self {
            Self::Insurance { policy, label } => Self::Insurance { policy: InsurerPolicy { epsilon, ..*policy }, label: label.clone() },
            other => other.clone(),
        }
    }
}

/// Arrival rates standing for light, medium and heavy load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadLevels {
    pub light: f64,
    pub medium: f64,
    pub heavy: f64,
}

impl LoadLevels {
    pub fn all(&self) -> [(&'static str, f64); 3] {
        [("light", self.light), ("medium", self.medium), ("heavy", self.heavy)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    pub engine: EngineConfig,
    /// Scheduler used by single-scheduler runs.
    pub scheduler: SchedulerSpec,
    /// Schedulers compared side by side.
    pub compare: Vec<SchedulerSpec>,
    /// Scheduler that per-job reductions are measured against.
    pub reference: String,
    pub seeds: Vec<u64>,
    pub loads: LoadLevels,
    pub epsilons: Vec<f64>,
    /// Arrival rates of the epsilon sweep.
    pub sweep_lambdas: Vec<f64>,
    /// Epsilon used by the ablation variants.
    pub ablation_epsilon: f64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let loads = LoadLevels { light: 0.02, medium: 0.07, heavy: 0.15 };
        let mut workload = WorkloadSpec::desk();
        workload.lambda = loads.medium;
        Self {
            topology: TopologySpec::desk(),
            workload,
            engine: EngineConfig::default(),
            scheduler: SchedulerSpec::insurance(InsurerPolicy::with_epsilon(DESK_EPSILON)),
            compare: SCHEDULER_NAMES.iter().map(|n| SchedulerSpec::from_name(n).expect("known name")).collect(),
            reference: "stage-greedy".into(),
            seeds: (0..10).collect(),
            loads,
            epsilons: vec![0.2, 0.4, 0.6, 0.8],
            sweep_lambdas: vec![loads.light, loads.medium, loads.heavy],
            ablation_epsilon: ABLATION_EPSILON,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for &e in &self.epsilons {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("epsilon {e} outside (0, 1)")));
            }
        }
        for &l in self.sweep_lambdas.iter().chain([self.loads.light, self.loads.medium, self.loads.heavy].iter()) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("arrival rate {l} must be positive")));
            }
        }
        self.topology.validate()?;
        self.workload.validate()?;
        self.engine.validate()?;
        self.scheduler.validate()?;
        for s in &self.compare {
            s.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `key=value` overrides, where `key` is a dotted path into the
    /// JSON form of the config and `value` is parsed as JSON when possible
    /// and taken as a string otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for o in overrides {
            let (key, raw) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{}' is not KEY=VALUE", o.as_ref())))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
    }

    fn at_lambda(&self, lambda: f64) -> WorkloadSpec {
        WorkloadSpec { lambda, ..self.workload.clone() }
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                // Unknown keys would be dropped silently on deserialization.
                let slot = map
                    .get_mut(*part)
                    .ok_or_else(|| Error::Config(format!("'{key}' does not name a config field")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::Config(format!("'{part}' in '{key}' is not an index")))?;
                let slot = items.get_mut(idx).ok_or_else(|| Error::Config(format!("index {idx} out of range in '{key}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("'{key}' does not name a config field"))),
        };
    }
    Err(Error::Config("empty override key".into()))
}

/// What one run leaves behind once its trace is discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub seed: u64,
    pub lambda: f64,
    pub outcomes: Vec<JobOutcome>,
}

impl RunSummary {
    pub fn mean_flowtime(&self) -> f64 {
        mean(self.outcomes.iter().map(|o| o.flowtime))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn run_point(config: &ExperimentConfig, spec: &SchedulerSpec, lambda: f64, seed: u64) -> Result<SimTrace> {
    let scenario = Scenario::generate(&config.topology, &config.at_lambda(lambda), seed)?;
    let mut scheduler = spec.build();
    let mut trace = engine::run(&scenario, scheduler.as_mut(), &config.engine, seed)?;
    trace.scheduler = spec.label();
    Ok(trace)
}

/// Runs every `(scheduler, lambda, seed)` point in parallel and returns the
/// summaries in input order.
pub fn run_grid(config: &ExperimentConfig, points: &[(SchedulerSpec, f64, u64)]) -> Result<Vec<RunSummary>> {
    points
        .par_iter()
        .map(|(spec, lambda, seed)| {
            let trace = run_point(config, spec, *lambda, *seed)?;
            Ok(RunSummary { scheduler: spec.label(), seed: *seed, lambda: *lambda, outcomes: trace.outcomes_by_job() })
        })
        .collect()
}

/// Full traces of the configured scheduler, one per seed.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<SimTrace>> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&seed| run_point(config, &config.scheduler, config.workload.lambda, seed))
        .collect()
}

/// Results of several schedulers over the same seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub runs: Vec<RunSummary>,
}

pub fn compare(config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let mut points = Vec::new();
    for spec in &config.compare {
        for &seed in &config.seeds {
            points.push((spec.clone(), config.workload.lambda, seed));
        }
    }
    Ok(Comparison { reference: config.reference.clone(), runs: run_grid(config, &points)? })
}

impl Comparison {
    pub fn schedulers(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.runs {
            if !names.contains(&r.scheduler) {
                names.push(r.scheduler.clone());
            }
        }
        names
    }

    /// Mean flowtime over all jobs of all seeds.
    pub fn mean_flowtime(&self, scheduler: &str) -> f64 {
        mean(self.runs.iter().filter(|r| r.scheduler == scheduler).flat_map(|r| r.outcomes.iter().map(|o| o.flowtime)))
    }

    /// Per-job flowtime averaged across seeds.
    pub fn per_job_mean(&self, scheduler: &str) -> BTreeMap<u32, f64> {
        let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for r in self.runs.iter().filter(|r| r.scheduler == scheduler) {
            for o in &r.outcomes {
                let e = acc.entry(o.job.0).or_insert((0.0, 0));
                e.0 += o.flowtime;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(j, (s, n))| (j, s / n as f64)).collect()
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("job_id,arrival,completion,flowtime,scheduler,seed\n");
        for r in &self.runs {
            for o in &r.outcomes {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{},{}",
                    o.job.0, o.arrival, o.completion, o.flowtime, r.scheduler, r.seed
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scheduler,statistic,value\n");
        for s in self.schedulers() {
            let mut flows: Vec<f64> = self.runs.iter().filter(|r| r.scheduler == s).flat_map(|r| r.outcomes.iter().map(|o| o.flowtime)).collect();
            flows.sort_by(f64::total_cmp);
            let seed_means: Vec<f64> = self.runs.iter().filter(|r| r.scheduler == s).map(RunSummary::mean_flowtime).collect();
            let stats = [
                ("mean_flowtime", self.mean_flowtime(&s)),
                ("median_flowtime", quantile(&flows, 0.5)),
                ("p90_flowtime", quantile(&flows, 0.9)),
                ("max_flowtime", flows.last().copied().unwrap_or(0.0)),
                ("seed_mean_min", seed_means.iter().copied().fold(f64::INFINITY, f64::min)),
                ("seed_mean_max", seed_means.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                ("jobs", flows.len() as f64),
            ];
            for (name, v) in stats {
                let _ = writeln!(out, "{s},{name},{v:.6}");
            }
        }
        out
    }

    /// Empirical CDF of the per-job mean flowtime of each scheduler.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("scheduler,flowtime,fraction\n");
        for s in self.schedulers() {
            let mut v: Vec<f64> = self.per_job_mean(&s).into_values().collect();
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            for (i, f) in v.iter().enumerate() {
                let _ = writeln!(out, "{s},{f:.6},{:.6}", (i + 1) as f64 / n);
            }
        }
        out
    }

    /// Per-job reduction `1 - flowtime / reference_flowtime`, on per-job
    /// means across seeds.
    pub fn reduction_csv(&self) -> String {
        let mut out = String::from("scheduler,job_id,reference,reduction\n");
        let reference = self.per_job_mean(&self.reference);
        for s in self.schedulers().into_iter().filter(|s| *s != self.reference) {
            for (job, f) in self.per_job_mean(&s) {
                if let Some(&r) = reference.get(&job) {
                    let red = if r > 0.0 { 1.0 - f / r } else { 0.0 };
                    let _ = writeln!(out, "{s},{job},{},{red:.6}", self.reference);
                }
            }
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

/// Mean flowtime for every `(lambda, epsilon)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `means[i][j]` belongs to `lambdas[i]` and `epsilons[j]`.
    pub means: Vec<Vec<f64>>,
}

pub fn sweep(config: &ExperimentConfig) -> Result<Sweep> {
    config.validate()?;
    let mut points = Vec::new();
    for &l in &config.sweep_lambdas {
        for &e in &config.epsilons {
            for &seed in &config.seeds {
                points.push((config.scheduler.with_epsilon(e), l, seed));
            }
        }
    }
    let runs = run_grid(config, &points)?;
    let per_point = config.seeds.len();
    let mut means = Vec::new();
    for chunk in runs.chunks(per_point * config.epsilons.len()) {
        means.push(chunk.chunks(per_point).map(|c| mean(c.iter().map(RunSummary::mean_flowtime))).collect());
    }
    Ok(Sweep { lambdas: config.sweep_lambdas.clone(), epsilons: config.epsilons.clone(), means })
}

impl Sweep {
    /// Epsilon with the lowest mean flowtime at each arrival rate; ties go
    /// to the smaller epsilon.
    pub fn argmin(&self) -> Vec<f64> {
        self.means
            .iter()
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v < row[best] {
                        best = j;
                    }
                }
                self.epsilons[best]
            })
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("lambda");
        for e in &self.epsilons {
            let _ = write!(out, ",eps_{e}");
        }
        out.push_str(",argmin_epsilon\n");
        for ((l, row), best) in self.lambdas.iter().zip(&self.means).zip(self.argmin()) {
            let _ = write!(out, "{l}");
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            let _ = writeln!(out, ",{best}");
        }
        out
    }
}

pub const ABLATION_VARIANTS: [&str; 6] = ["eff-reli", "eff-eff", "reli-eff", "reli-reli", "efa", "jga"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub epsilon: f64,
    pub lambda: f64,
    /// `(variant, mean flowtime)` in [`ABLATION_VARIANTS`] order.
    pub means: Vec<(String, f64)>,
}

/// Principle and allocation variants of the insurer at the medium load.
pub fn ablate(config: &ExperimentConfig) -> Result<Ablation> {
    config.validate()?;
    let lambda = config.loads.medium;
    // The default policy is both "eff-reli" and "efa"; it runs once.
    let distinct: Vec<&str> = ABLATION_VARIANTS.iter().copied().filter(|v| *v != "efa").collect();
    let mut points = Vec::new();
    for v in &distinct {
        let policy = InsurerPolicy::from_label(v, config.ablation_epsilon)?;
        for &seed in &config.seeds {
            points.push((SchedulerSpec::Insurance { policy, label: Some(v.to_string()) }, lambda, seed));
        }
    }
    let runs = run_grid(config, &points)?;
    let found: BTreeMap<&str, f64> = runs
        .chunks(config.seeds.len())
        .zip(&distinct)
        .map(|(c, v)| (*v, mean(c.iter().map(RunSummary::mean_flowtime))))
        .collect();
    let means = ABLATION_VARIANTS
        .iter()
        .map(|v| (v.to_string(), found[if *v == "efa" { "eff-reli" } else { v }]))
        .collect();
    Ok(Ablation { epsilon: config.ablation_epsilon, lambda, means })
}

impl Ablation {
    pub fn get(&self, variant: &str) -> Option<f64> {
        self.means.iter().find(|(v, _)| v == variant).map(|(_, m)| *m)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("variant,epsilon,lambda,mean_flowtime\n");
        for (v, m) in &self.means {
            let _ = writeln!(out, "{v},{},{},{m:.6}", self.epsilon, self.lambda);
        }
        out
    }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
