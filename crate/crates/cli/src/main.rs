//! Command-line driver: generates scenarios, runs schedulers over seeds and
//! parameter grids, writes CSV/JSON results and runs the verification suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use geoinsure::experiment::{self, ExperimentConfig, SchedulerSpec, ABLATION_VARIANTS, SCHEDULER_NAMES};
use geoinsure::insurer::InsurerPolicy;
use geoinsure::verify::suite::{self, CheckResult};
use geoinsure::workload::{gen_topology, Scenario};
use geoinsure::Error;

#[derive(Parser)]
#[command(name = "geoinsure", version, about = "Simulate multi-round task insurance on geo-distributed clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheduler over every seed and keep full traces.
    Simulate(Common),
    /// Run the configured schedulers side by side.
    Compare(Common),
    /// Mean flowtime over the epsilon by arrival-rate grid.
    Sweep(Common),
    /// Insurance principle and allocation variants at the medium load.
    Ablate(Common),
    /// Property, oracle, audit and competitive-ratio checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random tiny instances for the competitive-ratio check.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Random cases for the composition oracle.
        #[arg(long, default_value_t = 1000)]
        oracle_cases: usize,
        /// Random sequences for the diminishing per-copy rate check.
        #[arg(long, default_value_t = 100)]
        rate_cases: usize,
    },
    /// Generate a topology and print or write it as JSON.
    GenTopology(Common),
    /// Generate a topology and workload and print or write them as JSON.
    GenWorkload(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed to run; repeat for several. Replaces the configured seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scheduler for single-scheduler runs: one of the scheduler names or
    /// an insurance variant such as eff-eff.
    #[arg(long)]
    scheduler: Option<String>,
    /// Epsilon of every insurance scheduler, including ablation variants.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Arrival rate of every run, replacing the medium load and sweep rates.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override a config field by dotted path, e.g. workload.jobs=50.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(Error),
    Run(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidSpec(_) | Error::Json(_) => Failure::Config(e),
            other => Failure::Run(other),
        }
    }
}

fn scheduler_from_name(name: &str) -> geoinsure::Result<SchedulerSpec> {
    if ABLATION_VARIANTS.contains(&name) {
        let policy = InsurerPolicy::from_label(name, experiment::DESK_EPSILON)?;
        return Ok(SchedulerSpec::Insurance { policy, label: Some(name.to_string()) });
    }
    SchedulerSpec::from_name(name).map_err(|_| {
        Error::Config(format!(
            "unknown scheduler '{name}', expected one of {} or {}",
            SCHEDULER_NAMES.join(", "),
            ABLATION_VARIANTS.join(", ")
        ))
    })
}

impl Common {
    fn resolve(&self) -> geoinsure::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut c = base.with_overrides(&self.overrides)?;
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            c.output = out.clone();
        }
        if let Some(name) = &self.scheduler {
            c.scheduler = scheduler_from_name(name)?;
        }
        if let Some(e) = self.epsilon {
            c.scheduler = c.scheduler.with_epsilon(e);
            c.compare = c.compare.iter().map(|s| s.with_epsilon(e)).collect();
            c.ablation_epsilon = e;
        }
        if let Some(l) = self.lambda {
            c.workload.lambda = l;
            c.loads.medium = l;
            c.sweep_lambdas = vec![l];
        }
        c.validate()?;
        Ok(c)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> geoinsure::Result<()> {
    let path = experiment::write_output(dir, name, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> geoinsure::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

/// Elapsed time goes to its own file so the result files stay byte-identical
/// across reruns.
fn log_run(dir: &Path, command: &str, started: Instant) -> geoinsure::Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(dir.join("run.log"))?;
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(f, "{stamp} {command} {:.3}s", started.elapsed().as_secs_f64())?;
    Ok(())
}

fn simulate(c: &ExperimentConfig) -> geoinsure::Result<()> {
    let traces = experiment::simulate(c)?;
    let label = c.scheduler.label();
    let runs: Vec<experiment::RunSummary> = traces
        .iter()
        .map(|t| experiment::RunSummary {
            scheduler: label.clone(),
            seed: t.seed,
            lambda: c.workload.lambda,
            outcomes: t.outcomes_by_job(),
        })
        .collect();
    for t in &traces {
        write(&c.output, &format!("trace-{label}-{}.jsonl", t.seed), &t.to_jsonl()?)?;
    }
    let cmp = experiment::Comparison { reference: label.clone(), runs };
    write(&c.output, "metrics.csv", &cmp.metrics_csv())?;
    write(&c.output, "summary.csv", &cmp.summary_csv())?;
    write(&c.output, "cdf.csv", &cmp.cdf_csv())?;
    let per_seed: Vec<_> = cmp.runs.iter().map(|r| json!({"seed": r.seed, "mean_flowtime": r.mean_flowtime()})).collect();
    let mean = cmp.mean_flowtime(&label);
    write_json(&c.output, "report.json", &json!({"command": "simulate", "scheduler": label, "mean_flowtime": mean, "seeds": per_seed, "config": c}))?;
    println!("{label}: mean flowtime {mean:.3} over {} seeds", c.seeds.len());
    Ok(())
}

fn compare(c: &ExperimentConfig) -> geoinsure::Result<()> {
    let cmp = experiment::compare(c)?;
    write(&c.output, "metrics.csv", &cmp.metrics_csv())?;
    write(&c.output, "summary.csv", &cmp.summary_csv())?;
    write(&c.output, "cdf.csv", &cmp.cdf_csv())?;
    write(&c.output, "reduction.csv", &cmp.reduction_csv())?;
    let means: serde_json::Map<String, serde_json::Value> =
        cmp.schedulers().into_iter().map(|s| (s.clone(), json!(cmp.mean_flowtime(&s)))).collect();
    for (s, m) in &means {
        println!("{s:>14}: mean flowtime {:.3}", m.as_f64().unwrap_or(f64::NAN));
    }
    write_json(&c.output, "report.json", &json!({"command": "compare", "reference": cmp.reference, "mean_flowtime": means, "config": c}))
}

fn sweep(c: &ExperimentConfig) -> geoinsure::Result<()> {
    let s = experiment::sweep(c)?;
    write(&c.output, "sweep.csv", &s.csv())?;
    for (l, e) in s.lambdas.iter().zip(s.argmin()) {
        println!("lambda {l}: best epsilon {e}");
    }
    write_json(&c.output, "report.json", &json!({"command": "sweep", "sweep": s, "argmin": s.argmin(), "config": c}))
}

fn ablate(c: &ExperimentConfig) -> geoinsure::Result<()> {
    let a = experiment::ablate(c)?;
    write(&c.output, "ablation.csv", &a.csv())?;
    for (v, m) in &a.means {
        println!("{v:>10}: mean flowtime {m:.3}");
    }
    write_json(&c.output, "report.json", &json!({"command": "ablate", "ablation": a, "config": c}))
}

const COMPETITIVE_NOTE: &str = "The competitive-ratio check is empirical evidence, not a proof: brute force over \
deterministic integer-slot instances only approximates the adversary the bound is stated for.";

fn verify(c: &ExperimentConfig, instances: usize, oracle_cases: usize, rate_cases: usize) -> geoinsure::Result<bool> {
    let seed = c.seeds[0];
    let checks: Vec<CheckResult> = vec![
        suite::marginal_rate_suite(rate_cases, 6, seed),
        suite::composition_suite(oracle_cases, seed),
        suite::audit_suite(c)?,
        suite::competitive_suite(instances, &[0.2, 0.5, 0.8], seed)?,
    ];
    println!("# {COMPETITIVE_NOTE}");
    for r in &checks {
        println!("{} {} ({} cases, {} failures)", if r.passed() { "PASS" } else { "FAIL" }, r.name, r.cases, r.failures);
        for d in &r.details {
            println!("    {d}");
        }
    }
    let passed = checks.iter().all(CheckResult::passed);
    write_json(&c.output, "verify.json", &json!({"note": COMPETITIVE_NOTE, "passed": passed, "checks": checks}))?;
    Ok(passed)
}

fn emit(common: &Common, name: &str, value: &impl Serialize) -> geoinsure::Result<()> {
    match &common.out {
        Some(dir) => write_json(dir, name, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let (name, c) = match &cli.command {
        Command::Simulate(o) => ("simulate", o.resolve()?),
        Command::Compare(o) => ("compare", o.resolve()?),
        Command::Sweep(o) => ("sweep", o.resolve()?),
        Command::Ablate(o) => ("ablate", o.resolve()?),
        Command::Verify { common, .. } => ("verify", common.resolve()?),
        Command::GenTopology(o) => {
            let c = o.resolve()?;
            let topology = gen_topology(&c.topology, c.seeds[0])?;
            return Ok(emit(o, "topology.json", &topology)?);
        }
        Command::GenWorkload(o) => {
            let c = o.resolve()?;
            let scenario = Scenario::generate(&c.topology, &c.workload, c.seeds[0])?;
            return Ok(emit(o, "scenario.json", &scenario)?);
        }
    };
    let mut failed = false;
    match &cli.command {
        Command::Simulate(_) => simulate(&c)?,
        Command::Compare(_) => compare(&c)?,
        Command::Sweep(_) => sweep(&c)?,
        Command::Ablate(_) => ablate(&c)?,
        Command::Verify { instances, oracle_cases, rate_cases, .. } => {
            failed = !verify(&c, *instances, *oracle_cases, *rate_cases)?;
        }
        Command::GenTopology(_) | Command::GenWorkload(_) => unreachable!("handled above"),
    }
    log_run(&c.output, name, started)?;
    if failed {
        Err(Failure::Verification)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
    }
}
