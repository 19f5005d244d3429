mod common;

use std::collections::HashMap;

use common::{dist, point, scenario, task, topology};
use geoinsure::engine::{run, EndReason, EngineConfig, SimTrace, TraceEvent};
use geoinsure::experiment::{SchedulerSpec, ABLATION_EPSILON, ABLATION_VARIANTS, SCHEDULER_NAMES};
use geoinsure::insurer::InsurerPolicy;
use geoinsure::verify::audit;
use geoinsure::workload::{Scenario, TopologySpec, WorkloadSpec};
use geoinsure::{CopyId, TaskId};

fn desk_scenario(jobs: usize, failure_scale: f64, seed: u64) -> Scenario {
    let mut topo = TopologySpec::desk();
    topo.failure_scale = failure_scale;
    let mut work = WorkloadSpec::desk();
    work.jobs = jobs;
    Scenario::generate(&topo, &work, seed).unwrap()
}

fn all_specs() -> Vec<SchedulerSpec> {
    let mut specs: Vec<SchedulerSpec> = SCHEDULER_NAMES.iter().map(|n| SchedulerSpec::from_name(n).unwrap()).collect();
    for v in ABLATION_VARIANTS {
        let policy = InsurerPolicy::from_label(v, ABLATION_EPSILON).unwrap();
        specs.push(SchedulerSpec::Insurance { policy, label: Some(v.into()) });
    }
    specs
}

fn simulate(s: &Scenario, spec: &SchedulerSpec, seed: u64) -> SimTrace {
    run(s, spec.build().as_mut(), &EngineConfig::default(), seed).unwrap()
}

#[test]
fn every_scheduler_produces_a_clean_trace() {
    let s = desk_scenario(30, 1.0, 3);
    for spec in all_specs() {
        let trace = simulate(&s, &spec, 7);
        assert_eq!(trace.unfinished, 0, "{}", spec.label());
        assert_eq!(trace.outcomes.len(), 30);
        let violations = audit(&trace, &s).unwrap();
        assert!(violations.is_empty(), "{}: {violations:?}", spec.label());
    }
}

#[test]
fn copies_end_once_and_tasks_finish_once() {
    let s = desk_scenario(25, 1.0, 11);
    for spec in all_specs() {
        let trace = simulate(&s, &spec, 2);
        let mut ends: HashMap<CopyId, u32> = HashMap::new();
        let mut launched = 0;
        let mut done: HashMap<TaskId, u32> = HashMap::new();
        for e in &trace.events {
            match e {
                TraceEvent::CopyLaunch { copy, .. } => {
                    launched += 1;
                    ends.entry(*copy).or_default();
                }
                TraceEvent::CopyEnd { copy, .. } => *ends.entry(*copy).or_default() += 1,
                TraceEvent::TaskDone { task, .. } => *done.entry(*task).or_default() += 1,
                _ => {}
            }
        }
        assert_eq!(ends.len(), launched);
        assert!(ends.values().all(|&n| n == 1), "{}", spec.label());
        let tasks: usize = s.jobs.iter().map(|j| j.tasks.len()).sum();
        assert_eq!(done.len(), tasks);
        assert!(done.values().all(|&n| n == 1));
    }
}

#[test]
fn events_are_time_ordered_and_respect_arrivals_and_precedence() {
    let s = desk_scenario(25, 1.0, 5);
    let trace = simulate(&s, &SchedulerSpec::from_name("insurance").unwrap(), 9);
    assert!(trace.events.windows(2).all(|w| w[0].time() <= w[1].time()));
    let mut done: HashMap<TaskId, f64> = HashMap::new();
    for e in &trace.events {
        match e {
            TraceEvent::TaskDone { time, task, .. } => {
                done.insert(*task, *time);
            }
            TraceEvent::CopyLaunch { time, task, .. } => {
                let job = &s.jobs[task.job.index()];
                assert!(*time >= job.arrival);
                for p in &job.tasks[task.index as usize].preds {
                    assert!(done[&TaskId::new(task.job.0, *p)] <= *time);
                }
            }
            _ => {}
        }
    }
    for o in &trace.outcomes {
        assert_eq!(o.flowtime, o.completion - o.arrival);
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let s = desk_scenario(20, 1.0, 1);
    for spec in all_specs() {
        assert_eq!(simulate(&s, &spec, 4), simulate(&s, &spec, 4));
    }
    let spec = SchedulerSpec::from_name("insurance").unwrap();
    assert_ne!(simulate(&s, &spec, 4).events, simulate(&s, &spec, 5).events);
}

#[test]
fn zero_failure_probability_never_fails_a_cluster() {
    let s = desk_scenario(20, 0.0, 8);
    for seed in 0..5 {
        let trace = simulate(&s, &SchedulerSpec::from_name("insurance").unwrap(), seed);
        assert!(!trace.events.iter().any(|e| matches!(e, TraceEvent::ClusterFailure { .. })));
    }
}

#[test]
fn failures_kill_copies_and_tasks_restart() {
    let topo = topology(vec![point(1.0)], &[1], &[0.3]);
    let s = scenario(topo, vec![(0.0, vec![task(0, 20.0, &[])])]);
    let trace = simulate(&s, &SchedulerSpec::from_name("stage-greedy").unwrap(), 1);
    let killed =
        trace.events.iter().filter(|e| matches!(e, TraceEvent::CopyEnd { reason: EndReason::KilledFailure, .. })).count();
    let launches = trace.events.iter().filter(|e| matches!(e, TraceEvent::CopyLaunch { .. })).count();
    assert!(killed > 0);
    assert_eq!(launches, killed + 1);
    // A restart begins from scratch, so the flowtime exceeds the failure-free 20.
    assert!(trace.outcomes[0].flowtime > 20.0);
    assert!(audit(&trace, &s).unwrap().is_empty());
}

#[test]
fn single_task_flowtime_is_size_over_rate() {
    let topo = topology(vec![point(2.0)], &[1], &[0.0]);
    let s = scenario(topo, vec![(3.0, vec![task(0, 10.0, &[])])]);
    let trace = simulate(&s, &SchedulerSpec::from_name("insurance").unwrap(), 1);
    assert_eq!(trace.outcomes[0].arrival, 3.0);
    assert_eq!(trace.outcomes[0].flowtime, 5.0);
}

#[test]
fn chain_waits_for_its_predecessor() {
    let topo = topology(vec![point(2.0), point(2.0)], &[1, 1], &[0.0, 0.0]);
    let s = scenario(topo, vec![(0.0, vec![task(0, 4.0, &[]), task(1, 6.0, &[0])])]);
    let trace = simulate(&s, &SchedulerSpec::from_name("stage-greedy").unwrap(), 1);
    assert_eq!(trace.outcomes[0].flowtime, 5.0);
}

#[test]
fn speed_factor_scales_realized_rates() {
    let topo = topology(vec![dist(&[(2.0, 0.5), (4.0, 0.5)])], &[1], &[0.0]);
    let s = scenario(topo, vec![(0.0, vec![task(0, 12.0, &[])])]);
    let config = EngineConfig { speed_factor: 1.5, ..EngineConfig::default() };
    let trace = run(&s, SchedulerSpec::from_name("stage-greedy").unwrap().build().as_mut(), &config, 3).unwrap();
    let rate = trace
        .events
        .iter()
        .find_map(|e| match e {
            TraceEvent::CopyLaunch { rate, .. } => Some(*rate),
            _ => None,
        })
        .unwrap();
    assert!(rate == 3.0 || rate == 6.0);
    assert_eq!(trace.outcomes[0].flowtime, 12.0 / rate);
}
