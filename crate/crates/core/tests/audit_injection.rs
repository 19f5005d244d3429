mod common;

use common::{point, scenario, task, topology};
use geoinsure::engine::{EndReason, JobOutcome, SimTrace, TraceEvent};
use geoinsure::perfmodel::GateDemand;
use geoinsure::verify::{audit, Constraint};
use geoinsure::workload::Scenario;
use geoinsure::{ClusterId, CopyId, Error, JobId, TaskId};

/// Two clusters with two slots each; job 0 arrives at 1 with a two-task chain.
fn fixture() -> Scenario {
    let topo = topology(vec![point(1.0), point(1.0)], &[2, 2], &[0.0, 0.0]);
    scenario(topo, vec![(1.0, vec![task(0, 2.0, &[]), task(1, 2.0, &[0])])])
}

struct Log {
    events: Vec<TraceEvent>,
    next: u64,
}

impl Log {
    fn new() -> Self {
        Self { events: vec![TraceEvent::JobArrival { time: 1.0, job: JobId(0) }], next: 0 }
    }

    fn launch(&mut self, time: f64, index: u32, cluster: u32, demand: GateDemand) -> CopyId {
        let copy = CopyId(self.next);
        self.next += 1;
        let task = TaskId::new(0, index);
        let cluster = ClusterId(cluster);
        self.events.push(TraceEvent::CopyLaunch { time, copy, task, cluster, rate: 1.0, expected_rate: 1.0, demand });
        copy
    }

    fn end(&mut self, time: f64, copy: CopyId, index: u32, cluster: u32, done: bool) {
        let (task, cluster) = (TaskId::new(0, index), ClusterId(cluster));
        let reason = if done { EndReason::Completed } else { EndReason::KilledSibling };
        self.events.push(TraceEvent::CopyEnd { time, copy, task, cluster, reason });
        if done {
            self.events.push(TraceEvent::TaskDone { time, task, cluster });
        }
    }

    fn finish(mut self, completion: f64) -> SimTrace {
        self.events.push(TraceEvent::JobDone { time: completion, job: JobId(0), flowtime: completion - 1.0 });
        SimTrace {
            scheduler: "fixture".into(),
            seed: 0,
            slot_seconds: 1.0,
            events: self.events,
            usage: Vec::new(),
            outcomes: vec![JobOutcome { job: JobId(0), arrival: 1.0, completion, flowtime: completion - 1.0 }],
            unfinished: 0,
            end_time: completion,
        }
    }
}

fn constraints(trace: &SimTrace) -> Vec<Constraint> {
    audit(trace, &fixture()).unwrap().into_iter().map(|v| v.constraint).collect()
}

fn clean() -> Log {
    let mut log = Log::new();
    let a = log.launch(1.0, 0, 0, GateDemand::default());
    log.end(3.0, a, 0, 0, true);
    let b = log.launch(3.0, 1, 1, GateDemand::default());
    log.end(5.0, b, 1, 1, true);
    log
}

#[test]
fn a_consistent_trace_passes() {
    assert!(constraints(&clean().finish(5.0)).is_empty());
}

#[test]
fn three_copies_in_a_two_slot_cluster() {
    let mut log = Log::new();
    let copies: Vec<CopyId> = (0..3).map(|_| log.launch(1.0, 0, 0, GateDemand::default())).collect();
    log.end(3.0, copies[0], 0, 0, true);
    for &c in &copies[1..] {
        log.end(3.0, c, 0, 0, false);
    }
    let b = log.launch(3.0, 1, 1, GateDemand::default());
    log.end(5.0, b, 1, 1, true);
    assert_eq!(constraints(&log.finish(5.0)), vec![Constraint::SlotCapacity]);
}

#[test]
fn start_before_arrival() {
    let mut log = Log::new();
    log.events.clear();
    let a = log.launch(0.0, 0, 0, GateDemand::default());
    log.events.push(TraceEvent::JobArrival { time: 1.0, job: JobId(0) });
    log.end(3.0, a, 0, 0, true);
    let b = log.launch(3.0, 1, 1, GateDemand::default());
    log.end(5.0, b, 1, 1, true);
    assert_eq!(constraints(&log.finish(5.0)), vec![Constraint::StartAfterArrival]);
}

#[test]
fn successor_before_predecessor() {
    let mut log = Log::new();
    let a = log.launch(1.0, 0, 0, GateDemand::default());
    let b = log.launch(2.0, 1, 1, GateDemand::default());
    log.end(3.0, a, 0, 0, true);
    log.end(4.0, b, 1, 1, true);
    assert_eq!(constraints(&log.finish(4.0)), vec![Constraint::Precedence]);
}

#[test]
fn gate_overload() {
    let mut log = Log::new();
    let demand = GateDemand { destination: Some(ClusterId(0)), ingress: 2e6, egress: vec![(ClusterId(1), 2e6)] };
    let a = log.launch(1.0, 0, 0, demand);
    log.end(3.0, a, 0, 0, true);
    let b = log.launch(3.0, 1, 1, GateDemand::default());
    log.end(5.0, b, 1, 1, true);
    assert_eq!(constraints(&log.finish(5.0)), vec![Constraint::IngressCap, Constraint::EgressCap]);
}

#[test]
fn launch_into_a_failed_cluster() {
    let mut log = Log::new();
    log.events.push(TraceEvent::ClusterFailure { time: 1.0, cluster: ClusterId(0) });
    let a = log.launch(1.0, 0, 0, GateDemand::default());
    log.end(3.0, a, 0, 0, true);
    let b = log.launch(3.0, 1, 1, GateDemand::default());
    log.end(5.0, b, 1, 1, true);
    assert_eq!(constraints(&log.finish(5.0)), vec![Constraint::ClusterAvailability]);
}

#[test]
fn copy_that_never_ends() {
    let mut log = clean();
    log.launch(5.0, 1, 0, GateDemand::default());
    assert_eq!(constraints(&log.finish(5.0)), vec![Constraint::CopyConservation]);
}

#[test]
fn job_done_with_a_missing_task() {
    let mut log = Log::new();
    let a = log.launch(1.0, 0, 0, GateDemand::default());
    log.end(3.0, a, 0, 0, true);
    assert_eq!(constraints(&log.finish(3.0)), vec![Constraint::TaskCoverage]);
}

#[test]
fn job_done_at_the_wrong_time() {
    let got = constraints(&clean().finish(6.0));
    assert!(!got.is_empty());
    assert!(got.iter().all(|c| *c == Constraint::JobCompletion));
}

#[test]
fn malformed_traces_are_errors() {
    let mut backwards = clean().finish(5.0);
    backwards.events.swap(1, 3);
    assert!(matches!(audit(&backwards, &fixture()), Err(Error::MalformedTrace(_))));

    let mut log = Log::new();
    log.launch(1.0, 0, 7, GateDemand::default());
    assert!(matches!(audit(&log.finish(2.0), &fixture()), Err(Error::MalformedTrace(_))));
}

#[test]
fn jsonl_round_trip_preserves_events() {
    let trace = clean().finish(5.0);
    let events = SimTrace::from_jsonl(&trace.to_jsonl().unwrap()).unwrap();
    assert_eq!(events, trace.events);
}
