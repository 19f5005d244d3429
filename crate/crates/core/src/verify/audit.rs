//! Replays a trace against its scenario and reports every breached
//! scheduling constraint.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::engine::{SimTrace, TraceEvent};
use crate::error::{Error, Result};
use crate::perfmodel::GateDemand;
use crate::plan::GATE_TOLERANCE;
use crate::types::{ClusterId, CopyId, JobId, TaskId};
use crate::workload::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Every task of a finished job completed with at least one copy.
    TaskCoverage,
    /// No copy starts before its job arrives.
    StartAfterArrival,
    /// No copy starts before all predecessors of its task finished.
    Precedence,
    /// Concurrent copies in a cluster never exceed its slots.
    SlotCapacity,
    IngressCap,
    EgressCap,
    /// A job completes exactly when its last task does.
    JobCompletion,
    /// Every launched copy ends exactly once.
    CopyConservation,
    /// No copy starts in a cluster that is down.
    ClusterAvailability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub time: f64,
    pub cluster: Option<ClusterId>,
    pub task: Option<TaskId>,
    /// How far past the limit, in the constraint's own unit.
    pub magnitude: f64,
}

struct Replay<'a> {
    scenario: &'a Scenario,
    slots: Vec<u32>,
    ingress_cap: Vec<f64>,
    egress_cap: Vec<f64>,
    running: Vec<u32>,
    ingress: Vec<f64>,
    egress: Vec<f64>,
    down: Vec<bool>,
    live: HashMap<CopyId, (TaskId, ClusterId, GateDemand)>,
    ended: HashMap<CopyId, usize>,
    launched: HashMap<TaskId, u32>,
    done: HashMap<TaskId, f64>,
    job_done: BTreeMap<JobId, f64>,
    out: Vec<Violation>,
}

fn over(used: f64, cap: f64) -> Option<f64> {
    (used > cap * (1.0 + GATE_TOLERANCE) + GATE_TOLERANCE).then_some(used - cap)
}

impl<'a> Replay<'a> {
    fn new(scenario: &'a Scenario, slot_seconds: f64) -> Self {
        let cs = &scenario.topology.clusters;
        let n = cs.len();
        Self {
            scenario,
            slots: cs.iter().map(|c| c.slots).collect(),
            ingress_cap: cs.iter().map(|c| c.ingress_cap * slot_seconds).collect(),
            egress_cap: cs.iter().map(|c| c.egress_cap * slot_seconds).collect(),
            running: vec![0; n],
            ingress: vec![0.0; n],
            egress: vec![0.0; n],
            down: vec![false; n],
            live: HashMap::new(),
            ended: HashMap::new(),
            launched: HashMap::new(),
            done: HashMap::new(),
            job_done: BTreeMap::new(),
            out: Vec::new(),
        }
    }

    fn flag(&mut self, constraint: Constraint, time: f64, cluster: Option<ClusterId>, task: Option<TaskId>, magnitude: f64) {
        self.out.push(Violation { constraint, time, cluster, task, magnitude });
    }

    fn cluster(&self, c: ClusterId) -> Result<usize> {
        let k = c.index();
        if k < self.slots.len() {
            Ok(k)
        } else {
            Err(Error::MalformedTrace(format!("unknown cluster {c}")))
        }
    }

    fn task_spec(&self, t: TaskId) -> Result<&'a crate::workload::TaskSpec> {
        self.scenario
            .jobs
            .get(t.job.index())
            .and_then(|j| j.tasks.get(t.index as usize))
            .ok_or_else(|| Error::MalformedTrace(format!("unknown task {t}")))
    }

    fn event(&mut self, e: &TraceEvent) -> Result<()> {
        match e {
            TraceEvent::ClusterFailure { cluster, .. } => {
                let k = self.cluster(*cluster)?;
                self.down[k] = true;
            }
            TraceEvent::ClusterRecovery { cluster, .. } => {
                let k = self.cluster(*cluster)?;
                self.down[k] = false;
            }
            TraceEvent::CopyLaunch { time, copy, task, cluster, demand, .. } => self.launch(*time, *copy, *task, *cluster, demand)?,
            TraceEvent::CopyEnd { time, copy, task, cluster, .. } => {
                let count = self.ended.entry(*copy).or_insert(0);
                *count += 1;
                if *count > 1 {
                    self.flag(Constraint::CopyConservation, *time, Some(*cluster), Some(*task), 1.0);
                    return Ok(());
                }
                let (t, c, demand) = self
                    .live
                    .remove(copy)
                    .ok_or_else(|| Error::MalformedTrace(format!("copy {copy} ends without a launch")))?;
                if t != *task || c != *cluster {
                    return Err(Error::MalformedTrace(format!("copy {copy} ends with mismatched task or cluster")));
                }
                self.release(c, &demand);
            }
            TraceEvent::TaskDone { time, task, .. } => {
                self.task_spec(*task)?;
                if self.done.insert(*task, *time).is_some() {
                    self.flag(Constraint::CopyConservation, *time, None, Some(*task), 1.0);
                }
            }
            TraceEvent::JobDone { time, job, .. } => {
                if job.index() >= self.scenario.jobs.len() {
                    return Err(Error::MalformedTrace(format!("unknown job {job}")));
                }
                self.job_done.insert(*job, *time);
            }
            TraceEvent::JobArrival { job, .. } => {
                if job.index() >= self.scenario.jobs.len() {
                    return Err(Error::MalformedTrace(format!("unknown job {job}")));
                }
            }
            TraceEvent::PlanDropped { task, cluster, .. } => {
                self.task_spec(*task)?;
                self.cluster(*cluster)?;
            }
            TraceEvent::SlotTick { .. } => {}
        }
        Ok(())
    }

    fn launch(&mut self, time: f64, copy: CopyId, task: TaskId, cluster: ClusterId, demand: &GateDemand) -> Result<()> {
        let k = self.cluster(cluster)?;
        let spec = self.task_spec(task)?;
        if self.live.contains_key(&copy) || self.ended.contains_key(&copy) {
            return Err(Error::MalformedTrace(format!("copy {copy} launched twice")));
        }
        let arrival = self.scenario.jobs[task.job.index()].arrival;
        if time < arrival {
            self.flag(Constraint::StartAfterArrival, time, Some(cluster), Some(task), arrival - time);
        }
        for &p in &spec.preds {
            let pred = TaskId { job: task.job, index: p };
            match self.done.get(&pred) {
                Some(&f) if f <= time => {}
                Some(&f) => self.flag(Constraint::Precedence, time, Some(cluster), Some(task), f - time),
                None => self.flag(Constraint::Precedence, time, Some(cluster), Some(task), f64::INFINITY),
            }
        }
        if self.down[k] {
            self.flag(Constraint::ClusterAvailability, time, Some(cluster), Some(task), 1.0);
        }
        self.running[k] += 1;
        if self.running[k] > self.slots[k] {
            let excess = f64::from(self.running[k] - self.slots[k]);
            self.flag(Constraint::SlotCapacity, time, Some(cluster), Some(task), excess);
        }
        if let Some(dst) = demand.destination {
            let d = self.cluster(dst)?;
            self.ingress[d] += demand.ingress;
            if let Some(m) = over(self.ingress[d], self.ingress_cap[d]) {
                self.flag(Constraint::IngressCap, time, Some(dst), Some(task), m);
            }
        }
        for &(src, need) in &demand.egress {
            let s = self.cluster(src)?;
            self.egress[s] += need;
            if let Some(m) = over(self.egress[s], self.egress_cap[s]) {
                self.flag(Constraint::EgressCap, time, Some(src), Some(task), m);
            }
        }
        *self.launched.entry(task).or_insert(0) += 1;
        self.live.insert(copy, (task, cluster, demand.clone()));
        Ok(())
    }

    fn release(&mut self, cluster: ClusterId, demand: &GateDemand) {
        self.running[cluster.index()] -= 1;
        if let Some(dst) = demand.destination {
            self.ingress[dst.index()] -= demand.ingress;
        }
        for &(src, need) in &demand.egress {
            self.egress[src.index()] -= need;
        }
    }

    fn finish(&mut self, trace: &SimTrace) {
        let end = trace.end_time;
        let leftover: Vec<(TaskId, ClusterId)> = self.live.values().map(|(t, c, _)| (*t, *c)).collect();
        for (t, c) in leftover {
            self.flag(Constraint::CopyConservation, end, Some(c), Some(t), 1.0);
        }
        for (&job, &completion) in &self.job_done.clone() {
            let spec = &self.scenario.jobs[job.index()];
            let mut last = f64::NEG_INFINITY;
            for t in &spec.tasks {
                let id = TaskId { job, index: t.index };
                match (self.done.get(&id), self.launched.get(&id)) {
                    (Some(&f), Some(_)) => last = last.max(f),
                    _ => self.flag(Constraint::TaskCoverage, completion, None, Some(id), 1.0),
                }
            }
            if last.is_finite() && (last - completion).abs() > 1e-9 {
                self.flag(Constraint::JobCompletion, completion, None, None, (last - completion).abs());
            }
        }
        for o in &trace.outcomes {
            let expected = self.job_done.get(&o.job).copied();
            let bad_flow = (o.completion - o.arrival - o.flowtime).abs() > 1e-9;
            if expected != Some(o.completion) || bad_flow {
                self.flag(Constraint::JobCompletion, o.completion, None, None, 1.0);
            }
        }
        for u in &trace.usage {
            for (k, &r) in u.running.iter().enumerate().take(self.slots.len()) {
                if r > self.slots[k] {
                    self.flag(Constraint::SlotCapacity, u.time, Some(ClusterId(k as u32)), None, f64::from(r - self.slots[k]));
                }
            }
            for (k, &v) in u.ingress.iter().enumerate().take(self.slots.len()) {
                if let Some(m) = over(v, self.ingress_cap[k]) {
                    self.flag(Constraint::IngressCap, u.time, Some(ClusterId(k as u32)), None, m);
                }
            }
            for (k, &v) in u.egress.iter().enumerate().take(self.slots.len()) {
                if let Some(m) = over(v, self.egress_cap[k]) {
                    self.flag(Constraint::EgressCap, u.time, Some(ClusterId(k as u32)), None, m);
                }
            }
        }
    }
}

/// Replays `trace` in log order and returns every violation found; an empty
/// list means the run respected all constraints. Events naming clusters,
/// jobs, tasks or copies the scenario cannot account for make the trace
/// malformed.
pub fn audit(trace: &SimTrace, scenario: &Scenario) -> Result<Vec<Violation>> {
    let mut replay = Replay::new(scenario, trace.slot_seconds);
    let mut last = f64::NEG_INFINITY;
    for e in &trace.events {
        if e.time() < last {
            return Err(Error::MalformedTrace(format!("time goes backwards at {}", e.time())));
        }
        last = e.time();
        replay.event(e)?;
    }
    replay.finish(trace);
    Ok(replay.out)
}
