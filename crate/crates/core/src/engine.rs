//! Slot-granular discrete-event execution of scheduler plans.
//!
//! Time is measured in slots. Schedulers run at integer ticks; copies finish
//! at arbitrary real times. At equal times events are handled in the order
//! job arrival, cluster failure, copy completion, slot tick.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::{ExecutionRecord, GateDemand, ModelConfig, PerformanceModel, TaskProfile, TransferObservation};
use crate::plan::{GateLedger, InsurancePlan, Rejection};
use crate::sched::{ClusterView, CopyView, JobView, Scheduler, Snapshot, TaskView};
use crate::types::{mix_seed, ClusterId, CopyId, JobId, TaskId};
use crate::workload::{Scenario, Topology};

const FAILURE_STREAM: u64 = 0xFA11;
const COPY_STREAM: u64 = 0xC0B1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Simulated time after which the run is abandoned.
    pub horizon: f64,
    /// Ticks a failed cluster stays unavailable.
    pub downtime: u32,
    /// Execution records reach the model in batches every this many slots.
    pub report_interval: u32,
    /// Multiplies every realized copy rate.
    pub speed_factor: f64,
    /// Seconds per slot; configured speeds are MB/s and become MB/slot.
    pub slot_seconds: f64,
    pub failures: bool,
    pub learn: bool,
    pub record_usage: bool,
    pub model: ModelConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            horizon: 1e6,
            downtime: 1,
            report_interval: 10,
            speed_factor: 1.0,
            slot_seconds: 1.0,
            failures: true,
            learn: true,
            record_usage: true,
            model: ModelConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_factor >= 1.0 && self.speed_factor.is_finite()) {
            return Err(Error::Config(format!("speed factor {} must be at least 1", self.speed_factor)));
        }
        if !(self.slot_seconds > 0.0 && self.horizon > 0.0) || self.report_interval == 0 {
            return Err(Error::Config("slot_seconds, horizon and report_interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    KilledSibling,
    KilledFailure,
    KilledHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    JobArrival { time: f64, job: JobId },
    ClusterFailure { time: f64, cluster: ClusterId },
    ClusterRecovery { time: f64, cluster: ClusterId },
    CopyLaunch {
        time: f64,
        copy: CopyId,
        task: TaskId,
        cluster: ClusterId,
        rate: f64,
        expected_rate: f64,
        demand: GateDemand,
    },
    CopyEnd { time: f64, copy: CopyId, task: TaskId, cluster: ClusterId, reason: EndReason },
    TaskDone { time: f64, task: TaskId, cluster: ClusterId },
    JobDone { time: f64, job: JobId, flowtime: f64 },
    PlanDropped { time: f64, task: TaskId, cluster: ClusterId, reason: Rejection },
    SlotTick { time: f64 },
}

impl TraceEvent {
    pub fn time(&self) -> f64 {
        match self {
            Self::JobArrival { time, .. }
            | Self::ClusterFailure { time, .. }
            | Self::ClusterRecovery { time, .. }
            | Self::CopyLaunch { time, .. }
            | Self::CopyEnd { time, .. }
            | Self::TaskDone { time, .. }
            | Self::JobDone { time, .. }
            | Self::PlanDropped { time, .. }
            | Self::SlotTick { time } => *time,
        }
    }
}

/// Occupancy right after the copies planned at `time` were launched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotUsage {
    pub time: f64,
    pub running: Vec<u32>,
    pub ingress: Vec<f64>,
    pub egress: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job: JobId,
    pub arrival: f64,
    pub completion: f64,
    pub flowtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub scheduler: String,
    pub seed: u64,
    /// Seconds per slot the run used; gate caps in events are per slot.
    pub slot_seconds: f64,
    pub events: Vec<TraceEvent>,
    pub usage: Vec<SlotUsage>,
    /// Finished jobs in completion order.
    pub outcomes: Vec<JobOutcome>,
    /// Jobs still unfinished when the run stopped.
    pub unfinished: usize,
    pub end_time: f64,
}

impl SimTrace {
    pub fn total_flowtime(&self) -> f64 {
        self.outcomes.iter().map(|o| o.flowtime).sum()
    }

    pub fn mean_flowtime(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.total_flowtime() / self.outcomes.len() as f64
        }
    }

    /// Outcomes ordered by job id.
    pub fn outcomes_by_job(&self) -> Vec<JobOutcome> {
        let mut v = self.outcomes.clone();
        v.sort_by_key(|o| o.job);
        v
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<TraceEvent>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::MalformedTrace(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    JobArrival,
    ClusterFailure,
    CopyComplete,
    SlotTick,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: Kind,
    seq: u64,
    target: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TaskState {
    Blocked,
    Waiting,
    Running,
    Done,
}

#[derive(Debug)]
struct TaskRt {
    state: TaskState,
    pending_preds: u32,
    succs: Vec<u32>,
    inputs: Vec<ClusterId>,
    profile: Option<TaskProfile>,
    copies: Vec<CopyView>,
    launched: u64,
}

#[derive(Debug)]
struct JobRt {
    arrived: bool,
    done: bool,
    left: usize,
    tasks: Vec<TaskRt>,
    active: BTreeSet<u32>,
}

#[derive(Debug)]
struct CopyRt {
    task: TaskId,
    cluster: ClusterId,
    start: f64,
    alive: bool,
    demand: GateDemand,
    speed: f64,
    transfers: Vec<TransferObservation>,
}

#[derive(Debug, Clone, Copy)]
struct ClusterRt {
    up: bool,
    recover_at: f64,
    running: u32,
}

/// One simulation run over a scenario.
pub struct Engine<'s> {
    scenario: &'s Scenario,
    truth: Topology,
    config: EngineConfig,
    seed: u64,
    model: PerformanceModel,
    ledger: GateLedger,
    clusters: Vec<ClusterRt>,
    jobs: Vec<JobRt>,
    alive: BTreeSet<(u64, u32)>,
    copies: Vec<CopyRt>,
    queue: BinaryHeap<Event>,
    seq: u64,
    tick_pending: bool,
    pending_records: Vec<ExecutionRecord>,
    trace: SimTrace,
}

/// Runs `scenario` to completion, failing if the horizon is reached first.
pub fn run(scenario: &Scenario, scheduler: &mut dyn Scheduler, config: &EngineConfig, seed: u64) -> Result<SimTrace> {
    let trace = run_bounded(scenario, scheduler, config, seed)?;
    if trace.unfinished > 0 {
        return Err(Error::HorizonExceeded { horizon: config.horizon, unfinished: trace.unfinished });
    }
    Ok(trace)
}

/// Like [`run`] but returns the partial trace when the horizon is reached.
pub fn run_bounded(
    scenario: &Scenario,
    scheduler: &mut dyn Scheduler,
    config: &EngineConfig,
    seed: u64,
) -> Result<SimTrace> {
    let mut engine = Engine::new(scenario, config.clone(), seed, scheduler.name())?;
    engine.execute(scheduler)?;
    Ok(engine.trace)
}

/// Converts MB/s figures to MB/slot.
pub fn to_slot_units(topology: &Topology, slot_seconds: f64) -> Topology {
    if slot_seconds == 1.0 {
        return topology.clone();
    }
    let mut t = topology.clone();
    for c in &mut t.clusters {
        c.speed = c.speed.scaled(slot_seconds);
        for d in c.op_speeds.values_mut() {
            *d = d.scaled(slot_seconds);
        }
        c.ingress_cap *= slot_seconds;
        c.egress_cap *= slot_seconds;
    }
    t.links.default = t.links.default.scaled(slot_seconds);
    for d in t.links.links.values_mut() {
        *d = d.scaled(slot_seconds);
    }
    t
}

impl<'s> Engine<'s> {
    pub fn new(scenario: &'s Scenario, config: EngineConfig, seed: u64, scheduler: String) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let slot_seconds = config.slot_seconds;
        let truth = to_slot_units(&scenario.topology, config.slot_seconds);
        let mut model_config = config.model.clone();
        model_config.local_read *= config.slot_seconds;
        let model = PerformanceModel::new(truth.clusters.clone(), truth.links.clone(), model_config)?;
        let ledger = GateLedger::new(&truth.clusters);
        let clusters = vec![ClusterRt { up: true, recover_at: 0.0, running: 0 }; truth.clusters.len()];
        let jobs = scenario
            .jobs
            .iter()
            .map(|j| {
                let mut tasks: Vec<TaskRt> = j
                    .tasks
                    .iter()
                    .map(|t| TaskRt {
                        state: TaskState::Blocked,
                        pending_preds: t.preds.len() as u32,
                        succs: Vec::new(),
                        inputs: t.inputs.clone(),
                        profile: None,
                        copies: Vec::new(),
                        launched: 0,
                    })
                    .collect();
                for t in &j.tasks {
                    for &p in &t.preds {
                        tasks[p as usize].succs.push(t.index);
                    }
                }
                JobRt {
                    arrived: false,
                    done: false,
                    left: tasks.len(),
                    tasks,
                    active: BTreeSet::new(),
                }
            })
            .collect();
        let mut engine = Self {
            scenario,
            truth,
            config,
            seed,
            model,
            ledger,
            clusters,
            jobs,
            alive: BTreeSet::new(),
            copies: Vec::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            tick_pending: false,
            pending_records: Vec::new(),
            trace: SimTrace {
                scheduler,
                seed,
                slot_seconds,
                events: Vec::new(),
                usage: Vec::new(),
                outcomes: Vec::new(),
                unfinished: 0,
                end_time: 0.0,
            },
        };
        for j in &scenario.jobs {
            engine.push(j.arrival, Kind::JobArrival, u64::from(j.id.0));
        }
        Ok(engine)
    }

    pub fn model(&self) -> &PerformanceModel {
        &self.model
    }

    fn push(&mut self, time: f64, kind: Kind, target: u64) {
        self.seq += 1;
        self.queue.push(Event { time, kind, seq: self.seq, target });
    }

    fn log(&mut self, e: TraceEvent) {
        self.trace.events.push(e);
    }

    pub fn execute(&mut self, scheduler: &mut dyn Scheduler) -> Result<()> {
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.config.horizon {
                self.abandon();
                return Ok(());
            }
            self.trace.end_time = ev.time;
            match ev.kind {
                Kind::JobArrival => self.on_arrival(ev.time, JobId(ev.target as u32)),
                Kind::ClusterFailure => self.on_failure(ev.time, ClusterId(ev.target as u32)),
                Kind::CopyComplete => self.on_complete(ev.time, ev.target)?,
                Kind::SlotTick => self.on_tick(ev.time, scheduler)?,
            }
        }
        Ok(())
    }

    fn abandon(&mut self) {
        let horizon = self.config.horizon;
        for id in 0..self.copies.len() {
            if self.copies[id].alive {
                self.end_copy(horizon, id, EndReason::KilledHorizon);
            }
        }
        self.trace.unfinished = self.jobs.iter().filter(|j| !j.done).count();
        self.trace.end_time = horizon;
    }

    fn on_arrival(&mut self, time: f64, job: JobId) {
        self.log(TraceEvent::JobArrival { time, job });
        let spec = &self.scenario.jobs[job.index()];
        let ready: Vec<u32> = spec.tasks.iter().filter(|t| t.preds.is_empty()).map(|t| t.index).collect();
        let rt = &mut self.jobs[job.index()];
        rt.arrived = true;
        for i in ready {
            let t = &mut rt.tasks[i as usize];
            t.state = TaskState::Waiting;
            t.profile = Some(TaskProfile::new(spec.tasks[i as usize].op.clone(), t.inputs.iter().copied()));
            rt.active.insert(i);
        }
        self.alive.insert((spec.arrival.to_bits(), job.0));
        if !self.tick_pending {
            self.tick_pending = true;
            self.push(time.ceil(), Kind::SlotTick, 0);
        }
    }

    fn on_failure(&mut self, time: f64, cluster: ClusterId) {
        self.log(TraceEvent::ClusterFailure { time, cluster });
        let c = &mut self.clusters[cluster.index()];
        c.up = false;
        c.recover_at = time.ceil() + f64::from(self.config.downtime);
        for id in 0..self.copies.len() {
            if self.copies[id].alive && self.copies[id].cluster == cluster {
                self.end_copy(time, id, EndReason::KilledFailure);
            }
        }
    }

    /// Terminates one copy, releasing its slot and reservations. A task that
    /// loses its last copy goes back to waiting and restarts from scratch.
    fn end_copy(&mut self, time: f64, id: usize, reason: EndReason) {
        let copy = &mut self.copies[id];
        copy.alive = false;
        let (task, cluster) = (copy.task, copy.cluster);
        let demand = std::mem::take(&mut copy.demand);
        self.ledger.release(&demand);
        self.clusters[cluster.index()].running -= 1;
        let elapsed = time - copy.start;
        if self.config.learn && elapsed > 0.0 {
            let record = ExecutionRecord {
                cluster,
                op: self.scenario.jobs[task.job.index()].tasks[task.index as usize].op.clone(),
                speed: copy.speed,
                transfers: std::mem::take(&mut copy.transfers),
                time,
            };
            self.pending_records.push(record);
        }
        let t = &mut self.jobs[task.job.index()].tasks[task.index as usize];
        t.copies.retain(|c| c.id != CopyId(id as u64));
        if t.copies.is_empty() && t.state == TaskState::Running && reason != EndReason::Completed {
            t.state = TaskState::Waiting;
        }
        self.log(TraceEvent::CopyEnd { time, copy: CopyId(id as u64), task, cluster, reason });
    }

    fn on_complete(&mut self, time: f64, id: u64) -> Result<()> {
        let idx = id as usize;
        if !self.copies[idx].alive {
            return Ok(());
        }
        let (task, cluster) = (self.copies[idx].task, self.copies[idx].cluster);
        self.end_copy(time, idx, EndReason::Completed);
        let siblings: Vec<usize> = self.jobs[task.job.index()].tasks[task.index as usize]
            .copies
            .iter()
            .map(|c| c.id.0 as usize)
            .collect();
        for s in siblings {
            self.end_copy(time, s, EndReason::KilledSibling);
        }
        self.log(TraceEvent::TaskDone { time, task, cluster });

        let spec = &self.scenario.jobs[task.job.index()];
        let rt = &mut self.jobs[task.job.index()];
        rt.tasks[task.index as usize].state = TaskState::Done;
        rt.active.remove(&task.index);
        rt.left -= 1;
        let succs = rt.tasks[task.index as usize].succs.clone();
        for s in succs {
            let t = &mut rt.tasks[s as usize];
            t.pending_preds -= 1;
            if !t.inputs.contains(&cluster) {
                t.inputs.push(cluster);
            }
            if t.pending_preds == 0 {
                t.state = TaskState::Waiting;
                t.profile = Some(TaskProfile::new(spec.tasks[s as usize].op.clone(), t.inputs.iter().copied()));
                rt.active.insert(s);
            }
        }
        if rt.left == 0 {
            rt.done = true;
            let flowtime = time - spec.arrival;
            self.alive.remove(&(spec.arrival.to_bits(), task.job.0));
            self.trace.outcomes.push(JobOutcome { job: task.job, arrival: spec.arrival, completion: time, flowtime });
            self.log(TraceEvent::JobDone { time, job: task.job, flowtime });
        }
        Ok(())
    }

    fn on_tick(&mut self, time: f64, scheduler: &mut dyn Scheduler) -> Result<()> {
        self.tick_pending = false;
        self.log(TraceEvent::SlotTick { time });
        for k in 0..self.clusters.len() {
            let c = &mut self.clusters[k];
            if !c.up && c.recover_at <= time {
                c.up = true;
                self.log(TraceEvent::ClusterRecovery { time, cluster: ClusterId(k as u32) });
            }
        }
        let tick = time as u64;
        if tick % u64::from(self.config.report_interval) == 0 {
            for r in std::mem::take(&mut self.pending_records) {
                self.model.ingest(r)?;
            }
            self.model.advance(time);
        }

        if !self.alive.is_empty() {
            let plan = {
                let snapshot = self.snapshot(time);
                scheduler.plan(&snapshot)?
            };
            self.apply(time, &plan)?;
        }
        if self.config.record_usage {
            let n = self.clusters.len();
            let ids = (0..n as u32).map(ClusterId);
            self.trace.usage.push(SlotUsage {
                time,
                running: self.clusters.iter().map(|c| c.running).collect(),
                ingress: ids.clone().map(|c| self.ledger.ingress(c)).collect(),
                egress: ids.map(|c| self.ledger.egress(c)).collect(),
            });
        }
        if self.config.failures {
            self.draw_failures(tick);
        }
        if !self.alive.is_empty() {
            self.tick_pending = true;
            self.push(time + 1.0, Kind::SlotTick, 0);
        }
        Ok(())
    }

    /// One Bernoulli trial per available cluster for the coming slot, from a
    /// stream keyed by (seed, tick, cluster) so every scheduler faces the
    /// same failures.
    fn draw_failures(&mut self, tick: u64) {
        for k in 0..self.clusters.len() {
            let p = self.truth.clusters[k].failure_prob;
            if !self.clusters[k].up || p <= 0.0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, FAILURE_STREAM, tick, k as u64]));
            if rng.random::<f64>() < p {
                let offset = 1.0 - rng.random::<f64>();
                self.push(tick as f64 + offset, Kind::ClusterFailure, k as u64);
            }
        }
    }

    pub fn snapshot(&self, now: f64) -> Snapshot<'_> {
        let clusters = self
            .clusters
            .iter()
            .zip(&self.truth.clusters)
            .map(|(rt, m)| ClusterView { id: m.id, slots: m.slots, up: rt.up, running: rt.running })
            .collect();
        let jobs = self
            .alive
            .iter()
            .map(|&(_, j)| {
                let spec = &self.scenario.jobs[j as usize];
                let rt = &self.jobs[j as usize];
                let tasks = rt
                    .active
                    .iter()
                    .map(|&i| {
                        let t = &rt.tasks[i as usize];
                        let s = &spec.tasks[i as usize];
                        TaskView {
                            id: TaskId::new(j, i),
                            stage: s.stage,
                            datasize: s.datasize,
                            profile: t.profile.as_ref().expect("active tasks have a profile"),
                            copies: &t.copies,
                        }
                    })
                    .collect();
                JobView {
                    id: spec.id,
                    arrival: spec.arrival,
                    task_count: spec.tasks.len(),
                    tasks,
                }
            })
            .collect();
        Snapshot { now, model: &self.model, clusters, ledger: &self.ledger, jobs }
    }

    fn apply(&mut self, time: f64, plan: &InsurancePlan) -> Result<()> {
        for entry in &plan.entries {
            for _ in 0..entry.copies {
                if let Err(reason) = self.launch(time, entry.task, entry.cluster)? {
                    self.log(TraceEvent::PlanDropped { time, task: entry.task, cluster: entry.cluster, reason });
                }
            }
        }
        Ok(())
    }

    fn launch(&mut self, time: f64, task: TaskId, cluster: ClusterId) -> Result<std::result::Result<(), Rejection>> {
        let job = self.jobs.get(task.job.index()).ok_or_else(|| Error::Precondition(format!("plan names unknown task {task}")))?;
        let t = job
            .tasks
            .get(task.index as usize)
            .ok_or_else(|| Error::Precondition(format!("plan names unknown task {task}")))?;
        let c = self.clusters.get(cluster.index()).ok_or(Error::UnknownCluster(cluster))?;
        if !matches!(t.state, TaskState::Waiting | TaskState::Running) {
            return Err(Error::Precondition(format!("plan launches task {task} which is not ready")));
        }
        if !c.up || c.running >= self.truth.clusters[cluster.index()].slots {
            return Ok(Err(Rejection::NoSlot));
        }
        let profile = t.profile.clone().expect("ready tasks have a profile");
        let rates = self.model.rates(&profile)?;
        let demand = rates.demand(cluster).clone();
        if let Err(r) = self.ledger.check(&demand) {
            return Ok(Err(r));
        }
        let spec = &self.scenario.jobs[task.job.index()].tasks[task.index as usize];
        let ordinal = t.launched;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            self.seed,
            COPY_STREAM,
            u64::from(task.job.0),
            u64::from(task.index),
            ordinal,
        ]));
        let truth = &self.truth.clusters[cluster.index()];
        let speed = truth.op_speeds.get(&spec.op).unwrap_or(&truth.speed).sample_with(rng.random());
        let mut transfers = Vec::new();
        let mut total_bw = 0.0;
        for &s in &profile.sources {
            let u: f64 = rng.random();
            let bw = if s == cluster {
                self.model.config().local_read
            } else {
                let bw = self.truth.links.get(s, cluster).sample_with(u);
                transfers.push(TransferObservation { source: s, destination: cluster, bandwidth: bw });
                bw
            };
            total_bw += bw;
        }
        let transfer = if profile.sources.is_empty() {
            self.model.config().local_read
        } else {
            total_bw / profile.sources.len() as f64
        };
        let rate = speed.min(transfer) * self.config.speed_factor;
        let expected_rate = rates.expected(cluster);

        let id = CopyId(self.copies.len() as u64);
        let speculative = !t.copies.is_empty();
        self.ledger.reserve(&demand);
        self.clusters[cluster.index()].running += 1;
        let t = &mut self.jobs[task.job.index()].tasks[task.index as usize];
        t.launched += 1;
        t.state = TaskState::Running;
        t.copies.push(CopyView { id, cluster, start: time, rate, expected_rate, speculative });
        self.copies.push(CopyRt { task, cluster, start: time, alive: true, demand: demand.clone(), speed, transfers });
        self.push(time + spec.datasize / rate, Kind::CopyComplete, id.0);
        self.log(TraceEvent::CopyLaunch { time, copy: id, task, cluster, rate, expected_rate, demand });
        Ok(Ok(()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::EmpiricalDistribution;
    use crate::perfmodel::{ClusterModel, LinkModel};
    use crate::plan::InsurancePlan;
    use crate::types::OpType;
    use crate::workload::{Job, ScaleClass, TaskSpec};
    use std::collections::BTreeMap;

    /// Launches every waiting task in a fixed cluster list, one copy per
    /// listed cluster.
    struct Fixed(Vec<ClusterId>);

    impl Scheduler for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }

        fn plan(&mut self, snap: &Snapshot<'_>) -> Result<InsurancePlan> {
            let mut plan = InsurancePlan::new(snap.now);
            for j in &snap.jobs {
                for t in j.tasks.iter().filter(|t| t.is_waiting()) {
                    for c in &self.0 {
                        plan.push(t.id, *c);
                    }
                }
            }
            Ok(plan)
        }
    }

    fn cluster(id: u32, rate: EmpiricalDistribution, p: f64) -> ClusterModel {
        ClusterModel {
            id: ClusterId(id),
            slots: 2,
            ingress_cap: 1e9,
            egress_cap: 1e9,
            failure_prob: p,
            speed: rate,
            op_speeds: BTreeMap::new(),
        }
    }

    fn task(index: u32, datasize: f64, preds: Vec<u32>) -> TaskSpec {
        TaskSpec { index, stage: preds.len() as u32, op: OpType::new("op"), datasize, preds, inputs: vec![] }
    }

    fn scenario(clusters: Vec<ClusterModel>, jobs: Vec<Job>) -> Scenario {
        let n = clusters.len();
        Scenario {
            topology: Topology {
                clusters,
                links: LinkModel::uniform(EmpiricalDistribution::point(100.0).unwrap()),
                classes: vec![ScaleClass::Small; n],
                degrees: vec![1; n],
            },
            jobs,
        }
    }

    fn point(v: f64) -> EmpiricalDistribution {
        EmpiricalDistribution::point(v).unwrap()
    }

    #[test]
    fn single_task_flowtime_is_size_over_rate() {
        let s = scenario(vec![cluster(0, point(2.0), 0.0)], vec![Job { id: JobId(0), arrival: 0.0, tasks: vec![task(0, 10.0, vec![])] }]);
        let trace = run(&s, &mut Fixed(vec![ClusterId(0)]), &EngineConfig::default(), 1).unwrap();
        assert_eq!(trace.outcomes.len(), 1);
        assert_eq!(trace.outcomes[0].flowtime, 5.0);
    }

    #[test]
    fn first_finisher_wins_and_sibling_is_killed() {
        let s = scenario(
            vec![cluster(0, point(2.0), 0.0), cluster(1, point(10.0 / 7.0), 0.0)],
            vec![Job { id: JobId(0), arrival: 0.0, tasks: vec![task(0, 10.0, vec![])] }],
        );
        let trace = run(&s, &mut Fixed(vec![ClusterId(0), ClusterId(1)]), &EngineConfig::default(), 1).unwrap();
        assert_eq!(trace.outcomes[0].completion, 5.0);
        let ends: Vec<EndReason> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::CopyEnd { reason, time, .. } => {
                    assert_eq!(*time, 5.0);
                    Some(*reason)
                }
                _ => None,
            })
            .collect();
        assert_eq!(ends, vec![EndReason::Completed, EndReason::KilledSibling]);
    }

    #[test]
    fn successor_reads_from_winning_cluster() {
        let s = scenario(
            vec![cluster(0, point(1.0), 0.0), cluster(1, point(5.0), 0.0)],
            vec![Job { id: JobId(0), arrival: 3.0, tasks: vec![task(0, 10.0, vec![]), task(1, 10.0, vec![0])] }],
        );
        let trace = run(&s, &mut Fixed(vec![ClusterId(1)]), &EngineConfig::default(), 1).unwrap();
        // Stage one finishes at 5, stage two starts at tick 5 and runs 2 slots.
        assert_eq!(trace.outcomes[0].completion, 7.0);
        assert_eq!(trace.outcomes[0].flowtime, 4.0);
    }

    #[test]
    fn empty_workload_gives_empty_trace() {
        let s = scenario(vec![cluster(0, point(1.0), 0.1)], vec![]);
        let trace = run(&s, &mut Fixed(vec![ClusterId(0)]), &EngineConfig::default(), 1).unwrap();
        assert!(trace.events.is_empty());
        assert!(trace.outcomes.is_empty());
    }

    #[test]
    fn zero_failure_probability_never_fails() {
        let jobs = (0..20).map(|j| Job { id: JobId(j), arrival: f64::from(j), tasks: vec![task(0, 30.0, vec![])] }).collect();
        let s = scenario(vec![cluster(0, point(1.0), 0.0)], jobs);
        for seed in 0..5 {
            let trace = run(&s, &mut Fixed(vec![ClusterId(0)]), &EngineConfig::default(), seed).unwrap();
            assert!(!trace.events.iter().any(|e| matches!(e, TraceEvent::ClusterFailure { .. })));
        }
    }

    #[test]
    fn failure_resets_single_copy_task() {
        let jobs = vec![Job { id: JobId(0), arrival: 0.0, tasks: vec![task(0, 20.0, vec![])] }];
        let s = scenario(vec![cluster(0, point(1.0), 0.3)], jobs);
        let trace = run(&s, &mut Fixed(vec![ClusterId(0)]), &EngineConfig::default(), 4).unwrap();
        let failures = trace.events.iter().filter(|e| matches!(e, TraceEvent::ClusterFailure { .. })).count();
        assert!(failures > 0);
        // The successful copy ran uninterrupted for 20 slots after the last failure.
        let last_launch = trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::CopyLaunch { time, .. } => Some(*time),
                _ => None,
            })
            .last()
            .unwrap();
        assert_eq!(trace.outcomes[0].completion, last_launch + 20.0);
    }

    #[test]
    fn horizon_guard_reports_unfinished_jobs() {
        let jobs = vec![Job { id: JobId(0), arrival: 0.0, tasks: vec![task(0, 100.0, vec![])] }];
        let s = scenario(vec![cluster(0, point(1.0), 0.0)], jobs);
        let config = EngineConfig { horizon: 10.0, ..EngineConfig::default() };
        let err = run(&s, &mut Fixed(vec![ClusterId(0)]), &config, 1).unwrap_err();
        assert!(matches!(err, Error::HorizonExceeded { unfinished: 1, .. }));
        let trace = run_bounded(&s, &mut Fixed(vec![ClusterId(0)]), &config, 1).unwrap();
        assert!(trace
            .events
            .iter()
            .any(|e| matches!(e, TraceEvent::CopyEnd { reason: EndReason::KilledHorizon, .. })));
    }

    #[test]
    fn runs_are_deterministic() {
        let jobs = (0..10)
            .map(|j| Job { id: JobId(j), arrival: f64::from(j) * 0.7, tasks: vec![task(0, 12.0, vec![]), task(1, 8.0, vec![0])] })
            .collect();
        let coin = EmpiricalDistribution::from_pairs([(1.0, 0.5), (3.0, 0.5)]).unwrap();
        let s = scenario(vec![cluster(0, coin.clone(), 0.05), cluster(1, coin, 0.1)], jobs);
        let a = run(&s, &mut Fixed(vec![ClusterId(0), ClusterId(1)]), &EngineConfig::default(), 9).unwrap();
        let b = run(&s, &mut Fixed(vec![ClusterId(0), ClusterId(1)]), &EngineConfig::default(), 9).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    }
}
