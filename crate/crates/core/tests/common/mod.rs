#![allow(dead_code)]

use std::collections::BTreeMap;

use geoinsure::perfmodel::{ClusterModel, LinkModel, ModelConfig, PerformanceModel, TaskProfile};
use geoinsure::plan::GateLedger;
use geoinsure::sched::{ClusterView, CopyView, JobView, Snapshot, TaskView};
use geoinsure::workload::{Job, Scenario, ScaleClass, TaskSpec, Topology};
use geoinsure::{ClusterId, CopyId, EmpiricalDistribution, JobId, OpType, TaskId};

pub fn point(v: f64) -> EmpiricalDistribution {
    EmpiricalDistribution::point(v).unwrap()
}

pub fn dist(pairs: &[(f64, f64)]) -> EmpiricalDistribution {
    EmpiricalDistribution::from_pairs(pairs.iter().copied()).unwrap()
}

pub fn cluster(id: u32, slots: u32, speed: EmpiricalDistribution, p: f64) -> ClusterModel {
    ClusterModel {
        id: ClusterId(id),
        slots,
        ingress_cap: 1e6,
        egress_cap: 1e6,
        failure_prob: p,
        speed,
        op_speeds: BTreeMap::new(),
    }
}

pub fn model(clusters: Vec<ClusterModel>) -> PerformanceModel {
    PerformanceModel::new(clusters, LinkModel::uniform(point(1e6)), ModelConfig::default()).unwrap()
}

pub fn op() -> OpType {
    OpType::new("map")
}

/// A task with no remote inputs, so its rate is the processing speed.
pub fn local_profile() -> TaskProfile {
    TaskProfile::new(op(), [])
}

#[derive(Debug)]
pub struct FixtureTask {
    pub id: TaskId,
    pub stage: u32,
    pub datasize: f64,
    pub profile: TaskProfile,
    pub copies: Vec<CopyView>,
}

#[derive(Debug)]
pub struct FixtureJob {
    pub id: JobId,
    pub arrival: f64,
    pub tasks: Vec<FixtureTask>,
}

/// Owns everything a [`Snapshot`] borrows.
#[derive(Debug)]
pub struct Fixture {
    pub model: PerformanceModel,
    pub ledger: GateLedger,
    pub jobs: Vec<FixtureJob>,
    pub down: Vec<ClusterId>,
}

impl Fixture {
    pub fn new(clusters: Vec<ClusterModel>) -> Self {
        let ledger = GateLedger::new(&clusters);
        Self { model: model(clusters), ledger, jobs: Vec::new(), down: Vec::new() }
    }

    pub fn job(&mut self, arrival: f64) -> JobId {
        let id = JobId(self.jobs.len() as u32);
        self.jobs.push(FixtureJob { id, arrival, tasks: Vec::new() });
        id
    }

    /// Adds a ready local task; `copies` lists the clusters already running
    /// a copy with the given realized rate, started at time 0.
    pub fn task(&mut self, job: JobId, stage: u32, datasize: f64, copies: &[(u32, f64)]) -> TaskId {
        let j = &mut self.jobs[job.index()];
        let id = TaskId::new(job.0, j.tasks.len() as u32);
        let copies = copies
            .iter()
            .enumerate()
            .map(|(i, &(c, rate))| CopyView {
                id: CopyId(u64::from(job.0) * 1000 + u64::from(id.index) * 10 + i as u64),
                cluster: ClusterId(c),
                start: 0.0,
                rate,
                expected_rate: rate,
                speculative: i > 0,
            })
            .collect();
        j.tasks.push(FixtureTask { id, stage, datasize, profile: local_profile(), copies });
        id
    }

    pub fn snapshot(&self, now: f64) -> Snapshot<'_> {
        let mut running = vec![0u32; self.model.cluster_count()];
        for t in self.jobs.iter().flat_map(|j| &j.tasks) {
            for c in &t.copies {
                running[c.cluster.index()] += 1;
            }
        }
        let clusters = self
            .model
            .clusters()
            .iter()
            .map(|c| ClusterView { id: c.id, slots: c.slots, up: !self.down.contains(&c.id), running: running[c.id.index()] })
            .collect();
        let jobs = self
            .jobs
            .iter()
            .map(|j| JobView {
                id: j.id,
                arrival: j.arrival,
                task_count: j.tasks.len(),
                tasks: j
                    .tasks
                    .iter()
                    .map(|t| TaskView { id: t.id, stage: t.stage, datasize: t.datasize, profile: &t.profile, copies: &t.copies })
                    .collect(),
            })
            .collect();
        Snapshot { now, model: &self.model, clusters, ledger: &self.ledger, jobs }
    }
}

/// A topology of identical-link clusters with the given speed distributions
/// and failure probabilities; gates are effectively unlimited.
pub fn topology(speeds: Vec<EmpiricalDistribution>, slots: &[u32], p: &[f64]) -> Topology {
    let clusters: Vec<ClusterModel> =
        speeds.into_iter().enumerate().map(|(i, s)| cluster(i as u32, slots[i], s, p[i])).collect();
    let n = clusters.len();
    Topology {
        clusters,
        links: LinkModel::uniform(point(1e6)),
        classes: vec![ScaleClass::Small; n],
        degrees: vec![1; n],
    }
}

pub fn task(index: u32, datasize: f64, preds: &[u32]) -> TaskSpec {
    TaskSpec { index, stage: preds.len().min(1) as u32, op: op(), datasize, preds: preds.to_vec(), inputs: Vec::new() }
}

pub fn scenario(topology: Topology, jobs: Vec<(f64, Vec<TaskSpec>)>) -> Scenario {
    let jobs = jobs
        .into_iter()
        .enumerate()
        .map(|(i, (arrival, tasks))| Job { id: JobId(i as u32), arrival, tasks })
        .collect();
    Scenario { topology, jobs }
}
