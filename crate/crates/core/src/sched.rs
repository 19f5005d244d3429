//! The read-only view a scheduler gets at the start of each slot, and the
//! trait every scheduler implements.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::perfmodel::{PerformanceModel, TaskProfile};
use crate::plan::{GateLedger, InsurancePlan, PlanBuilder};
use crate::types::{ClusterId, CopyId, JobId, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyView {
    pub id: CopyId,
    pub cluster: ClusterId,
    pub start: f64,
    /// Realized rate. Only progress monitors may look at it; planners that
    /// work from estimates use `expected_rate`.
    pub rate: f64,
    /// Model estimate of the single-copy rate when the copy was launched.
    pub expected_rate: f64,
    pub speculative: bool,
}

impl CopyView {
    pub fn expected_remaining(&self, datasize: f64, now: f64) -> f64 {
        (datasize - (now - self.start) * self.expected_rate).max(0.0)
    }

    pub fn expected_finish(&self, datasize: f64) -> f64 {
        self.start + datasize / self.expected_rate
    }

    /// Remaining time judged from realized progress.
    pub fn observed_remaining_time(&self, datasize: f64, now: f64) -> f64 {
        ((datasize - (now - self.start) * self.rate) / self.rate).max(0.0)
    }
}

/// A task that is either ready and waiting (no copies) or running.
#[derive(Debug, Clone, Copy)]
pub struct TaskView<'a> {
    pub id: TaskId,
    pub stage: u32,
    pub datasize: f64,
    pub profile: &'a TaskProfile,
    pub copies: &'a [CopyView],
}

impl TaskView<'_> {
    pub fn is_waiting(&self) -> bool {
        self.copies.is_empty()
    }

    pub fn placement(&self) -> Vec<ClusterId> {
        self.copies.iter().map(|c| c.cluster).collect()
    }

    /// Datasize still to process, judged by the copy with the most expected
    /// progress.
    pub fn expected_remaining(&self, now: f64) -> f64 {
        self.copies
            .iter()
            .map(|c| c.expected_remaining(self.datasize, now))
            .fold(self.datasize, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct JobView<'a> {
    pub id: JobId,
    pub arrival: f64,
    pub task_count: usize,
    /// Waiting and running tasks only; blocked and finished ones are omitted.
    pub tasks: Vec<TaskView<'a>>,
}

impl JobView<'_> {
    /// Unprocessed data of the current stage: the expected remainder of
    /// waiting and running tasks. Blocked tasks do not count.
    pub fn unprocessed(&self, now: f64) -> f64 {
        self.tasks.iter().map(|t| t.expected_remaining(now)).sum::<f64>()
    }

    pub fn running_copies(&self) -> u32 {
        self.tasks.iter().map(|t| t.copies.len() as u32).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub id: ClusterId,
    pub slots: u32,
    pub up: bool,
    pub running: u32,
}

impl ClusterView {
    pub fn free(&self) -> u32 {
        if self.up {
            self.slots.saturating_sub(self.running)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    pub now: f64,
    pub model: &'a PerformanceModel,
    pub clusters: Vec<ClusterView>,
    pub ledger: &'a GateLedger,
    /// Alive jobs in arrival order.
    pub jobs: Vec<JobView<'a>>,
}

impl Snapshot<'_> {
    pub fn total_slots(&self) -> u32 {
        self.clusters.iter().map(|c| c.slots).sum()
    }

    pub fn builder(&self) -> PlanBuilder {
        PlanBuilder::new(self.now, self.clusters.iter().map(ClusterView::free).collect(), self.ledger.clone())
    }

    pub fn cluster_ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.iter().map(|c| c.id)
    }
}

pub trait Scheduler: Send {
    fn name(&self) -> String;

    fn plan(&mut self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan>;
}
