//! Plans, gate reservations and the per-slot capacity bookkeeping shared by
//! every scheduler.

use serde::{Deserialize, Serialize};

use crate::perfmodel::{ClusterModel, GateDemand};
use crate::types::{ClusterId, TaskId};

/// Slack allowed when comparing reserved bandwidth against a cap, to absorb
/// floating-point drift from repeated reserve/release.
pub const GATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub task: TaskId,
    pub cluster: ClusterId,
    pub copies: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InsurancePlan {
    pub slot: f64,
    pub entries: Vec<PlanEntry>,
}

impl InsurancePlan {
    pub fn new(slot: f64) -> Self {
        Self { slot, entries: Vec::new() }
    }

    /// Adds one copy, merging with an existing entry for the same task and
    /// cluster.
    pub fn push(&mut self, task: TaskId, cluster: ClusterId) {
        match self.entries.iter_mut().find(|e| e.task == task && e.cluster == cluster) {
            Some(e) => e.copies += 1,
            None => self.entries.push(PlanEntry { task, cluster, copies: 1 }),
        }
    }

    pub fn total_copies(&self) -> u32 {
        self.entries.iter().map(|e| e.copies).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn copies_for(&self, task: TaskId) -> u32 {
        self.entries.iter().filter(|e| e.task == task).map(|e| e.copies).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rejection {
    NoSlot,
    Ingress,
    Egress,
    RateFloor,
}

/// Reserved ingress and egress bandwidth per cluster against fixed caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateLedger {
    ingress_cap: Vec<f64>,
    egress_cap: Vec<f64>,
    ingress: Vec<f64>,
    egress: Vec<f64>,
}

fn within(used: f64, cap: f64) -> bool {
    used <= cap * (1.0 + GATE_TOLERANCE) + GATE_TOLERANCE
}

impl GateLedger {
    pub fn new(clusters: &[ClusterModel]) -> Self {
        let n = clusters.len();
        Self {
            ingress_cap: clusters.iter().map(|c| c.ingress_cap).collect(),
            egress_cap: clusters.iter().map(|c| c.egress_cap).collect(),
            ingress: vec![0.0; n],
            egress: vec![0.0; n],
        }
    }

    pub fn check(&self, demand: &GateDemand) -> Result<(), Rejection> {
        if let Some(dst) = demand.destination {
            let k = dst.index();
            if !within(self.ingress[k] + demand.ingress, self.ingress_cap[k]) {
                return Err(Rejection::Ingress);
            }
        }
        for &(src, need) in &demand.egress {
            let k = src.index();
            if !within(self.egress[k] + need, self.egress_cap[k]) {
                return Err(Rejection::Egress);
            }
        }
        Ok(())
    }

    pub fn reserve(&mut self, demand: &GateDemand) {
        if let Some(dst) = demand.destination {
            self.ingress[dst.index()] += demand.ingress;
        }
        for &(src, need) in &demand.egress {
            self.egress[src.index()] += need;
        }
    }

    pub fn release(&mut self, demand: &GateDemand) {
        if let Some(dst) = demand.destination {
            let v = &mut self.ingress[dst.index()];
            *v = (*v - demand.ingress).max(0.0);
        }
        for &(src, need) in &demand.egress {
            let v = &mut self.egress[src.index()];
            *v = (*v - need).max(0.0);
        }
    }

    pub fn ingress(&self, cluster: ClusterId) -> f64 {
        self.ingress[cluster.index()]
    }

    pub fn egress(&self, cluster: ClusterId) -> f64 {
        self.egress[cluster.index()]
    }

    pub fn ingress_headroom(&self, cluster: ClusterId) -> f64 {
        self.ingress_cap[cluster.index()] - self.ingress[cluster.index()]
    }

    pub fn egress_headroom(&self, cluster: ClusterId) -> f64 {
        self.egress_cap[cluster.index()] - self.egress[cluster.index()]
    }
}

/// Working capacity while a plan is built: free slots per cluster and a
/// tentative copy of the gate ledger.
#[derive(Debug, Clone)]
pub struct PlanBuilder {
    pub plan: InsurancePlan,
    free: Vec<u32>,
    ledger: GateLedger,
}

impl PlanBuilder {
    pub fn new(slot: f64, free: Vec<u32>, ledger: GateLedger) -> Self {
        Self { plan: InsurancePlan::new(slot), free, ledger }
    }

    pub fn free(&self, cluster: ClusterId) -> u32 {
        self.free[cluster.index()]
    }

    pub fn total_free(&self) -> u32 {
        self.free.iter().sum()
    }

    pub fn ledger(&self) -> &GateLedger {
        &self.ledger
    }

    /// Slot and gate feasibility of one more copy in `cluster`.
    pub fn check(&self, cluster: ClusterId, demand: &GateDemand) -> Result<(), Rejection> {
        if self.free[cluster.index()] == 0 {
            return Err(Rejection::NoSlot);
        }
        self.ledger.check(demand)
    }

    pub fn assign(&mut self, task: TaskId, cluster: ClusterId, demand: &GateDemand) {
        debug_assert!(self.free[cluster.index()] > 0);
        self.free[cluster.index()] -= 1;
        self.ledger.reserve(demand);
        self.plan.push(task, cluster);
    }

    pub fn finish(self) -> InsurancePlan {
        self.plan
    }
}
