//! Reference schedulers: stage-greedy placement, speculative re-execution of
//! stragglers, and up-front cloning of small jobs.
//!
//! All three serve jobs first-come first-served, share the same slot and
//! gate checks as the insurer, and apply no rate floor.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plan::{InsurancePlan, PlanBuilder};
use crate::sched::{Scheduler, Snapshot, TaskView};
use crate::types::{ClusterId, TaskId};

/// Expected slot release times per cluster, extended as a plan queues work.
struct Releases {
    /// Per cluster, sorted delays until each busy slot frees up.
    busy: Vec<Vec<f64>>,
    /// Tasks that chose a full cluster this slot and are waiting on it.
    queued: Vec<usize>,
}

impl Releases {
    fn new(snapshot: &Snapshot<'_>) -> Self {
        let mut busy = vec![Vec::new(); snapshot.clusters.len()];
        for j in &snapshot.jobs {
            for t in &j.tasks {
                for c in t.copies {
                    busy[c.cluster.index()].push((c.expected_finish(t.datasize) - snapshot.now).max(0.0));
                }
            }
        }
        for b in &mut busy {
            b.sort_by(f64::total_cmp);
        }
        let queued = vec![0; busy.len()];
        Self { busy, queued }
    }

    fn wait(&self, cluster: ClusterId, ready: bool) -> f64 {
        if ready {
            return 0.0;
        }
        let b = &self.busy[cluster.index()];
        b.get(self.queued[cluster.index()]).copied().unwrap_or(f64::INFINITY)
    }

    fn occupy(&mut self, cluster: ClusterId, duration: f64) {
        let b = &mut self.busy[cluster.index()];
        let at = b.partition_point(|&x| x <= duration);
        b.insert(at, duration);
    }
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    cluster: ClusterId,
    finish: f64,
    ready: bool,
}

/// Cluster with the earliest expected finish for `task`, counting queueing
/// behind busy slots. Ties prefer a cluster that can start now, then the
/// lowest id.
fn earliest_finish(
    snapshot: &Snapshot<'_>,
    builder: &PlanBuilder,
    releases: &Releases,
    task: &TaskView<'_>,
    exclude: &[ClusterId],
) -> Result<Option<Choice>> {
    let rates = snapshot.model.rates(task.profile)?;
    let mut best: Option<Choice> = None;
    for c in snapshot.cluster_ids().filter(|c| !exclude.contains(c)) {
        let ready = builder.check(c, rates.demand(c)).is_ok();
        let finish = releases.wait(c, ready) + task.datasize / rates.expected(c);
        if !finish.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => finish < b.finish || (finish == b.finish && ready && !b.ready),
        };
        if better {
            best = Some(Choice { cluster: c, finish, ready });
        }
    }
    Ok(best)
}

/// Places one copy of `task` greedily. Returns whether it was launched; a
/// task whose best cluster is busy waits for it.
fn place_greedy(
    snapshot: &Snapshot<'_>,
    builder: &mut PlanBuilder,
    releases: &mut Releases,
    task: &TaskView<'_>,
) -> Result<bool> {
    let Some(choice) = earliest_finish(snapshot, builder, releases, task, &[])? else {
        return Ok(false);
    };
    if choice.ready {
        let rates = snapshot.model.rates(task.profile)?;
        builder.assign(task.id, choice.cluster, rates.demand(choice.cluster));
        releases.occupy(choice.cluster, choice.finish);
        Ok(true)
    } else {
        releases.queued[choice.cluster.index()] += 1;
        Ok(false)
    }
}

fn best_case_time(snapshot: &Snapshot<'_>, task: &TaskView<'_>) -> Result<f64> {
    Ok(task.datasize / snapshot.model.rates(task.profile)?.optimum().1)
}

/// Waiting tasks of one job, longest best-case time first.
fn waiting_by_length<'a>(snapshot: &Snapshot<'a>, tasks: &[TaskView<'a>]) -> Result<Vec<TaskView<'a>>> {
    let mut keyed = Vec::new();
    for t in tasks.iter().filter(|t| t.is_waiting()) {
        keyed.push((best_case_time(snapshot, t)?, *t));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    Ok(keyed.into_iter().map(|(_, t)| t).collect())
}

/// One copy per task, placed where it is expected to finish first.
#[derive(Debug, Clone, Default)]
pub struct StageGreedy;

impl StageGreedy {
    fn place_all(snapshot: &Snapshot<'_>, builder: &mut PlanBuilder, releases: &mut Releases) -> Result<()> {
        for job in &snapshot.jobs {
            if builder.total_free() == 0 {
                break;
            }
            for t in waiting_by_length(snapshot, &job.tasks)? {
                place_greedy(snapshot, builder, releases, &t)?;
            }
        }
        Ok(())
    }
}

impl Scheduler for StageGreedy {
    fn name(&self) -> String {
        "stage-greedy".into()
    }

    fn plan(&mut self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan> {
        let mut builder = snapshot.builder();
        let mut releases = Releases::new(snapshot);
        Self::place_all(snapshot, &mut builder, &mut releases)?;
        Ok(builder.finish())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeculativeConfig {
    /// Slots a copy must have run before it can be judged a straggler.
    pub monitor_delay: f64,
    /// A straggler is re-executed when its observed remaining time exceeds
    /// this many times the expected time of a fresh copy.
    pub threshold: f64,
}

impl Default for SpeculativeConfig {
    fn default() -> Self {
        Self { monitor_delay: 2.0, threshold: 2.0 }
    }
}

/// Stage-greedy placement plus at most one backup copy per straggling task,
/// using slots left over after waiting tasks are placed.
#[derive(Debug, Clone, Default)]
pub struct Speculative {
    pub config: SpeculativeConfig,
    speculated: HashSet<TaskId>,
}

impl Speculative {
    pub fn new(config: SpeculativeConfig) -> Self {
        Self { config, speculated: HashSet::new() }
    }
}

impl Scheduler for Speculative {
    fn name(&self) -> String {
        "speculative".into()
    }

    fn plan(&mut self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan> {
        let mut builder = snapshot.builder();
        let mut releases = Releases::new(snapshot);
        StageGreedy::place_all(snapshot, &mut builder, &mut releases)?;
        let now = snapshot.now;
        for job in &snapshot.jobs {
            for t in &job.tasks {
                if builder.total_free() == 0 {
                    return Ok(builder.finish());
                }
                let [only] = t.copies else { continue };
                if self.speculated.contains(&t.id) || now - only.start < self.config.monitor_delay {
                    continue;
                }
                let observed = only.observed_remaining_time(t.datasize, now);
                let Some(choice) = earliest_finish(snapshot, &builder, &releases, t, &[only.cluster])? else {
                    continue;
                };
                if choice.ready && self.config.threshold * choice.finish < observed {
                    let rates = snapshot.model.rates(t.profile)?;
                    builder.assign(t.id, choice.cluster, rates.demand(choice.cluster));
                    releases.occupy(choice.cluster, choice.finish);
                    self.speculated.insert(t.id);
                }
            }
        }
        Ok(builder.finish())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloningConfig {
    /// Share of all slots that extra copies may occupy at once.
    pub budget: f64,
    /// Jobs with at most this many tasks are cloned.
    pub small_job_tasks: usize,
    /// Copies launched per task of a small job.
    pub clones: u32,
}

impl Default for CloningConfig {
    fn default() -> Self {
        Self { budget: 0.05, small_job_tasks: 10, clones: 2 }
    }
}

/// Launches every task of a small job as several simultaneous copies on
/// distinct clusters while the clone budget lasts; larger jobs are placed
/// stage-greedily.
#[derive(Debug, Clone, Default)]
pub struct Cloning {
    pub config: CloningConfig,
}

impl Cloning {
    pub fn new(config: CloningConfig) -> Self {
        Self { config }
    }
}

impl Scheduler for Cloning {
    fn name(&self) -> String {
        "cloning".into()
    }

    fn plan(&mut self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan> {
        let mut builder = snapshot.builder();
        let mut releases = Releases::new(snapshot);
        let cap = (self.config.budget * f64::from(snapshot.total_slots())).floor() as u32;
        let mut extra: u32 = snapshot
            .jobs
            .iter()
            .flat_map(|j| &j.tasks)
            .map(|t| t.copies.len().saturating_sub(1) as u32)
            .sum();
        for job in &snapshot.jobs {
            if builder.total_free() == 0 {
                break;
            }
            let small = job.task_count <= self.config.small_job_tasks;
            for t in waiting_by_length(snapshot, &job.tasks)? {
                if !place_greedy(snapshot, &mut builder, &mut releases, &t)? || !small {
                    continue;
                }
                let mut used = builder.plan.entries.last().map(|e| vec![e.cluster]).unwrap_or_default();
                while (used.len() as u32) < self.config.clones && extra < cap {
                    let Some(choice) = earliest_finish(snapshot, &builder, &releases, &t, &used)? else {
                        break;
                    };
                    if !choice.ready {
                        break;
                    }
                    let rates = snapshot.model.rates(t.profile)?;
                    builder.assign(t.id, choice.cluster, rates.demand(choice.cluster));
                    releases.occupy(choice.cluster, choice.finish);
                    used.push(choice.cluster);
                    extra += 1;
                }
            }
        }
        Ok(builder.finish())
    }
}
