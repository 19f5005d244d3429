//! Multi-round task insurance.
//!
//! Each slot the alive jobs are ranked by unprocessed data, the smallest
//! `ceil(eps * N)` of them are promised an equal share of all slots, and the
//! promised budgets are spent in rounds: one efficient copy per waiting task,
//! then one reliability copy per single-copy task, then further copies only
//! while each one pays for the slot it takes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::{PerformanceModel, ProfileRates};
use crate::plan::{InsurancePlan, PlanBuilder, Rejection};
use crate::sched::{JobView, Scheduler, Snapshot, TaskView};
use crate::types::{ClusterId, JobId};

/// Relative slack used when rounding products such as `eps * N`.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// Round by round across all prioritized jobs.
    Efa,
    /// Every round for one job before moving to the next.
    Jga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principle {
    Efficiency,
    Reliability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsurerPolicy {
    pub epsilon: f64,
    pub allocation: Allocation,
    pub first_round: Principle,
    pub second_round: Principle,
}

impl Default for InsurerPolicy {
    fn default() -> Self {
        Self {
            epsilon: 0.6,
            allocation: Allocation::Efa,
            first_round: Principle::Efficiency,
            second_round: Principle::Reliability,
        }
    }
}

impl InsurerPolicy {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    /// Policy for an ablation label such as `eff-reli` or `jga`.
    pub fn from_label(label: &str, epsilon: f64) -> Result<Self> {
        use Principle::{Efficiency as E, Reliability as R};
        let base = Self::with_epsilon(epsilon);
        let (first, second, allocation) = match label {
            "eff-reli" | "efa" => (E, R, Allocation::Efa),
            "reli-eff" => (R, E, Allocation::Efa),
            "eff-eff" => (E, E, Allocation::Efa),
            "reli-reli" => (R, R, Allocation::Efa),
            "jga" => (E, R, Allocation::Jga),
            other => return Err(Error::Config(format!("unknown insurance variant '{other}'"))),
        };
        Ok(Self { first_round: first, second_round: second, allocation, ..base })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon < 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("epsilon {} must lie in (0, 1)", self.epsilon)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job: JobId,
    pub arrival: f64,
    pub unprocessed: f64,
    /// Copies currently running for the job.
    pub running: u32,
    /// Promised slots for this planning slot.
    pub promised: u32,
    pub rank: usize,
}

impl JobState {
    pub fn budget(&self) -> u32 {
        self.promised.saturating_sub(self.running)
    }
}

fn ceil_slack(x: f64) -> f64 {
    (x * (1.0 - ROUNDING_SLACK)).ceil()
}

/// Orders jobs by unprocessed data (then arrival, then id) and promises
/// `ceil(total_slots / (eps * N))` slots to each of the first `ceil(eps * N)`.
pub fn prioritize(jobs: &mut [JobState], epsilon: f64, total_slots: u32) {
    jobs.sort_by(|a, b| {
        a.unprocessed
            .total_cmp(&b.unprocessed)
            .then(a.arrival.total_cmp(&b.arrival))
            .then(a.job.cmp(&b.job))
    });
    let n = jobs.len();
    if n == 0 {
        return;
    }
    let share = epsilon * n as f64;
    let favoured = (ceil_slack(share) as usize).clamp(1, n);
    let promised = ceil_slack(f64::from(total_slots) / share) as u32;
    for (rank, job) in jobs.iter_mut().enumerate() {
        job.rank = rank;
        job.promised = if rank < favoured { promised } else { 0 };
    }
}

/// Why a task/cluster pair may not receive a copy right now, if anything.
pub fn admissible(
    builder: &PlanBuilder,
    rates: &ProfileRates,
    cluster: ClusterId,
    epsilon: f64,
) -> std::result::Result<(), Rejection> {
    builder.check(cluster, rates.demand(cluster))?;
    if rates.expected(cluster) < rate_floor(rates, epsilon) {
        return Err(Rejection::RateFloor);
    }
    Ok(())
}

pub fn rate_floor(rates: &ProfileRates, epsilon: f64) -> f64 {
    rates.optimum().1 / (1.0 + epsilon)
}

struct TaskWork<'a> {
    view: TaskView<'a>,
    rates: Arc<ProfileRates>,
    placement: Vec<ClusterId>,
    floor: f64,
}

struct JobWork<'a> {
    state: JobState,
    tasks: Vec<TaskWork<'a>>,
    /// Tasks that gained a copy in the latest pass.
    gained: Vec<usize>,
}

impl JobWork<'_> {
    fn has_budget(&self) -> bool {
        self.state.budget() > 0
    }
}

struct Round<'m> {
    model: &'m PerformanceModel,
}

impl Round<'_> {
    fn candidates<'r>(&self, builder: &'r PlanBuilder, task: &'r TaskWork<'_>) -> impl Iterator<Item = ClusterId> + 'r {
        (0..self.model.cluster_count() as u32).map(ClusterId).filter(move |&c| {
            task.rates.expected(c) >= task.floor && builder.check(c, task.rates.demand(c)).is_ok()
        })
    }

    fn give(builder: &mut PlanBuilder, job: &mut JobWork<'_>, idx: usize, cluster: ClusterId) {
        let task = &mut job.tasks[idx];
        builder.assign(task.view.id, cluster, task.rates.demand(cluster));
        task.placement.push(cluster);
        job.state.running += 1;
        job.gained.push(idx);
    }

    /// One copy for each waiting task.
    fn first(&self, builder: &mut PlanBuilder, job: &mut JobWork<'_>, principle: Principle) -> Result<u32> {
        job.gained.clear();
        let mut assigned = 0;
        for idx in 0..job.tasks.len() {
            if !job.has_budget() || builder.total_free() == 0 {
                break;
            }
            let task = &job.tasks[idx];
            if !task.placement.is_empty() {
                continue;
            }
            let choice = match principle {
                Principle::Efficiency => {
                    let mut order: Vec<ClusterId> = (0..self.model.cluster_count() as u32).map(ClusterId).collect();
                    order.sort_by(|a, b| task.rates.expected(*b).total_cmp(&task.rates.expected(*a)).then(a.cmp(b)));
                    order
                        .into_iter()
                        .take_while(|c| task.rates.expected(*c) >= task.floor)
                        .find(|c| builder.check(*c, task.rates.demand(*c)).is_ok())
                }
                Principle::Reliability => argmax(self.candidates(builder, task), |c| {
                    Ok(self.model.reliability_at(&[c], task.view.datasize, task.rates.expected(c)))
                })?
                .map(|(c, _)| c),
            };
            if let Some(c) = choice {
                Self::give(builder, job, idx, c);
                assigned += 1;
            }
        }
        Ok(assigned)
    }

    /// One extra copy for tasks that hold exactly one.
    fn second(&self, builder: &mut PlanBuilder, job: &mut JobWork<'_>, principle: Principle) -> Result<u32> {
        job.gained.clear();
        let mut order: Vec<(usize, f64)> = Vec::new();
        for (idx, t) in job.tasks.iter().enumerate() {
            if t.placement.len() != 1 {
                continue;
            }
            let rate = t.rates.exec_rate(&t.placement)?;
            let key = match principle {
                Principle::Reliability => self.model.reliability_at(&t.placement, t.view.datasize, rate),
                // Longest expected time first.
                Principle::Efficiency => -t.view.datasize / rate,
            };
            order.push((idx, key));
        }
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut assigned = 0;
        for (idx, _) in order {
            if !job.has_budget() || builder.total_free() == 0 {
                break;
            }
            let task = &job.tasks[idx];
            let d = task.view.datasize;
            let score = |placement: &[ClusterId]| -> Result<f64> {
                let rate = task.rates.exec_rate(placement)?;
                Ok(match principle {
                    Principle::Reliability => self.model.reliability_at(placement, d, rate),
                    Principle::Efficiency => rate,
                })
            };
            let current = score(&task.placement)?;
            let best = argmax(self.candidates(builder, task), |c| score(&extend(&task.placement, c)))?;
            if let Some((c, value)) = best {
                if value > current + 1e-12 * current.abs().max(1.0) {
                    Self::give(builder, job, idx, c);
                    assigned += 1;
                }
            }
        }
        Ok(assigned)
    }

    /// Further copies for tasks that gained one in the previous pass, only
    /// when the `c`-th copy cuts expected time by more than `(c+1)/c`.
    fn saving(&self, builder: &mut PlanBuilder, job: &mut JobWork<'_>) -> Result<u32> {
        let mut eligible = std::mem::take(&mut job.gained);
        eligible.sort_unstable();
        eligible.dedup();
        let mut assigned = 0;
        for idx in eligible {
            if !job.has_budget() || builder.total_free() == 0 {
                break;
            }
            let task = &job.tasks[idx];
            let before = task.rates.exec_rate(&task.placement)?;
            let best = argmax(self.candidates(builder, task), |c| task.rates.exec_rate(&extend(&task.placement, c)))?;
            if let Some((c, after)) = best {
                let count = (task.placement.len() + 1) as f64;
                if saves_resources(task.view.datasize / before, task.view.datasize / after, count) {
                    Self::give(builder, job, idx, c);
                    assigned += 1;
                }
            }
        }
        Ok(assigned)
    }
}

/// The resource-saving test for a `copies`-th copy: expected time with one
/// copy fewer must exceed `(copies + 1) / copies` times the time with it.
pub fn saves_resources(time_without: f64, time_with: f64, copies: f64) -> bool {
    time_without > (copies + 1.0) / copies * time_with
}

fn extend(placement: &[ClusterId], c: ClusterId) -> Vec<ClusterId> {
    let mut p = placement.to_vec();
    p.push(c);
    p
}

/// Highest-scoring cluster; ties keep the earliest (lowest id) candidate.
fn argmax(
    candidates: impl Iterator<Item = ClusterId>,
    mut score: impl FnMut(ClusterId) -> Result<f64>,
) -> Result<Option<(ClusterId, f64)>> {
    let mut best: Option<(ClusterId, f64)> = None;
    for c in candidates {
        let s = score(c)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    Ok(best)
}

/// Task order inside a job: earlier stage, then larger input, then index.
fn task_order(a: &TaskView<'_>, b: &TaskView<'_>) -> std::cmp::Ordering {
    a.stage
        .cmp(&b.stage)
        .then(b.datasize.total_cmp(&a.datasize))
        .then(a.id.index.cmp(&b.id.index))
}

#[derive(Debug, Clone)]
pub struct Insurer {
    pub policy: InsurerPolicy,
}

impl Insurer {
    pub fn new(policy: InsurerPolicy) -> Self {
        Self { policy }
    }

    pub fn job_states(snapshot: &Snapshot<'_>) -> Vec<JobState> {
        snapshot.jobs.iter().map(|j| job_state(j, snapshot.now)).collect()
    }

    /// Builds the plan for one slot.
    pub fn insure(&self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan> {
        let mut builder = snapshot.builder();
        if builder.total_free() == 0 || snapshot.jobs.is_empty() {
            return Ok(builder.finish());
        }
        let mut states = Self::job_states(snapshot);
        prioritize(&mut states, self.policy.epsilon, snapshot.total_slots());

        let round = Round { model: snapshot.model };
        let mut work: Vec<JobWork<'_>> = Vec::new();
        for state in states.into_iter().filter(|s| s.budget() > 0) {
            let view = snapshot.jobs.iter().find(|j| j.id == state.job).expect("state built from snapshot");
            let mut tasks = Vec::with_capacity(view.tasks.len());
            let mut sorted: Vec<TaskView<'_>> = view.tasks.clone();
            sorted.sort_by(task_order);
            for t in sorted {
                let rates = snapshot.model.rates(t.profile)?;
                let floor = rate_floor(&rates, self.policy.epsilon);
                tasks.push(TaskWork { view: t, placement: t.placement(), rates, floor });
            }
            work.push(JobWork { state, tasks, gained: Vec::new() });
        }

        match self.policy.allocation {
            Allocation::Efa => self.efa(&round, &mut builder, &mut work)?,
            Allocation::Jga => {
                for job in &mut work {
                    self.jga_job(&round, &mut builder, job)?;
                }
            }
        }
        Ok(builder.finish())
    }

    fn efa(&self, round: &Round<'_>, builder: &mut PlanBuilder, work: &mut [JobWork<'_>]) -> Result<()> {
        let mut n = 0;
        for job in work.iter_mut() {
            n += round.first(builder, job, self.policy.first_round)?;
        }
        if n == 0 {
            return Ok(());
        }
        let mut n = 0;
        for job in work.iter_mut() {
            if job.has_budget() {
                n += round.second(builder, job, self.policy.second_round)?;
            } else {
                job.gained.clear();
            }
        }
        while n > 0 {
            n = 0;
            for job in work.iter_mut() {
                if job.has_budget() {
                    n += round.saving(builder, job)?;
                } else {
                    job.gained.clear();
                }
            }
        }
        Ok(())
    }

    fn jga_job(&self, round: &Round<'_>, builder: &mut PlanBuilder, job: &mut JobWork<'_>) -> Result<()> {
        if round.first(builder, job, self.policy.first_round)? == 0 {
            return Ok(());
        }
        if round.second(builder, job, self.policy.second_round)? == 0 {
            return Ok(());
        }
        while job.has_budget() && round.saving(builder, job)? > 0 {}
        Ok(())
    }
}

fn job_state(job: &JobView<'_>, now: f64) -> JobState {
    JobState {
        job: job.id,
        arrival: job.arrival,
        unprocessed: job.unprocessed(now),
        running: job.running_copies(),
        promised: 0,
        rank: 0,
    }
}

impl Scheduler for Insurer {
    fn name(&self) -> String {
        "insurance".into()
    }

    fn plan(&mut self, snapshot: &Snapshot<'_>) -> Result<InsurancePlan> {
        self.insure(snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(id: u32, unprocessed: f64, arrival: f64) -> JobState {
        JobState { job: JobId(id), arrival, unprocessed, running: 0, promised: 0, rank: 0 }
    }

    #[test]
    fn promised_share_goes_to_smallest_jobs() {
        let mut jobs = vec![state(0, 20.0, 0.0), state(1, 5.0, 0.0), state(2, 40.0, 0.0), state(3, 10.0, 0.0)];
        prioritize(&mut jobs, 0.5, 8);
        let promised: Vec<(u32, u32)> = jobs.iter().map(|j| (j.job.0, j.promised)).collect();
        assert_eq!(promised, vec![(1, 4), (3, 4), (0, 0), (2, 0)]);
    }

    #[test]
    fn single_job_share_rounds_up() {
        let mut jobs = vec![state(0, 1.0, 0.0)];
        prioritize(&mut jobs, 0.6, 10);
        assert_eq!(jobs[0].promised, 17);
    }

    #[test]
    fn ties_go_to_earlier_arrival() {
        let mut jobs = vec![state(0, 7.0, 3.0), state(1, 7.0, 1.0)];
        prioritize(&mut jobs, 0.5, 4);
        assert_eq!(jobs[0].job, JobId(1));
        assert_eq!(jobs[0].promised, 4);
        assert_eq!(jobs[1].promised, 0);
    }

    #[test]
    fn favoured_count_is_not_inflated_by_rounding() {
        // 0.6 * 5 is 3.0000000000000004 in floating point.
        let mut jobs: Vec<JobState> = (0..5).map(|i| state(i, f64::from(i), 0.0)).collect();
        prioritize(&mut jobs, 0.6, 30);
        assert_eq!(jobs.iter().filter(|j| j.promised > 0).count(), 3);
        assert_eq!(jobs[0].promised, 10);
    }

    #[test]
    fn saving_inequality_examples() {
        assert!(saves_resources(10.0, 7.0, 3.0));
        assert!(!saves_resources(10.0, 8.0, 3.0));
        assert!(!saves_resources(10.0, 10.0, 3.0));
    }

    #[test]
    fn labels_map_to_policies() {
        let p = InsurerPolicy::from_label("reli-eff", 0.4).unwrap();
        assert_eq!((p.first_round, p.second_round, p.allocation), (Principle::Reliability, Principle::Efficiency, Allocation::Efa));
        assert_eq!(InsurerPolicy::from_label("jga", 0.4).unwrap().allocation, Allocation::Jga);
        assert!(InsurerPolicy::from_label("nope", 0.4).is_err());
        assert!(InsurerPolicy::with_epsilon(1.0).validate().is_err());
    }
}
