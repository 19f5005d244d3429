mod common;

use common::{cluster, point, Fixture};
use geoinsure::baselines::{Cloning, Speculative, StageGreedy};
use geoinsure::plan::InsurancePlan;
use geoinsure::sched::Scheduler;
use geoinsure::TaskId;

fn run(fx: &Fixture, now: f64, s: &mut dyn Scheduler) -> InsurancePlan {
    s.plan(&fx.snapshot(now)).unwrap()
}

fn clusters_for(plan: &InsurancePlan, task: TaskId) -> Vec<u32> {
    plan.entries.iter().filter(|e| e.task == task).map(|e| e.cluster.0).collect()
}

#[test]
fn stage_greedy_places_a_single_task_on_the_fastest_cluster() {
    let mut fx = Fixture::new(vec![cluster(0, 1, point(5.0), 0.0), cluster(1, 1, point(10.0), 0.0)]);
    let j = fx.job(0.0);
    let t = fx.task(j, 0, 10.0, &[]);
    assert_eq!(clusters_for(&run(&fx, 0.0, &mut StageGreedy), t), vec![1]);
}

#[test]
fn stage_greedy_spreads_tasks_when_the_fast_cluster_fills() {
    let mut fx = Fixture::new(vec![cluster(0, 1, point(10.0), 0.0), cluster(1, 1, point(5.0), 0.0)]);
    let j = fx.job(0.0);
    let a = fx.task(j, 0, 10.0, &[]);
    let b = fx.task(j, 0, 10.0, &[]);
    let p = run(&fx, 0.0, &mut StageGreedy);
    // The second task finishes at 2 on either cluster and takes the one that
    // is ready now.
    assert_eq!(clusters_for(&p, a), vec![0]);
    assert_eq!(clusters_for(&p, b), vec![1]);
    assert_eq!(p.total_copies(), 2);
}

#[test]
fn stage_greedy_queues_behind_a_much_faster_busy_cluster() {
    let mut fx = Fixture::new(vec![cluster(0, 1, point(100.0), 0.0), cluster(1, 1, point(1.0), 0.0)]);
    let j = fx.job(0.0);
    fx.task(j, 0, 100.0, &[(0, 100.0)]);
    let t = fx.task(j, 0, 100.0, &[]);
    // Waiting 1 slot then running 1 slot beats 100 slots on the slow cluster.
    assert!(clusters_for(&run(&fx, 0.0, &mut StageGreedy), t).is_empty());
}

#[test]
fn stage_greedy_plans_nothing_without_free_slots() {
    let mut fx = Fixture::new(vec![cluster(0, 1, point(10.0), 0.0)]);
    let j = fx.job(0.0);
    fx.task(j, 0, 10.0, &[(0, 10.0)]);
    fx.task(j, 0, 10.0, &[]);
    assert!(run(&fx, 0.0, &mut StageGreedy).is_empty());
}

fn straggler(backup_rate: f64) -> (Fixture, TaskId) {
    let mut fx = Fixture::new(vec![cluster(0, 1, point(1.0), 0.0), cluster(1, 1, point(backup_rate), 0.0)]);
    let j = fx.job(0.0);
    let t = fx.task(j, 0, 20.0, &[(0, 1.0)]);
    (fx, t)
}

#[test]
fn speculative_backs_up_a_clear_straggler() {
    // Remaining 10 slots against a fresh copy finishing in 4.
    let (fx, t) = straggler(5.0);
    assert_eq!(clusters_for(&run(&fx, 10.0, &mut Speculative::default()), t), vec![1]);
}

#[test]
fn speculative_ignores_a_copy_within_the_threshold() {
    // A fresh copy would need 6 slots; twice that exceeds the 10 remaining.
    let (fx, t) = straggler(20.0 / 6.0);
    assert!(clusters_for(&run(&fx, 10.0, &mut Speculative::default()), t).is_empty());
}

#[test]
fn speculative_waits_for_the_monitor_delay() {
    let (fx, t) = straggler(5.0);
    assert!(clusters_for(&run(&fx, 1.0, &mut Speculative::default()), t).is_empty());
}

#[test]
fn speculative_launches_at_most_one_backup() {
    let mut fx = Fixture::new((0..3).map(|i| cluster(i, 1, point(if i == 0 { 1.0 } else { 5.0 }), 0.0)).collect());
    let j = fx.job(0.0);
    let t = fx.task(j, 0, 20.0, &[(0, 1.0), (1, 1.0)]);
    assert!(clusters_for(&run(&fx, 10.0, &mut Speculative::default()), t).is_empty());

    let mut fx = Fixture::new((0..3).map(|i| cluster(i, 1, point(if i == 0 { 1.0 } else { 5.0 }), 0.0)).collect());
    let j = fx.job(0.0);
    let t = fx.task(j, 0, 20.0, &[(0, 1.0)]);
    let mut s = Speculative::default();
    assert_eq!(clusters_for(&run(&fx, 10.0, &mut s), t).len(), 1);
    // The same scheduler remembers the task even if the backup vanished.
    assert!(clusters_for(&run(&fx, 11.0, &mut s), t).is_empty());
}

fn three_clusters(slots: u32) -> Fixture {
    Fixture::new(vec![
        cluster(0, slots, point(10.0), 0.0),
        cluster(1, slots, point(8.0), 0.0),
        cluster(2, slots, point(6.0), 0.0),
    ])
}

#[test]
fn cloning_copies_small_jobs_within_the_budget() {
    // 30 slots at a 5% budget allow one extra copy.
    let mut fx = three_clusters(10);
    let j = fx.job(0.0);
    let a = fx.task(j, 0, 10.0, &[]);
    let b = fx.task(j, 0, 5.0, &[]);
    let p = run(&fx, 0.0, &mut Cloning::default());
    assert_eq!(clusters_for(&p, a), vec![0, 1]);
    assert_eq!(clusters_for(&p, b).len(), 1);
}

#[test]
fn cloning_needs_budget() {
    let mut fx = three_clusters(1);
    let j = fx.job(0.0);
    let t = fx.task(j, 0, 10.0, &[]);
    assert_eq!(clusters_for(&run(&fx, 0.0, &mut Cloning::default()), t), vec![0]);
}

#[test]
fn cloning_skips_large_jobs() {
    let mut fx = three_clusters(10);
    let j = fx.job(0.0);
    let tasks: Vec<TaskId> = (0..11).map(|_| fx.task(j, 0, 10.0, &[])).collect();
    let p = run(&fx, 0.0, &mut Cloning::default());
    assert_eq!(p.total_copies(), 11);
    assert!(tasks.iter().all(|&t| p.copies_for(t) == 1));
}
