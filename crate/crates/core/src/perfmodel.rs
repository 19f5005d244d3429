//! Performance modeler: windowed execution records turned into processing and
//! link distributions, and the rate, reliability and time queries the
//! schedulers ask of them.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::dist::{EmpiricalDistribution, DEFAULT_BIN_CAP};
use crate::error::{Error, Result};
use crate::types::{mix_seed, ClusterId, OpType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferObservation {
    pub source: ClusterId,
    pub destination: ClusterId,
    pub bandwidth: f64,
}

/// What a finished copy reports back: the processing speed it saw and the
/// bandwidth of each remote fetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub cluster: ClusterId,
    pub op: OpType,
    pub speed: f64,
    #[serde(default)]
    pub transfers: Vec<TransferObservation>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub id: ClusterId,
    pub slots: u32,
    pub ingress_cap: f64,
    pub egress_cap: f64,
    pub failure_prob: f64,
    /// Processing speed used for any operation without its own entry.
    pub speed: EmpiricalDistribution,
    #[serde(default)]
    pub op_speeds: BTreeMap<OpType, EmpiricalDistribution>,
}

impl ClusterModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("cluster {}: {msg}", self.id)));
        if self.slots == 0 {
            return bad("needs at least one slot".into());
        }
        if !(self.ingress_cap > 0.0 && self.egress_cap > 0.0) {
            return bad("gate caps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.failure_prob) {
            return bad(format!("failure probability {} outside [0, 1)", self.failure_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LinkEntry {
    source: ClusterId,
    destination: ClusterId,
    bandwidth: EmpiricalDistribution,
}

#[derive(Serialize, Deserialize)]
struct RawLinkModel {
    default: EmpiricalDistribution,
    links: Vec<LinkEntry>,
}

/// Per ordered cluster pair bandwidth distributions, with a fallback for
/// pairs that have none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawLinkModel", into = "RawLinkModel")]
pub struct LinkModel {
    pub default: EmpiricalDistribution,
    pub links: BTreeMap<(ClusterId, ClusterId), EmpiricalDistribution>,
}

impl From<RawLinkModel> for LinkModel {
    fn from(raw: RawLinkModel) -> Self {
        let links = raw.links.into_iter().map(|e| ((e.source, e.destination), e.bandwidth)).collect();
        Self { default: raw.default, links }
    }
}

impl From<LinkModel> for RawLinkModel {
    fn from(m: LinkModel) -> Self {
        let links = m
            .links
            .into_iter()
            .map(|((source, destination), bandwidth)| LinkEntry { source, destination, bandwidth })
            .collect();
        Self { default: m.default, links }
    }
}

impl LinkModel {
    pub fn uniform(default: EmpiricalDistribution) -> Self {
        Self { default, links: BTreeMap::new() }
    }

    pub fn get(&self, source: ClusterId, destination: ClusterId) -> &EmpiricalDistribution {
        self.links.get(&(source, destination)).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Records older than this many slots drop out of the window.
    pub window: f64,
    pub bin_cap: usize,
    /// Bandwidth of reading an input that already sits in the cluster.
    pub local_read: f64,
    /// Windowed samples needed before a learned histogram replaces the prior.
    pub min_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { window: 500.0, bin_cap: DEFAULT_BIN_CAP, local_read: 1000.0, min_samples: 1 }
    }
}

/// Everything about a task that its rate depends on. Datasize is passed
/// separately to the time and reliability queries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawProfile")]
pub struct TaskProfile {
    pub op: OpType,
    pub sources: Vec<ClusterId>,
    #[serde(skip_serializing)]
    key: u64,
}

#[derive(Deserialize)]
struct RawProfile {
    op: OpType,
    sources: Vec<ClusterId>,
}

impl From<RawProfile> for TaskProfile {
    fn from(raw: RawProfile) -> Self {
        Self::new(raw.op, raw.sources)
    }
}

impl TaskProfile {
    pub fn new(op: OpType, sources: impl IntoIterator<Item = ClusterId>) -> Self {
        let mut sources: Vec<ClusterId> = sources.into_iter().collect();
        sources.sort_unstable();
        sources.dedup();
        let mut parts: Vec<u64> = op.as_str().bytes().map(u64::from).collect();
        parts.push(u64::MAX);
        parts.extend(sources.iter().map(|c| u64::from(c.0)));
        Self { op, sources, key: mix_seed(&parts) }
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

/// Expected bandwidth a copy draws through the gates while it runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateDemand {
    pub destination: Option<ClusterId>,
    pub ingress: f64,
    pub egress: Vec<(ClusterId, f64)>,
}

impl GateDemand {
    pub fn is_empty(&self) -> bool {
        self.egress.is_empty()
    }
}

/// Precomputed per-destination rate data for one task profile.
#[derive(Debug)]
pub struct ProfileRates {
    profile: TaskProfile,
    dists: Vec<Arc<EmpiricalDistribution>>,
    expected: Vec<f64>,
    demands: Vec<GateDemand>,
    optimum: (ClusterId, f64),
    bin_cap: usize,
    exec_cache: Mutex<HashMap<Vec<u32>, f64>>,
}

impl ProfileRates {
    pub fn profile(&self) -> &TaskProfile {
        &self.profile
    }

    pub fn dist(&self, cluster: ClusterId) -> &EmpiricalDistribution {
        &self.dists[cluster.index()]
    }

    /// Expected single-copy rate in `cluster`.
    pub fn expected(&self, cluster: ClusterId) -> f64 {
        self.expected[cluster.index()]
    }

    pub fn demand(&self, cluster: ClusterId) -> &GateDemand {
        &self.demands[cluster.index()]
    }

    /// Best single-copy cluster ignoring load; ties go to the lowest id.
    pub fn optimum(&self) -> (ClusterId, f64) {
        self.optimum
    }

    /// Expected rate of the fastest copy over `placement`.
    pub fn exec_rate(&self, placement: &[ClusterId]) -> Result<f64> {
        match placement {
            [] => Err(Error::InfeasiblePlacement),
            [only] => Ok(self.expected(*only)),
            _ => {
                let mut key: Vec<u32> = placement.iter().map(|c| c.0).collect();
                key.sort_unstable();
                let mut cache = lock(&self.exec_cache);
                if let Some(r) = cache.get(&key) {
                    return Ok(*r);
                }
                let mut acc = self.dists[key[0] as usize].as_ref().clone();
                for &c in &key[1..] {
                    acc = acc.max_compose(&self.dists[c as usize], self.bin_cap);
                }
                let r = acc.expectation();
                cache.insert(key, r);
                Ok(r)
            }
        }
    }
}

#[derive(Debug, Default)]
struct Derived {
    dirty_proc: BTreeSet<(ClusterId, OpType)>,
    dirty_link: BTreeSet<(ClusterId, ClusterId)>,
    learned_proc: BTreeMap<(ClusterId, OpType), Arc<EmpiricalDistribution>>,
    learned_link: BTreeMap<(ClusterId, ClusterId), Arc<EmpiricalDistribution>>,
    profiles: HashMap<u64, Arc<ProfileRates>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

type Window = VecDeque<(f64, f64)>;

/// Serializable state of a [`PerformanceModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub config: ModelConfig,
    pub clusters: Vec<ClusterModel>,
    pub links: LinkModel,
    #[serde(default)]
    pub records: Vec<ExecutionRecord>,
}

#[derive(Debug)]
pub struct PerformanceModel {
    config: ModelConfig,
    clusters: Vec<ClusterModel>,
    links: LinkModel,
    local: Arc<EmpiricalDistribution>,
    proc_windows: BTreeMap<(ClusterId, OpType), Window>,
    link_windows: BTreeMap<(ClusterId, ClusterId), Window>,
    history: VecDeque<ExecutionRecord>,
    derived: Mutex<Derived>,
}

impl Clone for PerformanceModel {
    fn clone(&self) -> Self {
        let d = lock(&self.derived);
        Self {
            config: self.config.clone(),
            clusters: self.clusters.clone(),
            links: self.links.clone(),
            local: self.local.clone(),
            proc_windows: self.proc_windows.clone(),
            link_windows: self.link_windows.clone(),
            history: self.history.clone(),
            derived: Mutex::new(Derived {
                dirty_proc: d.dirty_proc.clone(),
                dirty_link: d.dirty_link.clone(),
                learned_proc: d.learned_proc.clone(),
                learned_link: d.learned_link.clone(),
                profiles: d.profiles.clone(),
            }),
        }
    }
}

impl PerformanceModel {
    pub fn new(clusters: Vec<ClusterModel>, links: LinkModel, config: ModelConfig) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidSpec("topology has no clusters".into()));
        }
        for (i, c) in clusters.iter().enumerate() {
            if c.id.index() != i {
                return Err(Error::InvalidSpec(format!("cluster at position {i} has id {}", c.id)));
            }
            c.validate()?;
        }
        if let Some(&(a, b)) = links
            .links
            .keys()
            .find(|(a, b)| a.index() >= clusters.len() || b.index() >= clusters.len())
        {
            return Err(Error::InvalidSpec(format!("link {a}->{b} names an unknown cluster")));
        }
        if config.bin_cap < 2 || !(config.window > 0.0) {
            return Err(Error::InvalidSpec("model needs bin_cap >= 2 and a positive window".into()));
        }
        let local = Arc::new(EmpiricalDistribution::point(config.local_read)?);
        Ok(Self {
            config,
            clusters,
            links,
            local,
            proc_windows: BTreeMap::new(),
            link_windows: BTreeMap::new(),
            history: VecDeque::new(),
            derived: Mutex::new(Derived::default()),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn clusters(&self) -> &[ClusterModel] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> Result<&ClusterModel> {
        self.clusters.get(id.index()).ok_or(Error::UnknownCluster(id))
    }

    pub fn links(&self) -> &LinkModel {
        &self.links
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_slots(&self) -> u32 {
        self.clusters.iter().map(|c| c.slots).sum()
    }

    fn check_cluster(&self, id: ClusterId) -> Result<()> {
        self.cluster(id).map(|_| ())
    }

    pub fn ingest(&mut self, record: ExecutionRecord) -> Result<()> {
        self.check_cluster(record.cluster)?;
        if !(record.speed.is_finite() && record.speed > 0.0) {
            return Err(Error::InvalidRecord(format!("speed {}", record.speed)));
        }
        if !record.time.is_finite() {
            return Err(Error::InvalidRecord(format!("timestamp {}", record.time)));
        }
        for t in &record.transfers {
            self.check_cluster(t.source)?;
            self.check_cluster(t.destination)?;
            if t.source == t.destination {
                return Err(Error::InvalidRecord(format!("transfer from {} to itself", t.source)));
            }
            if !(t.bandwidth.is_finite() && t.bandwidth > 0.0) {
                return Err(Error::InvalidRecord(format!("bandwidth {}", t.bandwidth)));
            }
        }
        let derived = self.derived.get_mut().unwrap_or_else(|p| p.into_inner());
        let key = (record.cluster, record.op.clone());
        self.proc_windows.entry(key.clone()).or_default().push_back((record.time, record.speed));
        derived.dirty_proc.insert(key);
        for t in &record.transfers {
            let key = (t.source, t.destination);
            self.link_windows.entry(key).or_default().push_back((record.time, t.bandwidth));
            derived.dirty_link.insert(key);
        }
        self.history.push_back(record);
        Ok(())
    }

    /// Drops records older than the window as seen from `now`.
    pub fn advance(&mut self, now: f64) {
        let cutoff = now - self.config.window;
        let derived = self.derived.get_mut().unwrap_or_else(|p| p.into_inner());
        for (key, w) in self.proc_windows.iter_mut() {
            if evict(w, cutoff) {
                derived.dirty_proc.insert(key.clone());
            }
        }
        for (key, w) in self.link_windows.iter_mut() {
            if evict(w, cutoff) {
                derived.dirty_link.insert(*key);
            }
        }
        while self.history.front().is_some_and(|r| r.time < cutoff) {
            self.history.pop_front();
        }
    }

    fn refreshed(&self) -> MutexGuard<'_, Derived> {
        let mut d = lock(&self.derived);
        if d.dirty_proc.is_empty() && d.dirty_link.is_empty() {
            return d;
        }
        let (cap, min) = (self.config.bin_cap, self.config.min_samples.max(1));
        for key in std::mem::take(&mut d.dirty_proc) {
            match learned(self.proc_windows.get(&key), cap, min) {
                Some(dist) => d.learned_proc.insert(key, Arc::new(dist)),
                None => d.learned_proc.remove(&key),
            };
        }
        for key in std::mem::take(&mut d.dirty_link) {
            match learned(self.link_windows.get(&key), cap, min) {
                Some(dist) => d.learned_link.insert(key, Arc::new(dist)),
                None => d.learned_link.remove(&key),
            };
        }
        d.profiles.clear();
        d
    }

    fn processing_in(&self, d: &Derived, cluster: ClusterId, op: &OpType) -> Arc<EmpiricalDistribution> {
        if let Some(dist) = d.learned_proc.get(&(cluster, op.clone())) {
            return dist.clone();
        }
        let c = &self.clusters[cluster.index()];
        Arc::new(c.op_speeds.get(op).unwrap_or(&c.speed).clone())
    }

    fn link_in(&self, d: &Derived, source: ClusterId, destination: ClusterId) -> Arc<EmpiricalDistribution> {
        if source == destination {
            return self.local.clone();
        }
        match d.learned_link.get(&(source, destination)) {
            Some(dist) => dist.clone(),
            None => Arc::new(self.links.get(source, destination).clone()),
        }
    }

    /// Processing speed distribution of `op` in `cluster`: the learned
    /// histogram when the window has enough samples, otherwise the configured
    /// per-operation or cluster-wide prior.
    pub fn processing_dist(&self, cluster: ClusterId, op: &OpType) -> Result<EmpiricalDistribution> {
        self.check_cluster(cluster)?;
        let d = self.refreshed();
        Ok(self.processing_in(&d, cluster, op).as_ref().clone())
    }

    pub fn link_dist(&self, source: ClusterId, destination: ClusterId) -> Result<EmpiricalDistribution> {
        self.check_cluster(source)?;
        self.check_cluster(destination)?;
        let d = self.refreshed();
        Ok(self.link_in(&d, source, destination).as_ref().clone())
    }

    /// Mean bandwidth over one fetch per input location into `destination`.
    pub fn transfer_dist(&self, sources: &[ClusterId], destination: ClusterId) -> Result<EmpiricalDistribution> {
        self.check_cluster(destination)?;
        for s in sources {
            self.check_cluster(*s)?;
        }
        let d = self.refreshed();
        self.transfer_in(&d, sources, destination)
    }

    fn transfer_in(&self, d: &Derived, sources: &[ClusterId], destination: ClusterId) -> Result<EmpiricalDistribution> {
        if sources.is_empty() {
            return Ok(self.local.as_ref().clone());
        }
        let parts: Vec<EmpiricalDistribution> =
            sources.iter().map(|s| self.link_in(d, *s, destination).as_ref().clone()).collect();
        EmpiricalDistribution::mean_compose(&parts, self.config.bin_cap)
    }

    /// Rate data for every destination cluster, cached until the learned
    /// distributions next change.
    pub fn rates(&self, profile: &TaskProfile) -> Result<Arc<ProfileRates>> {
        for s in &profile.sources {
            self.check_cluster(*s)?;
        }
        let mut d = self.refreshed();
        if let Some(entry) = d.profiles.get(&profile.key) {
            if entry.profile == *profile {
                return Ok(entry.clone());
            }
        }
        let entry = Arc::new(self.build_rates(&d, profile)?);
        d.profiles.insert(profile.key, entry.clone());
        Ok(entry)
    }

    fn build_rates(&self, d: &Derived, profile: &TaskProfile) -> Result<ProfileRates> {
        let n = self.clusters.len();
        let cap = self.config.bin_cap;
        let mut dists = Vec::with_capacity(n);
        let mut expected = Vec::with_capacity(n);
        let mut demands = Vec::with_capacity(n);
        let mut optimum = (ClusterId(0), f64::NEG_INFINITY);
        for m in 0..n {
            let m = ClusterId(m as u32);
            let transfer = self.transfer_in(d, &profile.sources, m)?;
            let rate = self.processing_in(d, m, &profile.op).min_compose(&transfer, cap);
            let e = rate.expectation();
            if e > optimum.1 {
                optimum = (m, e);
            }
            expected.push(e);
            dists.push(Arc::new(rate));

            let share = profile.sources.len().max(1) as f64;
            let mut demand = GateDemand { destination: Some(m), ..GateDemand::default() };
            for &s in profile.sources.iter().filter(|s| **s != m) {
                let need = self.link_in(d, s, m).expectation() / share;
                demand.ingress += need;
                demand.egress.push((s, need));
            }
            if demand.egress.is_empty() {
                demand.destination = None;
            }
            demands.push(demand);
        }
        Ok(ProfileRates {
            profile: profile.clone(),
            dists,
            expected,
            demands,
            optimum,
            bin_cap: cap,
            exec_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Single-copy rate distribution: the slower of processing and transfer.
    pub fn copy_rate_dist(&self, profile: &TaskProfile, cluster: ClusterId) -> Result<EmpiricalDistribution> {
        self.check_cluster(cluster)?;
        Ok(self.rates(profile)?.dist(cluster).clone())
    }

    pub fn exec_rate(&self, profile: &TaskProfile, placement: &[ClusterId]) -> Result<f64> {
        for c in placement {
            self.check_cluster(*c)?;
        }
        self.rates(profile)?.exec_rate(placement)
    }

    /// Probability that no hosting cluster is down during the expected run
    /// time. Copies in the same cluster share its failure events.
    pub fn reliability(&self, profile: &TaskProfile, placement: &[ClusterId], datasize: f64) -> Result<f64> {
        let rate = self.exec_rate(profile, placement)?;
        Ok(self.reliability_at(placement, datasize, rate))
    }

    /// [`reliability`](Self::reliability) with an already known exec rate.
    pub fn reliability_at(&self, placement: &[ClusterId], datasize: f64, rate: f64) -> f64 {
        let mut distinct: Vec<ClusterId> = placement.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let all_down: f64 = distinct.iter().map(|c| self.clusters[c.index()].failure_prob).product();
        let e = if datasize <= 0.0 { 0.0 } else { datasize / rate };
        (1.0 - all_down).powf(e)
    }

    pub fn global_optimal(&self, profile: &TaskProfile) -> Result<(ClusterId, f64)> {
        Ok(self.rates(profile)?.optimum())
    }

    pub fn est_exec_time(&self, profile: &TaskProfile, placement: &[ClusterId], datasize: f64) -> Result<f64> {
        if datasize <= 0.0 {
            return Ok(0.0);
        }
        let rate = self.exec_rate(profile, placement)?;
        if rate > 0.0 {
            Ok(datasize / rate)
        } else {
            Err(Error::InfeasiblePlacement)
        }
    }

    pub fn gate_demand(&self, profile: &TaskProfile, cluster: ClusterId) -> Result<GateDemand> {
        self.check_cluster(cluster)?;
        Ok(self.rates(profile)?.demand(cluster).clone())
    }

    pub fn to_snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            config: self.config.clone(),
            clusters: self.clusters.clone(),
            links: self.links.clone(),
            records: self.history.iter().cloned().collect(),
        }
    }

    pub fn from_snapshot(snapshot: ModelSnapshot) -> Result<Self> {
        let mut model = Self::new(snapshot.clusters, snapshot.links, snapshot.config)?;
        for r in snapshot.records {
            model.ingest(r)?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_snapshot())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_snapshot(serde_json::from_str(json)?)
    }
}

fn evict(w: &mut Window, cutoff: f64) -> bool {
    let before = w.len();
    while w.front().is_some_and(|(t, _)| *t < cutoff) {
        w.pop_front();
    }
    w.len() != before
}

fn learned(window: Option<&Window>, cap: usize, min: usize) -> Option<EmpiricalDistribution> {
    let w = window?;
    if w.len() < min {
        return None;
    }
    let samples: Vec<f64> = w.iter().map(|(_, v)| *v).collect();
    EmpiricalDistribution::from_samples(&samples, cap).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(v: f64) -> EmpiricalDistribution {
        EmpiricalDistribution::point(v).unwrap()
    }

    fn coin(a: f64, b: f64) -> EmpiricalDistribution {
        EmpiricalDistribution::from_pairs([(a, 0.5), (b, 0.5)]).unwrap()
    }

    fn cluster(id: u32, speed: EmpiricalDistribution, p: f64) -> ClusterModel {
        ClusterModel {
            id: ClusterId(id),
            slots: 4,
            ingress_cap: 1e6,
            egress_cap: 1e6,
            failure_prob: p,
            speed,
            op_speeds: BTreeMap::new(),
        }
    }

    fn model(clusters: Vec<ClusterModel>, links: LinkModel) -> PerformanceModel {
        PerformanceModel::new(clusters, links, ModelConfig::default()).unwrap()
    }

    fn op() -> OpType {
        OpType::new("map")
    }

    fn local_task() -> TaskProfile {
        TaskProfile::new(op(), [])
    }

    #[test]
    fn learned_histogram_replaces_prior() {
        let mut m = model(vec![cluster(0, point(1.0), 0.0), cluster(1, point(5.0), 0.0)], LinkModel::uniform(point(50.0)));
        for (i, v) in [10.0, 10.0, 20.0, 20.0].into_iter().enumerate() {
            let rec = ExecutionRecord { cluster: ClusterId(1), op: op(), speed: v, transfers: vec![], time: i as f64 };
            m.ingest(rec).unwrap();
        }
        assert_eq!(m.processing_dist(ClusterId(1), &op()).unwrap(), coin(10.0, 20.0));
        assert_eq!(m.processing_dist(ClusterId(1), &OpType::new("reduce")).unwrap(), point(5.0));
        assert_eq!(m.processing_dist(ClusterId(0), &op()).unwrap(), point(1.0));
    }

    #[test]
    fn window_drops_old_records() {
        let mut m = model(vec![cluster(0, point(1.0), 0.0)], LinkModel::uniform(point(50.0)));
        m.ingest(ExecutionRecord { cluster: ClusterId(0), op: op(), speed: 30.0, transfers: vec![], time: 0.0 }).unwrap();
        m.ingest(ExecutionRecord { cluster: ClusterId(0), op: op(), speed: 40.0, transfers: vec![], time: 400.0 }).unwrap();
        assert_eq!(m.processing_dist(ClusterId(0), &op()).unwrap(), coin(30.0, 40.0));
        m.advance(600.0);
        assert_eq!(m.processing_dist(ClusterId(0), &op()).unwrap(), point(40.0));
        m.advance(1000.0);
        assert_eq!(m.processing_dist(ClusterId(0), &op()).unwrap(), point(1.0));
    }

    #[test]
    fn ingest_rejects_bad_records() {
        let mut m = model(vec![cluster(0, point(1.0), 0.0), cluster(1, point(1.0), 0.0)], LinkModel::uniform(point(1.0)));
        let rec = |cluster: u32, speed: f64, transfers: Vec<TransferObservation>| ExecutionRecord {
            cluster: ClusterId(cluster),
            op: op(),
            speed,
            transfers,
            time: 0.0,
        };
        assert!(matches!(m.ingest(rec(7, 1.0, vec![])), Err(Error::UnknownCluster(ClusterId(7)))));
        assert!(m.ingest(rec(0, 0.0, vec![])).is_err());
        let selfie = TransferObservation { source: ClusterId(1), destination: ClusterId(1), bandwidth: 3.0 };
        assert!(m.ingest(rec(1, 1.0, vec![selfie])).is_err());
    }

    #[test]
    fn transfer_examples() {
        let mut links = LinkModel::uniform(point(1.0));
        links.links.insert((ClusterId(0), ClusterId(2)), point(10.0));
        links.links.insert((ClusterId(1), ClusterId(2)), point(20.0));
        links.links.insert((ClusterId(1), ClusterId(0)), coin(10.0, 20.0));
        let m = model((0..3).map(|i| cluster(i, point(1.0), 0.0)).collect(), links);
        assert_eq!(m.transfer_dist(&[ClusterId(0), ClusterId(1)], ClusterId(2)).unwrap(), point(15.0));
        assert_eq!(m.transfer_dist(&[ClusterId(2)], ClusterId(2)).unwrap(), point(1000.0));
        assert_eq!(m.transfer_dist(&[ClusterId(1)], ClusterId(0)).unwrap(), coin(10.0, 20.0));
    }

    #[test]
    fn copy_rate_examples() {
        let mut links = LinkModel::uniform(point(15.0));
        links.links.insert((ClusterId(1), ClusterId(0)), point(8.0));
        links.links.insert((ClusterId(1), ClusterId(2)), point(3.0));
        let m = model(
            vec![cluster(0, point(15.0), 0.0), cluster(1, point(8.0), 0.0), cluster(2, coin(2.0, 4.0), 0.0)],
            links,
        );
        let t = TaskProfile::new(op(), [ClusterId(1)]);
        assert_eq!(m.copy_rate_dist(&t, ClusterId(0)).unwrap(), point(8.0));
        assert_eq!(m.copy_rate_dist(&t, ClusterId(1)).unwrap(), point(8.0));
        assert_eq!(m.copy_rate_dist(&t, ClusterId(2)).unwrap(), coin(2.0, 3.0));
    }

    #[test]
    fn exec_rate_and_time_examples() {
        let m = model(
            vec![cluster(0, point(3.0), 0.0), cluster(1, point(8.0), 0.0), cluster(2, point(6.0), 0.0), cluster(3, coin(2.0, 4.0), 0.0)],
            LinkModel::uniform(point(100.0)),
        );
        let t = local_task();
        assert_eq!(m.exec_rate(&t, &[ClusterId(0)]).unwrap(), 3.0);
        assert_eq!(m.exec_rate(&t, &[ClusterId(1), ClusterId(2)]).unwrap(), 8.0);
        assert!((m.exec_rate(&t, &[ClusterId(3), ClusterId(3)]).unwrap() - 3.5).abs() < 1e-12);
        assert!(matches!(m.exec_rate(&t, &[]), Err(Error::InfeasiblePlacement)));

        assert!((m.est_exec_time(&t, &[ClusterId(1)], 100.0).unwrap() - 12.5).abs() < 1e-12);
        assert_eq!(m.est_exec_time(&t, &[ClusterId(1)], 0.0).unwrap(), 0.0);
        let e = m.est_exec_time(&t, &[ClusterId(3), ClusterId(3)], 6.0).unwrap();
        assert!((e - 6.0 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn reliability_examples() {
        let m = model(
            vec![cluster(0, point(3.0), 0.1), cluster(1, point(3.0), 0.2), cluster(2, point(6.0), 0.1)],
            LinkModel::uniform(point(100.0)),
        );
        let t = local_task();
        assert!((m.reliability(&t, &[ClusterId(0)], 6.0).unwrap() - 0.81).abs() < 1e-12);
        assert!((m.reliability(&t, &[ClusterId(0), ClusterId(1)], 3.0).unwrap() - 0.98).abs() < 1e-12);
        assert!((m.reliability_at(&[ClusterId(0), ClusterId(0)], 1.5, 1.0) - 0.9f64.powf(1.5)).abs() < 1e-12);
        assert!((0.9f64.powf(1.5) - 0.8538).abs() < 1e-4);
    }

    #[test]
    fn global_optimum_prefers_lowest_id_on_ties() {
        let m = model(
            vec![cluster(0, point(6.0), 0.0), cluster(1, point(12.0), 0.0), cluster(2, point(12.0), 0.0)],
            LinkModel::uniform(point(100.0)),
        );
        assert_eq!(m.global_optimal(&local_task()).unwrap(), (ClusterId(1), 12.0));
        let single = model(vec![cluster(0, point(6.0), 0.0)], LinkModel::uniform(point(1.0)));
        assert_eq!(single.global_optimal(&local_task()).unwrap(), (ClusterId(0), 6.0));
    }

    #[test]
    fn gate_demand_splits_across_remote_inputs() {
        let mut links = LinkModel::uniform(point(40.0));
        links.links.insert((ClusterId(1), ClusterId(0)), point(20.0));
        let m = model((0..3).map(|i| cluster(i, point(5.0), 0.0)).collect(), links);
        let t = TaskProfile::new(op(), [ClusterId(1), ClusterId(2), ClusterId(0)]);
        let d = m.gate_demand(&t, ClusterId(0)).unwrap();
        assert!((d.ingress - 20.0).abs() < 1e-12);
        assert_eq!(d.egress, vec![(ClusterId(1), 20.0 / 3.0), (ClusterId(2), 40.0 / 3.0)]);
        assert!(m.gate_demand(&local_task(), ClusterId(2)).unwrap().is_empty());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut m = model(vec![cluster(0, coin(2.0, 4.0), 0.1), cluster(1, point(3.0), 0.0)], LinkModel::uniform(point(9.0)));
        let xfer = TransferObservation { source: ClusterId(1), destination: ClusterId(0), bandwidth: 7.0 };
        m.ingest(ExecutionRecord { cluster: ClusterId(0), op: op(), speed: 3.0, transfers: vec![xfer], time: 2.0 }).unwrap();
        let back = PerformanceModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.to_snapshot(), m.to_snapshot());
        assert_eq!(back.link_dist(ClusterId(1), ClusterId(0)).unwrap(), point(7.0));
    }
}
