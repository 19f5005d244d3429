//! Topology and workload generators: a heavy-tailed cluster population with
//! per-class parameter ranges, Poisson job arrivals, and layered task DAGs
//! whose raw inputs are scattered over edge clusters.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::perfmodel::{ClusterModel, LinkModel};
use crate::types::{mix_seed, ClusterId, JobId, OpType};

/// Bins used to discretize the normal speed and bandwidth distributions.
pub const NORMAL_BINS: usize = 16;

/// Truncation point of the discretized normals, as a fraction of the mean.
pub const NORMAL_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleClass {
    Large,
    Medium,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class: ScaleClass,
    pub fraction: f64,
    pub slots: [u32; 2],
    /// Gate capacity as a fraction of the summed external bandwidth of the
    /// cluster's slots.
    pub gate_ratio: [f64; 2],
    pub speed_mean: [f64; 2],
    pub speed_rsd: [f64; 2],
    pub failure: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologySpec {
    pub clusters: usize,
    /// Ordered from the highest-degree class down.
    pub classes: Vec<ClassSpec>,
    pub wan_mean: [f64; 2],
    pub wan_rsd: [f64; 2],
    /// Multiplies every drawn failure probability.
    pub failure_scale: f64,
    /// Edges each new node adds in the preferential-attachment graph.
    pub attach_edges: usize,
    /// Exponent on degree in the attachment weight; above one is superlinear.
    pub attach_exponent: f64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl TopologySpec {
    /// The full-size setting: 100 clusters with the published class ranges.
    pub fn reference() -> Self {
        Self {
            clusters: 100,
            classes: vec![
                ClassSpec {
                    class: ScaleClass::Large,
                    fraction: 0.05,
                    slots: [500, 1500],
                    gate_ratio: [0.55, 0.75],
                    speed_mean: [174.0, 355.0],
                    speed_rsd: [0.25, 0.6],
                    failure: [0.002, 0.011],
                },
                ClassSpec {
                    class: ScaleClass::Medium,
                    fraction: 0.20,
                    slots: [50, 500],
                    gate_ratio: [0.65, 0.85],
                    speed_mean: [128.0, 241.0],
                    speed_rsd: [0.55, 0.85],
                    failure: [0.02, 0.2],
                },
                ClassSpec {
                    class: ScaleClass::Small,
                    fraction: 0.75,
                    slots: [10, 50],
                    gate_ratio: [0.75, 0.95],
                    speed_mean: [68.0, 179.0],
                    speed_rsd: [0.35, 0.75],
                    failure: [0.05, 0.5],
                },
            ],
            wan_mean: [64.0, 256.0],
            wan_rsd: [0.2, 0.5],
            failure_scale: 1.0,
            attach_edges: 2,
            attach_exponent: 1.5,
        }
    }

    /// Ten clusters with slot counts cut tenfold and failure rates scaled so
    /// that multi-slot tasks on small clusters still finish.
    pub fn desk() -> Self {
        let mut spec = Self::reference();
        spec.clusters = 10;
        spec.failure_scale = 0.1;
        for c in &mut spec.classes {
            c.slots = [(c.slots[0] / 10).max(1), (c.slots[1] / 10).max(1)];
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(format!("topology: {msg}")));
        if self.clusters == 0 {
            return bad("needs at least one cluster");
        }
        if self.classes.is_empty() {
            return bad("needs at least one class");
        }
        let total: f64 = self.classes.iter().map(|c| c.fraction).sum();
        if (total - 1.0).abs() > 1e-9 || self.classes.iter().any(|c| c.fraction < 0.0) {
            return bad("class fractions must be non-negative and sum to 1");
        }
        for c in &self.classes {
            if c.slots[0] == 0 || c.slots[0] > c.slots[1] {
                return bad("slot range must be positive and ordered");
            }
            for r in [c.gate_ratio, c.speed_mean, c.speed_rsd] {
                check_range(r, false)?;
            }
            check_range(c.failure, true)?;
            if c.failure[1] * self.failure_scale >= 1.0 {
                return bad("scaled failure probability must stay below 1");
            }
        }
        check_range(self.wan_mean, false)?;
        check_range(self.wan_rsd, false)?;
        if !(self.failure_scale >= 0.0) || self.attach_edges == 0 || !(self.attach_exponent > 0.0) {
            return bad("failure_scale, attach_edges and attach_exponent must be positive");
        }
        Ok(())
    }

    /// Number of clusters per class by largest remainder; ties go to the
    /// earlier class.
    pub fn class_counts(&self) -> Vec<usize> {
        let n = self.clusters;
        let exact: Vec<f64> = self.classes.iter().map(|c| c.fraction * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for i in order.into_iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

fn check_range(r: [f64; 2], allow_zero: bool) -> Result<()> {
    let lo_ok = if allow_zero { r[0] >= 0.0 } else { r[0] > 0.0 };
    if lo_ok && r[0] <= r[1] && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("range [{}, {}] is empty or not positive", r[0], r[1])))
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub clusters: Vec<ClusterModel>,
    pub links: LinkModel,
    pub classes: Vec<ScaleClass>,
    pub degrees: Vec<u32>,
}

impl Topology {
    pub fn total_slots(&self) -> u32 {
        self.clusters.iter().map(|c| c.slots).sum()
    }

    pub fn class_of(&self, id: ClusterId) -> ScaleClass {
        self.classes[id.index()]
    }
}

/// Degree sequence of a preferential-attachment graph in which a node is
/// picked with weight `degree^exponent`.
pub fn attachment_degrees(n: usize, edges: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut deg = vec![0u32; n];
    let seed_nodes = (edges + 1).min(n);
    for i in 0..seed_nodes {
        for j in i + 1..seed_nodes {
            deg[i] += 1;
            deg[j] += 1;
        }
    }
    for new in seed_nodes..n {
        let mut picked: Vec<usize> = Vec::with_capacity(edges);
        for _ in 0..edges.min(new) {
            let weights: Vec<f64> = (0..new)
                .map(|v| if picked.contains(&v) { 0.0 } else { f64::from(deg[v].max(1)).powf(exponent) })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut choice = new - 1;
            for (v, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    choice = v;
                    break;
                }
                u -= w;
            }
            picked.push(choice);
        }
        for v in picked {
            deg[v] += 1;
            deg[new] += 1;
        }
    }
    deg
}

pub fn gen_topology(spec: &TopologySpec, seed: u64) -> Result<Topology> {
    spec.validate()?;
    let n = spec.clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x70_70]));
    let degrees = attachment_degrees(n, spec.attach_edges, spec.attach_exponent, &mut rng);

    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    let mut class_idx = vec![0usize; n];
    let mut pos = 0;
    for (ci, count) in spec.class_counts().into_iter().enumerate() {
        for &node in &rank[pos..pos + count] {
            class_idx[node] = ci;
        }
        pos += count;
    }

    let mut links = BTreeMap::new();
    let mut link_means = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mean = draw(&mut rng, spec.wan_mean);
            let rsd = draw(&mut rng, spec.wan_rsd);
            let d = EmpiricalDistribution::discretized_normal(mean, mean * rsd, NORMAL_BINS, NORMAL_FLOOR * mean)?;
            link_means[a][b] = d.expectation();
            links.insert((ClusterId(a as u32), ClusterId(b as u32)), d);
        }
    }
    let mean_wan = (spec.wan_mean[0] + spec.wan_mean[1]) / 2.0;
    let default = EmpiricalDistribution::point(mean_wan)?;

    let mut clusters = Vec::with_capacity(n);
    for k in 0..n {
        let c = &spec.classes[class_idx[k]];
        let slots = if c.slots[0] == c.slots[1] { c.slots[0] } else { rng.random_range(c.slots[0]..=c.slots[1]) };
        let ratio = draw(&mut rng, c.gate_ratio);
        let mean = draw(&mut rng, c.speed_mean);
        let rsd = draw(&mut rng, c.speed_rsd);
        let failure = draw(&mut rng, c.failure) * spec.failure_scale;
        let speed = EmpiricalDistribution::discretized_normal(mean, mean * rsd, NORMAL_BINS, NORMAL_FLOOR * mean)?;
        let (incoming, outgoing, widest_in, widest_out) = if n == 1 {
            (mean_wan, mean_wan, mean_wan, mean_wan)
        } else {
            let inc: Vec<f64> = (0..n).filter(|&a| a != k).map(|a| link_means[a][k]).collect();
            let out: Vec<f64> = (0..n).filter(|&b| b != k).map(|b| link_means[k][b]).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let widest = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
            (mean(&inc), mean(&out), widest(&inc), widest(&out))
        };
        clusters.push(ClusterModel {
            id: ClusterId(k as u32),
            slots,
            // Never below one transfer over the widest link, so a lone copy
            // always fits through an idle gate.
            ingress_cap: (ratio * f64::from(slots) * incoming).max(widest_in),
            egress_cap: (ratio * f64::from(slots) * outgoing).max(widest_out),
            failure_prob: failure,
            speed,
            op_speeds: BTreeMap::new(),
        });
    }
    Ok(Topology {
        clusters,
        links: LinkModel { default, links },
        classes: class_idx.iter().map(|&i| spec.classes[i].class).collect(),
        degrees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeClass {
    pub name: String,
    pub fraction: f64,
    pub tasks: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub jobs: usize,
    /// Poisson arrival rate in jobs per slot.
    pub lambda: f64,
    pub sizes: Vec<SizeClass>,
    pub stages: [u32; 2],
    pub fan_in: [u32; 2],
    /// Per-task input size in MB.
    pub datasize: [f64; 2],
    /// Input locations per source task.
    pub sources: [u32; 2],
    /// Operation labels, one per stage (the last repeats for deeper stages).
    pub ops: Vec<String>,
    /// Classes whose clusters may hold raw inputs.
    pub input_classes: Vec<ScaleClass>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl WorkloadSpec {
    pub fn reference() -> Self {
        Self {
            jobs: 2000,
            lambda: 0.07,
            sizes: vec![
                SizeClass { name: "small".into(), fraction: 0.89, tasks: [1, 150] },
                SizeClass { name: "medium".into(), fraction: 0.08, tasks: [151, 500] },
                SizeClass { name: "large".into(), fraction: 0.03, tasks: [501, 1000] },
            ],
            stages: [4, 4],
            fan_in: [2, 4],
            datasize: [200.0, 2000.0],
            sources: [1, 2],
            ops: ["project", "diff", "fit", "add"].map(String::from).to_vec(),
            input_classes: vec![ScaleClass::Small, ScaleClass::Medium],
        }
    }

    /// Two hundred jobs with task counts cut tenfold to fit the desk topology.
    pub fn desk() -> Self {
        let mut spec = Self::reference();
        spec.jobs = 200;
        spec.sizes = vec![
            SizeClass { name: "small".into(), fraction: 0.89, tasks: [1, 15] },
            SizeClass { name: "medium".into(), fraction: 0.08, tasks: [16, 50] },
            SizeClass { name: "large".into(), fraction: 0.03, tasks: [51, 100] },
        ];
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(format!("workload: {msg}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.sizes.is_empty() {
            return bad("needs at least one size class");
        }
        let total: f64 = self.sizes.iter().map(|s| s.fraction).sum();
        if (total - 1.0).abs() > 1e-9 || self.sizes.iter().any(|s| s.fraction < 0.0) {
            return bad("size fractions must be non-negative and sum to 1");
        }
        for r in self.sizes.iter().map(|s| s.tasks).chain([self.stages, self.fan_in, self.sources]) {
            if r[0] == 0 || r[0] > r[1] {
                return bad("integer ranges must be positive and ordered");
            }
        }
        check_range(self.datasize, false)?;
        if self.ops.is_empty() {
            return bad("needs at least one operation label");
        }
        if self.input_classes.is_empty() {
            return bad("needs at least one input class");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub index: u32,
    pub stage: u32,
    pub op: OpType,
    pub datasize: f64,
    /// Indices of tasks in the same job that must finish first.
    #[serde(default)]
    pub preds: Vec<u32>,
    /// Raw input locations; empty for tasks fed only by predecessors.
    #[serde(default)]
    pub inputs: Vec<ClusterId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub arrival: f64,
    pub tasks: Vec<TaskSpec>,
}

impl Job {
    pub fn validate(&self, clusters: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("job {}: {msg}", self.id)));
        if !(self.arrival >= 0.0 && self.arrival.is_finite()) {
            return bad(format!("arrival {}", self.arrival));
        }
        if self.tasks.is_empty() {
            return bad("has no tasks".into());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.index as usize != i {
                return bad(format!("task at position {i} has index {}", t.index));
            }
            if !(t.datasize > 0.0 && t.datasize.is_finite()) {
                return bad(format!("task {i} datasize {}", t.datasize));
            }
            if t.preds.iter().any(|&p| p >= t.index) {
                return bad(format!("task {i} depends on a later task"));
            }
            if let Some(c) = t.inputs.iter().find(|c| c.index() >= clusters) {
                return Err(Error::UnknownCluster(*c));
            }
        }
        Ok(())
    }

    pub fn total_datasize(&self) -> f64 {
        self.tasks.iter().map(|t| t.datasize).sum()
    }
}

/// Splits `n` tasks over `stages` layers with linearly decreasing weights,
/// at least one task per layer.
fn stage_sizes(n: u32, stages: u32) -> Vec<u32> {
    let s = stages.min(n).max(1);
    let weights: Vec<u32> = (0..s).map(|i| s - i).collect();
    let wsum: u32 = weights.iter().sum();
    let spare = n - s;
    let mut sizes: Vec<u32> = weights.iter().map(|w| 1 + spare * w / wsum).collect();
    let mut left = n - sizes.iter().sum::<u32>();
    let mut i = 0;
    while left > 0 {
        sizes[i % s as usize] += 1;
        left -= 1;
        i += 1;
    }
    sizes
}

pub fn gen_workload(spec: &WorkloadSpec, topology: &Topology, seed: u64) -> Result<Vec<Job>> {
    spec.validate()?;
    let holders: Vec<ClusterId> = (0..topology.clusters.len())
        .map(|k| ClusterId(k as u32))
        .filter(|c| spec.input_classes.contains(&topology.class_of(*c)))
        .collect();
    if holders.is_empty() {
        return Err(Error::InvalidSpec("no cluster belongs to an input class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x3017]));
    let gaps = Exp::new(spec.lambda).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut clock = 0.0;
    let mut jobs = Vec::with_capacity(spec.jobs);
    for j in 0..spec.jobs {
        clock += gaps.sample(&mut rng);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut class = &spec.sizes[spec.sizes.len() - 1];
        for s in &spec.sizes {
            acc += s.fraction;
            if u < acc {
                class = s;
                break;
            }
        }
        let n = rng.random_range(class.tasks[0]..=class.tasks[1]);
        let stages = rng.random_range(spec.stages[0]..=spec.stages[1]);
        let sizes = stage_sizes(n, stages);

        let mut tasks: Vec<TaskSpec> = Vec::with_capacity(n as usize);
        let mut prev: Vec<u32> = Vec::new();
        for (stage, &count) in sizes.iter().enumerate() {
            let op = OpType::new(spec.ops[stage.min(spec.ops.len() - 1)].clone());
            let mut layer = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let index = tasks.len() as u32;
                let datasize = draw(&mut rng, spec.datasize);
                let (preds, inputs) = if prev.is_empty() {
                    let k = rng.random_range(spec.sources[0]..=spec.sources[1]).min(holders.len() as u32);
                    let mut picked: Vec<ClusterId> =
                        sample(&mut rng, holders.len(), k as usize).into_iter().map(|i| holders[i]).collect();
                    picked.sort_unstable();
                    (Vec::new(), picked)
                } else {
                    let k = rng.random_range(spec.fan_in[0]..=spec.fan_in[1]).min(prev.len() as u32);
                    let mut picked: Vec<u32> =
                        sample(&mut rng, prev.len(), k as usize).into_iter().map(|i| prev[i]).collect();
                    picked.sort_unstable();
                    (picked, Vec::new())
                };
                tasks.push(TaskSpec { index, stage: stage as u32, op: op.clone(), datasize, preds, inputs });
                layer.push(index);
            }
            prev = layer;
        }
        jobs.push(Job { id: JobId(j as u32), arrival: clock, tasks });
    }
    Ok(jobs)
}

/// A complete, replayable simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    pub jobs: Vec<Job>,
}

impl Scenario {
    pub fn generate(topology: &TopologySpec, workload: &WorkloadSpec, seed: u64) -> Result<Self> {
        let topology = gen_topology(topology, seed)?;
        let jobs = gen_workload(workload, &topology, seed)?;
        Ok(Self { topology, jobs })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.clusters.len();
        for (i, c) in self.topology.clusters.iter().enumerate() {
            if c.id.index() != i {
                return Err(Error::InvalidSpec(format!("cluster at position {i} has id {}", c.id)));
            }
            c.validate()?;
        }
        for (i, j) in self.jobs.iter().enumerate() {
            if j.id.index() != i {
                return Err(Error::InvalidSpec(format!("job at position {i} has id {}", j.id)));
            }
            j.validate(n)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(json)?;
        s.validate()?;
        Ok(s)
    }
}
