//! Task graph to allocation graph transformations.
//!
//! Phase one expands every task into one node per capability-compatible
//! core (the TAG). Phase two adds a replica copy of a task's whole node set
//! whenever any of its allocations falls below the reliability threshold
//! (the ETAG), and connects every candidate pair of each workflow arc.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::model::*;

pub fn exec_energy(exec_time: f64, power: f64) -> f64 {
    power * exec_time
}

pub fn task_reliability(failure_rate: f64, exec_time: f64) -> f64 {
    (-failure_rate * exec_time).exp()
}

/// Strict comparison: an allocation exactly at the threshold is acceptable.
pub fn needs_duplication(reliability: f64, threshold: f64) -> bool {
    reliability < threshold
}

/// Probability that at least one of two independent copies succeeds.
pub fn duplication_reliability(r1: f64, r2: f64) -> f64 {
    1.0 - (1.0 - r1) * (1.0 - r2)
}

/// Transfer time for `bits`; `None` means both ends share a device.
pub fn comm_latency(bits: f64, route: Option<&Route>) -> f64 {
    route.map_or(0.0, |r| r.latency(bits))
}

pub fn comm_energy(bits: f64, route: Option<&Route>) -> f64 {
    route.map_or(0.0, |r| r.energy(bits))
}

/// Upper bounds on ETAG nodes and arcs: `(2|P|δ, 4|P|²|A|)`.
pub fn etag_size_bounds(tasks: usize, arcs: usize, cores: usize) -> (usize, usize) {
    (2 * cores * tasks, 4 * cores * cores * arcs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagNode {
    pub task: u32,
    pub core: CoreId,
    pub exec_time: f64,
    pub power: f64,
    pub energy: f64,
    pub reliability: f64,
    pub needs_dup: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagArc {
    pub src: usize,
    pub dst: usize,
    pub intermediate: Option<DeviceId>,
    pub comm_latency: f64,
    pub comm_energy: f64,
}

#[derive(Debug, Clone)]
pub struct Tag {
    pub workflow: TaskGraph,
    pub system: SystemModel,
    /// Sorted by (task id, core).
    pub nodes: Vec<TagNode>,
    pub arcs: Vec<TagArc>,
    routes: BTreeMap<(DeviceId, DeviceId), Route>,
}

impl Tag {
    pub fn nodes_of(&self, task: u32) -> impl Iterator<Item = (usize, &TagNode)> {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.task == task)
    }
}

pub fn build_tag(tg: &TaskGraph, sys: &SystemModel) -> Result<Tag, Error> {
    let routes = sys.route_table()?;
    let mut tasks: Vec<&Task> = tg.tasks.iter().collect();
    tasks.sort_by_key(|t| t.id);
    let mut nodes = Vec::new();
    let mut first: BTreeMap<u32, std::ops::Range<usize>> = BTreeMap::new();
    for t in &tasks {
        let start = nodes.len();
        let mut devices: Vec<&Device> = sys.devices.iter().filter(|d| d.has(t.capability())).collect();
        devices.sort_by_key(|d| d.id);
        for d in devices {
            let missing = || Error::Invalid(vec![Violation {
                code: "missing-profile".into(),
                detail: format!("task {} on {}", t.id, d.id),
            }]);
            let l = *t.exec_time.get(&d.id).ok_or_else(missing)?;
            let p = *t.exec_power.get(&d.id).ok_or_else(missing)?;
            for c in &d.cores {
                let r = task_reliability(c.failure_rate, l);
                nodes.push(TagNode {
                    task: t.id,
                    core: c.id,
                    exec_time: l,
                    power: p,
                    energy: exec_energy(l, p),
                    reliability: r,
                    needs_dup: needs_duplication(r, t.reliability_threshold),
                });
            }
        }
        if nodes.len() == start {
            return Err(Error::UnallocatableTask(t.id));
        }
        first.insert(t.id, start..nodes.len());
    }
    let mut arcs = Vec::new();
    for &(i, j) in &tg.arcs {
        let bits = tg.task(i).map_or(0.0, |t| t.output_data);
        for u in first[&i].clone() {
            for v in first[&j].clone() {
                let (a, b) = (nodes[u].core.device, nodes[v].core.device);
                let route = (a != b).then(|| &routes[&(a, b)]);
                arcs.push(TagArc {
                    src: u,
                    dst: v,
                    intermediate: route.and_then(|r| r.intermediate()),
                    comm_latency: comm_latency(bits, route),
                    comm_energy: comm_energy(bits, route),
                });
            }
        }
    }
    arcs.sort_by_key(|a| (a.src, a.dst));
    Ok(Tag {
        workflow: tg.clone(),
        system: sys.clone(),
        nodes,
        arcs,
        routes,
    })
}

/// Identifies a candidate node: task copy `task.copy` placed on `core`.
/// Copy 1 is the primary, copy 2 the replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub task: u32,
    pub copy: u8,
    pub core: CoreId,
}

impl NodeKey {
    pub fn device(&self) -> DeviceId {
        self.core.device
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}@{}", self.task, self.copy, self.core)
    }
}

impl FromStr for NodeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Parse(format!("bad node key {s:?}"));
        let (tc, core) = s.split_once('@').ok_or_else(bad)?;
        let (t, c) = tc.split_once('.').ok_or_else(bad)?;
        let copy: u8 = c.parse().map_err(|_| bad())?;
        if copy != 1 && copy != 2 {
            return Err(bad());
        }
        Ok(NodeKey {
            task: t.parse().map_err(|_| bad())?,
            copy,
            core: core.parse()?,
        })
    }
}

impl Serialize for NodeKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtagNode {
    pub key: NodeKey,
    pub exec_time: f64,
    pub power: f64,
    pub energy: f64,
    pub reliability: f64,
    /// ζ of the underlying allocation.
    pub needs_dup: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtagArc {
    pub src: usize,
    pub dst: usize,
    pub intermediate: Option<DeviceId>,
    pub comm_latency: f64,
    pub comm_energy: f64,
    /// Per-device share of `comm_energy` (sender, relay, receiver).
    pub charges: Vec<(DeviceId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtagTask {
    pub id: u32,
    pub capability: u32,
    pub memory: f64,
    pub storage: f64,
    pub output_data: f64,
    pub reliability_threshold: f64,
    pub exit: bool,
    pub parents: Vec<u32>,
    pub children: Vec<u32>,
    pub primaries: Vec<usize>,
    pub replicas: Vec<usize>,
}

impl EtagTask {
    pub fn copies(&self) -> u8 {
        if self.replicas.is_empty() {
            1
        } else {
            2
        }
    }

    pub fn candidates(&self, copy: u8) -> &[usize] {
        if copy == 1 {
            &self.primaries
        } else {
            &self.replicas
        }
    }
}

/// The extended task allocation graph together with the system it targets.
#[derive(Debug, Clone)]
pub struct Etag {
    pub system: SystemModel,
    /// Sorted by id.
    pub tasks: Vec<EtagTask>,
    /// Sorted by key.
    pub nodes: Vec<EtagNode>,
    /// Sorted by (source key, target key).
    pub arcs: Vec<EtagArc>,
    pub arcs_in: Vec<Vec<usize>>,
    pub arcs_out: Vec<Vec<usize>>,
    pub workflow_arcs: Vec<(u32, u32)>,
    pub topo_order: Vec<u32>,
    reach: BTreeSet<(u32, u32)>,
}

impl Etag {
    pub fn task(&self, id: u32) -> &EtagTask {
        &self.tasks[self.task_index(id)]
    }

    pub fn task_index(&self, id: u32) -> usize {
        self.tasks
            .binary_search_by_key(&id, |t| t.id)
            .unwrap_or_else(|_| panic!("unknown task {id}"))
    }

    pub fn node_index(&self, key: &NodeKey) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.key.cmp(key)).ok()
    }

    pub fn node_task(&self, node: usize) -> &EtagTask {
        self.task(self.nodes[node].key.task)
    }

    pub fn device(&self, id: DeviceId) -> &Device {
        self.system.device(id).expect("device of an ETAG node")
    }

    /// Every task copy `(task, copy)` that has candidate nodes.
    pub fn copies(&self) -> Vec<(u32, u8)> {
        let mut out = Vec::new();
        for t in &self.tasks {
            for n in 1..=t.copies() {
                out.push((t.id, n));
            }
        }
        out
    }

    pub fn arc_between(&self, src: usize, dst: usize) -> Option<usize> {
        self.arcs_out[src].iter().copied().find(|&a| self.arcs[a].dst == dst)
    }

    /// True when a directed path leads from task `a` to task `b`.
    pub fn precedes(&self, a: u32, b: u32) -> bool {
        self.reach.contains(&(a, b))
    }

    pub fn pair_reliability(&self, primary: usize, replica: usize) -> f64 {
        duplication_reliability(self.nodes[primary].reliability, self.nodes[replica].reliability)
    }

    /// R̂ of a primary, paired with `replica` when the primary needs one.
    pub fn total_reliability(&self, primary: usize, replica: Option<usize>) -> Result<f64, Error> {
        let p = &self.nodes[primary];
        match (p.needs_dup, replica) {
            (true, Some(r)) => Ok(self.pair_reliability(primary, r)),
            (true, None) => Err(Error::MissingReplica(p.key.to_string())),
            (false, _) => Ok(p.reliability),
        }
    }

    pub fn core_count(&self) -> usize {
        self.system.core_count()
    }

    pub fn dump(&self) -> EtagDump {
        EtagDump {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskDump {
                    id: t.id,
                    exit: t.exit,
                    primaries: t.primaries.iter().map(|&n| self.nodes[n].key).collect(),
                    replicas: t.replicas.iter().map(|&n| self.nodes[n].key).collect(),
                })
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    key: n.key,
                    exec_time_s: n.exec_time,
                    power_w: n.power,
                    energy_j: n.energy,
                    reliability: n.reliability,
                    needs_duplication: n.needs_dup,
                })
                .collect(),
            arcs: self
                .arcs
                .iter()
                .map(|a| ArcDump {
                    src: self.nodes[a.src].key,
                    dst: self.nodes[a.dst].key,
                    intermediate: a.intermediate,
                    comm_latency_s: a.comm_latency,
                    comm_energy_j: a.comm_energy,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtagDump {
    pub tasks: Vec<TaskDump>,
    pub nodes: Vec<NodeDump>,
    pub arcs: Vec<ArcDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDump {
    pub id: u32,
    pub exit: bool,
    pub primaries: Vec<NodeKey>,
    pub replicas: Vec<NodeKey>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDump {
    pub key: NodeKey,
    pub exec_time_s: f64,
    pub power_w: f64,
    pub energy_j: f64,
    pub reliability: f64,
    pub needs_duplication: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcDump {
    pub src: NodeKey,
    pub dst: NodeKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<DeviceId>,
    pub comm_latency_s: f64,
    pub comm_energy_j: f64,
}

pub fn build_etag(tag: &Tag) -> Etag {
    let tg = &tag.workflow;
    let mut nodes = Vec::new();
    let mut by_task: BTreeMap<u32, Vec<&TagNode>> = BTreeMap::new();
    for n in &tag.nodes {
        by_task.entry(n.task).or_default().push(n);
    }
    let mut dup: BTreeMap<u32, bool> = BTreeMap::new();
    for (&task, list) in &by_task {
        let d = list.iter().any(|n| n.needs_dup);
        dup.insert(task, d);
        for copy in 1..=(1 + d as u8) {
            for n in list {
                nodes.push(EtagNode {
                    key: NodeKey {
                        task,
                        copy,
                        core: n.core,
                    },
                    exec_time: n.exec_time,
                    power: n.power,
                    energy: n.energy,
                    reliability: n.reliability,
                    needs_dup: n.needs_dup,
                });
            }
        }
    }
    nodes.sort_by_key(|n| n.key);

    let mut tasks: Vec<EtagTask> = tg
        .tasks
        .iter()
        .map(|t| EtagTask {
            id: t.id,
            capability: t.capability(),
            memory: t.memory,
            storage: t.storage,
            output_data: t.output_data,
            reliability_threshold: t.reliability_threshold,
            exit: tg.is_exit(t.id),
            parents: tg.parents(t.id),
            children: tg.children(t.id),
            primaries: Vec::new(),
            replicas: Vec::new(),
        })
        .collect();
    tasks.sort_by_key(|t| t.id);
    for t in &mut tasks {
        t.parents.sort_unstable();
        t.children.sort_unstable();
    }
    for (idx, n) in nodes.iter().enumerate() {
        let t = tasks.binary_search_by_key(&n.key.task, |t| t.id).unwrap();
        if n.key.copy == 1 {
            tasks[t].primaries.push(idx);
        } else {
            tasks[t].replicas.push(idx);
        }
    }

    let mut arcs = Vec::new();
    let mut sorted_arcs = tg.arcs.clone();
    sorted_arcs.sort_unstable();
    for &(i, j) in &sorted_arcs {
        let ti = &tasks[tasks.binary_search_by_key(&i, |t| t.id).unwrap()];
        let tj = &tasks[tasks.binary_search_by_key(&j, |t| t.id).unwrap()];
        let bits = ti.output_data;
        for &u in ti.primaries.iter().chain(&ti.replicas) {
            for &v in tj.primaries.iter().chain(&tj.replicas) {
                let (a, b) = (nodes[u].key.device(), nodes[v].key.device());
                let route = (a != b).then(|| &tag.routes[&(a, b)]);
                arcs.push(EtagArc {
                    src: u,
                    dst: v,
                    intermediate: route.and_then(|r| r.intermediate()),
                    comm_latency: comm_latency(bits, route),
                    comm_energy: comm_energy(bits, route),
                    charges: route.map_or_else(Vec::new, |r| r.device_charges(bits)),
                });
            }
        }
    }
    arcs.sort_by_key(|a| (a.src, a.dst));
    let mut arcs_in = vec![Vec::new(); nodes.len()];
    let mut arcs_out = vec![Vec::new(); nodes.len()];
    for (k, a) in arcs.iter().enumerate() {
        arcs_out[a.src].push(k);
        arcs_in[a.dst].push(k);
    }
    Etag {
        system: tag.system.clone(),
        tasks,
        nodes,
        arcs,
        arcs_in,
        arcs_out,
        workflow_arcs: sorted_arcs,
        topo_order: tg.topo_order().unwrap_or_default(),
        reach: tg.reachability(),
    }
}

/// Both transformation phases.
pub fn transform(tg: &TaskGraph, sys: &SystemModel) -> Result<Etag, Error> {
    Ok(build_etag(&build_tag(tg, sys)?))
}

/// Longest entry-to-exit path over all candidate nodes and arcs, summing
/// execution and communication latency, scaled by `factor`.
pub fn critical_path_deadline(etag: &Etag, factor: f64) -> f64 {
    factor * longest_path(etag)
}

fn longest_path(etag: &Etag) -> f64 {
    let mut dist = vec![0.0f64; etag.nodes.len()];
    let mut best = 0.0f64;
    for &id in &etag.topo_order {
        let t = etag.task(id);
        for &v in t.primaries.iter().chain(&t.replicas) {
            let ready = etag.arcs_in[v]
                .iter()
                .map(|&a| dist[etag.arcs[a].src] + etag.arcs[a].comm_latency)
                .fold(0.0, f64::max);
            dist[v] = ready + etag.nodes[v].exec_time;
            best = best.max(dist[v]);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::fixtures;

    #[test]
    fn energy_and_reliability_formulas() {
        assert!((exec_energy(0.0026, 0.3) - 0.00078).abs() < 1e-15);
        assert_eq!(exec_energy(1.0, 0.0), 0.0);
        assert_eq!(task_reliability(0.0, 123.0), 1.0);
        assert!((task_reliability(6e-4, 12.6484) - 0.992_439_7).abs() < 5e-8);
        assert!((task_reliability(1e-3, 100.0) - 0.904_837_4).abs() < 5e-8);
        assert!(!needs_duplication(0.9990, 0.9990));
        assert!(needs_duplication(0.992_439_7, 0.9999));
        assert!(!needs_duplication(1.0, 0.9999));
        assert!((duplication_reliability(0.9, 0.9) - 0.99).abs() < 1e-15);
        assert_eq!(duplication_reliability(1.0, 0.5), 1.0);
        let r = 0.992_439_7;
        assert!((duplication_reliability(r, r) - 0.999_942_8).abs() < 5e-8);
    }

    fn chan(a: &str, b: &str, mbit: f64, tx: f64, rx: f64) -> Channel {
        Channel {
            from: a.parse().unwrap(),
            to: b.parse().unwrap(),
            bandwidth: mbit * 1e6,
            tx_energy: tx,
            rx_energy: rx,
        }
    }

    #[test]
    fn comm_formulas() {
        let direct = Route {
            from: "e1".parse().unwrap(),
            to: "h1".parse().unwrap(),
            legs: vec![chan("e1", "h1", 8.0, 0.8e-6, 0.6e-6)],
        };
        assert_eq!(comm_latency(1e6, None), 0.0);
        assert_eq!(comm_energy(1e6, None), 0.0);
        assert!((comm_latency(8_388_608.0, Some(&direct)) - 1.048576).abs() < 1e-12);
        assert!((comm_energy(1e6, Some(&direct)) - 1.4).abs() < 1e-12);
        let relay = Route {
            from: "e1".parse().unwrap(),
            to: "c1".parse().unwrap(),
            legs: vec![chan("e1", "h1", 10.0, 1e-6, 1e-6), chan("h1", "c1", 10.0, 1e-6, 1e-6)],
        };
        assert!((comm_latency(8e6, Some(&relay)) - 1.6).abs() < 1e-12);
        assert!((comm_energy(1e6, Some(&relay)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn size_bounds() {
        assert_eq!(etag_size_bounds(50, 74, 18), (1800, 95904));
        assert_eq!(etag_size_bounds(10, 13, 18), (360, 16848));
        assert_eq!(etag_size_bounds(1, 0, 1), (2, 0));
    }

    #[test]
    fn node_key_format() {
        let k: NodeKey = "12.2@c1.6".parse().unwrap();
        assert_eq!(k.task, 12);
        assert_eq!(k.copy, 2);
        assert_eq!(k.to_string(), "12.2@c1.6");
        assert!("1.3@e1.1".parse::<NodeKey>().is_err());
    }

    #[test]
    fn duplication_golden() {
        let inst = fixtures::duplication_example().to_instance().unwrap();
        let tag = build_tag(&inst.workflow, &inst.system).unwrap();
        let task1: Vec<String> = tag.nodes_of(1).map(|(_, n)| n.core.to_string()).collect();
        assert_eq!(task1, vec!["e1.1", "e2.1", "e2.2"]);
        let dup: Vec<String> = tag
            .nodes
            .iter()
            .filter(|n| n.needs_dup)
            .map(|n| format!("{}@{}", n.task, n.core))
            .collect();
        assert_eq!(dup, vec!["1@e2.1"]);
        let etag = build_etag(&tag);
        let t1 = etag.task(1);
        assert_eq!(t1.primaries.len(), 3);
        assert_eq!(t1.replicas.len(), 3);
        for t in &etag.tasks[1..] {
            assert!(t.replicas.is_empty(), "task {} has replicas", t.id);
        }
    }

    #[test]
    fn single_task_single_core() {
        let inst = fixtures::single_task().to_instance().unwrap();
        let tag = build_tag(&inst.workflow, &inst.system).unwrap();
        assert_eq!(tag.nodes.len(), 1);
        assert!(tag.arcs.is_empty());
        let etag = build_etag(&tag);
        assert!(etag.task(1).exit);
        let l = etag.nodes[0].exec_time;
        assert!((critical_path_deadline(&etag, 1.5) - 1.5 * l).abs() < 1e-12);
    }

    #[test]
    fn critical_path_chain_and_diamond() {
        // chain: L = 1, 1 with CL = 0.5 => 2.5
        let inst = fixtures::chain_for_deadline().to_instance().unwrap();
        let etag = transform(&inst.workflow, &inst.system).unwrap();
        assert!((critical_path_deadline(&etag, 1.5) - 3.75).abs() < 1e-9);
    }

    #[test]
    fn real_world_sizes_match_published_counts() {
        for (cfg, nodes, arcs) in [("C1", 278, 5904), ("C2", 256, 5440), ("C3", 314, 6832)] {
            let inst = fixtures::real_world(cfg).unwrap().to_instance().unwrap();
            let etag = transform(&inst.workflow, &inst.system).unwrap();
            assert_eq!((etag.nodes.len(), etag.arcs.len()), (nodes, arcs), "{cfg}");
        }
    }

    #[test]
    fn exit_flag() {
        let inst = fixtures::real_world("C1").unwrap().to_instance().unwrap();
        let etag = transform(&inst.workflow, &inst.system).unwrap();
        assert!(etag.task(16).exit);
        assert!(!etag.task(12).exit);
    }
}
