//! Workloads: the real-world UAV inspection workflow, small worked examples,
//! a seeded synthetic generator and the weight grid used in experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::instance::*;
use crate::model::{DeviceId, ObjectiveWeights, Tier};

/// Capability provisioning of the edge devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Config {
    /// Each specialized edge capability on two devices.
    C1,
    /// Each on exactly one device.
    C2,
    /// Each on all four edge devices.
    C3,
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Config::C1),
            "C2" => Ok(Config::C2),
            "C3" => Ok(Config::C3),
            _ => Err(Error::Parse(format!("unknown configuration {s:?}"))),
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

const fn dev(tier: Tier, index: u32) -> DeviceId {
    DeviceId::new(tier, index)
}

pub const E1: DeviceId = dev(Tier::Edge, 1);
pub const E2: DeviceId = dev(Tier::Edge, 2);
pub const E3: DeviceId = dev(Tier::Edge, 3);
pub const E4: DeviceId = dev(Tier::Edge, 4);
pub const H1: DeviceId = dev(Tier::Hub, 1);
pub const C1: DeviceId = dev(Tier::Cloud, 1);

/// Speed of each device relative to the reference edge device `e1`.
pub const PERF_RATIO: [(DeviceId, f64); 6] = [
    (E1, 1.00),
    (E2, 1.20),
    (E3, 2.80),
    (E4, 5.74),
    (H1, 15.23),
    (C1, 21.70),
];

pub fn perf_ratio(d: DeviceId) -> f64 {
    PERF_RATIO
        .iter()
        .find(|(id, _)| *id == d)
        .map_or(1.0, |p| p.1)
}

/// Inclusive sampling ranges, in instance-file units.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges {
    pub memory_mib: (f64, f64),
    pub storage_mib: (f64, f64),
    pub output_mib: (f64, f64),
    pub exec_time_ms: (f64, f64),
    pub power_w: (f64, f64),
    pub reliability_threshold: (f64, f64),
    pub failure_rate: [(Tier, (f64, f64)); 3],
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            memory_mib: (12.4, 453.0),
            storage_mib: (29.3, 448.9),
            output_mib: (0.4, 18.1),
            exec_time_ms: (2.6, 12648.4),
            power_w: (0.3, 23.7),
            reliability_threshold: (0.9990, 0.9999),
            failure_rate: [
                (Tier::Edge, (6e-4, 8e-4)),
                (Tier::Hub, (4e-4, 6e-4)),
                (Tier::Cloud, (2e-4, 4e-4)),
            ],
        }
    }
}

impl ParamRanges {
    fn failure_range(&self, tier: Tier) -> (f64, f64) {
        self.failure_rate.iter().find(|f| f.0 == tier).unwrap().1
    }
}

/// Link parameter ranges: (bandwidth Mbit/s, tx μJ/bit, rx μJ/bit).
type LinkRange = ((f64, f64), (f64, f64), (f64, f64));
const EDGE_EDGE: LinkRange = ((6.0, 9.0), (0.6, 1.0), (0.4, 0.6));
const EDGE_HUB: LinkRange = ((9.0, 13.0), (0.8, 1.2), (0.6, 0.8));
const HUB_EDGE: LinkRange = ((7.0, 10.0), (0.7, 1.1), (0.5, 0.7));
const HUB_CLOUD: LinkRange = ((10.0, 15.0), (1.8, 2.7), (0.8, 1.2));
const CLOUD_HUB: LinkRange = ((16.0, 24.0), (2.0, 3.0), (1.0, 1.5));

fn mid(r: (f64, f64)) -> f64 {
    (r.0 + r.1) / 2.0
}

/// (id, memory GiB, storage GiB, energy Wh, reserved cores)
const DEVICES: [(DeviceId, f64, f64, f64, usize); 6] = [
    (E1, 0.95, 1.0, 1.0, 2),
    (E2, 1.00, 1.5, 1.0, 2),
    (E3, 2.00, 2.0, 1.0, 2),
    (E4, 2.00, 2.5, 1.0, 2),
    (H1, 3.00, 5.0, 2.0, 4),
    (C1, 4.00, 10.0, 10.0, 6),
];

pub fn capabilities(config: Config, d: DeviceId) -> Vec<u32> {
    match (config, d) {
        (_, H1) => vec![0, 6, 7],
        (_, C1) => vec![0, 8, 9],
        (Config::C3, _) => vec![0, 1, 2, 3, 4, 5],
        (Config::C1, E1) | (Config::C1, E2) => vec![0, 1, 5],
        (Config::C1, _) => vec![0, 2, 3, 4],
        (Config::C2, E1) => vec![0, 5],
        (Config::C2, E2) => vec![0, 1],
        (Config::C2, E3) => vec![0, 3],
        (Config::C2, _) => vec![0, 2, 4],
    }
}

/// The six-device system. `failure` and `link` pick a core failure rate and
/// link parameters from their ranges.
fn system(
    config: Config,
    mut failure: impl FnMut(Tier) -> f64,
    mut link: impl FnMut(LinkRange) -> (f64, f64, f64),
) -> SystemFile {
    let devices = DEVICES
        .iter()
        .map(|&(id, m, s, e, cores)| DeviceFile {
            id,
            cores: (0..cores)
                .map(|_| CoreFile {
                    failure_rate_per_s: failure(id.tier),
                })
                .collect(),
            memory_gib: m,
            storage_gib: s,
            energy_wh: e,
            capabilities: capabilities(config, id),
        })
        .collect();
    let edges = [E1, E2, E3, E4];
    let mut channels = Vec::new();
    let mut push = |from, to, r: LinkRange, bidirectional, link: &mut dyn FnMut(LinkRange) -> (f64, f64, f64)| {
        let (bw, tx, rx) = link(r);
        channels.push(ChannelFile {
            from,
            to,
            bandwidth_mbit_s: bw,
            tx_uj_per_bit: tx,
            rx_uj_per_bit: rx,
            bidirectional,
        });
    };
    for (a, &x) in edges.iter().enumerate() {
        for &y in &edges[a + 1..] {
            push(x, y, EDGE_EDGE, true, &mut link);
        }
    }
    for &x in &edges {
        push(x, H1, EDGE_HUB, false, &mut link);
        push(H1, x, HUB_EDGE, false, &mut link);
    }
    push(H1, C1, HUB_CLOUD, false, &mut link);
    push(C1, H1, CLOUD_HUB, false, &mut link);
    SystemFile { devices, channels }
}

/// Per-task data of the real-world workflow:
/// (id, capability, R_thr, reference time ms, memory MiB, storage MiB,
/// output MiB, reference power W).
///
/// Capabilities and thresholds are the published values. Timing, power and
/// size figures are synthesized inside the published parameter ranges, with
/// reference times chosen so that the duplicated tasks per configuration
/// reproduce the published ETAG node and arc counts.
type TaskRow = (u32, u32, f64, f64, f64, f64, f64, f64);

const REAL_TASKS: [TaskRow; 16] = [
    (1, 3, 0.9999, 1000.0, 180.0, 120.0, 6.5, 2.0),
    (2, 0, 0.9996, 2000.0, 220.0, 150.0, 5.0, 2.5),
    (3, 0, 0.9994, 1800.0, 260.0, 200.0, 4.2, 2.8),
    (4, 0, 0.9994, 1500.0, 150.0, 90.0, 2.0, 1.8),
    (5, 2, 0.9998, 1200.0, 453.0, 448.9, 18.1, 3.0),
    (6, 4, 0.9997, 1800.0, 60.0, 45.0, 0.4, 0.5),
    (7, 0, 0.9996, 300.0, 240.0, 180.0, 9.5, 2.2),
    (8, 0, 0.9997, 1500.0, 200.0, 160.0, 6.0, 2.4),
    (9, 1, 0.9999, 600.0, 140.0, 110.0, 3.6, 1.6),
    (10, 0, 0.9995, 1200.0, 190.0, 130.0, 2.8, 2.1),
    (11, 0, 0.9993, 500.0, 110.0, 80.0, 1.5, 1.5),
    (12, 8, 0.9999, 12648.4, 420.0, 380.0, 12.0, 3.6),
    (13, 9, 0.9995, 800.0, 12.4, 29.3, 0.4, 0.8),
    (14, 6, 0.9998, 2500.0, 95.0, 70.0, 1.0, 1.9),
    (15, 7, 0.9993, 400.0, 35.0, 40.0, 0.5, 0.6),
    (16, 5, 0.9998, 150.0, 25.0, 30.0, 0.4, 0.3),
];

/// Reconstructed arcs: three preprocessing chains merging into the fusion
/// task 12, which feeds storage (13) and UAV coordination (14), which in
/// turn drives the display (15) and tag release (16).
pub const REAL_ARCS: [[u32; 2]; 15] = [
    [1, 2], [2, 3], [3, 4],
    [5, 6], [6, 7], [7, 8],
    [9, 10], [10, 11],
    [4, 12], [8, 12], [11, 12],
    [12, 13], [12, 14],
    [14, 15], [14, 16],
];

/// Power drawn by each device relative to the reference device.
const POWER_FACTOR: [(DeviceId, f64); 6] = [
    (E1, 1.0),
    (E2, 1.6),
    (E3, 2.4),
    (E4, 3.0),
    (H1, 4.5),
    (C1, 6.5),
];

fn profile(
    cap: u32,
    config: Config,
    ref_ms: f64,
    ref_w: f64,
) -> (BTreeMap<DeviceId, f64>, BTreeMap<DeviceId, f64>) {
    let mut time = BTreeMap::new();
    let mut power = BTreeMap::new();
    for &(d, factor) in &POWER_FACTOR {
        if capabilities(config, d).contains(&cap) {
            time.insert(d, ref_ms / perf_ratio(d));
            power.insert(d, ref_w * factor);
        }
    }
    (time, power)
}

pub mod fixtures {
    use super::*;

    /// The 16-task real-world workflow on configuration `C1`, `C2` or `C3`,
    /// with failure rates and link parameters at the midpoints of their
    /// ranges.
    pub fn real_world(config: &str) -> Result<InstanceFile, Error> {
        let config: Config = config.parse()?;
        let ranges = ParamRanges::default();
        let sys = system(
            config,
            |tier| mid(ranges.failure_range(tier)),
            |r| (mid(r.0), mid(r.1), mid(r.2)),
        );
        let tasks = REAL_TASKS
            .iter()
            .map(|&(id, cap, thr, ms, m, s, d, w)| {
                let (exec_time_ms, power_w) = profile(cap, config, ms, w);
                TaskFile {
                    id,
                    capabilities: vec![cap],
                    memory_mib: m,
                    storage_mib: s,
                    output_mib: d,
                    reliability_threshold: thr,
                    exec_time_ms,
                    power_w,
                }
            })
            .collect();
        Ok(InstanceFile {
            system: sys,
            workflow: WorkflowFile {
                tasks,
                arcs: REAL_ARCS.to_vec(),
                deadline_s: None,
                deadline_factor: 1.5,
            },
            weights: None,
        })
    }

    fn small_device(id: DeviceId, rates: &[f64], caps: &[u32]) -> DeviceFile {
        DeviceFile {
            id,
            cores: rates
                .iter()
                .map(|&r| CoreFile {
                    failure_rate_per_s: r,
                })
                .collect(),
            memory_gib: 1.0,
            storage_gib: 2.0,
            energy_wh: 1.0,
            capabilities: caps.to_vec(),
        }
    }

    fn link(from: DeviceId, to: DeviceId, r: LinkRange, bidirectional: bool) -> ChannelFile {
        ChannelFile {
            from,
            to,
            bandwidth_mbit_s: mid(r.0),
            tx_uj_per_bit: mid(r.1),
            rx_uj_per_bit: mid(r.2),
            bidirectional,
        }
    }

    fn small_task(
        id: u32,
        cap: u32,
        thr: f64,
        times: &[(DeviceId, f64)],
        output_mib: f64,
    ) -> TaskFile {
        TaskFile {
            id,
            capabilities: vec![cap],
            memory_mib: 64.0,
            storage_mib: 64.0,
            output_mib,
            reliability_threshold: thr,
            exec_time_ms: times.iter().copied().collect(),
            power_w: times.iter().map(|&(d, _)| (d, 2.0)).collect(),
        }
    }

    /// Four-task worked example: two edge devices offering the thermal camera
    /// (one single-core, one dual-core with a less reliable first core), a
    /// hub with a display and a cloud server with a GPU. Only task 1 placed
    /// on `e2.1` falls below its threshold.
    pub fn duplication_example() -> InstanceFile {
        let devices = vec![
            small_device(E1, &[6e-4], &[0, 1]),
            small_device(E2, &[8e-4, 6e-4], &[0, 1]),
            small_device(H1, &[5e-4, 5e-4], &[0, 7]),
            small_device(C1, &[3e-4, 3e-4], &[0, 8]),
        ];
        let channels = vec![
            link(E1, E2, EDGE_EDGE, true),
            link(E1, H1, EDGE_HUB, false),
            link(E2, H1, EDGE_HUB, false),
            link(H1, E1, HUB_EDGE, false),
            link(H1, E2, HUB_EDGE, false),
            link(H1, C1, HUB_CLOUD, false),
            link(C1, H1, CLOUD_HUB, false),
        ];
        let all = |ms: f64| -> Vec<(DeviceId, f64)> {
            [E1, E2, H1, C1].iter().map(|&d| (d, ms / perf_ratio(d))).collect()
        };
        let tasks = vec![
            small_task(1, 1, 0.99975, &[(E1, 400.0), (E2, 400.0 / 1.2)], 2.0),
            small_task(2, 0, 0.999, &all(500.0), 1.0),
            small_task(3, 8, 0.999, &[(C1, 3000.0 / 21.7)], 1.0),
            small_task(4, 7, 0.999, &[(H1, 300.0 / 15.23)], 0.4),
        ];
        InstanceFile {
            system: SystemFile { devices, channels },
            workflow: WorkflowFile {
                tasks,
                arcs: vec![[1, 2], [1, 3], [2, 4], [3, 4]],
                deadline_s: None,
                deadline_factor: 1.5,
            },
            weights: None,
        }
    }

    /// One task on one single-core device.
    pub fn single_task() -> InstanceFile {
        InstanceFile {
            system: SystemFile {
                devices: vec![small_device(E1, &[7e-4], &[0])],
                channels: vec![],
            },
            workflow: WorkflowFile {
                tasks: vec![small_task(1, 0, 0.999, &[(E1, 800.0)], 1.0)],
                arcs: vec![],
                deadline_s: None,
                deadline_factor: 1.5,
            },
            weights: None,
        }
    }

    /// Two-task chain pinned to `e1` then `h1`; both take 1 s and the
    /// transfer takes 0.5 s over an 8 Mbit/s link.
    pub fn chain_for_deadline() -> InstanceFile {
        let mut l = link(E1, H1, EDGE_HUB, true);
        l.bandwidth_mbit_s = 8.0;
        InstanceFile {
            system: SystemFile {
                devices: vec![small_device(E1, &[7e-4], &[0, 1]), small_device(H1, &[5e-4], &[0, 6])],
                channels: vec![l],
            },
            workflow: WorkflowFile {
                tasks: vec![
                    // 4e6 bits
                    small_task(1, 1, 0.999, &[(E1, 1000.0)], 0.476837158203125),
                    small_task(2, 6, 0.999, &[(H1, 1000.0)], 0.4),
                ],
                arcs: vec![[1, 2]],
                deadline_s: None,
                deadline_factor: 1.5,
            },
            weights: None,
        }
    }
}

/// Synthetic workflow generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub tasks: usize,
    /// Target mean in/out degree, i.e. arcs per task.
    pub degree: f64,
    pub seed: u64,
    pub config: Config,
    pub ranges: ParamRanges,
}

impl GenSpec {
    pub fn new(tasks: usize, seed: u64, config: Config) -> Self {
        GenSpec {
            tasks,
            degree: 1.45,
            seed,
            config,
            ranges: ParamRanges::default(),
        }
    }
}

const DEGREE_BAND: f64 = 0.25;
const SENSORS: [u32; 3] = [1, 2, 3];
const ACTUATORS: [u32; 3] = [5, 7, 9];
const INTERMEDIATE: [u32; 3] = [4, 6, 8];

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.gen_range(r.0..=r.1)
    }
}

/// Layered random DAG over tasks `1..=n`: every task outside the first layer
/// gets a parent in the previous layer, every task outside the last layer a
/// child in the next one, then random forward arcs are added until the arc
/// count reaches `round(degree * n)`.
fn layered_dag(n: usize, degree: f64, rng: &mut ChaCha8Rng) -> Result<Vec<[u32; 2]>, Error> {
    let target = (degree * n as f64).round() as usize;
    let max_arcs = n * n.saturating_sub(1) / 2;
    let lo = ((degree - DEGREE_BAND) * n as f64).ceil().max(0.0) as usize;
    let hi = ((degree + DEGREE_BAND) * n as f64).floor() as usize;
    if n < 2 || target > max_arcs || lo > hi || lo > max_arcs {
        return Err(Error::UnsatisfiableSpec(format!(
            "{n} tasks cannot reach mean degree {degree}"
        )));
    }
    for _attempt in 0..64 {
        let layers_n = ((n as f64).sqrt().round() as usize).clamp(2, n);
        // random layer widths, each at least one
        let mut widths = vec![1usize; layers_n];
        for _ in layers_n..n {
            let k = rng.gen_range(0..layers_n);
            widths[k] += 1;
        }
        let mut layers = Vec::new();
        let mut next = 1u32;
        for w in widths {
            layers.push((next..next + w as u32).collect::<Vec<u32>>());
            next += w as u32;
        }
        let mut arcs: BTreeSet<(u32, u32)> = BTreeSet::new();
        for k in 1..layers.len() {
            for &v in &layers[k] {
                let &u = layers[k - 1].choose(rng).unwrap();
                arcs.insert((u, v));
            }
        }
        for k in 0..layers.len() - 1 {
            for &u in &layers[k] {
                if !arcs.iter().any(|a| a.0 == u) {
                    let &v = layers[k + 1].choose(rng).unwrap();
                    arcs.insert((u, v));
                }
            }
        }
        let layer_of = |t: u32| layers.iter().position(|l| l.contains(&t)).unwrap();
        let mut candidates: Vec<(u32, u32)> = Vec::new();
        for u in 1..=n as u32 {
            for v in u + 1..=n as u32 {
                if layer_of(u) < layer_of(v) && !arcs.contains(&(u, v)) {
                    candidates.push((u, v));
                }
            }
        }
        candidates.shuffle(rng);
        while arcs.len() < target {
            match candidates.pop() {
                Some(a) => {
                    arcs.insert(a);
                }
                None => break,
            }
        }
        if (lo..=hi).contains(&arcs.len()) {
            return Ok(arcs.into_iter().map(|(a, b)| [a, b]).collect());
        }
    }
    Err(Error::UnsatisfiableSpec(format!(
        "no layered DAG with {n} tasks reached mean degree {degree}"
    )))
}

/// Generates a seeded synthetic instance on the six-device system.
pub fn generate(spec: &GenSpec) -> Result<InstanceFile, Error> {
    if spec.tasks == 0 || !(spec.degree > 0.0) {
        return Err(Error::UnsatisfiableSpec(format!("{spec:?}")));
    }
    let r = &spec.ranges;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arcs = layered_dag(spec.tasks, spec.degree, &mut rng)?;
    let mut rates = Vec::new();
    for &(id, _, _, _, cores) in &DEVICES {
        for _ in 0..cores {
            rates.push(uniform(&mut rng, r.failure_range(id.tier)));
        }
    }
    let mut links = Vec::new();
    for _ in 0..(6 + 8 + 2) {
        links.push(rng.gen::<[f64; 3]>());
    }
    let mut rate_it = rates.into_iter();
    let mut link_it = links.into_iter();
    let sys = system(
        spec.config,
        |_| rate_it.next().unwrap(),
        |l: LinkRange| {
            let u = link_it.next().unwrap();
            let lerp = |r: (f64, f64), x: f64| r.0 + (r.1 - r.0) * x;
            (lerp(l.0, u[0]), lerp(l.1, u[1]), lerp(l.2, u[2]))
        },
    );

    let has_parent: BTreeSet<u32> = arcs.iter().map(|a| a[1]).collect();
    let has_child: BTreeSet<u32> = arcs.iter().map(|a| a[0]).collect();
    let mut tasks = Vec::new();
    for id in 1..=spec.tasks as u32 {
        let cap = if !has_parent.contains(&id) {
            *SENSORS.choose(&mut rng).unwrap()
        } else if !has_child.contains(&id) {
            *ACTUATORS.choose(&mut rng).unwrap()
        } else if rng.gen_bool(0.5) {
            0
        } else {
            *INTERMEDIATE.choose(&mut rng).unwrap()
        };
        let ref_ms = uniform(&mut rng, r.exec_time_ms);
        let mut exec_time_ms = BTreeMap::new();
        let mut power_w = BTreeMap::new();
        for &(d, ratio) in &PERF_RATIO {
            let p = uniform(&mut rng, r.power_w);
            if capabilities(spec.config, d).contains(&cap) {
                exec_time_ms.insert(d, ref_ms / ratio);
                power_w.insert(d, p);
            }
        }
        tasks.push(TaskFile {
            id,
            capabilities: vec![cap],
            memory_mib: uniform(&mut rng, r.memory_mib),
            storage_mib: uniform(&mut rng, r.storage_mib),
            output_mib: uniform(&mut rng, r.output_mib),
            reliability_threshold: uniform(&mut rng, r.reliability_threshold),
            exec_time_ms,
            power_w,
        });
    }
    Ok(InstanceFile {
        system: sys,
        workflow: WorkflowFile {
            tasks,
            arcs,
            deadline_s: None,
            deadline_factor: 1.5,
        },
        weights: None,
    })
}

/// Just the workflow part of [`generate`].
pub fn generate_tg(spec: &GenSpec) -> Result<WorkflowFile, Error> {
    generate(spec).map(|f| f.workflow)
}

/// Small random instance for exhaustive cross-checks: 2 to 5 tasks on at
/// most three single-core devices, with budgets and deadlines drawn tight
/// enough that some instances are infeasible.
pub fn tiny_instance(seed: u64) -> InstanceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7157_11e5);
    loop {
        let file = tiny_attempt(&mut rng);
        let nodes = file
            .to_instance()
            .ok()
            .and_then(|i| crate::transform::transform(&i.workflow, &i.system).ok())
            .map(|e| e.nodes.len());
        if matches!(nodes, Some(n) if n <= 24) {
            return file;
        }
    }
}

fn tiny_attempt(rng: &mut ChaCha8Rng) -> InstanceFile {
    let layouts: [&[DeviceId]; 4] = [&[E1, H1], &[E1, E2], &[E1, E2, H1], &[E1, H1, C1]];
    let layout = layouts[rng.gen_range(0..layouts.len())];
    let devices: Vec<DeviceFile> = layout
        .iter()
        .map(|&id| {
            let mut caps = vec![0];
            if rng.gen_bool(0.5) {
                caps.push(1);
            }
            DeviceFile {
                id,
                cores: vec![CoreFile {
                    failure_rate_per_s: uniform(rng, (6e-4, 8e-3)),
                }],
                memory_gib: uniform(rng, (0.3, 1.0)),
                storage_gib: 1.0,
                energy_wh: uniform(rng, (0.002, 0.02)),
                capabilities: caps,
            }
        })
        .collect();
    let mut channels = Vec::new();
    for (a, x) in layout.iter().enumerate() {
        for y in &layout[a + 1..] {
            let relayed = (x.tier, y.tier) == (Tier::Edge, Tier::Cloud)
                || (x.tier, y.tier) == (Tier::Cloud, Tier::Edge);
            if relayed {
                continue;
            }
            channels.push(ChannelFile {
                from: *x,
                to: *y,
                bandwidth_mbit_s: uniform(rng, (6.0, 24.0)),
                tx_uj_per_bit: uniform(rng, (0.6, 2.0)),
                rx_uj_per_bit: uniform(rng, (0.4, 1.2)),
                bidirectional: true,
            });
        }
    }
    let n = rng.gen_range(2..=5u32);
    let mut arcs = Vec::new();
    for v in 2..=n {
        for u in 1..v {
            if rng.gen_bool(0.4) {
                arcs.push([u, v]);
            }
        }
    }
    let caps_offered: BTreeSet<u32> = devices.iter().flat_map(|d| d.capabilities.clone()).collect();
    let tasks = (1..=n)
        .map(|id| {
            let cap = if caps_offered.contains(&1) && rng.gen_bool(0.35) { 1 } else { 0 };
            let ref_ms = uniform(rng, (100.0, 3000.0));
            let mut exec_time_ms = BTreeMap::new();
            let mut power_w = BTreeMap::new();
            for d in &devices {
                if d.capabilities.contains(&cap) {
                    let speed = match d.id.tier {
                        Tier::Edge => uniform(rng, (1.0, 2.0)),
                        _ => uniform(rng, (2.0, 5.0)),
                    };
                    exec_time_ms.insert(d.id, ref_ms / speed);
                    power_w.insert(d.id, uniform(rng, (0.3, 6.0)));
                }
            }
            TaskFile {
                id,
                capabilities: vec![cap],
                memory_mib: uniform(rng, (50.0, 450.0)),
                storage_mib: uniform(rng, (30.0, 300.0)),
                output_mib: uniform(rng, (0.1, 2.0)),
                reliability_threshold: uniform(rng, (0.990, 0.9995)),
                exec_time_ms,
                power_w,
            }
        })
        .collect();
    InstanceFile {
        system: SystemFile { devices, channels },
        workflow: WorkflowFile {
            tasks,
            arcs,
            deadline_s: None,
            deadline_factor: uniform(rng, (0.5, 1.6)),
        },
        weights: None,
    }
}

/// All weight triples on the simplex grid with spacing `step`.
pub fn sweep_weights(step: f64) -> Result<Vec<ObjectiveWeights>, Error> {
    let m = (1.0 / step).round();
    if !(step > 0.0) || (m * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("step {step} does not divide 1")));
    }
    let m = m as u32;
    let mut out = Vec::new();
    for a in (0..=m).rev() {
        for b in (0..=m - a).rev() {
            let c = m - a - b;
            let f = |k: u32| k as f64 / m as f64;
            out.push(ObjectiveWeights {
                latency: f(a),
                energy: f(b),
                reliability: f(c),
            });
        }
    }
    Ok(out)
}
