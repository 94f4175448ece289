//! System and application model.
//!
//! All quantities are stored in canonical units: seconds, joules, bytes for
//! memory and storage, bits for transferred data, bits per second for
//! bandwidth and joules per bit for link energy. Conversion from the
//! human-facing units of instance files happens in [`crate::instance`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const BYTES_PER_MIB: f64 = 1_048_576.0;
pub const BYTES_PER_GIB: f64 = 1_073_741_824.0;
pub const BITS_PER_MIB: f64 = 8_388_608.0;
pub const JOULES_PER_WH: f64 = 3600.0;
pub const BITS_PER_MBIT: f64 = 1e6;
pub const JOULES_PER_UJ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Edge,
    Hub,
    Cloud,
}

impl Tier {
    pub fn letter(self) -> char {
        match self {
            Tier::Edge => 'e',
            Tier::Hub => 'h',
            Tier::Cloud => 'c',
        }
    }
}

/// A device identifier such as `e1` or `c1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId {
    pub tier: Tier,
    pub index: u32,
}

impl DeviceId {
    pub const fn new(tier: Tier, index: u32) -> Self {
        DeviceId { tier, index }
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.tier.letter(), self.index)
    }
}

impl FromStr for DeviceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Parse(format!("bad device id {s:?}"));
        let mut chars = s.chars();
        let tier = match chars.next() {
            Some('e') => Tier::Edge,
            Some('h') => Tier::Hub,
            Some('c') => Tier::Cloud,
            _ => return Err(bad()),
        };
        let index = chars.as_str().parse::<u32>().map_err(|_| bad())?;
        Ok(DeviceId { tier, index })
    }
}

impl Serialize for DeviceId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DeviceId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A reserved core, `e1.2` is the second core of device `e1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoreId {
    pub device: DeviceId,
    pub core: u32,
}

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.device, self.core)
    }
}

impl FromStr for CoreId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (d, q) = s
            .split_once('.')
            .ok_or_else(|| Error::Parse(format!("bad core id {s:?}")))?;
        let core = q
            .parse()
            .map_err(|_| Error::Parse(format!("bad core id {s:?}")))?;
        Ok(CoreId { device: d.parse()?, core })
    }
}

impl Serialize for CoreId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoreId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub id: CoreId,
    /// Transient failures per second.
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: DeviceId,
    pub cores: Vec<Core>,
    pub memory_budget: f64,
    pub storage_budget: f64,
    pub energy_budget: f64,
    pub capabilities: BTreeSet<u32>,
}

impl Device {
    pub fn has(&self, capability: u32) -> bool {
        self.capabilities.contains(&capability)
    }
}

/// A directed physical link.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub from: DeviceId,
    pub to: DeviceId,
    pub bandwidth: f64,
    pub tx_energy: f64,
    pub rx_energy: f64,
}

/// How data travels from one device to another: over one direct channel, or
/// over two channels relayed by an intermediate device.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub from: DeviceId,
    pub to: DeviceId,
    pub legs: Vec<Channel>,
}

impl Route {
    pub fn intermediate(&self) -> Option<DeviceId> {
        (self.legs.len() == 2).then(|| self.legs[0].to)
    }

    pub fn is_indirect(&self) -> bool {
        self.legs.len() == 2
    }

    /// Transfer time of `bits` along the route.
    pub fn latency(&self, bits: f64) -> f64 {
        self.legs.iter().map(|c| bits / c.bandwidth).sum()
    }

    /// Energy of moving `bits` along the route, summed over all devices.
    pub fn energy(&self, bits: f64) -> f64 {
        self.legs
            .iter()
            .map(|c| bits * (c.tx_energy + c.rx_energy))
            .sum()
    }

    /// Energy charged to each device involved: the sender pays the first
    /// transmission, the receiver the last reception, and a relay pays one
    /// reception plus one transmission.
    pub fn device_charges(&self, bits: f64) -> Vec<(DeviceId, f64)> {
        match self.legs.as_slice() {
            [c] => vec![(c.from, bits * c.tx_energy), (c.to, bits * c.rx_energy)],
            [a, b] => vec![
                (a.from, bits * a.tx_energy),
                (a.to, bits * (a.rx_energy + b.tx_energy)),
                (b.to, bits * b.rx_energy),
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: String,
    pub detail: String,
}

impl Violation {
    fn new(code: &str, detail: impl Into<String>) -> Self {
        Violation {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemModel {
    pub devices: Vec<Device>,
    pub channels: Vec<Channel>,
}

impl SystemModel {
    pub fn device(&self, id: DeviceId) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn cores(&self) -> impl Iterator<Item = &Core> {
        self.devices.iter().flat_map(|d| d.cores.iter())
    }

    pub fn core_count(&self) -> usize {
        self.devices.iter().map(|d| d.cores.len()).sum()
    }

    /// Capabilities offered by at least one device.
    pub fn capability_universe(&self) -> BTreeSet<u32> {
        self.devices
            .iter()
            .flat_map(|d| d.capabilities.iter().copied())
            .collect()
    }

    fn direct(&self, a: DeviceId, b: DeviceId) -> Option<&Channel> {
        self.channels.iter().find(|c| c.from == a && c.to == b)
    }

    /// Route for data sent from `a` to `b`. Pairs without a direct channel are
    /// relayed by the first hub (in device order) linked to both ends.
    pub fn route(&self, a: DeviceId, b: DeviceId) -> Result<Route, Error> {
        if a == b {
            return Err(Error::NoRoute(a.to_string(), b.to_string()));
        }
        if let Some(c) = self.direct(a, b) {
            return Ok(Route {
                from: a,
                to: b,
                legs: vec![c.clone()],
            });
        }
        for hub in self.devices.iter().filter(|d| d.id.tier == Tier::Hub) {
            if hub.id == a || hub.id == b {
                continue;
            }
            if let (Some(x), Some(y)) = (self.direct(a, hub.id), self.direct(hub.id, b)) {
                return Ok(Route {
                    from: a,
                    to: b,
                    legs: vec![x.clone(), y.clone()],
                });
            }
        }
        Err(Error::NoRoute(a.to_string(), b.to_string()))
    }

    /// Routes for every ordered pair of distinct devices.
    pub fn route_table(&self) -> Result<BTreeMap<(DeviceId, DeviceId), Route>, Error> {
        let mut out = BTreeMap::new();
        for a in &self.devices {
            for b in &self.devices {
                if a.id != b.id {
                    out.insert((a.id, b.id), self.route(a.id, b.id)?);
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        if self.devices.is_empty() {
            out.push(Violation::new("no-devices", "system has no devices"));
        }
        for d in &self.devices {
            if !seen.insert(d.id) {
                out.push(Violation::new("duplicate-device", d.id.to_string()));
            }
            if !d.has(0) {
                out.push(Violation::new("missing-basic-capability", d.id.to_string()));
            }
            if d.cores.is_empty() {
                out.push(Violation::new("no-cores", d.id.to_string()));
            }
            for (q, c) in d.cores.iter().enumerate() {
                if c.id.device != d.id || c.id.core as usize != q + 1 {
                    out.push(Violation::new("bad-core-id", c.id.to_string()));
                }
                if !(c.failure_rate >= 0.0 && c.failure_rate.is_finite()) {
                    out.push(Violation::new("bad-failure-rate", c.id.to_string()));
                }
            }
            for (what, v) in [
                ("memory", d.memory_budget),
                ("storage", d.storage_budget),
                ("energy", d.energy_budget),
            ] {
                if !(v >= 0.0) {
                    out.push(Violation::new("negative-budget", format!("{} {what}", d.id)));
                }
            }
        }
        let mut pairs = BTreeSet::new();
        for c in &self.channels {
            let tag = format!("{}->{}", c.from, c.to);
            if !(c.bandwidth > 0.0) {
                out.push(Violation::new("nonpositive-bandwidth", &tag));
            }
            if !(c.tx_energy >= 0.0 && c.rx_energy >= 0.0) {
                out.push(Violation::new("negative-link-energy", &tag));
            }
            if c.from == c.to {
                out.push(Violation::new("self-channel", &tag));
            }
            if self.device(c.from).is_none() || self.device(c.to).is_none() {
                out.push(Violation::new("unknown-channel-endpoint", &tag));
            }
            if !pairs.insert((c.from, c.to)) {
                out.push(Violation::new("duplicate-channel", &tag));
            }
        }
        for a in &self.devices {
            for b in &self.devices {
                if a.id != b.id && self.route(a.id, b.id).is_err() {
                    out.push(Violation::new("no-route", format!("{}->{}", a.id, b.id)));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u32,
    pub memory: f64,
    pub storage: f64,
    /// Size of the output sent to every child, in bits.
    pub output_data: f64,
    /// Required capabilities. A valid task has exactly one.
    pub capabilities: Vec<u32>,
    pub reliability_threshold: f64,
    /// Execution time in seconds on each device (identical on all its cores).
    pub exec_time: BTreeMap<DeviceId, f64>,
    /// Execution power in watts on each device.
    pub exec_power: BTreeMap<DeviceId, f64>,
}

impl Task {
    pub fn capability(&self) -> u32 {
        self.capabilities.first().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
    pub arcs: Vec<(u32, u32)>,
    /// Deadline in seconds; derived from the critical path when absent.
    pub deadline: Option<f64>,
}

impl TaskGraph {
    pub fn task(&self, id: u32) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn children(&self, id: u32) -> Vec<u32> {
        self.arcs.iter().filter(|a| a.0 == id).map(|a| a.1).collect()
    }

    pub fn parents(&self, id: u32) -> Vec<u32> {
        self.arcs.iter().filter(|a| a.1 == id).map(|a| a.0).collect()
    }

    pub fn is_exit(&self, id: u32) -> bool {
        !self.arcs.iter().any(|a| a.0 == id)
    }

    pub fn is_entry(&self, id: u32) -> bool {
        !self.arcs.iter().any(|a| a.1 == id)
    }

    /// Task ids in a topological order (Kahn, smallest id first). `None` if
    /// the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<u32>> {
        let mut indeg: BTreeMap<u32, usize> = self.tasks.iter().map(|t| (t.id, 0)).collect();
        for &(_, b) in &self.arcs {
            *indeg.get_mut(&b)? += 1;
        }
        let mut ready: BTreeSet<u32> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut out = Vec::with_capacity(self.tasks.len());
        while let Some(&u) = ready.iter().next() {
            ready.remove(&u);
            out.push(u);
            for &(a, b) in &self.arcs {
                if a == u {
                    let d = indeg.get_mut(&b)?;
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(b);
                    }
                }
            }
        }
        (out.len() == self.tasks.len()).then_some(out)
    }

    /// `reach[(a, b)]` holds when a directed path leads from task a to task b.
    pub fn reachability(&self) -> BTreeSet<(u32, u32)> {
        let mut reach = BTreeSet::new();
        let Some(order) = self.topo_order() else {
            return reach;
        };
        let mut desc: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for &u in order.iter().rev() {
            let mut set = BTreeSet::new();
            for c in self.children(u) {
                set.insert(c);
                if let Some(d) = desc.get(&c) {
                    set.extend(d.iter().copied());
                }
            }
            desc.insert(u, set);
        }
        for (u, set) in desc {
            for v in set {
                reach.insert((u, v));
            }
        }
        reach
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.tasks.is_empty() {
            out.push(Violation::new("empty-workflow", "no tasks"));
        }
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            let tag = format!("task {}", t.id);
            if !ids.insert(t.id) {
                out.push(Violation::new("duplicate-task", &tag));
            }
            match t.capabilities.len() {
                1 => {}
                0 => out.push(Violation::new("missing-capability", &tag)),
                _ => out.push(Violation::new("multi-capability-task", &tag)),
            }
            if !(t.reliability_threshold > 0.0 && t.reliability_threshold < 1.0) {
                out.push(Violation::new("bad-reliability-threshold", &tag));
            }
            if !(t.memory >= 0.0 && t.storage >= 0.0 && t.output_data >= 0.0) {
                out.push(Violation::new("negative-requirement", &tag));
            }
            if t.exec_time.values().any(|&l| !(l > 0.0 && l.is_finite())) {
                out.push(Violation::new("nonpositive-exec-time", &tag));
            }
            if t.exec_power.values().any(|&p| !(p >= 0.0 && p.is_finite())) {
                out.push(Violation::new("negative-power", &tag));
            }
        }
        let mut arcs = BTreeSet::new();
        for &(a, b) in &self.arcs {
            let tag = format!("{a}->{b}");
            if !ids.contains(&a) || !ids.contains(&b) {
                out.push(Violation::new("unknown-arc-endpoint", &tag));
            }
            if a == b {
                out.push(Violation::new("self-loop", &tag));
            }
            if !arcs.insert((a, b)) {
                out.push(Violation::new("duplicate-arc", &tag));
            }
        }
        if out.iter().all(|v| v.code != "unknown-arc-endpoint") && self.topo_order().is_none() {
            out.push(Violation::new("cycle", "workflow is not acyclic"));
        }
        if let Some(d) = self.deadline {
            if !(d > 0.0) {
                out.push(Violation::new("nonpositive-deadline", format!("{d}")));
            }
        }
        out
    }

    /// Checks that every task has timing and power data on each device that
    /// offers its capability, and that at least one such device exists.
    pub fn validate_against(&self, sys: &SystemModel) -> Vec<Violation> {
        let mut out = Vec::new();
        for t in &self.tasks {
            let cap = t.capability();
            let hosts: Vec<&Device> = sys.devices.iter().filter(|d| d.has(cap)).collect();
            if hosts.is_empty() {
                out.push(Violation::new("unallocatable-task", format!("task {}", t.id)));
            }
            for d in hosts {
                if !t.exec_time.contains_key(&d.id) || !t.exec_power.contains_key(&d.id) {
                    out.push(Violation::new(
                        "missing-profile",
                        format!("task {} on {}", t.id, d.id),
                    ));
                }
            }
        }
        out
    }
}

/// Weights of the scalarized objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub latency: f64,
    pub energy: f64,
    pub reliability: f64,
}

impl ObjectiveWeights {
    pub fn new(latency: f64, energy: f64, reliability: f64) -> Result<Self, Error> {
        let w = ObjectiveWeights {
            latency,
            energy,
            reliability,
        };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<(), Error> {
        let all = [self.latency, self.energy, self.reliability];
        if all.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidWeights(format!("{all:?} outside [0,1]")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("{all:?} do not sum to 1")));
        }
        Ok(())
    }

    pub fn equal() -> Self {
        ObjectiveWeights {
            latency: 1.0 / 3.0,
            energy: 1.0 / 3.0,
            reliability: 1.0 / 3.0,
        }
    }
}

impl fmt::Display for ObjectiveWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4},{:.4},{:.4}", self.latency, self.energy, self.reliability)
    }
}

impl FromStr for ObjectiveWeights {
    type Err = Error;

    /// Parses `a,b,c`; each part may be a decimal or a fraction like `1/3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |p: &str| -> Result<f64, Error> {
            let p = p.trim();
            let bad = || Error::InvalidWeights(format!("cannot parse {p:?}"));
            match p.split_once('/') {
                Some((n, d)) => {
                    let n: f64 = n.trim().parse().map_err(|_| bad())?;
                    let d: f64 = d.trim().parse().map_err(|_| bad())?;
                    Ok(n / d)
                }
                None => p.parse().map_err(|_| bad()),
            }
        };
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidWeights(format!("expected three weights in {s:?}")));
        }
        ObjectiveWeights::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
    }
}
