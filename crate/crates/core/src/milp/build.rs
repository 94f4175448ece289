//! Model construction from an allocation graph.

use std::collections::{BTreeMap, HashMap};

use crate::error::Error;
use crate::objective::Problem;
use crate::schedule::Schedule;
use crate::transform::{Etag, NodeKey};

use super::{Constraint, MilpModel, ModelMeta, Sense, Var, VarKind};

/// Variable naming. Every name is a valid LP identifier and can be parsed
/// back into the entity it stands for.
pub mod names {
    use crate::transform::NodeKey;

    /// A task copy `(task, copy)`.
    pub type CopyId = (u32, u8);

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum VarRef {
        /// x: node selected.
        Node(NodeKey),
        /// y: both ends of an arc selected.
        Arc(NodeKey, NodeKey),
        /// t: start of a task copy.
        Start(CopyId),
        /// T: makespan.
        Makespan,
        /// z: primary and replica both selected.
        Pair(NodeKey, NodeKey),
        /// o: first copy runs before the second.
        Order(CopyId, CopyId),
        /// h: node active when the event copy starts.
        Active(CopyId, NodeKey),
        /// b: node starts after the event copy starts.
        After(CopyId, NodeKey),
    }

    pub const MAKESPAN: &str = "T";

    fn node_part(k: &NodeKey) -> String {
        format!("{}_{}_{}_{}", k.task, k.copy, k.core.device, k.core.core)
    }

    fn copy_part(c: CopyId) -> String {
        format!("{}_{}", c.0, c.1)
    }

    pub fn node(k: &NodeKey) -> String {
        format!("x_{}", node_part(k))
    }

    pub fn arc(u: &NodeKey, v: &NodeKey) -> String {
        format!("y_{}__{}", node_part(u), node_part(v))
    }

    pub fn start(c: CopyId) -> String {
        format!("t_{}", copy_part(c))
    }

    pub fn pair(p: &NodeKey, r: &NodeKey) -> String {
        format!("z_{}__{}", node_part(p), node_part(r))
    }

    pub fn order(a: CopyId, b: CopyId) -> String {
        format!("o_{}__{}", copy_part(a), copy_part(b))
    }

    pub fn active(e: CopyId, k: &NodeKey) -> String {
        format!("h_{}__{}", copy_part(e), node_part(k))
    }

    pub fn after(e: CopyId, k: &NodeKey) -> String {
        format!("b_{}__{}", copy_part(e), node_part(k))
    }

    fn parse_copy(s: &str) -> Option<CopyId> {
        let (t, c) = s.split_once('_')?;
        Some((t.parse().ok()?, c.parse().ok()?))
    }

    fn parse_node(s: &str) -> Option<NodeKey> {
        let mut it = s.split('_');
        let (t, c, d, q) = (it.next()?, it.next()?, it.next()?, it.next()?);
        if it.next().is_some() {
            return None;
        }
        format!("{t}.{c}@{d}.{q}").parse().ok()
    }

    pub fn parse(name: &str) -> Option<VarRef> {
        if name == MAKESPAN {
            return Some(VarRef::Makespan);
        }
        let (kind, rest) = name.split_once('_')?;
        let two = || rest.split_once("__");
        Some(match kind {
            "x" => VarRef::Node(parse_node(rest)?),
            "t" => VarRef::Start(parse_copy(rest)?),
            "y" => {
                let (a, b) = two()?;
                VarRef::Arc(parse_node(a)?, parse_node(b)?)
            }
            "z" => {
                let (a, b) = two()?;
                VarRef::Pair(parse_node(a)?, parse_node(b)?)
            }
            "o" => {
                let (a, b) = two()?;
                VarRef::Order(parse_copy(a)?, parse_copy(b)?)
            }
            "h" => {
                let (a, b) = two()?;
                VarRef::Active(parse_copy(a)?, parse_node(b)?)
            }
            "b" => {
                let (a, b) = two()?;
                VarRef::After(parse_copy(a)?, parse_node(b)?)
            }
            _ => return None,
        })
    }
}

use names::CopyId;

/// Big-M for the reliability threshold rows; pair reliabilities lie in [0, 1].
const OMEGA_REL: f64 = 2.0;
/// Strict-inequality tolerance as a fraction of the shortest positive duration.
const OMEGA_FRACTION: f64 = 1e-4;

struct Builder {
    vars: Vec<Var>,
    constraints: Vec<Constraint>,
    counters: BTreeMap<char, usize>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) -> usize {
        self.vars.push(Var { name, kind, lb, ub });
        self.vars.len() - 1
    }

    fn bin(&mut self, name: String) -> usize {
        self.var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds a row after merging repeated variables and dropping zero terms.
    fn row(&mut self, family: char, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(i, c) in terms {
            match merged.iter_mut().find(|(j, _)| *j == i) {
                Some((_, acc)) => *acc += c,
                None => merged.push((i, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        if merged.is_empty() {
            let ok = match sense {
                Sense::Le => 0.0 <= rhs,
                Sense::Ge => 0.0 >= rhs,
                Sense::Eq => rhs == 0.0,
            };
            if !ok {
                log::warn!("dropping empty {family} row that can never hold (rhs {rhs})");
            }
            return;
        }
        let n =self.counters.entry(family).or_insert(0);
        *n += 1;
        self.constraints.push(Constraint {
            name: format!("{family}_{n}"),
            family,
            terms: merged,
            sense,
            rhs,
        });
    }
}

/// Builds the continuous-time model of `problem`. Its objective, including
/// the constant offset, equals the normalized weighted objective `g` of the
/// schedule encoded by any feasible assignment.
pub fn build_model(problem: &Problem) -> MilpModel {
    let etag = &problem.etag;
    let deadline = problem.deadline;
    let max_l = etag.nodes.iter().map(|n| n.exec_time).fold(0.0, f64::max);
    let max_cl = etag.arcs.iter().map(|a| a.comm_latency).fold(0.0, f64::max);
    let min_positive = etag
        .nodes
        .iter()
        .map(|n| n.exec_time)
        .chain(etag.arcs.iter().map(|a| a.comm_latency))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let omega_t = 1.05 * (deadline + max_l + max_cl);
    let omega = if min_positive.is_finite() {
        OMEGA_FRACTION * min_positive
    } else {
        0.0
    };

    let mut b = Builder {
        vars: Vec::new(),
        constraints: Vec::new(),
        counters: BTreeMap::new(),
    };

    // variables
    let x: Vec<usize> = etag.nodes.iter().map(|n| b.bin(names::node(&n.key))).collect();
    let y: Vec<usize> = etag
        .arcs
        .iter()
        .map(|a| b.bin(names::arc(&etag.nodes[a.src].key, &etag.nodes[a.dst].key)))
        .collect();
    let copies = etag.copies();
    let mut t: HashMap<CopyId, usize> = HashMap::new();
    for &c in &copies {
        let i = b.var(names::start(c), VarKind::Continuous, 0.0, deadline);
        t.insert(c, i);
    }
    let big_t = b.var(names::MAKESPAN.into(), VarKind::Continuous, 0.0, deadline);

    let mut z = Vec::new();
    for task in &etag.tasks {
        for &p in &task.primaries {
            if !etag.nodes[p].needs_dup {
                continue;
            }
            for &r in &task.replicas {
                let v = b.bin(names::pair(&etag.nodes[p].key, &etag.nodes[r].key));
                z.push((p, r, v));
            }
        }
    }

    // copy pairs that may share a core, with the shared cores
    let mut order = Vec::new();
    for (ai, &ca) in copies.iter().enumerate() {
        for &cb in &copies[ai + 1..] {
            if ca.0 != cb.0 && (etag.precedes(ca.0, cb.0) || etag.precedes(cb.0, ca.0)) {
                continue;
            }
            let na = etag.task(ca.0).candidates(ca.1);
            let nb = etag.task(cb.0).candidates(cb.1);
            let shared: Vec<(usize, usize)> = na
                .iter()
                .filter_map(|&u| {
                    nb.iter()
                        .find(|&&v| etag.nodes[v].key.core == etag.nodes[u].key.core)
                        .map(|&v| (u, v))
                })
                .collect();
            if shared.is_empty() {
                continue;
            }
            let o = b.bin(names::order(ca, cb));
            order.push((ca, cb, o, shared));
        }
    }

    let mut hb: HashMap<(CopyId, usize), (usize, usize)> = HashMap::new();
    for &e in &copies {
        for (n, node) in etag.nodes.iter().enumerate() {
            let h = b.bin(names::active(e, &node.key));
            let a = b.bin(names::after(e, &node.key));
            hb.insert((e, n), (h, a));
        }
    }

    // (a) one primary per task
    for task in &etag.tasks {
        let terms: Vec<_> = task.primaries.iter().map(|&n| (x[n], 1.0)).collect();
        b.row('a', &terms, Sense::Eq, 1.0);
    }

    // (b) arc selection linking
    for (k, a) in etag.arcs.iter().enumerate() {
        b.row('b', &[(y[k], 1.0), (x[a.src], -1.0)], Sense::Le, 0.0);
        b.row('b', &[(y[k], 1.0), (x[a.dst], -1.0)], Sense::Le, 0.0);
        b.row('b', &[(y[k], 1.0), (x[a.src], -1.0), (x[a.dst], -1.0)], Sense::Ge, -1.0);
    }

    // (c) a replica exactly when the chosen primary needs one
    for task in etag.tasks.iter().filter(|t| !t.replicas.is_empty()) {
        let mut terms: Vec<_> = task
            .primaries
            .iter()
            .filter(|&&n| etag.nodes[n].needs_dup)
            .map(|&n| (x[n], 1.0))
            .collect();
        terms.extend(task.replicas.iter().map(|&n| (x[n], -1.0)));
        b.row('c', &terms, Sense::Eq, 0.0);
    }

    // (d) exit task replicas stay on the primary's device
    for task in etag.tasks.iter().filter(|t| t.exit && !t.replicas.is_empty()) {
        for &p in task.primaries.iter().filter(|&&n| etag.nodes[n].needs_dup) {
            let dev = etag.nodes[p].key.device();
            let mut terms = vec![(x[p], 1.0)];
            terms.extend(
                task.replicas
                    .iter()
                    .filter(|&&r| etag.nodes[r].key.device() == dev)
                    .map(|&r| (x[r], -1.0)),
            );
            b.row('d', &terms, Sense::Le, 0.0);
        }
    }

    // (e) pair reliability threshold
    for &(p, r, v) in &z {
        let thr = etag.node_task(p).reliability_threshold;
        let rel = etag.pair_reliability(p, r);
        b.row('e', &[(v, 1.0), (x[p], -1.0)], Sense::Le, 0.0);
        b.row('e', &[(v, 1.0), (x[r], -1.0)], Sense::Le, 0.0);
        b.row('e', &[(v, 1.0), (x[p], -1.0), (x[r], -1.0)], Sense::Ge, -1.0);
        b.row('e', &[(v, rel - OMEGA_REL)], Sense::Ge, thr - OMEGA_REL);
    }

    // (f) precedence with transfer time
    for (k, a) in etag.arcs.iter().enumerate() {
        let (u, v) = (&etag.nodes[a.src], &etag.nodes[a.dst]);
        let tu = t[&(u.key.task, u.key.copy)];
        let tv = t[&(v.key.task, v.key.copy)];
        b.row(
            'f',
            &[(tu, 1.0), (tv, -1.0), (x[a.src], u.exec_time), (y[k], a.comm_latency)],
            Sense::Le,
            0.0,
        );
    }

    // (g) makespan and deadline
    for (n, node) in etag.nodes.iter().enumerate() {
        let tc = t[&(node.key.task, node.key.copy)];
        b.row('g', &[(tc, 1.0), (x[n], node.exec_time), (big_t, -1.0)], Sense::Le, 0.0);
    }
    b.row('g', &[(big_t, 1.0)], Sense::Le, deadline);

    // (h) no overlap on a shared core
    for (ca, cb, o, shared) in &order {
        let (ta, tb) = (t[ca], t[cb]);
        for &(u, v) in shared {
            let (lu, lv) = (etag.nodes[u].exec_time, etag.nodes[v].exec_time);
            b.row(
                'h',
                &[(ta, 1.0), (tb, -1.0), (x[u], lu + omega_t), (x[v], omega_t), (*o, omega_t)],
                Sense::Le,
                3.0 * omega_t,
            );
            b.row(
                'h',
                &[(tb, 1.0), (ta, -1.0), (x[u], omega_t), (x[v], lv + omega_t), (*o, -omega_t)],
                Sense::Le,
                2.0 * omega_t,
            );
        }
    }

    // (i) which nodes are active when each copy starts
    for &e in &copies {
        let s = t[&e];
        for (n, node) in etag.nodes.iter().enumerate() {
            let tn = t[&(node.key.task, node.key.copy)];
            let (h, a) = hb[&(e, n)];
            let l = node.exec_time;
            let w = omega_t;
            b.row('i', &[(h, 1.0), (x[n], -1.0)], Sense::Le, 0.0);
            b.row('i', &[(tn, 1.0), (s, -1.0), (x[n], w), (h, w)], Sense::Le, 2.0 * w);
            b.row('i', &[(s, 1.0), (tn, -1.0), (x[n], w - l), (h, w)], Sense::Le, 2.0 * w - omega);
            b.row('i', &[(s, 1.0), (tn, -1.0), (x[n], w), (h, -w), (a, w)], Sense::Le, 2.0 * w - omega);
            b.row('i', &[(tn, 1.0), (s, -1.0), (x[n], l + w), (h, -w), (a, -w)], Sense::Le, w);
        }
    }

    // (j) one user per specialized capability and device at each event
    // (k) memory and storage at each event
    for &e in &copies {
        for d in &etag.system.devices {
            let on: Vec<usize> = (0..etag.nodes.len())
                .filter(|&n| etag.nodes[n].key.device() == d.id)
                .collect();
            if on.is_empty() {
                continue;
            }
            let mut by_cap: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &n in &on {
                let cap = etag.node_task(n).capability;
                if cap > 0 {
                    by_cap.entry(cap).or_default().push(n);
                }
            }
            for nodes in by_cap.values().filter(|v| v.len() >= 2) {
                let terms: Vec<_> = nodes.iter().map(|&n| (hb[&(e, n)].0, 1.0)).collect();
                b.row('j', &terms, Sense::Le, 1.0);
            }
            let mem: Vec<_> = on
                .iter()
                .map(|&n| (hb[&(e, n)].0, etag.node_task(n).memory))
                .collect();
            b.row('k', &mem, Sense::Le, d.memory_budget);
            let sto: Vec<_> = on
                .iter()
                .map(|&n| (hb[&(e, n)].0, etag.node_task(n).storage))
                .collect();
            b.row('k', &sto, Sense::Le, d.storage_budget);
        }
    }

    // (l) device energy budget
    for d in &etag.system.devices {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (n, node) in etag.nodes.iter().enumerate() {
            if node.key.device() == d.id {
                terms.push((x[n], node.energy));
            }
        }
        for (k, a) in etag.arcs.iter().enumerate() {
            for &(dev, ce) in &a.charges {
                if dev == d.id {
                    terms.push((y[k], ce));
                }
            }
        }
        if !terms.is_empty() {
            b.row('l', &terms, Sense::Le, d.energy_budget);
        }
    }

    // objective: normalized weighted sum, shifted so it equals g
    let w = problem.weights;
    let bn = &problem.bounds;
    let (sl, se, sr) = (bn.latency.scale(), bn.energy.scale(), bn.reliability.scale());
    let mut obj: Vec<(usize, f64)> = Vec::new();
    obj.push((big_t, w.latency * sl));
    for (n, node) in etag.nodes.iter().enumerate() {
        let mut c = w.energy * se * node.energy;
        if node.key.copy == 1 && !node.needs_dup {
            c -= w.reliability * sr * node.reliability.ln();
        }
        obj.push((x[n], c));
    }
    for (k, a) in etag.arcs.iter().enumerate() {
        obj.push((y[k], w.energy * se * a.comm_energy));
    }
    for &(p, r, v) in &z {
        obj.push((v, -w.reliability * sr * etag.pair_reliability(p, r).ln()));
    }
    obj.retain(|&(_, c)| c != 0.0);
    let offset = -w.latency * sl * bn.latency.min - w.energy * se * bn.energy.min
        + w.reliability * sr * bn.reliability.min;

    MilpModel {
        vars: b.vars,
        constraints: b.constraints,
        objective: obj,
        objective_offset: offset,
        meta: ModelMeta {
            omega_time: omega_t,
            omega_rel: OMEGA_REL,
            omega,
            deadline,
            events: copies.iter().map(|&c| names::start(c)).collect(),
            bounds: Some(problem.bounds),
        },
    }
}

/// Encodes a schedule as a full assignment of `model`'s variables (for
/// example to seed the solver or to check the model against the validator).
/// Copies absent from the schedule start with their task's primary.
pub fn assignment_from_schedule(model: &MilpModel, etag: &Etag, s: &Schedule) -> Result<Vec<f64>, Error> {
    use names::VarRef;

    let placed: HashMap<NodeKey, f64> = s.placements.iter().map(|p| (p.node, p.start)).collect();
    let mut starts: HashMap<CopyId, f64> = HashMap::new();
    let mut finish = 0.0f64;
    for p in &s.placements {
        let n = etag
            .node_index(&p.node)
            .ok_or_else(|| Error::Parse(format!("unknown node {}", p.node)))?;
        starts.insert((p.node.task, p.node.copy), p.start);
        finish = finish.max(p.start + etag.nodes[n].exec_time);
    }
    let start_of = |c: CopyId| -> f64 {
        starts
            .get(&c)
            .or_else(|| starts.get(&(c.0, 1)))
            .copied()
            .unwrap_or(0.0)
    };
    let is_on = |k: &NodeKey| placed.contains_key(k);
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    let active = |e: CopyId, k: &NodeKey| -> (bool, bool) {
        let Some(&tn) = placed.get(k) else {
            return (false, false);
        };
        let l = etag.node_index(k).map_or(0.0, |n| etag.nodes[n].exec_time);
        let se = start_of(e);
        let h = tn <= se && se < tn + l;
        (h, !h && se < tn)
    };

    let mut out = Vec::with_capacity(model.vars.len());
    for v in &model.vars {
        let r = names::parse(&v.name).ok_or_else(|| Error::Parse(format!("unrecognized variable {}", v.name)))?;
        out.push(match r {
            VarRef::Node(k) => bit(is_on(&k)),
            VarRef::Arc(u, w) | VarRef::Pair(u, w) => bit(is_on(&u) && is_on(&w)),
            VarRef::Start(c) => start_of(c),
            VarRef::Makespan => finish,
            VarRef::Order(a, c) => bit(start_of(a) <= start_of(c)),
            VarRef::Active(e, k) => bit(active(e, &k).0),
            VarRef::After(e, k) => bit(active(e, &k).1),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::names::VarRef;
    use super::*;
    use crate::objective::Problem;
    use crate::schedule::Placement;
    use crate::workload::fixtures;

    fn duplication() -> Problem {
        Problem::from_instance(&fixtures::duplication_example().to_instance().unwrap()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        let k: NodeKey = "12.2@h1.3".parse().unwrap();
        let j: NodeKey = "4.1@c1.1".parse().unwrap();
        assert_eq!(names::parse(&names::node(&k)), Some(VarRef::Node(k)));
        assert_eq!(names::parse(&names::arc(&k, &j)), Some(VarRef::Arc(k, j)));
        assert_eq!(names::parse(&names::pair(&j, &k)), Some(VarRef::Pair(j, k)));
        assert_eq!(names::parse(&names::start((3, 2))), Some(VarRef::Start((3, 2))));
        assert_eq!(names::parse(&names::order((1, 1), (1, 2))), Some(VarRef::Order((1, 1), (1, 2))));
        assert_eq!(names::parse(&names::active((5, 1), &k)), Some(VarRef::Active((5, 1), k)));
        assert_eq!(names::parse(&names::after((5, 1), &k)), Some(VarRef::After((5, 1), k)));
        assert_eq!(names::parse("T"), Some(VarRef::Makespan));
        assert_eq!(names::parse("q_1"), None);
    }

    #[test]
    fn counts_match_structure() {
        let p = duplication();
        let m = build_model(&p);
        let e = &p.etag;
        let fam = m.family_counts();
        assert_eq!(fam[&'a'], e.tasks.len());
        assert_eq!(fam[&'b'], 3 * e.arcs.len());
        assert_eq!(fam[&'f'], e.arcs.len());
        assert_eq!(fam[&'g'], e.nodes.len() + 1);
        assert_eq!(fam[&'i'], 5 * e.nodes.len() * e.copies().len());
        let names: std::collections::HashSet<_> = m.vars.iter().map(|v| &v.name).collect();
        assert_eq!(names.len(), m.vars.len());
        for c in &m.constraints {
            assert!(c.name.starts_with(c.family));
            let mut idx: Vec<_> = c.terms.iter().map(|t| t.0).collect();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), c.terms.len(), "{}", c.name);
        }
    }

    #[test]
    fn chain_schedule_is_feasible_and_scores_g() {
        let p = Problem::from_instance(&fixtures::chain_for_deadline().to_instance().unwrap()).unwrap();
        let m = build_model(&p);
        let s = Schedule::new(
            vec![
                Placement {
                    node: "1.1@e1.1".parse().unwrap(),
                    start: 0.0,
                },
                Placement {
                    node: "2.1@h1.1".parse().unwrap(),
                    start: 1.5,
                },
            ],
            &p,
        )
        .unwrap();
        let v = assignment_from_schedule(&m, &p.etag, &s).unwrap();
        assert!(m.violated(&v, 1e-9).is_empty(), "{:?}", m.violated(&v, 1e-9));
        assert!((m.evaluate(&v) - s.objectives.g).abs() < 1e-9);
        // starting the child before the transfer completes breaks precedence
        let mut bad = s.clone();
        bad.placements[1].start = 1.2;
        let v = assignment_from_schedule(&m, &p.etag, &bad).unwrap();
        assert!(m.violated(&v, 1e-9).iter().any(|(n, _)| n.starts_with("f_")));
    }
}
