//! Independent schedule checker and objective evaluator.
//!
//! Every check is plain arithmetic on the placements: transfer costs come
//! from the system's routes, not from the MILP or the allocation graph's
//! arcs. Intervals are half-open, so a copy may start exactly when another
//! one on the same core finishes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::DeviceId;
use crate::objective::{Objectives, Problem};
use crate::schedule::Schedule;
use crate::transform::{duplication_reliability, Etag, NodeKey};

/// Absolute tolerance for time, energy, memory and storage checks.
pub const TOL: f64 = 1e-6;
/// Tolerance for reliability thresholds; probabilities near 0.9999 differ
/// in the sixth decimal, so the general tolerance would be too loose.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleViolation {
    /// Constraint family, `a` to `m`.
    pub family: char,
    pub entities: Vec<String>,
    pub measured: f64,
    pub bound: f64,
    /// `bound - measured` for upper bounds, negative when violated.
    pub slack: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<ScheduleViolation>,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn families(&self) -> BTreeSet<char> {
        self.violations.iter().map(|v| v.family).collect()
    }

    fn push(&mut self, family: char, entities: Vec<String>, measured: f64, bound: f64) {
        self.violations.push(ScheduleViolation {
            family,
            entities,
            measured,
            bound,
            slack: bound - measured,
        });
    }
}

struct Placed {
    key: NodeKey,
    node: usize,
    start: f64,
    len: f64,
}

impl Placed {
    fn finish(&self) -> f64 {
        self.start + self.len
    }

    fn active_at(&self, s: f64) -> bool {
        self.start - TOL <= s && s < self.finish() - TOL
    }
}

fn resolve(s: &Schedule, etag: &Etag, report: &mut ViolationReport) -> Vec<Placed> {
    let mut out = Vec::new();
    for p in &s.placements {
        match etag.node_index(&p.node) {
            Some(n) => out.push(Placed {
                key: p.node,
                node: n,
                start: p.start,
                len: etag.nodes[n].exec_time,
            }),
            None => report.push('a', vec![p.node.to_string()], 1.0, 0.0),
        }
    }
    out
}

fn transfer(etag: &Etag, bits: f64, a: DeviceId, b: DeviceId) -> (f64, f64, Vec<(DeviceId, f64)>) {
    if a == b {
        return (0.0, 0.0, Vec::new());
    }
    match etag.system.route(a, b) {
        Ok(r) => (r.latency(bits), r.energy(bits), r.device_charges(bits)),
        Err(_) => (f64::INFINITY, f64::INFINITY, Vec::new()),
    }
}

/// Checks every constraint family against `s`. An empty report means the
/// schedule is feasible.
pub fn check_schedule(s: &Schedule, etag: &Etag, deadline: f64) -> ViolationReport {
    let mut report = ViolationReport::default();
    let placed = resolve(s, etag, &mut report);

    // selection and reliability: families a, c, d, e
    let mut by_copy: BTreeMap<(u32, u8), Vec<&Placed>> = BTreeMap::new();
    for p in &placed {
        by_copy.entry((p.key.task, p.key.copy)).or_default().push(p);
    }
    for t in &etag.tasks {
        let prim = by_copy.get(&(t.id, 1)).map_or(&[][..], |v| v.as_slice());
        let reps = by_copy.get(&(t.id, 2)).map_or(&[][..], |v| v.as_slice());
        if prim.len() != 1 {
            report.push('a', vec![format!("task {}", t.id)], prim.len() as f64, 1.0);
            continue;
        }
        let p = prim[0];
        let pn = &etag.nodes[p.node];
        let want = usize::from(pn.needs_dup);
        if reps.len() != want {
            report.push('c', vec![p.key.to_string()], reps.len() as f64, want as f64);
            continue;
        }
        if let Some(r) = reps.first() {
            if t.exit && r.key.device() != p.key.device() {
                report.push('d', vec![p.key.to_string(), r.key.to_string()], 1.0, 0.0);
            }
            let rel = duplication_reliability(pn.reliability, etag.nodes[r.node].reliability);
            if rel < t.reliability_threshold - PROB_TOL {
                // lower bound: slack is measured - bound
                report.violations.push(ScheduleViolation {
                    family: 'e',
                    entities: vec![p.key.to_string(), r.key.to_string()],
                    measured: rel,
                    bound: t.reliability_threshold,
                    slack: rel - t.reliability_threshold,
                });
            }
        }
    }
    for p in &placed {
        if !etag.tasks.iter().any(|t| t.id == p.key.task) {
            report.push('a', vec![p.key.to_string()], 1.0, 0.0);
        }
    }

    // precedence: family f
    for &(i, j) in &etag.workflow_arcs {
        let bits = etag.task(i).output_data;
        for u in placed.iter().filter(|p| p.key.task == i) {
            for v in placed.iter().filter(|p| p.key.task == j) {
                let (cl, _, _) = transfer(etag, bits, u.key.device(), v.key.device());
                let ready = u.finish() + cl;
                if ready > v.start + TOL {
                    report.push('f', vec![u.key.to_string(), v.key.to_string()], ready, v.start);
                }
            }
        }
    }

    // completion and deadline: family g; non-negativity: family m
    let finish = placed.iter().map(Placed::finish).fold(0.0, f64::max);
    if finish > deadline + TOL {
        report.push('g', vec!["deadline".into()], finish, deadline);
    }
    if s.makespan < finish - TOL || s.makespan > deadline + TOL {
        report.push('g', vec!["makespan".into()], s.makespan, finish);
    }
    for p in &placed {
        if !(p.start >= -TOL) || !p.start.is_finite() {
            report.push('m', vec![p.key.to_string()], p.start, 0.0);
        }
    }

    // same-core overlap: family h
    for (a, p) in placed.iter().enumerate() {
        for q in &placed[a + 1..] {
            if p.key.core != q.key.core {
                continue;
            }
            let overlap = p.finish().min(q.finish()) - p.start.max(q.start);
            if overlap > TOL {
                report.push('h', vec![p.key.to_string(), q.key.to_string()], overlap, 0.0);
            }
        }
    }

    // capability exclusivity, memory and storage at each start: families j, k
    for d in &etag.system.devices {
        let on: Vec<&Placed> = placed.iter().filter(|p| p.key.device() == d.id).collect();
        for e in &placed {
            let s_h = e.start;
            let active: Vec<&&Placed> = on.iter().filter(|p| p.active_at(s_h)).collect();
            let mut caps: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            let (mut mem, mut sto) = (0.0, 0.0);
            for p in &active {
                let t = etag.task(p.key.task);
                if t.capability > 0 {
                    caps.entry(t.capability).or_default().push(p.key.to_string());
                }
                mem += t.memory;
                sto += t.storage;
            }
            for (c, users) in caps {
                if users.len() > 1 {
                    let mut ent = vec![format!("{} cap {c} at {s_h}", d.id)];
                    ent.extend(users.iter().cloned());
                    report.push('j', ent, users.len() as f64, 1.0);
                }
            }
            if mem > d.memory_budget + TOL {
                report.push('k', vec![format!("{} memory at {s_h}", d.id)], mem, d.memory_budget);
            }
            if sto > d.storage_budget + TOL {
                report.push('k', vec![format!("{} storage at {s_h}", d.id)], sto, d.storage_budget);
            }
        }
    }

    // device energy: family l
    let mut used: BTreeMap<DeviceId, f64> = BTreeMap::new();
    for p in &placed {
        *used.entry(p.key.device()).or_default() += etag.nodes[p.node].energy;
    }
    for &(i, j) in &etag.workflow_arcs {
        let bits = etag.task(i).output_data;
        for u in placed.iter().filter(|p| p.key.task == i) {
            for v in placed.iter().filter(|p| p.key.task == j) {
                for (dev, e) in transfer(etag, bits, u.key.device(), v.key.device()).2 {
                    *used.entry(dev).or_default() += e;
                }
            }
        }
    }
    for d in &etag.system.devices {
        let e = used.get(&d.id).copied().unwrap_or(0.0);
        if e > d.energy_budget + TOL {
            report.push('l', vec![d.id.to_string()], e, d.energy_budget);
        }
    }
    report
}

/// Latency, energy and log-reliability of a schedule, normalized and
/// combined with the problem's bounds and weights. This is the single
/// scoring routine used by every solver.
pub fn objectives(s: &Schedule, problem: &Problem) -> Objectives {
    let etag = &problem.etag;
    let mut dummy = ViolationReport::default();
    let placed = resolve(s, etag, &mut dummy);
    let latency = placed.iter().map(Placed::finish).fold(0.0, f64::max);
    let mut energy: f64 = placed.iter().map(|p| etag.nodes[p.node].energy).sum();
    for &(i, j) in &etag.workflow_arcs {
        let bits = etag.task(i).output_data;
        for u in placed.iter().filter(|p| p.key.task == i) {
            for v in placed.iter().filter(|p| p.key.task == j) {
                energy += transfer(etag, bits, u.key.device(), v.key.device()).1;
            }
        }
    }
    let mut log_rel = 0.0;
    for t in &etag.tasks {
        let Some(p) = placed.iter().find(|p| p.key.task == t.id && p.key.copy == 1) else {
            continue;
        };
        let pn = &etag.nodes[p.node];
        let r = match placed.iter().find(|p| p.key.task == t.id && p.key.copy == 2) {
            Some(r) if pn.needs_dup => duplication_reliability(pn.reliability, etag.nodes[r.node].reliability),
            _ => pn.reliability,
        };
        log_rel += r.ln();
    }
    problem.objectives(latency, energy, log_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Placement;
    use crate::workload::fixtures;

    fn chain() -> Problem {
        let inst = fixtures::chain_for_deadline().to_instance().unwrap();
        Problem::from_instance(&inst).unwrap()
    }

    fn key(s: &str) -> NodeKey {
        s.parse().unwrap()
    }

    #[test]
    fn clean_chain_schedule() {
        let p = chain();
        let s = Schedule::new(
            vec![
                Placement { node: key("1.1@e1.1"), start: 0.0 },
                Placement { node: key("2.1@h1.1"), start: 1.5 },
            ],
            &p,
        )
        .unwrap();
        let r = check_schedule(&s, &p.etag, p.deadline);
        assert!(r.is_clean(), "{r:?}");
        assert!((s.objectives.latency - 2.5).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_deadline_violations() {
        let p = chain();
        let s = Schedule::new(
            vec![
                Placement { node: key("1.1@e1.1"), start: 0.0 },
                Placement { node: key("2.1@h1.1"), start: 1.2 },
            ],
            &p,
        )
        .unwrap();
        let r = check_schedule(&s, &p.etag, p.deadline);
        assert_eq!(r.families(), ['f'].into());
        let v = &r.violations[0];
        assert!((v.slack + 0.3).abs() < 1e-9);
        let r = check_schedule(&s, &p.etag, 2.0);
        assert!(r.families().contains(&'g'));
    }

    #[test]
    fn missing_primary_and_overlap() {
        let inst = fixtures::duplication_example().to_instance().unwrap();
        let p = Problem::from_instance(&inst).unwrap();
        let s = Schedule::new(
            vec![
                Placement { node: key("1.1@e1.1"), start: 0.0 },
                Placement { node: key("2.1@e1.1"), start: 0.1 },
            ],
            &p,
        )
        .unwrap();
        let r = check_schedule(&s, &p.etag, p.deadline);
        let f = r.families();
        assert!(f.contains(&'a') && f.contains(&'h') && f.contains(&'f'));
    }

    #[test]
    fn energy_budget_violation() {
        let mut file = fixtures::single_task();
        file.system.devices[0].energy_wh = 1e-4;
        let inst = file.to_instance().unwrap();
        let p = Problem::from_instance(&inst).unwrap();
        let s = Schedule::new(vec![Placement { node: key("1.1@e1.1"), start: 0.0 }], &p).unwrap();
        assert!((s.objectives.energy - 1.6).abs() < 1e-12);
        let r = check_schedule(&s, &p.etag, p.deadline);
        assert_eq!(r.families(), ['l'].into());
        assert!((r.violations[0].bound - 0.36).abs() < 1e-12);
    }

    #[test]
    fn replica_rules() {
        let inst = fixtures::duplication_example().to_instance().unwrap();
        let p = Problem::from_instance(&inst).unwrap();
        // primary on e2.1 needs a replica
        let base = vec![
            Placement { node: key("1.1@e2.1"), start: 0.0 },
            Placement { node: key("2.1@h1.1"), start: 10.0 },
            Placement { node: key("3.1@c1.1"), start: 10.0 },
            Placement { node: key("4.1@h1.2"), start: 20.0 },
        ];
        let s = Schedule::new(base.clone(), &p).unwrap();
        assert!(check_schedule(&s, &p.etag, 100.0).families().contains(&'c'));
        let mut with = base.clone();
        // both copies use capability 1 on e2, so they must not overlap
        with.push(Placement { node: key("1.2@e2.2"), start: 0.4 });
        let s = Schedule::new(with.clone(), &p).unwrap();
        assert!(check_schedule(&s, &p.etag, 100.0).is_clean());
        with.last_mut().unwrap().start = 0.2;
        let s = Schedule::new(with.clone(), &p).unwrap();
        assert_eq!(check_schedule(&s, &p.etag, 100.0).families(), ['j'].into());
        with.last_mut().unwrap().start = 0.4;
        let s = Schedule::new(with, &p).unwrap();
        let r = check_schedule(&s, &p.etag, 100.0);
        assert!(r.is_clean(), "{r:?}");
        let pair = duplication_reliability(p.etag.nodes[p.etag.node_index(&key("1.1@e2.1")).unwrap()].reliability,
            p.etag.nodes[p.etag.node_index(&key("1.1@e2.2")).unwrap()].reliability);
        let single: f64 = ["2.1@h1.1", "3.1@c1.1", "4.1@h1.2"]
            .iter()
            .map(|k| p.etag.nodes[p.etag.node_index(&key(k)).unwrap()].reliability.ln())
            .sum();
        assert!((s.objectives.log_reliability - (pair.ln() + single)).abs() < 1e-12);
    }
}
