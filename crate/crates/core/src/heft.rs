//! Extended HEFT: upward-rank list scheduling over the allocation graph with
//! selective duplication, hard constraint checks and a myopic weighted score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::Error;
use crate::model::DeviceId;
use crate::objective::{Problem, Range};
use crate::schedule::{Outcome, Placement, Schedule};
use crate::transform::{Etag, NodeKey};

/// Upward rank of every node, indexed like `etag.nodes`.
pub fn upward_rank(etag: &Etag) -> Vec<f64> {
    let mut rank = vec![0.0; etag.nodes.len()];
    for &id in etag.topo_order.iter().rev() {
        let t = etag.task(id);
        for &n in t.primaries.iter().chain(&t.replicas) {
            let tail = etag.arcs_out[n]
                .iter()
                .map(|&a| etag.arcs[a].comm_latency + rank[etag.arcs[a].dst])
                .fold(0.0, f64::max);
            rank[n] = etag.nodes[n].exec_time + tail;
        }
    }
    rank
}

/// A candidate set: a primary node, with a replica when the primary needs one.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSet {
    pub task: u32,
    pub primary: usize,
    pub replica: Option<usize>,
    pub rank: f64,
}

impl LambdaSet {
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.primary).chain(self.replica)
    }
}

/// Every candidate set, sorted by primary rank (descending), then task id,
/// primary key and replica key.
pub fn build_lambda(etag: &Etag, rank: &[f64]) -> Vec<LambdaSet> {
    let mut out = Vec::new();
    for t in &etag.tasks {
        for &p in &t.primaries {
            if etag.nodes[p].needs_dup {
                for &r in &t.replicas {
                    out.push(LambdaSet {
                        task: t.id,
                        primary: p,
                        replica: Some(r),
                        rank: rank[p],
                    });
                }
            } else {
                out.push(LambdaSet {
                    task: t.id,
                    primary: p,
                    replica: None,
                    rank: rank[p],
                });
            }
        }
    }
    let key = |s: &LambdaSet| (s.task, etag.nodes[s.primary].key, s.replica.map(|r| etag.nodes[r].key));
    out.sort_by(|a, b| b.rank.total_cmp(&a.rank).then_with(|| key(a).cmp(&key(b))));
    out
}

/// Earliest start and finish of `node` given the nodes already placed
/// (`temp`, with their start times). Starts after every placed parent's data
/// arrives, then scans placed nodes on the same device in finish order and
/// jumps past each one that conflicts: same-core overlap, or a capability,
/// memory or storage excess among the nodes overlapping the window.
pub fn compute_eft(etag: &Etag, node: usize, temp: &[(usize, f64)]) -> (f64, f64) {
    let nd = &etag.nodes[node];
    let task = etag.node_task(node);
    let len = nd.exec_time;
    let dev = etag.device(nd.key.device());

    let mut t = 0.0f64;
    for &a in &etag.arcs_in[node] {
        let arc = &etag.arcs[a];
        if let Some(&(_, s)) = temp.iter().find(|&&(n, _)| n == arc.src) {
            t = t.max(s + etag.nodes[arc.src].exec_time + arc.comm_latency);
        }
    }

    let finish = |&(n, s): &(usize, f64)| s + etag.nodes[n].exec_time;
    let mut list: Vec<(usize, f64)> = temp
        .iter()
        .copied()
        .filter(|&(n, s)| etag.nodes[n].key.device() == dev.id && finish(&(n, s)) > t)
        .collect();
    list.sort_by(|a, b| {
        finish(a)
            .total_cmp(&finish(b))
            .then_with(|| etag.nodes[a.0].key.cmp(&etag.nodes[b.0].key))
    });

    for &(j, sj) in &list {
        let fj = sj + etag.nodes[j].exec_time;
        let overlapping: Vec<usize> = list
            .iter()
            .filter(|&&(b, sb)| {
                etag.nodes[b].key.core != nd.key.core && t < sb + etag.nodes[b].exec_time && t + len > sb
            })
            .map(|&(b, _)| b)
            .collect();
        let same_core = etag.nodes[j].key.core == nd.key.core && t < fj && t + len > sj;
        let cap_clash = task.capability > 0
            && 1 + overlapping
                .iter()
                .filter(|&&b| etag.node_task(b).capability == task.capability)
                .count()
                > 1;
        let mem: f64 = task.memory + overlapping.iter().map(|&b| etag.node_task(b).memory).sum::<f64>();
        let sto: f64 = task.storage + overlapping.iter().map(|&b| etag.node_task(b).storage).sum::<f64>();
        if same_core || cap_clash || mem > dev.memory_budget || sto > dev.storage_budget {
            t = fj;
        }
    }
    (t, t + len)
}

/// One committed decision, recorded for auditing the greedy contract.
#[derive(Debug, Clone, PartialEq)]
pub struct Commit {
    pub task: u32,
    pub placements: Vec<Placement>,
    /// Candidate sets evaluated and surviving every check.
    pub survivors: usize,
}

#[derive(Debug, Clone)]
pub struct HeftRun {
    pub outcome: Outcome,
    pub trace: Vec<Commit>,
}

struct Scored {
    set: usize,
    placed: Vec<(usize, f64)>,
    latency: f64,
    energy: f64,
    reliability: f64,
}

/// Runs the heuristic on `problem`. Infeasibility names the blocking task.
pub fn run_heft(problem: &Problem) -> Result<HeftRun, Error> {
    let etag = &problem.etag;
    let w = problem.weights;
    let rank = upward_rank(etag);
    let lambda = build_lambda(etag, &rank);

    let mut sel: Vec<(usize, f64)> = Vec::new();
    let mut sel_set: BTreeSet<usize> = BTreeSet::new();
    let mut used: BTreeMap<DeviceId, f64> = BTreeMap::new();
    let mut scheduled: BTreeSet<u32> = BTreeSet::new();
    let mut trace = Vec::new();

    while scheduled.len() < etag.tasks.len() {
        let Some(first) = lambda.iter().find(|s| {
            !scheduled.contains(&s.task) && etag.task(s.task).parents.iter().all(|p| scheduled.contains(p))
        }) else {
            break;
        };
        let task = etag.task(first.task);

        let mut scored: Vec<Scored> = Vec::new();
        'sets: for (v, set) in lambda.iter().enumerate().filter(|(_, s)| s.task == task.id) {
            let pn = &etag.nodes[set.primary];
            let r_hat = match set.replica {
                Some(r) => etag.pair_reliability(set.primary, r),
                None => pn.reliability,
            };
            if let Some(r) = set.replica {
                if task.exit && pn.needs_dup && etag.nodes[r].key.device() != pn.key.device() {
                    continue;
                }
            }
            if r_hat < task.reliability_threshold {
                continue;
            }

            let mut temp = sel.clone();
            let mut extra: BTreeMap<DeviceId, f64> = BTreeMap::new();
            let mut energy = 0.0;
            let mut placed = Vec::new();
            let mut latency = 0.0f64;
            for n in set.nodes() {
                let nd = &etag.nodes[n];
                let dev = etag.device(nd.key.device());
                // energy of this node and its incoming arcs from committed nodes
                *extra.entry(dev.id).or_default() += nd.energy;
                energy += nd.energy;
                for &a in &etag.arcs_in[n] {
                    let arc = &etag.arcs[a];
                    if sel_set.contains(&arc.src) {
                        energy += arc.comm_energy;
                        for &(d, ce) in &arc.charges {
                            *extra.entry(d).or_default() += ce;
                        }
                    }
                }
                let over_energy = extra.iter().any(|(d, e)| {
                    used.get(d).copied().unwrap_or(0.0) + e > etag.device(*d).energy_budget
                });
                if over_energy || task.memory > dev.memory_budget || task.storage > dev.storage_budget {
                    continue 'sets;
                }
                let (s, f) = compute_eft(etag, n, &temp);
                temp.push((n, s));
                placed.push((n, s));
                latency = latency.max(f);
            }
            scored.push(Scored {
                set: v,
                placed,
                latency,
                energy,
                reliability: r_hat,
            });
        }

        if scored.is_empty() {
            return Ok(HeftRun {
                outcome: Outcome::Infeasible(format!("task {}: no candidate set satisfies the constraints", task.id)),
                trace,
            });
        }
        let range = |f: fn(&Scored) -> f64| Range {
            min: scored.iter().map(f).fold(f64::INFINITY, f64::min),
            max: scored.iter().map(f).fold(f64::NEG_INFINITY, f64::max),
        };
        let (rl, re, rr) = (range(|s| s.latency), range(|s| s.energy), range(|s| s.reliability));
        let g = |s: &Scored| {
            w.latency * rl.normalize(s.latency) + w.energy * re.normalize(s.energy)
                - w.reliability * rr.normalize(s.reliability)
        };
        // strict minimum: the earliest set in list order wins ties
        let mut best = &scored[0];
        for s in &scored[1..] {
            if g(s).total_cmp(&g(best)) == Ordering::Less {
                best = s;
            }
        }
        if best.latency > problem.deadline {
            return Ok(HeftRun {
                outcome: Outcome::Infeasible(format!(
                    "task {}: best candidate set finishes at {} after the deadline {}",
                    task.id, best.latency, problem.deadline
                )),
                trace,
            });
        }

        log::debug!("task {} -> set {} of {}", task.id, best.set, scored.len());
        for &(n, _) in &best.placed {
            let nd = &etag.nodes[n];
            *used.entry(nd.key.device()).or_default() += nd.energy;
            for &a in &etag.arcs_in[n] {
                let arc = &etag.arcs[a];
                if sel_set.contains(&arc.src) {
                    for &(d, ce) in &arc.charges {
                        *used.entry(d).or_default() += ce;
                    }
                }
            }
        }
        for &(n, s) in &best.placed {
            sel.push((n, s));
            sel_set.insert(n);
        }
        trace.push(Commit {
            task: task.id,
            placements: best
                .placed
                .iter()
                .map(|&(n, s)| Placement {
                    node: etag.nodes[n].key,
                    start: s,
                })
                .collect(),
            survivors: scored.len(),
        });
        scheduled.insert(task.id);
    }

    let placements = sel
        .iter()
        .map(|&(n, s)| Placement {
            node: etag.nodes[n].key,
            start: s,
        })
        .collect();
    Ok(HeftRun {
        outcome: Outcome::Scheduled(Schedule::new(placements, problem)?),
        trace,
    })
}

/// Keys of the nodes a run committed, in commit order.
pub fn committed_keys(run: &HeftRun) -> Vec<NodeKey> {
    run.trace.iter().flat_map(|c| c.placements.iter().map(|p| p.node)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::check_schedule;
    use crate::workload::fixtures;

    fn problem(f: crate::instance::InstanceFile) -> Problem {
        Problem::from_instance(&f.to_instance().unwrap()).unwrap()
    }

    #[test]
    fn ranks_follow_recurrence() {
        let p = problem(fixtures::chain_for_deadline());
        let e = &p.etag;
        let r = upward_rank(e);
        let n1 = e.node_index(&"1.1@e1.1".parse().unwrap()).unwrap();
        let n2 = e.node_index(&"2.1@h1.1".parse().unwrap()).unwrap();
        assert_eq!(r[n2], e.nodes[n2].exec_time);
        let cl = e.arcs[e.arc_between(n1, n2).unwrap()].comm_latency;
        assert!((r[n1] - (e.nodes[n1].exec_time + cl + r[n2])).abs() < 1e-12);
        for (n, node) in e.nodes.iter().enumerate() {
            assert!(r[n] >= node.exec_time);
        }
    }

    #[test]
    fn lambda_sets_pair_duplicated_primaries() {
        let p = problem(fixtures::duplication_example());
        let e = &p.etag;
        let lambda = build_lambda(e, &upward_rank(e));
        let t1 = e.task(1);
        let dup = t1.primaries.iter().filter(|&&n| e.nodes[n].needs_dup).count();
        let single = t1.primaries.len() - dup;
        let sets: Vec<_> = lambda.iter().filter(|s| s.task == 1).collect();
        assert_eq!(sets.len(), dup * t1.replicas.len() + single);
        for s in &sets {
            assert_eq!(s.replica.is_some(), e.nodes[s.primary].needs_dup);
        }
        for w in lambda.windows(2) {
            assert!(w[0].rank >= w[1].rank);
        }
    }

    #[test]
    fn eft_waits_for_parent_and_busy_core() {
        let p = problem(fixtures::chain_for_deadline());
        let e = &p.etag;
        let n1 = e.node_index(&"1.1@e1.1".parse().unwrap()).unwrap();
        let n2 = e.node_index(&"2.1@h1.1".parse().unwrap()).unwrap();
        assert_eq!(compute_eft(e, n1, &[]), (0.0, 1.0));
        // parent finishes at 1.0, 0.5 s transfer
        let (s, f) = compute_eft(e, n2, &[(n1, 0.0)]);
        assert!((s - 1.5).abs() < 1e-12 && (f - 2.5).abs() < 1e-12);
    }

    #[test]
    fn chain_and_duplication_are_clean_and_deterministic() {
        for f in [fixtures::chain_for_deadline(), fixtures::duplication_example(), fixtures::single_task()] {
            let p = problem(f);
            let a = run_heft(&p).unwrap();
            let b = run_heft(&p).unwrap();
            let s = a.outcome.schedule().expect("feasible");
            assert_eq!(s.to_json(), b.outcome.schedule().unwrap().to_json());
            let report = check_schedule(s, &p.etag, p.deadline);
            assert!(report.is_clean(), "{report:?}");
        }
    }

    #[test]
    fn single_task_starts_at_zero() {
        let p = problem(fixtures::single_task());
        let run = run_heft(&p).unwrap();
        let s = run.outcome.schedule().unwrap();
        assert_eq!(s.placements.len(), 1);
        assert_eq!(s.placements[0].start, 0.0);
    }

    #[test]
    fn unreachable_threshold_is_infeasible() {
        let mut f = fixtures::duplication_example();
        f.workflow.tasks[0].reliability_threshold = 0.999_999_999;
        let p = problem(f);
        let run = run_heft(&p).unwrap();
        match run.outcome {
            Outcome::Infeasible(msg) => assert!(msg.contains("task 1"), "{msg}"),
            Outcome::Scheduled(_) => panic!("expected infeasible"),
        }
    }
}
