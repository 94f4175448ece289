//! Exhaustive reference scheduler for tiny instances.
//!
//! Every allocation (a primary per task, plus a replica where required) is
//! enumerated. For a fixed allocation, energy and reliability are fixed and
//! only the makespan varies; it is minimized by a depth-first search over
//! activity lists decoded with a serial schedule generator, where each copy
//! starts at its earliest feasible time. Only lists whose start times are
//! non-decreasing are explored: every active schedule is produced by the list
//! sorted by its own start times, and some active schedule is optimal for a
//! regular objective such as the makespan.

use std::time::{Duration, Instant};

use crate::error::Error;
use crate::objective::Problem;
use crate::schedule::{Outcome, Placement, Schedule};
use crate::transform::Etag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    pub max_tasks: usize,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_tasks: 5,
            max_nodes: 24,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub outcome: Outcome,
    /// Allocations passing the static checks.
    pub allocations: usize,
    /// Schedule-generation steps taken by the search.
    pub steps: u64,
}

/// One task's choice: a primary node and, when it needs one, a replica.
#[derive(Debug, Clone, Copy)]
struct Choice {
    primary: usize,
    replica: Option<usize>,
}

fn choices(etag: &Etag, task: u32) -> Vec<Choice> {
    let t = etag.task(task);
    let fits = |n: usize| {
        let d = etag.device(etag.nodes[n].key.device());
        t.memory <= d.memory_budget && t.storage <= d.storage_budget
    };
    let mut out = Vec::new();
    for &p in t.primaries.iter().filter(|&&p| fits(p)) {
        let pn = &etag.nodes[p];
        if !pn.needs_dup {
            out.push(Choice {
                primary: p,
                replica: None,
            });
            continue;
        }
        for &r in t.replicas.iter().filter(|&&r| fits(r)) {
            if t.exit && etag.nodes[r].key.device() != pn.key.device() {
                continue;
            }
            if etag.pair_reliability(p, r) < t.reliability_threshold {
                continue;
            }
            out.push(Choice {
                primary: p,
                replica: Some(r),
            });
        }
    }
    out
}

struct Copy {
    node: usize,
    len: f64,
    /// Parent copies with the transfer time from each.
    parents: Vec<(usize, f64)>,
}

struct Alloc {
    copies: Vec<Copy>,
    energy: f64,
    log_rel: f64,
    /// Makespan ignoring every resource constraint.
    bound: f64,
}

fn allocation(etag: &Etag, pick: &[Choice]) -> Option<Alloc> {
    let mut copies: Vec<Copy> = Vec::new();
    let mut of_task: Vec<Vec<usize>> = Vec::new();
    let mut log_rel = 0.0;
    for c in pick {
        let mut mine = Vec::new();
        for n in std::iter::once(c.primary).chain(c.replica) {
            mine.push(copies.len());
            copies.push(Copy {
                node: n,
                len: etag.nodes[n].exec_time,
                parents: Vec::new(),
            });
        }
        of_task.push(mine);
        log_rel += match c.replica {
            Some(r) => etag.pair_reliability(c.primary, r),
            None => etag.nodes[c.primary].reliability,
        }
        .ln();
    }

    let mut used = vec![0.0; etag.system.devices.len()];
    let dev_index = |id| etag.system.devices.iter().position(|d| d.id == id).expect("device");
    let mut energy = 0.0;
    for c in &copies {
        let n = &etag.nodes[c.node];
        used[dev_index(n.key.device())] += n.energy;
        energy += n.energy;
    }
    for &(i, j) in &etag.workflow_arcs {
        for &cu in &of_task[etag.task_index(i)] {
            for &cv in &of_task[etag.task_index(j)] {
                let a = etag.arc_between(copies[cu].node, copies[cv].node).expect("arc between copies");
                let arc = &etag.arcs[a];
                energy += arc.comm_energy;
                for &(d, ce) in &arc.charges {
                    used[dev_index(d)] += ce;
                }
                copies[cv].parents.push((cu, arc.comm_latency));
            }
        }
    }
    if etag
        .system
        .devices
        .iter()
        .zip(&used)
        .any(|(d, &e)| e > d.energy_budget)
    {
        return None;
    }

    let mut finish = vec![0.0f64; copies.len()];
    for &id in &etag.topo_order {
        for &c in &of_task[etag.task_index(id)] {
            let ready = copies[c]
                .parents
                .iter()
                .map(|&(p, cl)| finish[p] + cl)
                .fold(0.0, f64::max);
            finish[c] = ready + copies[c].len;
        }
    }
    let bound = finish.iter().copied().fold(0.0, f64::max);
    Some(Alloc {
        copies,
        energy,
        log_rel,
        bound,
    })
}

struct Search<'a> {
    etag: &'a Etag,
    alloc: &'a Alloc,
    deadline: f64,
    /// Whether only feasibility matters (the makespan carries no weight).
    any: bool,
    start: Vec<Option<f64>>,
    best: Option<(f64, Vec<f64>)>,
    steps: u64,
    began: Instant,
    limit: Option<Duration>,
    timed_out: bool,
}

impl Search<'_> {
    fn finish(&self, c: usize) -> Option<f64> {
        self.start[c].map(|s| s + self.alloc.copies[c].len)
    }

    /// True when `c` may start at `t` without breaking a core, capability,
    /// memory or storage constraint against the copies already placed.
    fn fits(&self, c: usize, t: f64) -> bool {
        let etag = self.etag;
        let node = &etag.nodes[self.alloc.copies[c].node];
        let dev = node.key.device();
        let len = self.alloc.copies[c].len;
        let mut on_dev = Vec::new();
        for (o, s) in self.start.iter().enumerate() {
            let Some(s) = *s else { continue };
            let on = &etag.nodes[self.alloc.copies[o].node];
            if on.key.device() != dev {
                continue;
            }
            let f = s + self.alloc.copies[o].len;
            if on.key.core == node.key.core && t < f && s < t + len {
                return false;
            }
            on_dev.push((o, s, f));
        }
        // the busiest moments are starts: this copy's, and others' inside it
        let mut events = vec![t];
        events.extend(on_dev.iter().filter(|&&(_, s, _)| t <= s && s < t + len).map(|&(_, s, _)| s));
        let d = etag.device(dev);
        for &e in &events {
            let mut members = vec![c];
            members.extend(on_dev.iter().filter(|&&(_, s, f)| s <= e && e < f).map(|&(o, _, _)| o));
            let task = |m: usize| etag.node_task(self.alloc.copies[m].node);
            let cap = task(c).capability;
            if cap > 0 && members.iter().filter(|&&m| task(m).capability == cap).count() > 1 {
                return false;
            }
            let mem: f64 = members.iter().map(|&m| task(m).memory).sum();
            let sto: f64 = members.iter().map(|&m| task(m).storage).sum();
            if mem > d.memory_budget || sto > d.storage_budget {
                return false;
            }
        }
        true
    }

    fn earliest(&self, c: usize) -> f64 {
        let ready = self.alloc.copies[c]
            .parents
            .iter()
            .map(|&(p, cl)| self.finish(p).expect("parent placed") + cl)
            .fold(0.0, f64::max);
        let mut cands: Vec<f64> = (0..self.start.len())
            .filter_map(|o| self.finish(o))
            .filter(|&f| f > ready)
            .collect();
        cands.push(ready);
        cands.sort_by(f64::total_cmp);
        cands
            .into_iter()
            .find(|&t| self.fits(c, t))
            .expect("a copy always fits once every placed copy has finished")
    }

    fn dfs(&mut self, last: (f64, usize), span: f64, placed: usize) {
        if self.timed_out || (self.any && self.best.is_some()) {
            return;
        }
        self.steps += 1;
        if self.steps.is_multiple_of(4096) {
            if let Some(l) = self.limit {
                if self.began.elapsed() > l {
                    self.timed_out = true;
                    return;
                }
            }
        }
        let n = self.alloc.copies.len();
        if placed == n {
            if self.best.as_ref().is_none_or(|(b, _)| span < *b) {
                self.best = Some((span, self.start.iter().map(|s| s.expect("placed")).collect()));
            }
            return;
        }
        for c in 0..n {
            if self.start[c].is_some() || self.alloc.copies[c].parents.iter().any(|&(p, _)| self.start[p].is_none()) {
                continue;
            }
            let t = self.earliest(c);
            if t < last.0 || (t == last.0 && c < last.1) {
                continue;
            }
            let f = t + self.alloc.copies[c].len;
            let new_span = span.max(f);
            if new_span > self.deadline || self.best.as_ref().is_some_and(|(b, _)| new_span >= *b) {
                continue;
            }
            self.start[c] = Some(t);
            self.dfs((t, c), new_span, placed + 1);
            self.start[c] = None;
        }
    }
}

/// Finds a schedule minimizing the normalized objective, or proves that no
/// feasible schedule exists. Refuses instances beyond `limits`.
pub fn run_oracle(problem: &Problem, limits: &OracleLimits) -> Result<OracleRun, Error> {
    let etag = &problem.etag;
    if etag.tasks.len() > limits.max_tasks || etag.nodes.len() > limits.max_nodes {
        return Err(Error::LimitsExceeded(format!(
            "{} tasks and {} nodes, limits are {} and {}",
            etag.tasks.len(),
            etag.nodes.len(),
            limits.max_tasks,
            limits.max_nodes
        )));
    }
    let began = Instant::now();
    let w = problem.weights;
    let b = &problem.bounds;
    let g = |span: f64, a: &Alloc| {
        w.latency * b.latency.normalize(span) + w.energy * b.energy.normalize(a.energy)
            - w.reliability * b.reliability.normalize(a.log_rel)
    };
    let latency_matters = w.latency > 0.0 && !b.latency.is_degenerate();

    let options: Vec<Vec<Choice>> = etag.tasks.iter().map(|t| choices(etag, t.id)).collect();
    let mut allocs = Vec::new();
    if options.iter().all(|o| !o.is_empty()) {
        let mut idx = vec![0usize; options.len()];
        'odometer: loop {
            let pick: Vec<Choice> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
            if let Some(a) = allocation(etag, &pick) {
                if a.bound <= problem.deadline {
                    allocs.push(a);
                }
            }
            let mut k = idx.len();
            loop {
                if k == 0 {
                    break 'odometer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
    let mut order: Vec<usize> = (0..allocs.len()).collect();
    order.sort_by(|&x, &y| g(allocs[x].bound, &allocs[x]).total_cmp(&g(allocs[y].bound, &allocs[y])));

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut steps = 0;
    for &ai in &order {
        let a = &allocs[ai];
        let lb = g(a.bound, a);
        if best.as_ref().is_some_and(|(bg, _, _)| lb >= *bg) {
            // sorted by bound: nothing later can improve
            break;
        }
        let mut s = Search {
            etag,
            alloc: a,
            deadline: problem.deadline,
            any: !latency_matters,
            start: vec![None; a.copies.len()],
            best: None,
            steps: 0,
            began,
            limit: limits.time_limit,
            timed_out: false,
        };
        // within an allocation, only a makespan giving a better g is useful
        if latency_matters {
            if let Some((bg, _, _)) = &best {
                let slope = w.latency * b.latency.scale();
                let cap = b.latency.min + (bg - g(b.latency.min, a)) / slope;
                s.best = Some((cap, Vec::new()));
            }
        }
        s.dfs((f64::NEG_INFINITY, 0), 0.0, 0);
        steps += s.steps;
        if s.timed_out {
            return Err(Error::LimitsExceeded(format!(
                "time limit of {:?} reached",
                limits.time_limit.unwrap_or_default()
            )));
        }
        if let Some((span, starts)) = s.best.filter(|(_, v)| !v.is_empty()) {
            let val = g(span, a);
            if best.as_ref().is_none_or(|(bg, _, _)| val < *bg) {
                best = Some((val, ai, starts));
            }
        }
    }

    let outcome = match best {
        None => Outcome::Infeasible("no allocation admits a schedule within the deadline".into()),
        Some((_, ai, starts)) => {
            let placements = allocs[ai]
                .copies
                .iter()
                .zip(starts)
                .map(|(c, s)| Placement {
                    node: etag.nodes[c.node].key,
                    start: s,
                })
                .collect();
            Outcome::Scheduled(Schedule::new(placements, problem)?)
        }
    };
    Ok(OracleRun {
        outcome,
        allocations: allocs.len(),
        steps,
    })
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
    fn chain_optimum_is_back_to_back() {
        let p = problem(fixtures::chain_for_deadline());
        let run = run_oracle(&p, &OracleLimits::default()).unwrap();
        let s = run.outcome.schedule().unwrap();
        assert!((s.makespan - 2.5).abs() < 1e-12);
        assert!(check_schedule(s, &p.etag, p.deadline).is_clean());
    }

    #[test]
    fn duplication_schedule_is_clean() {
        let p = problem(fixtures::duplication_example());
        let run = run_oracle(&p, &OracleLimits::default()).unwrap();
        let s = run.outcome.schedule().unwrap();
        let r = check_schedule(s, &p.etag, p.deadline);
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn refuses_large_instances() {
        let p = problem(fixtures::duplication_example());
        let limits = OracleLimits {
            max_nodes: 3,
            ..OracleLimits::default()
        };
        assert!(matches!(run_oracle(&p, &limits), Err(Error::LimitsExceeded(_))));
    }

    #[test]
    fn tight_deadline_is_infeasible() {
        let mut f = fixtures::chain_for_deadline();
        f.workflow.deadline_s = Some(2.0);
        let p = problem(f);
        let run = run_oracle(&p, &OracleLimits::default()).unwrap();
        assert!(!run.outcome.is_feasible());
    }
}
