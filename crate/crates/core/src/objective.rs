//! Objective normalization and the scheduling problem bundle shared by the
//! MILP builder, the heuristic, the oracle and the validator.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::instance::Instance;
use crate::model::ObjectiveWeights;
use crate::transform::{critical_path_deadline, transform, Etag};

/// Closed interval used to scale one objective into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    /// Ranges narrower than this (relative to their magnitude) are treated as
    /// a single point and normalize to 0.
    const DEGENERATE: f64 = 1e-12;

    pub fn is_degenerate(&self) -> bool {
        self.max - self.min <= Self::DEGENERATE * self.max.abs().max(self.min.abs()).max(1.0)
    }

    /// `(v - min) / (max - min)`, or 0 on a degenerate range.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    /// Slope of [`Range::normalize`], 0 on a degenerate range.
    pub fn scale(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            1.0 / (self.max - self.min)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub latency: Range,
    pub energy: Range,
    /// Bounds on the log-reliability sum (both ends are ≤ 0).
    pub reliability: Range,
}

/// Structural bounds on the three objectives over every feasible schedule:
///
/// * latency: longest path using each task's fastest node and each arc's
///   cheapest transfer, up to the deadline;
/// * energy: every task on its cheapest primary with no replica and no
///   transfer, up to the dearest primary plus replica per task and the
///   dearest transfer for every copy pair of every arc;
/// * reliability: per task, the worst to the best admissible log term.
pub fn objective_bounds(etag: &Etag, deadline: f64) -> NormBounds {
    let mut finish = std::collections::BTreeMap::new();
    for &id in &etag.topo_order {
        let t = etag.task(id);
        let min_l = t
            .primaries
            .iter()
            .map(|&n| etag.nodes[n].exec_time)
            .fold(f64::INFINITY, f64::min);
        let ready = t
            .parents
            .iter()
            .map(|&p| {
                let cl = min_transfer(etag, p, id);
                finish[&p] + cl
            })
            .fold(0.0, f64::max);
        finish.insert(id, ready + min_l);
    }
    let lat_min = finish.values().copied().fold(0.0, f64::max);

    let mut en_min = 0.0;
    let mut en_max = 0.0;
    let mut rel_min = 0.0;
    let mut rel_max = 0.0;
    for t in &etag.tasks {
        let e = |set: &[usize], pick: fn(f64, f64) -> f64, init: f64| {
            set.iter().map(|&n| etag.nodes[n].energy).fold(init, pick)
        };
        en_min += e(&t.primaries, f64::min, f64::INFINITY);
        en_max += e(&t.primaries, f64::max, 0.0) + e(&t.replicas, f64::max, 0.0);
        let (lo, hi) = log_term_range(etag, t.id);
        rel_min += lo;
        rel_max += hi;
    }
    for &(i, j) in &etag.workflow_arcs {
        let (ti, tj) = (etag.task(i), etag.task(j));
        let max_ce = arcs_between(etag, i, j)
            .map(|a| etag.arcs[a].comm_energy)
            .fold(0.0, f64::max);
        en_max += ti.copies() as f64 * tj.copies() as f64 * max_ce;
    }
    NormBounds {
        latency: Range {
            min: lat_min.min(deadline),
            max: deadline,
        },
        energy: Range {
            min: en_min,
            max: en_max,
        },
        reliability: Range {
            min: rel_min,
            max: rel_max,
        },
    }
}

fn arcs_between(etag: &Etag, i: u32, j: u32) -> impl Iterator<Item = usize> + '_ {
    let t = etag.task(i);
    t.primaries
        .iter()
        .chain(&t.replicas)
        .flat_map(move |&u| etag.arcs_out[u].iter().copied())
        .filter(move |&a| etag.nodes[etag.arcs[a].dst].key.task == j)
}

fn min_transfer(etag: &Etag, i: u32, j: u32) -> f64 {
    arcs_between(etag, i, j)
        .map(|a| etag.arcs[a].comm_latency)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest and largest log-reliability contribution a task can make: ln R
/// of a primary that needs no replica, or ln of the pair reliability of a
/// primary that does, with any replica.
pub fn log_term_range(etag: &Etag, task: u32) -> (f64, f64) {
    let t = etag.task(task);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &p in &t.primaries {
        if etag.nodes[p].needs_dup {
            for &r in &t.replicas {
                let v = etag.pair_reliability(p, r).ln();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        } else {
            let v = etag.nodes[p].reliability.ln();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Objective values of one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    /// Makespan in seconds.
    pub latency: f64,
    /// Joules.
    pub energy: f64,
    /// Natural log of the overall reliability.
    pub log_reliability: f64,
    /// Overall reliability, `exp(log_reliability)`.
    pub reliability: f64,
    /// Normalized latency, energy and log-reliability.
    pub normalized: [f64; 3],
    /// Weighted sum `w_lat·lat + w_en·en − w_rel·rel` of the normalized terms.
    pub g: f64,
}

impl Objectives {
    pub fn new(latency: f64, energy: f64, log_reliability: f64, w: &ObjectiveWeights, b: &NormBounds) -> Self {
        let normalized = [
            b.latency.normalize(latency),
            b.energy.normalize(energy),
            b.reliability.normalize(log_reliability),
        ];
        Objectives {
            latency,
            energy,
            log_reliability,
            reliability: log_reliability.exp(),
            normalized,
            g: w.latency * normalized[0] + w.energy * normalized[1] - w.reliability * normalized[2],
        }
    }
}

/// Everything a scheduler needs: the allocation graph, the weights, the
/// deadline and the normalization bounds derived from them.
#[derive(Debug, Clone)]
pub struct Problem {
    pub etag: Etag,
    pub weights: ObjectiveWeights,
    pub deadline: f64,
    pub bounds: NormBounds,
}

impl Problem {
    pub fn new(etag: Etag, weights: ObjectiveWeights, deadline: f64) -> Self {
        let bounds = objective_bounds(&etag, deadline);
        for (name, r) in [
            ("latency", bounds.latency),
            ("energy", bounds.energy),
            ("reliability", bounds.reliability),
        ] {
            if r.is_degenerate() {
                log::warn!("degenerate normalization for {name}: min = max = {}", r.min);
            }
        }
        Problem {
            etag,
            weights,
            deadline,
            bounds,
        }
    }

    /// Transforms the instance and fixes the deadline: the explicit one if
    /// given, otherwise the deadline factor times the critical path.
    pub fn from_instance(inst: &Instance) -> Result<Self, Error> {
        let etag = transform(&inst.workflow, &inst.system)?;
        let deadline = inst
            .workflow
            .deadline
            .unwrap_or_else(|| critical_path_deadline(&etag, inst.deadline_factor));
        Ok(Problem::new(etag, inst.weights, deadline))
    }

    pub fn with_weights(&self, weights: ObjectiveWeights) -> Self {
        Problem {
            weights,
            ..self.clone()
        }
    }

    pub fn objectives(&self, latency: f64, energy: f64, log_reliability: f64) -> Objectives {
        Objectives::new(latency, energy, log_reliability, &self.weights, &self.bounds)
    }
}
