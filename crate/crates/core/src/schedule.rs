//! Schedules produced by every solver, in one shared JSON form.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::ObjectiveWeights;
use crate::objective::{Objectives, Problem};
use crate::transform::{Etag, NodeKey};
use crate::validator;

/// One task copy placed on a core at a start time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub node: NodeKey,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Sorted by node key, so primaries precede replicas of the same task.
    pub placements: Vec<Placement>,
    pub makespan: f64,
    pub deadline: f64,
    pub weights: ObjectiveWeights,
    pub objectives: Objectives,
}

impl Schedule {
    /// Builds a schedule and scores it with the validator's objective
    /// evaluation. Fails if a placement names a node outside the graph.
    pub fn new(mut placements: Vec<Placement>, problem: &Problem) -> Result<Self, Error> {
        placements.sort_by_key(|p| p.node);
        let makespan = makespan(&placements, &problem.etag)?;
        let mut s = Schedule {
            placements,
            makespan,
            deadline: problem.deadline,
            weights: problem.weights,
            objectives: problem.objectives(0.0, 0.0, 0.0),
        };
        s.objectives = validator::objectives(&s, problem);
        Ok(s)
    }

    pub fn copy(&self, task: u32, copy: u8) -> Option<&Placement> {
        self.placements
            .iter()
            .find(|p| p.node.task == task && p.node.copy == copy)
    }

    pub fn primary(&self, task: u32) -> Option<&Placement> {
        self.copy(task, 1)
    }

    pub fn replica(&self, task: u32) -> Option<&Placement> {
        self.copy(task, 2)
    }

    pub fn replica_count(&self) -> usize {
        self.placements.iter().filter(|p| p.node.copy == 2).count()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, Error> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes") + "\n"
    }
}

/// Latest finish time over all placements.
pub fn makespan(placements: &[Placement], etag: &Etag) -> Result<f64, Error> {
    let mut t = 0.0f64;
    for p in placements {
        let n = etag
            .node_index(&p.node)
            .ok_or_else(|| Error::Parse(format!("unknown node {}", p.node)))?;
        t = t.max(p.start + etag.nodes[n].exec_time);
    }
    Ok(t)
}

/// Result of a scheduling run.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Scheduled(Schedule),
    Infeasible(String),
}

impl Outcome {
    pub fn schedule(&self) -> Option<&Schedule> {
        match self {
            Outcome::Scheduled(s) => Some(s),
            Outcome::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Scheduled(_))
    }
}
