//! Continuous-time MILP: model types, construction, LP text export and
//! parsing, external solver driver and schedule extraction.

mod build;
mod extract;
mod lp;
mod solve;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::objective::NormBounds;

pub use build::{assignment_from_schedule, build_model, names};
pub use extract::extract_schedule;
pub use lp::{export_lp, parse_lp};
pub use solve::{default_solver_command, parse_solution, solve, SolverConfig, SOLVER_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// `{family}_{counter}`.
    pub name: String,
    /// Constraint family, `a` to `m`.
    pub family: char,
    /// Variable index and coefficient; each variable appears at most once.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Constants and bookkeeping carried alongside the model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMeta {
    /// Big-M for time-based disjunctions, seconds.
    pub omega_time: f64,
    /// Big-M for the pair reliability threshold.
    pub omega_rel: f64,
    /// Tolerance turning strict time inequalities non-strict, seconds.
    pub omega: f64,
    pub deadline: f64,
    /// One event per task copy, named after its start-time variable.
    pub events: Vec<String>,
    pub bounds: Option<NormBounds>,
}

/// A solver-neutral mixed-integer linear model. The objective is minimized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
    pub meta: ModelMeta,
}

impl MilpModel {
    pub fn var_index(&self) -> HashMap<&str, usize> {
        self.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect()
    }

    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Number of constraints per family.
    pub fn family_counts(&self) -> BTreeMap<char, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.family).or_default() += 1;
        }
        out
    }

    /// Objective value of a full assignment (indexed like `vars`).
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().map(|&(i, c)| c * values[i]).sum::<f64>()
    }

    /// Rows and bounds violated by more than `tol`, with their excess.
    pub fn violated(&self, values: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            let excess = (v.lb - x).max(x - v.ub);
            let frac = if v.kind == VarKind::Binary { (x - x.round()).abs() } else { 0.0 };
            if excess > tol || frac > tol {
                out.push((v.name.clone(), excess.max(frac)));
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(i, a)| a * values[i]).sum();
            let excess = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            if excess > tol {
                out.push((c.name.clone(), excess));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub values: HashMap<String, f64>,
    pub objective: Option<f64>,
    /// Wall-clock seconds spent in the solver process.
    pub wall_time: f64,
}

impl Solution {
    pub fn has_assignment(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

/// Summary of one end-to-end MILP run.
#[derive(Debug, Clone)]
pub struct MilpRun {
    pub outcome: crate::schedule::Outcome,
    pub status: SolveStatus,
    /// Solver objective including the constant offset.
    pub model_objective: Option<f64>,
    pub wall_time: f64,
    pub vars: usize,
    pub binaries: usize,
    pub constraints: usize,
}

/// Builds, solves and extracts. Statuses without an assignment become
/// [`Outcome::Infeasible`](crate::schedule::Outcome::Infeasible).
pub fn run(problem: &crate::objective::Problem, cfg: &SolverConfig) -> Result<MilpRun, crate::error::Error> {
    use crate::schedule::Outcome;

    let model = build_model(problem);
    let mut cfg = cfg.clone();
    if cfg.warm_start && cfg.start.is_none() {
        cfg.start = heft_start(problem, &model)?;
    }
    let sol = solve(&model, &cfg)?;
    if sol.has_assignment() {
        check_integrality(&model, &sol)?;
    }
    let outcome = if sol.has_assignment() {
        Outcome::Scheduled(extract_schedule(problem, &sol)?)
    } else {
        Outcome::Infeasible(match sol.status {
            SolveStatus::Timeout => "time limit reached without a feasible solution".into(),
            _ => "model is infeasible".into(),
        })
    };
    Ok(MilpRun {
        outcome,
        status: sol.status,
        model_objective: sol.objective,
        wall_time: sol.wall_time,
        vars: model.vars.len(),
        binaries: model.binary_count(),
        constraints: model.constraints.len(),
    })
}

/// Binaries further than this from 0 or 1 make a solution inconsistent.
pub const INTEGRALITY_TOL: f64 = 1e-5;

fn check_integrality(model: &MilpModel, sol: &Solution) -> Result<(), crate::error::Error> {
    for v in model.vars.iter().filter(|v| v.kind == VarKind::Binary) {
        let Some(&x) = sol.values.get(&v.name) else {
            return Err(crate::error::Error::MalformedSolution(format!("missing variable {}", v.name)));
        };
        if x.abs().min((1.0 - x).abs()) > INTEGRALITY_TOL {
            return Err(crate::error::Error::InconsistentSolution(format!("{} = {x} is not binary", v.name)));
        }
    }
    Ok(())
}

/// The heuristic's schedule as a start assignment, if it finds one.
pub fn heft_start(problem: &crate::objective::Problem, model: &MilpModel) -> Result<Option<Vec<f64>>, crate::error::Error> {
    let run = crate::heft::run_heft(problem)?;
    run.outcome
        .schedule()
        .map(|s| assignment_from_schedule(model, &problem.etag, s))
        .transpose()
}
