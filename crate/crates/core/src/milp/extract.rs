//! Turning a solver assignment back into a schedule.

use crate::error::Error;
use crate::objective::Problem;
use crate::schedule::{Placement, Schedule};

use super::{names, Solution};

/// Gap between the solver's objective and the re-scored schedule above which
/// a warning is logged.
const OBJECTIVE_CHECK: f64 = 1e-6;

/// Reads the selected nodes and copy start times from `sol`. The schedule is
/// re-scored by the validator; a mismatch with the solver's objective is
/// logged rather than treated as an error.
pub fn extract_schedule(problem: &Problem, sol: &Solution) -> Result<Schedule, Error> {
    let etag = &problem.etag;
    let value = |name: &str| {
        sol.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::MalformedSolution(format!("missing variable {name}")))
    };
    let mut placements = Vec::new();
    for task in &etag.tasks {
        for copy in 1..=task.copies() {
            let mut chosen = Vec::new();
            for &n in task.candidates(copy) {
                let key = etag.nodes[n].key;
                if value(&names::node(&key))? > 0.5 {
                    chosen.push(key);
                }
            }
            match (copy, chosen.len()) {
                (1, 1) | (2, 0) | (2, 1) => {}
                (_, k) => {
                    return Err(Error::InconsistentSolution(format!(
                        "task {} copy {copy} has {k} selected nodes",
                        task.id
                    )))
                }
            }
            if let Some(&node) = chosen.first() {
                let start = value(&names::start((task.id, copy)))?.max(0.0);
                placements.push(Placement { node, start });
            }
        }
    }
    let s = Schedule::new(placements, problem)?;
    if let Some(obj) = sol.objective {
        let gap = (obj - s.objectives.g).abs();
        if gap > OBJECTIVE_CHECK {
            log::warn!("solver objective {obj} differs from re-scored g {} by {gap:e}", s.objectives.g);
        }
    }
    Ok(s)
}
