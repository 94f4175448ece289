//! External solver driver. The solver is any command that reads an LP file
//! and writes a JSON solution file; see `scripts/highs_solve.py`.

use std::collections::HashMap;
use std::io::Read as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::Error;

use super::{export_lp, MilpModel, Solution, SolveStatus};

/// Overrides the solver command template.
pub const SOLVER_ENV: &str = "HUBSCHED_SOLVER_CMD";

/// Extra wall time granted to the solver process beyond its own limit.
const GRACE: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Whitespace-separated command template with the placeholders `{lp}`,
    /// `{sol}`, `{timelimit}`, `{focus}` and `{start}`. Defaults to the
    /// `HUBSCHED_SOLVER_CMD` environment variable, then the bundled script.
    pub command: Option<String>,
    /// Seconds.
    pub time_limit: f64,
    /// Favor finding feasible solutions over closing the gap.
    pub integer_focus: bool,
    /// Initial assignment, indexed like the model's variables.
    pub start: Option<Vec<f64>>,
    /// Seed the solver with the heuristic's schedule when `start` is unset.
    pub warm_start: bool,
    /// Keep the LP and solution files here instead of a temporary directory.
    pub keep_dir: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            command: None,
            time_limit: 60.0,
            integer_focus: false,
            start: None,
            warm_start: false,
            keep_dir: None,
        }
    }
}

pub fn default_solver_command() -> String {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scripts/highs_solve.py")
        .canonicalize()
        .unwrap_or_else(|_| PathBuf::from("scripts/highs_solve.py"));
    format!("python3 {} {{lp}} {{sol}} {{timelimit}} {{focus}} {{start}}", script.display())
}

fn template(cfg: &SolverConfig) -> String {
    cfg.command
        .clone()
        .or_else(|| std::env::var(SOLVER_ENV).ok().filter(|s| !s.trim().is_empty()))
        .unwrap_or_else(default_solver_command)
}

#[derive(Deserialize)]
struct RawSolution {
    status: String,
    objective: Option<f64>,
    #[serde(default)]
    values: HashMap<String, f64>,
}

/// Parses a JSON solution file. The objective is reported as the solver
/// saw it, without the model's constant offset.
pub fn parse_solution(text: &str) -> Result<Solution, Error> {
    let raw: RawSolution = serde_json::from_str(text).map_err(|e| Error::MalformedSolution(e.to_string()))?;
    let status = match raw.status.as_str() {
        "optimal" => SolveStatus::Optimal,
        "feasible" => SolveStatus::Feasible,
        "infeasible" => SolveStatus::Infeasible,
        "timeout" => SolveStatus::Timeout,
        "error" => return Err(Error::SolverCrashed("solver reported an error".into())),
        s => return Err(Error::MalformedSolution(format!("unknown status {s:?}"))),
    };
    if matches!(status, SolveStatus::Optimal | SolveStatus::Feasible) && raw.values.is_empty() {
        return Err(Error::MalformedSolution(format!("{} solution without values", raw.status)));
    }
    Ok(Solution {
        status,
        values: raw.values,
        objective: raw.objective,
        wall_time: 0.0,
    })
}

/// Exports `model`, runs the solver and reads its answer. The returned
/// objective includes the model's constant offset.
pub fn solve(model: &MilpModel, cfg: &SolverConfig) -> Result<Solution, Error> {
    let tmp;
    let dir = match &cfg.keep_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let lp = dir.join("model.lp");
    let sol = dir.join("solution.json");
    std::fs::write(&lp, export_lp(model))?;
    let _ = std::fs::remove_file(&sol);
    let start = match &cfg.start {
        Some(v) => {
            let named: HashMap<&str, f64> = model.vars.iter().zip(v).map(|(x, &a)| (x.name.as_str(), a)).collect();
            let p = dir.join("start.json");
            std::fs::write(&p, serde_json::to_string(&named)?)?;
            Some(p)
        }
        None => None,
    };

    let mut args: Vec<String> = Vec::new();
    for tok in template(cfg).split_whitespace() {
        match tok {
            "{focus}" => {
                if cfg.integer_focus {
                    args.push("--integer-focus".into());
                }
            }
            "{start}" => {
                if let Some(p) = &start {
                    args.push("--start".into());
                    args.push(p.display().to_string());
                }
            }
            _ => args.push(
                tok.replace("{lp}", &lp.display().to_string())
                    .replace("{sol}", &sol.display().to_string())
                    .replace("{timelimit}", &cfg.time_limit.to_string()),
            ),
        }
    }
    let (prog, rest) = args
        .split_first()
        .ok_or_else(|| Error::SolverNotFound("empty solver command".into()))?;
    log::info!(
        "solving {} vars / {} rows with {prog}",
        model.vars.len(),
        model.constraints.len()
    );

    let began = Instant::now();
    let mut child = Command::new(prog)
        .args(rest)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::SolverNotFound(prog.clone()),
            _ => Error::Io(e),
        })?;
    let wall_limit = Duration::from_secs_f64(cfg.time_limit.max(0.0)) + GRACE;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if began.elapsed() > wall_limit {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let wall_time = began.elapsed().as_secs_f64();
    let Some(status) = status else {
        log::warn!("solver killed after {wall_time:.1} s");
        return Ok(Solution {
            status: SolveStatus::Timeout,
            values: HashMap::new(),
            objective: None,
            wall_time,
        });
    };
    let mut stderr = String::new();
    if let Some(mut e) = child.stderr.take() {
        let _ = e.read_to_string(&mut stderr);
    }
    if !status.success() {
        // a shell reporting a missing program exits with 127
        if status.code() == Some(127) {
            return Err(Error::SolverNotFound(format!("{prog}: {}", stderr.trim())));
        }
        return Err(Error::SolverCrashed(format!("{status}: {}", stderr.trim())));
    }
    let text = std::fs::read_to_string(&sol)
        .map_err(|e| Error::MalformedSolution(format!("{}: {e}", sol.display())))?;
    let mut out = parse_solution(&text)?;
    out.wall_time = wall_time;
    out.objective = out.objective.map(|o| o + model.objective_offset);
    Ok(out)
}
