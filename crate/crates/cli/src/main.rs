use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hubsched::instance::{Instance, InstanceFile};
use hubsched::milp::{self, SolverConfig};
use hubsched::oracle::{run_oracle, OracleLimits};
use hubsched::schedule::Outcome;
use hubsched::validator::{self, ViolationReport};
use hubsched::workload::{self, fixtures, Config, GenSpec};
use hubsched::{Error, ObjectiveWeights, Problem, Schedule};

mod bench;

#[derive(Parser)]
#[command(name = "hubsched", version, about = "Workflow scheduling on edge-hub-cloud systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the allocation graph and print its size.
    Transform {
        instance: PathBuf,
        /// Write the graph as JSON (`-` for stdout).
        #[arg(long)]
        dump_etag: Option<PathBuf>,
    },
    /// Solve the MILP with an external solver.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solver limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        /// Command template; see the README for placeholders.
        #[arg(long)]
        solver_cmd: Option<String>,
        /// Favor feasible solutions over proving optimality.
        #[arg(long)]
        integer_focus: bool,
        /// Do not seed the solver with the heuristic's schedule.
        #[arg(long)]
        no_warm_start: bool,
        /// Keep the LP and solution files in this directory.
        #[arg(long)]
        keep: Option<PathBuf>,
        /// Only write the LP file and exit.
        #[arg(long)]
        lp_only: bool,
    },
    /// Run the reliability-aware HEFT heuristic.
    Heft {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive search for tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        max_tasks: usize,
        #[arg(long, default_value_t = 24)]
        max_nodes: usize,
        /// Seconds.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Check a schedule against an instance; exit 0 iff no violations.
    Validate {
        schedule: PathBuf,
        instance: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic instance.
    Gen {
        #[arg(long)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "C1")]
        config: Config,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a built-in instance: real-world-C1/C2/C3, duplication, single-task,
    /// chain, or tiny-<seed>.
    Fixture {
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare MILP and HEFT over a manifest of instances and weights.
    Bench {
        manifest: PathBuf,
        /// Output directory for cells.csv, summary.csv and schedules.
        #[arg(short, long, default_value = "bench-out")]
        out: PathBuf,
        /// Worker count; overrides the manifest.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    instance: PathBuf,
    /// `latency,energy,reliability`, e.g. `1/3,1/3,1/3`; overrides the
    /// instance's weights.
    #[arg(long)]
    weights: Option<ObjectiveWeights>,
    /// Schedule output (`-` or omitted for stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl Common {
    fn problem(&self) -> Result<Problem> {
        load_problem(&self.instance, self.weights)
    }
}

pub(crate) fn load_problem(path: &Path, weights: Option<ObjectiveWeights>) -> Result<Problem> {
    let inst = Instance::load(path).with_context(|| format!("loading {}", path.display()))?;
    let p = Problem::from_instance(&inst)?;
    Ok(match weights {
        Some(w) => p.with_weights(w),
        None => p,
    })
}

/// Failure with a specific exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

const INFEASIBLE: u8 = 2;
const INVALID: u8 = 3;
const SOLVER: u8 = 4;

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = e.downcast_ref::<Exit>() {
        return *code;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::SolverNotFound(_)
            | Error::SolverCrashed(_)
            | Error::MalformedSolution(_)
            | Error::InconsistentSolution(_),
        ) => SOLVER,
        _ => 1,
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

/// Writes a feasible schedule after re-validating it, or reports
/// infeasibility.
fn emit(outcome: &Outcome, problem: &Problem, output: Option<&Path>) -> Result<()> {
    match outcome {
        Outcome::Scheduled(s) => {
            let report = validator::check_schedule(s, &problem.etag, problem.deadline);
            write_out(output, &s.to_json())?;
            log::info!(
                "latency {:.6} s, energy {:.6} J, reliability {:.9}, g {:.6}",
                s.objectives.latency,
                s.objectives.energy,
                s.objectives.reliability,
                s.objectives.g
            );
            if !report.is_clean() {
                bail!(Exit(INVALID, format!("schedule fails validation: {}", json(&report))));
            }
            Ok(())
        }
        Outcome::Infeasible(why) => bail!(Exit(INFEASIBLE, format!("infeasible: {why}"))),
    }
}

#[derive(Serialize)]
struct EtagSummary {
    tasks: usize,
    nodes: usize,
    arcs: usize,
    replica_tasks: usize,
    node_bound: usize,
    arc_bound: usize,
    deadline_s: f64,
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    clean: bool,
    objectives: hubsched::objective::Objectives,
    #[serde(flatten)]
    report: &'a ViolationReport,
}

pub(crate) fn fixture(name: &str) -> Result<InstanceFile> {
    Ok(match name {
        "duplication" => fixtures::duplication_example(),
        "single-task" => fixtures::single_task(),
        "chain" => fixtures::chain_for_deadline(),
        _ => {
            if let Some(cfg) = name.strip_prefix("real-world-") {
                fixtures::real_world(cfg)?
            } else if let Some(seed) = name.strip_prefix("tiny-") {
                workload::tiny_instance(seed.parse().context("tiny-<seed>")?)
            } else {
                bail!("unknown fixture {name:?}")
            }
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform { instance, dump_etag } => {
            let inst = Instance::load(&instance).with_context(|| format!("loading {}", instance.display()))?;
            let p = Problem::from_instance(&inst)?;
            let etag = &p.etag;
            let (node_bound, arc_bound) = hubsched::transform::etag_size_bounds(
                inst.workflow.tasks.len(),
                inst.workflow.arcs.len(),
                inst.system.core_count(),
            );
            let summary = EtagSummary {
                tasks: etag.tasks.len(),
                nodes: etag.nodes.len(),
                arcs: etag.arcs.len(),
                replica_tasks: etag.tasks.iter().filter(|t| t.copies() == 2).count(),
                node_bound,
                arc_bound,
                deadline_s: p.deadline,
            };
            match dump_etag {
                Some(path) => write_out(Some(&path), &json(&etag.dump()))?,
                None => print!("{}", json(&summary)),
            }
            if summary.nodes > node_bound || summary.arcs > arc_bound {
                bail!("graph exceeds its size bounds");
            }
            Ok(())
        }
        Command::Solve {
            common,
            time_limit,
            solver_cmd,
            integer_focus,
            no_warm_start,
            keep,
            lp_only,
        } => {
            let p = common.problem()?;
            if lp_only {
                let model = milp::build_model(&p);
                return write_out(common.output.as_deref(), &milp::export_lp(&model));
            }
            let cfg = SolverConfig {
                command: solver_cmd,
                time_limit,
                integer_focus,
                start: None,
                warm_start: !no_warm_start,
                keep_dir: keep,
            };
            let run = milp::run(&p, &cfg)?;
            log::info!(
                "{:?} in {:.2} s; {} vars ({} binary), {} constraints",
                run.status,
                run.wall_time,
                run.vars,
                run.binaries,
                run.constraints
            );
            emit(&run.outcome, &p, common.output.as_deref())
        }
        Command::Heft { common } => {
            let p = common.problem()?;
            let run = hubsched::heft::run_heft(&p)?;
            emit(&run.outcome, &p, common.output.as_deref())
        }
        Command::Oracle {
            common,
            max_tasks,
            max_nodes,
            time_limit,
        } => {
            let p = common.problem()?;
            let limits = OracleLimits {
                max_tasks,
                max_nodes,
                time_limit: time_limit.map(Duration::from_secs_f64),
            };
            let run = run_oracle(&p, &limits)?;
            log::info!("{} allocations, {} steps", run.allocations, run.steps);
            emit(&run.outcome, &p, common.output.as_deref())
        }
        Command::Validate {
            schedule,
            instance,
            output,
        } => {
            let s = Schedule::load(&schedule).with_context(|| format!("loading {}", schedule.display()))?;
            let p = load_problem(&instance, Some(s.weights))?;
            let report = validator::check_schedule(&s, &p.etag, p.deadline);
            let out = ValidationOutput {
                clean: report.is_clean(),
                objectives: validator::objectives(&s, &p),
                report: &report,
            };
            write_out(output.as_deref(), &json(&out))?;
            if !report.is_clean() {
                bail!(Exit(INVALID, format!("{} violations", report.violations.len())));
            }
            Ok(())
        }
        Command::Gen {
            tasks,
            seed,
            config,
            output,
        } => {
            let inst = workload::generate(&GenSpec::new(tasks, seed, config))?;
            write_out(output.as_deref(), &json(&inst))
        }
        Command::Fixture { name, output } => write_out(output.as_deref(), &json(&fixture(&name)?)),
        Command::Bench { manifest, out, jobs } => {
            let m = bench::Manifest::load(&manifest)?;
            let invalid = bench::run(&m, &out, jobs)?;
            if invalid > 0 {
                bail!(Exit(INVALID, format!("{invalid} schedules failed validation")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
