//! MILP versus HEFT comparison over a manifest of instances and weights.
//!
//! Manifest (TOML, or JSON with the same keys):
//!
//! ```toml
//! jobs = 4                 # worker pool width, also the solver process cap
//! time_limit = 60.0        # seconds per solve
//! solver_cmd = "..."       # optional command template
//! integer_focus = false
//! warm_start = true
//! weights = ["1/3,1/3,1/3", "1,0,0"]   # or: weight_step = 0.5
//!
//! [[instance]]
//! fixture = "real-world-C1"
//!
//! [[instance]]
//! path = "inst/foo.json"
//!
//! [[suite]]
//! tasks = [10, 20]
//! seeds = [0, 1, 2]
//! config = "C1"
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hubsched::instance::InstanceFile;
use hubsched::milp::{self, SolverConfig};
use hubsched::schedule::Outcome;
use hubsched::validator;
use hubsched::workload::{self, Config, GenSpec};
use hubsched::{ObjectiveWeights, Problem};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_limit")]
    pub time_limit: f64,
    pub solver_cmd: Option<String>,
    #[serde(default)]
    pub integer_focus: bool,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default)]
    pub weights: Vec<String>,
    pub weight_step: Option<f64>,
    #[serde(default)]
    pub instance: Vec<InstanceEntry>,
    #[serde(default)]
    pub suite: Vec<Suite>,
    #[serde(skip)]
    base: PathBuf,
}

fn default_jobs() -> usize {
    1
}

fn default_limit() -> f64 {
    60.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub fixture: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub tasks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub config: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: Manifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn weight_grid(&self) -> Result<Vec<ObjectiveWeights>> {
        let mut out = self
            .weights
            .iter()
            .map(|w| w.parse::<ObjectiveWeights>())
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(step) = self.weight_step {
            out.extend(workload::sweep_weights(step)?);
        }
        if out.is_empty() {
            out.push(ObjectiveWeights::equal());
        }
        Ok(out)
    }

    /// Named instances in manifest order.
    pub fn instances(&self) -> Result<Vec<(String, InstanceFile)>> {
        let mut out = Vec::new();
        for e in &self.instance {
            let (name, inst) = match (&e.path, &e.fixture) {
                (Some(p), None) => {
                    let p = self.base.join(p);
                    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    (stem, InstanceFile::load(&p).with_context(|| format!("loading {}", p.display()))?)
                }
                (None, Some(f)) => (f.clone(), crate::fixture(f)?),
                _ => bail!("instance entry needs exactly one of `path` and `fixture`"),
            };
            out.push((e.name.clone().unwrap_or(name), inst));
        }
        for s in &self.suite {
            let config: Config = s.config.parse()?;
            for &tasks in &s.tasks {
                for &seed in &s.seeds {
                    let inst = workload::generate(&GenSpec::new(tasks, seed, config))?;
                    out.push((format!("tg{tasks}-s{seed}-{config}"), inst));
                }
            }
        }
        Ok(out)
    }
}

/// One method's result on one cell.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub status: String,
    pub latency: Option<f64>,
    pub energy: Option<f64>,
    pub reliability: Option<f64>,
    pub g: Option<f64>,
    pub replicas: Option<usize>,
    pub wall_time: f64,
    pub schedule: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CellRow {
    pub instance: String,
    pub tasks: usize,
    pub weights: String,
    pub milp: RunRecord,
    pub heft: RunRecord,
    /// Percent; empty unless both methods are feasible.
    pub improvement_latency: Option<f64>,
    pub improvement_energy: Option<f64>,
    pub improvement_reliability: Option<f64>,
    /// `g_heft - g_milp`, non-negative when the MILP is solved to optimality.
    pub delta_g: Option<f64>,
}

const RUN_COLUMNS: [&str; 8] = ["status", "latency", "energy", "reliability", "g", "replicas", "wall_time", "schedule"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    fn fields(&self) -> Vec<String> {
        vec![
            self.status.clone(),
            opt(self.latency),
            opt(self.energy),
            opt(self.reliability),
            opt(self.g),
            opt(self.replicas),
            self.wall_time.to_string(),
            opt(self.schedule.clone()),
        ]
    }
}

impl CellRow {
    fn header() -> Vec<String> {
        let mut h: Vec<String> = ["instance", "tasks", "weights"].map(String::from).to_vec();
        for m in ["milp", "heft"] {
            h.extend(RUN_COLUMNS.iter().map(|c| format!("{m}_{c}")));
        }
        h.extend(
            ["improvement_latency", "improvement_energy", "improvement_reliability", "delta_g"].map(String::from),
        );
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.instance.clone(), self.tasks.to_string(), self.weights.clone()];
        f.extend(self.milp.fields());
        f.extend(self.heft.fields());
        f.extend(
            [self.improvement_latency, self.improvement_energy, self.improvement_reliability, self.delta_g].map(opt),
        );
        f
    }
}

/// Relative improvement of the MILP over HEFT in percent: positive when
/// the MILP is better. Reliability is better when larger.
pub fn improvements(milp: &RunRecord, heft: &RunRecord) -> Option<[f64; 3]> {
    let pct = |better: f64, worse_base: f64| {
        if worse_base == 0.0 {
            0.0
        } else {
            100.0 * better / worse_base
        }
    };
    Some([
        pct(heft.latency? - milp.latency?, heft.latency?),
        pct(heft.energy? - milp.energy?, heft.energy?),
        pct(milp.reliability? - heft.reliability?, heft.reliability?),
    ])
}

struct Cell<'a> {
    instance: &'a str,
    file: &'a InstanceFile,
    wi: usize,
    weights: ObjectiveWeights,
}

fn record(method: &str, cell: &Cell, outcome: &Outcome, p: &Problem, status: String, wall: f64, dir: &Path) -> Result<(RunRecord, bool)> {
    let Some(s) = outcome.schedule() else {
        return Ok((
            RunRecord {
                status,
                wall_time: wall,
                ..RunRecord::default()
            },
            true,
        ));
    };
    let clean = validator::check_schedule(s, &p.etag, p.deadline).is_clean();
    let file = format!("{}-w{}-{method}.json", cell.instance, cell.wi);
    std::fs::write(dir.join(&file), s.to_json())?;
    let o = &s.objectives;
    Ok((
        RunRecord {
            status: if clean { status } else { "invalid".into() },
            latency: Some(o.latency),
            energy: Some(o.energy),
            reliability: Some(o.reliability),
            g: Some(o.g),
            replicas: Some(s.replica_count()),
            wall_time: wall,
            schedule: Some(format!("schedules/{file}")),
        },
        clean,
    ))
}

fn run_cell(cell: &Cell, m: &Manifest, dir: &Path) -> Result<(CellRow, usize)> {
    let inst = cell.file.to_instance()?;
    let p = Problem::from_instance(&inst)?.with_weights(cell.weights);
    let mut invalid = 0;

    let began = Instant::now();
    let h = hubsched::heft::run_heft(&p)?;
    let status = if h.outcome.is_feasible() { "feasible" } else { "infeasible" };
    let (heft, ok) = record("heft", cell, &h.outcome, &p, status.into(), began.elapsed().as_secs_f64(), dir)?;
    invalid += usize::from(!ok);

    let cfg = SolverConfig {
        command: m.solver_cmd.clone(),
        time_limit: m.time_limit,
        integer_focus: m.integer_focus,
        warm_start: m.warm_start,
        ..SolverConfig::default()
    };
    let milp = match milp::run(&p, &cfg) {
        Ok(r) => {
            let status = format!("{:?}", r.status).to_lowercase();
            let (rec, ok) = record("milp", cell, &r.outcome, &p, status, r.wall_time, dir)?;
            invalid += usize::from(!ok);
            rec
        }
        Err(e) => {
            log::warn!("{} w{}: {e}", cell.instance, cell.wi);
            RunRecord {
                status: format!("error: {e}"),
                ..RunRecord::default()
            }
        }
    };
    let imp = improvements(&milp, &heft);
    let row = CellRow {
        instance: cell.instance.to_string(),
        tasks: inst.workflow.tasks.len(),
        weights: cell.weights.to_string(),
        improvement_latency: imp.map(|v| v[0]),
        improvement_energy: imp.map(|v| v[1]),
        improvement_reliability: imp.map(|v| v[2]),
        delta_g: heft.g.zip(milp.g).map(|(h, m)| h - m),
        milp,
        heft,
    };
    Ok((row, invalid))
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    /// Task count, or `overall`.
    pub bucket: String,
    pub cells: usize,
    pub both_feasible: usize,
    pub mean_latency: Option<f64>,
    pub mean_energy: Option<f64>,
    pub mean_reliability: Option<f64>,
    pub median_latency: Option<f64>,
    pub median_energy: Option<f64>,
    pub median_reliability: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn summarize(rows: &[CellRow]) -> Vec<SummaryRow> {
    let mut buckets: BTreeMap<usize, Vec<&CellRow>> = BTreeMap::new();
    for r in rows {
        buckets.entry(r.tasks).or_default().push(r);
    }
    let one = |bucket: String, rows: &[&CellRow]| {
        let col = |f: fn(&CellRow) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
        let (l, e, r) = (
            col(|r| r.improvement_latency),
            col(|r| r.improvement_energy),
            col(|r| r.improvement_reliability),
        );
        SummaryRow {
            bucket,
            cells: rows.len(),
            both_feasible: l.len(),
            mean_latency: mean(&l),
            mean_energy: mean(&e),
            mean_reliability: mean(&r),
            median_latency: median(&l),
            median_energy: median(&e),
            median_reliability: median(&r),
        }
    };
    let mut out: Vec<SummaryRow> = buckets.iter().map(|(k, v)| one(k.to_string(), v)).collect();
    out.push(one("overall".into(), &rows.iter().collect::<Vec<_>>()));
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell and writes `cells.csv`, `summary.csv` and the schedules
/// under `out`. Returns the number of schedules that failed validation.
pub fn run(m: &Manifest, out: &Path, jobs: Option<usize>) -> Result<usize> {
    let schedules = out.join("schedules");
    std::fs::create_dir_all(&schedules)?;
    let weights = m.weight_grid()?;
    let instances = m.instances()?;
    let cells: Vec<Cell> = instances
        .iter()
        .flat_map(|(name, file)| {
            weights.iter().enumerate().map(move |(wi, &w)| Cell {
                instance: name,
                file,
                wi,
                weights: w,
            })
        })
        .collect();
    let width = jobs.unwrap_or(m.jobs).max(1);
    log::info!("{} cells on {width} workers", cells.len());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(width).build()?;
    let results: Vec<(CellRow, usize)> =
        pool.install(|| cells.par_iter().map(|c| run_cell(c, m, &schedules)).collect::<Result<_>>())?;

    let invalid = results.iter().map(|r| r.1).sum();
    let rows: Vec<CellRow> = results.into_iter().map(|r| r.0).collect();
    let summary = summarize(&rows);
    let mut w = csv::Writer::from_path(out.join("cells.csv"))?;
    w.write_record(CellRow::header())?;
    for r in &rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    write_csv(&out.join("summary.csv"), &summary)?;
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}%"));
    println!("{:>10} {:>6} {:>10} {:>10} {:>10}", "tasks", "cells", "latency", "energy", "reliab.");
    for s in &summary {
        println!(
            "{:>10} {:>6} {:>10} {:>10} {:>10}",
            s.bucket,
            s.cells,
            show(s.mean_latency),
            show(s.mean_energy),
            show(s.mean_reliability)
        );
    }
    Ok(invalid)
}
