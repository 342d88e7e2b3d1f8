//! Experiment configuration, batch runs, metric aggregation and the file
//! formats exchanged between pipeline stages.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{build_model, MissionParams, ModelError};
use crate::plan::{extract_plan, validate_plan, PlanError, PlanViolation, RendezvousPlan};
use crate::policy::{PolicyConfig, PolicyVariant};
use crate::sim::{simulate, RunMetrics, SimError, SimOptions, TraceError, TraceRecord};
use crate::solver::{
    brute_force, solve_milp, SolveReport, SolveStatus, SolverError, DEFAULT_NODE_LIMIT,
};
use crate::world::{generate_map, load_map, GridWorld, WorldError};

/// Tolerance for declaring two optimizers' objectives equal.
pub const MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("node limit reached after {0} nodes without an optimal plan")]
    NodeLimit(usize),
    #[error("plan validation failed:\n{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<PlanViolation>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Map { path: PathBuf, source: WorldError },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl HarnessError {
    /// Process exit status: 2 infeasible, 3 validation failure, 4 I/O or format.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Infeasible(_) | HarnessError::NodeLimit(_) | HarnessError::Plan(_) => 2,
            HarnessError::Config(_)
            | HarnessError::Validation(_)
            | HarnessError::Model(_)
            | HarnessError::Sim(SimError::Mismatch(_)) => 3,
            HarnessError::Solver(SolverError::InstanceTooLarge { .. })
            | HarnessError::Solver(SolverError::Model(_)) => 3,
            _ => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> HarnessError + '_ {
    move |source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    }
}

fn default_runs() -> usize {
    5
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_dt() -> f64 {
    1.0
}
fn default_comm_range() -> f64 {
    10.0
}
fn default_sensor_range() -> f64 {
    100.0
}
fn default_speed() -> f64 {
    1.0
}
fn default_cell_size() -> f64 {
    2.0
}
fn default_map_size() -> usize {
    130
}
fn default_map_seed() -> u64 {
    7
}
fn default_jitter() -> f64 {
    0.3
}
fn default_reach() -> f64 {
    0.5
}
fn default_policy() -> PolicyVariant {
    PolicyVariant::Rtus
}
fn default_node_limit() -> usize {
    DEFAULT_NODE_LIMIT
}

/// Everything one experiment needs. Only `mission` is required in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mission: MissionParams,
    /// ASCII map; when absent a desk map is generated from `map_seed`.
    #[serde(default)]
    pub map_path: Option<PathBuf>,
    #[serde(default = "default_map_size")]
    pub map_size: usize,
    #[serde(default = "default_map_seed")]
    pub map_seed: u64,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_comm_range")]
    pub comm_range: f64,
    #[serde(default = "default_sensor_range")]
    pub sensor_range: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default = "default_policy")]
    pub policy: PolicyVariant,
    #[serde(default = "default_jitter")]
    pub utility_jitter: f64,
    #[serde(default = "default_reach")]
    pub reach_fraction: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
}

impl ExperimentConfig {
    pub fn new(mission: MissionParams) -> Self {
        Self {
            mission,
            map_path: None,
            map_size: default_map_size(),
            map_seed: default_map_seed(),
            num_runs: default_runs(),
            seeds: default_seeds(),
            dt: default_dt(),
            comm_range: default_comm_range(),
            sensor_range: default_sensor_range(),
            speed: default_speed(),
            cell_size: default_cell_size(),
            policy: default_policy(),
            utility_jitter: default_jitter(),
            reach_fraction: default_reach(),
            node_limit: default_node_limit(),
        }
    }

    /// Three robots, five rendezvous, 1800 s budget, 120 s minimum job.
    pub fn standard() -> Self {
        Self::new(MissionParams::new(3, 5, 1800.0, 120.0))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text).map_err(json_err(path))?;
        Ok(cfg)
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.num_runs = seeds.len();
        self.seeds = seeds;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.mission.num_robots == 0 {
            return bad("num_robots must be positive".into());
        }
        if self.num_runs != self.seeds.len() {
            return bad(format!(
                "num_runs = {} but {} seeds given",
                self.num_runs,
                self.seeds.len()
            ));
        }
        for (name, v) in [
            ("dt", self.dt),
            ("comm_range", self.comm_range),
            ("sensor_range", self.sensor_range),
            ("speed", self.speed),
            ("cell_size", self.cell_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.reach_fraction) || self.reach_fraction == 0.0 {
            return bad(format!(
                "reach_fraction must be in (0, 1], got {}",
                self.reach_fraction
            ));
        }
        if self.utility_jitter < 0.0 {
            return bad("utility_jitter must be non-negative".into());
        }
        if self.map_path.is_none() && self.map_size < 40 {
            return bad(format!(
                "generated maps need map_size >= 40, got {}",
                self.map_size
            ));
        }
        Ok(())
    }

    pub fn policy_config(&self, variant: PolicyVariant, seed: u64) -> PolicyConfig {
        PolicyConfig {
            variant,
            dt: self.dt,
            speed: self.speed,
            sensor_range: self.sensor_range,
            comm_range: self.comm_range,
            utility_jitter: self.utility_jitter,
            reach_fraction: self.reach_fraction,
            seed,
        }
    }

    pub fn load_world(&self) -> Result<GridWorld, HarnessError> {
        match &self.map_path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                load_map(&text, self.cell_size).map_err(|source| HarnessError::Map {
                    path: p.clone(),
                    source,
                })
            }
            None => Ok(generate_map(
                self.map_size,
                self.cell_size,
                self.mission.num_robots,
                self.map_seed,
            )),
        }
    }
}

/// Solves the mission MILP and extracts the plan.
pub fn plan_mission(
    params: &MissionParams,
    node_limit: usize,
) -> Result<(SolveReport, RendezvousPlan), HarnessError> {
    params.validate()?;
    if let Some(why) = params.structural_infeasibility() {
        return Err(HarnessError::Infeasible(why));
    }
    let model = build_model(params)?;
    let report = solve_milp(&model, params, node_limit)?;
    match (&report.status, &report.solution) {
        (SolveStatus::Optimal, Some(sol)) => {
            let plan = extract_plan(sol, params)?;
            Ok((report, plan))
        }
        (SolveStatus::NodeLimit, _) => Err(HarnessError::NodeLimit(report.nodes)),
        _ => Err(HarnessError::Infeasible(
            "no allocation satisfies the formulation".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSide {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub params: MissionParams,
    pub milp: OracleSide,
    pub brute_force: OracleSide,
    #[serde(rename = "match")]
    pub matches: bool,
}

/// Branch-and-bound against exhaustive enumeration.
pub fn run_oracle(
    params: &MissionParams,
    node_limit: usize,
) -> Result<OracleComparison, HarnessError> {
    let brute = brute_force(params)?;
    let model = build_model(params)?;
    let milp = solve_milp(&model, params, node_limit)?;
    let matches = milp.status == brute.status
        && match (milp.objective, brute.objective) {
            (Some(a), Some(b)) => (a - b).abs() <= MATCH_TOL,
            (None, None) => true,
            _ => false,
        };
    let side = |r: &SolveReport| OracleSide {
        status: r.status,
        objective: r.objective,
        nodes: r.nodes,
    };
    Ok(OracleComparison {
        params: params.clone(),
        milp: side(&milp),
        brute_force: side(&brute),
        matches,
    })
}

/// Rejects plans that break mission invariants.
pub fn check_plan(plan: &RendezvousPlan, params: &MissionParams) -> Result<(), HarnessError> {
    let violations = validate_plan(plan, params);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Validation(violations))
    }
}

/// One simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub variant: PolicyVariant,
    pub trace: Vec<TraceRecord>,
    pub metrics: RunMetrics,
}

/// Simulates `plan` once per configured seed with `variant`.
pub fn run_batch(
    cfg: &ExperimentConfig,
    world: &GridWorld,
    plan: &RendezvousPlan,
    variant: PolicyVariant,
) -> Result<Vec<RunOutput>, HarnessError> {
    cfg.validate()?;
    check_plan(plan, &cfg.mission)?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let opts = SimOptions::new(cfg.policy_config(variant, seed), cfg.mission.m_assign);
            let trace = simulate(world, plan, opts)?;
            let metrics = RunMetrics::from_trace(&trace).map_err(|source| HarnessError::Trace {
                path: PathBuf::from("<memory>"),
                source,
            })?;
            Ok(RunOutput {
                seed,
                variant,
                trace,
                metrics,
            })
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// Newline-delimited JSON, one record per line.
pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for rec in trace {
        serde_json::to_writer(&mut w, rec).map_err(json_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(json_err(path))?);
    }
    Ok(out)
}

pub fn trace_file_name(variant: PolicyVariant, seed: u64) -> String {
    let v = match variant {
        PolicyVariant::Rtus => "rtus",
        PolicyVariant::Baseline => "baseline",
    };
    format!("trace_{v}_seed{seed}.ndjson")
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// `None` for an empty sample; a single value has std 0.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub id: u32,
    pub deadline: f64,
    /// Runs in which the meeting took place.
    pub completed: usize,
    /// Minutes.
    pub accomplishment_min: Option<Stat>,
    /// Seconds.
    pub waiting_s: Option<Stat>,
    /// Seconds past the deadline, worst run.
    pub worst_lateness_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaPoint {
    pub minute: usize,
    pub area_m2: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: PolicyVariant,
    pub seeds: Vec<u64>,
    pub runs: usize,
    /// False when a single run makes the standard deviation undefined; the
    /// reported values are then 0.
    pub std_defined: bool,
    pub events: Vec<EventSummary>,
    pub mean_waiting_s: Option<f64>,
    pub area_curve: Vec<AreaPoint>,
    pub final_area_m2: Stat,
}

/// Aggregates runs of one policy variant.
pub fn aggregate(runs: &[RunMetrics]) -> Result<MetricsReport, HarnessError> {
    let first = runs
        .first()
        .ok_or_else(|| HarnessError::Config("no runs to aggregate".into()))?;
    if runs.iter().any(|r| r.policy != first.policy) {
        return Err(HarnessError::Config("runs mix policy variants".into()));
    }
    let ids: Vec<u32> = first.events.iter().map(|e| e.id).collect();
    if runs
        .iter()
        .any(|r| r.events.iter().map(|e| e.id).collect::<Vec<_>>() != ids)
    {
        return Err(HarnessError::Config("runs follow different plans".into()));
    }
    let events = first
        .events
        .iter()
        .enumerate()
        .map(|(k, ev)| {
            let acc: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.events[k].accomplishment)
                .collect();
            let wait: Vec<f64> = runs.iter().filter_map(|r| r.events[k].waiting).collect();
            EventSummary {
                id: ev.id,
                deadline: ev.deadline,
                completed: acc.len(),
                accomplishment_min: Stat::of(&acc.iter().map(|a| a / 60.0).collect::<Vec<_>>()),
                waiting_s: Stat::of(&wait),
                worst_lateness_s: acc.iter().map(|a| a - ev.deadline).reduce(f64::max),
            }
        })
        .collect();
    let minutes = runs.iter().map(|r| r.area_curve.len()).min().unwrap_or(0);
    let area_curve = (0..minutes)
        .map(|m| AreaPoint {
            minute: m,
            area_m2: Stat::of(&runs.iter().map(|r| r.area_curve[m]).collect::<Vec<_>>())
                .expect("non-empty"),
        })
        .collect();
    let waits: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.events.iter().filter_map(|e| e.waiting))
        .collect();
    Ok(MetricsReport {
        policy: first.policy,
        seeds: runs.iter().map(|r| r.seed).collect(),
        runs: runs.len(),
        std_defined: runs.len() > 1,
        events,
        mean_waiting_s: Stat::of(&waits).map(|s| s.mean),
        area_curve,
        final_area_m2: Stat::of(&runs.iter().map(|r| r.final_area).collect::<Vec<_>>())
            .expect("non-empty"),
    })
}

/// Per-event paired view of two variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub event_id: u32,
    pub deadline_min: f64,
    pub rtus_accomplishment_min: Option<f64>,
    pub baseline_accomplishment_min: Option<f64>,
    pub rtus_waiting_s: Option<f64>,
    pub baseline_waiting_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub variants: BTreeMap<String, MetricsReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparison: Vec<ComparisonRow>,
}

fn variant_key(v: PolicyVariant) -> String {
    match v {
        PolicyVariant::Rtus => "rtus".into(),
        PolicyVariant::Baseline => "baseline".into(),
    }
}

/// Groups runs by variant, aggregates each and pairs the variants when
/// both are present.
pub fn build_report(runs: &[RunMetrics]) -> Result<FullReport, HarnessError> {
    let mut groups: BTreeMap<String, Vec<RunMetrics>> = BTreeMap::new();
    for r in runs {
        groups
            .entry(variant_key(r.policy))
            .or_default()
            .push(r.clone());
    }
    let mut variants = BTreeMap::new();
    for (k, g) in &groups {
        variants.insert(k.clone(), aggregate(g)?);
    }
    let comparison = match (variants.get("rtus"), variants.get("baseline")) {
        (Some(a), Some(b)) if a.events.len() == b.events.len() => a
            .events
            .iter()
            .zip(&b.events)
            .map(|(x, y)| ComparisonRow {
                event_id: x.id,
                deadline_min: x.deadline / 60.0,
                rtus_accomplishment_min: x.accomplishment_min.map(|s| s.mean),
                baseline_accomplishment_min: y.accomplishment_min.map(|s| s.mean),
                rtus_waiting_s: x.waiting_s.map(|s| s.mean),
                baseline_waiting_s: y.waiting_s.map(|s| s.mean),
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(FullReport {
        variants,
        comparison,
    })
}

#[derive(Serialize)]
struct EventRow {
    event_id: u32,
    mean: Option<f64>,
    std: Option<f64>,
}

#[derive(Serialize)]
struct AreaRow {
    minute: usize,
    area_m2_mean: f64,
    area_m2_std: f64,
}

/// Writes `report.json` plus per-variant `accomplishment_*.csv` (accomplishment,
/// minutes), `waiting_*.csv` (waiting, seconds), `area_*.csv` (area, m²) and
/// `comparison.csv` when both variants are present. Returns the paths.
pub fn write_report(dir: &Path, report: &FullReport) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    write_json(&path, report)?;
    written.push(path);
    for (key, rep) in &report.variants {
        let p5 = dir.join(format!("accomplishment_{key}.csv"));
        let mut w = csv::Writer::from_path(&p5)?;
        for e in &rep.events {
            w.serialize(EventRow {
                event_id: e.id,
                mean: e.accomplishment_min.map(|s| s.mean),
                std: e.accomplishment_min.map(|s| s.std),
            })?;
        }
        w.flush().map_err(io_err(&p5))?;
        written.push(p5);

        let p6 = dir.join(format!("waiting_{key}.csv"));
        let mut w = csv::Writer::from_path(&p6)?;
        for e in &rep.events {
            w.serialize(EventRow {
                event_id: e.id,
                mean: e.waiting_s.map(|s| s.mean),
                std: e.waiting_s.map(|s| s.std),
            })?;
        }
        w.flush().map_err(io_err(&p6))?;
        written.push(p6);

        let p7 = dir.join(format!("area_{key}.csv"));
        let mut w = csv::Writer::from_path(&p7)?;
        for a in &rep.area_curve {
            w.serialize(AreaRow {
                minute: a.minute,
                area_m2_mean: a.area_m2.mean,
                area_m2_std: a.area_m2.std,
            })?;
        }
        w.flush().map_err(io_err(&p7))?;
        written.push(p7);
    }
    if !report.comparison.is_empty() {
        let pc = dir.join("comparison.csv");
        let mut w = csv::Writer::from_path(&pc)?;
        for row in &report.comparison {
            w.serialize(row)?;
        }
        w.flush().map_err(io_err(&pc))?;
        written.push(pc);
    }
    Ok(written)
}

/// Reads trace files and derives each run's metrics.
pub fn metrics_from_traces(paths: &[PathBuf]) -> Result<Vec<RunMetrics>, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::Config(
            "at least one trace is required".into(),
        ));
    }
    paths
        .iter()
        .map(|p| {
            let trace = read_trace(p)?;
            RunMetrics::from_trace(&trace).map_err(|source| HarnessError::Trace {
                path: p.clone(),
                source,
            })
        })
        .collect()
}
