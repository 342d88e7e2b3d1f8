//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the target exits nonzero if any criterion fails. It runs without the
//! libtest harness so the verdicts are always printed.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendezvous::harness::{
    build_report, plan_mission, run_batch, trace_file_name, write_json, write_report, write_trace,
    ExperimentConfig, RunOutput,
};
use rendezvous::model::{
    build_model, check_feasibility, compute_highest_endings, compute_latest_available,
    MissionParams,
};
use rendezvous::plan::{validate_plan, RendezvousPlan};
use rendezvous::policy::PolicyVariant;
use rendezvous::solver::{brute_force, solve_milp, SolveStatus};
use rendezvous::world::{astar_path, detect_frontiers, merge_maps, Cell, CellState, KnownMap};

const OBJ_TOL: f64 = 1e-6;
const ORACLE_INSTANCES: usize = 50;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const LATENESS_TOL_S: f64 = 30.0;
const WAITING_RATIO: f64 = 0.5;
const WAITING_MAX_S: f64 = 30.0;
const AREA_RATIO: f64 = 0.9;

struct Verdicts(Vec<(usize, bool)>);

impl Verdicts {
    fn record(&mut self, n: usize, name: &str, ok: bool, detail: String) {
        println!(
            "{} criterion {n} ({name}): {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        self.0.push((n, ok));
    }
}

fn oracle_equivalence(
    v: &mut Verdicts,
) -> Vec<(MissionParams, Option<rendezvous::model::MilpSolution>)> {
    let started = Instant::now();
    let mut agree = 0;
    let mut feasible = 0;
    let mut solved = Vec::new();
    for p in common::mission_instances(ORACLE_INSTANCES, 101) {
        let bf = brute_force(&p).expect("small instance");
        let bb = solve_milp(&build_model(&p).unwrap(), &p, 100_000).unwrap();
        let same_obj = match (bb.objective, bf.objective) {
            (Some(a), Some(b)) => (a - b).abs() <= OBJ_TOL,
            (None, None) => true,
            _ => false,
        };
        if bb.status == bf.status && same_obj {
            agree += 1;
        }
        if bb.status == SolveStatus::Optimal {
            feasible += 1;
        }
        solved.push((p, bb.solution));
    }
    let elapsed = started.elapsed();
    let ok = agree == ORACLE_INSTANCES
        && elapsed < ORACLE_BUDGET
        && feasible > 0
        && feasible < ORACLE_INSTANCES;
    v.record(
        1,
        "oracle equivalence",
        ok,
        format!(
            "{agree}/{ORACLE_INSTANCES} agree ({feasible} feasible) in {:.1?}",
            elapsed
        ),
    );
    solved
}

fn formulation_fidelity(
    v: &mut Verdicts,
    solved: &[(MissionParams, Option<rendezvous::model::MilpSolution>)],
) {
    let e = vec![vec![0.0, 10.0, 10.0], vec![50.0, 50.0, 100.0]];
    let k = vec![vec![1, 1, 1], vec![1, 1, 1]];
    let h = compute_highest_endings(&e, &k).unwrap();
    let worked = h == vec![10.0, 100.0];
    let mut clean = 0;
    let mut total = 0;
    for (p, sol) in solved {
        let Some(sol) = sol else { continue };
        total += 1;
        let exact_h = compute_highest_endings(&sol.e, &sol.k).unwrap();
        let exact_l = compute_latest_available(&sol.e, &sol.k).unwrap();
        if check_feasibility(sol, p).is_empty() && exact_h == sol.h && exact_l == sol.l {
            clean += 1;
        }
    }
    v.record(
        2,
        "formulation fidelity",
        worked && clean == total && total > 0,
        format!("worked example H = {h:?}; {clean}/{total} optimal solutions violation-free with exact H and L"),
    );
}

fn plan_structure(v: &mut Verdicts, cfg: &ExperimentConfig) -> RendezvousPlan {
    let (report, plan) =
        plan_mission(&cfg.mission, cfg.node_limit).expect("default mission solves");
    let covered: BTreeSet<u32> = plan
        .events
        .iter()
        .flat_map(|e| e.participants.iter().copied())
        .collect();
    let ok = plan.events.len() == 5
        && covered.len() == 3
        && plan
            .events
            .iter()
            .all(|e| e.deadline <= 1800.0 && e.participants.len() == 2)
        && validate_plan(&plan, &cfg.mission).is_empty();
    let summary: Vec<String> = plan
        .events
        .iter()
        .map(|e| format!("{:?}@{}", e.participants, e.deadline))
        .collect();
    v.record(
        3,
        "plan structure",
        ok,
        format!(
            "objective {:.3}, events {}",
            report.objective.unwrap_or(f64::NAN),
            summary.join(" ")
        ),
    );
    plan
}

fn lateness(run: &RunOutput) -> Vec<Option<f64>> {
    run.metrics
        .events
        .iter()
        .map(|e| e.accomplishment.map(|a| a - e.deadline))
        .collect()
}

fn fmt_late(l: &[Option<f64>]) -> String {
    l.iter()
        .map(|x| x.map_or("miss".to_string(), |v| format!("{v:+.0}")))
        .collect::<Vec<_>>()
        .join(",")
}

fn rtus_adherence(v: &mut Verdicts, rtus: &[RunOutput], base: &[RunOutput]) {
    let rtus_ok = rtus.iter().all(|r| {
        lateness(r)
            .iter()
            .all(|l| l.is_some_and(|x| x <= LATENESS_TOL_S))
    });
    let base_breaks = base.iter().all(|r| {
        lateness(r)
            .iter()
            .any(|l| l.is_none_or(|x| x > LATENESS_TOL_S))
    });
    let detail: Vec<String> = rtus
        .iter()
        .zip(base)
        .map(|(r, b)| {
            format!(
                "seed {}: rtus [{}] baseline [{}]",
                r.seed,
                fmt_late(&lateness(r)),
                fmt_late(&lateness(b))
            )
        })
        .collect();
    v.record(
        4,
        "deadline adherence",
        rtus_ok && base_breaks,
        format!("lateness s; {}", detail.join("; ")),
    );
}

fn mean_waiting(runs: &[RunOutput]) -> f64 {
    let w: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.metrics.events.iter().filter_map(|e| e.waiting))
        .collect();
    w.iter().sum::<f64>() / w.len() as f64
}

fn waiting_reduction(v: &mut Verdicts, rtus: &[RunOutput], base: &[RunOutput]) {
    let (a, b) = (mean_waiting(rtus), mean_waiting(base));
    let ok = a < WAITING_RATIO * b && a <= WAITING_MAX_S;
    v.record(
        5,
        "waiting reduction",
        ok,
        format!(
            "mean waiting rtus {a:.2} s, baseline {b:.2} s (ratio {:.3})",
            a / b
        ),
    );
}

fn exploration(v: &mut Verdicts, rtus: &[RunOutput], base: &[RunOutput]) {
    let sum = |runs: &[RunOutput]| runs.iter().map(|r| r.metrics.total_area).sum::<f64>();
    let ratio = sum(rtus) / sum(base);
    let per_seed: Vec<String> = rtus
        .iter()
        .zip(base)
        .map(|(r, b)| format!("{:.3}", r.metrics.total_area / b.metrics.total_area))
        .collect();
    v.record(
        6,
        "exploration non-regression",
        ratio >= AREA_RATIO,
        format!(
            "paired area ratio {ratio:.3}; per seed [{}]",
            per_seed.join(", ")
        ),
    );
}

fn world_oracles(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut astar_ok = 0;
    for _ in 0..50 {
        let k = common::random_known(&mut rng, 30, 30, 0.1, 0.25);
        let free: Vec<Cell> = k.free_cells().collect();
        let a = free[rng.gen_range(0..free.len())];
        let b = free[rng.gen_range(0..free.len())];
        let got = astar_path(&k, a, b).map(|p| p.length / k.cell_size);
        let want = common::dijkstra_cells(&k, a, b);
        let same = match (got, want) {
            (Some(x), Some(y)) => (x - y).abs() < 1e-9,
            (None, None) => true,
            _ => false,
        };
        astar_ok += same as usize;
    }
    let mut frontier_ok = 0;
    for i in 0..50 {
        let side = 5 + i;
        let k = common::random_known(&mut rng, side, 55 - i, 0.3, 0.2);
        let found: BTreeSet<Cell> = detect_frontiers(&k)
            .iter()
            .flat_map(|f| f.cells.clone())
            .collect();
        frontier_ok += (found == common::brute_frontier_cells(&k)) as usize;
    }
    let mut merge_ok = 0;
    for _ in 0..1000 {
        let random_map = |rng: &mut ChaCha8Rng| {
            let mut k = KnownMap::unknown(8, 8, 1.0);
            for r in 0..8 {
                for c in 0..8 {
                    k.set(
                        Cell::new(r, c),
                        [CellState::Unknown, CellState::Free, CellState::Occupied]
                            [rng.gen_range(0..3)],
                    );
                }
            }
            k
        };
        let (a, b, c) = (
            random_map(&mut rng),
            random_map(&mut rng),
            random_map(&mut rng),
        );
        let m = |x: &KnownMap, y: &KnownMap| merge_maps(x, y).unwrap();
        let laws =
            m(&a, &b) == m(&b, &a) && m(&m(&a, &b), &c) == m(&a, &m(&b, &c)) && m(&a, &a) == a;
        merge_ok += laws as usize;
    }
    v.record(
        7,
        "world oracles",
        astar_ok == 50 && frontier_ok == 50 && merge_ok == 1000,
        format!("A* {astar_ok}/50, frontiers {frontier_ok}/50, merge laws {merge_ok}/1000"),
    );
}

fn pipeline(cfg: &ExperimentConfig, dir: &Path) {
    let (report, plan) = plan_mission(&cfg.mission, cfg.node_limit).unwrap();
    write_json(&dir.join("plan.json"), &plan).unwrap();
    write_json(&dir.join("solve_report.json"), &report).unwrap();
    let world = cfg.load_world().unwrap();
    let mut metrics = Vec::new();
    for variant in [PolicyVariant::Rtus, PolicyVariant::Baseline] {
        for run in run_batch(cfg, &world, &plan, variant).unwrap() {
            write_trace(&dir.join(trace_file_name(variant, run.seed)), &run.trace).unwrap();
            metrics.push(run.metrics);
        }
    }
    write_report(dir, &build_report(&metrics).unwrap()).unwrap();
}

fn determinism(v: &mut Verdicts, cfg: &ExperimentConfig) {
    let cfg = cfg.clone().with_seeds(vec![3]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(&cfg, a.path());
    pipeline(&cfg, b.path());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let identical = names
        .iter()
        .filter(|n| {
            fs::read(a.path().join(n)).unwrap()
                == fs::read(b.path().join(n)).ok().unwrap_or_default()
        })
        .count();
    v.record(
        8,
        "determinism",
        identical == names.len() && names.len() >= 5,
        format!("{identical}/{} files byte-identical", names.len()),
    );
}

fn main() {
    let mut v = Verdicts(Vec::new());
    let solved = oracle_equivalence(&mut v);
    formulation_fidelity(&mut v, &solved);

    let cfg = ExperimentConfig::standard();
    let plan = plan_structure(&mut v, &cfg);
    let world = cfg.load_world().unwrap();
    let rtus = run_batch(&cfg, &world, &plan, PolicyVariant::Rtus).unwrap();
    let base = run_batch(&cfg, &world, &plan, PolicyVariant::Baseline).unwrap();
    rtus_adherence(&mut v, &rtus, &base);
    waiting_reduction(&mut v, &rtus, &base);
    exploration(&mut v, &rtus, &base);
    world_oracles(&mut v);
    determinism(&mut v, &cfg);

    let failed: Vec<usize> = v.0.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", v.0.len());
    } else {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
