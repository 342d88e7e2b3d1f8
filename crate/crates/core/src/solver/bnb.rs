use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::lp::{solve_lp, LpProblem, LpSolution, LpStatus};
use super::{SolveReport, SolveStatus, SolverError};
use crate::model::{MilpModel, MilpSolution, MissionParams};

pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
/// Distance from 0/1 below which a binary column counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// A node is pruned unless its bound beats the incumbent by more than this.
const PRUNE_TOL: f64 = 1e-7;

struct Node {
    bound: f64,
    seq: usize,
    fixed: Vec<Option<bool>>,
    lp: LpSolution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn node_problem(base: &LpProblem, binaries: &[usize], fixed: &[Option<bool>]) -> LpProblem {
    let mut lp = base.clone();
    for (&v, f) in binaries.iter().zip(fixed) {
        if let Some(b) = f {
            let val = if *b { 1.0 } else { 0.0 };
            lp.lower[v] = val;
            lp.upper[v] = val;
        }
    }
    lp
}

/// Most fractional binary; ties go to the lowest variable index.
fn branching_variable(x: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &v) in binaries.iter().enumerate() {
        let frac = x[v] - x[v].floor();
        let dist = frac.min(1.0 - frac);
        if dist > INTEGRALITY_TOL && best.is_none_or(|(_, d)| dist > d + 1e-12) {
            best = Some((pos, dist));
        }
    }
    best.map(|(pos, _)| pos)
}

/// Best-first branch-and-bound over the binary columns of `model`.
///
/// Integral LP points are polished by re-solving with every binary fixed, and
/// the incumbent is converted to a [`MilpSolution`] with exact `H`/`L`.
pub fn solve_milp(
    model: &MilpModel,
    params: &MissionParams,
    node_limit: usize,
) -> Result<SolveReport, SolverError> {
    let started = Instant::now();
    params.validate()?;
    let base = LpProblem::relaxation(model);
    let binaries = model.binary_indices();

    let mut nodes = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut hit_limit = false;

    let mut evaluate =
        |fixed: Vec<Option<bool>>, nodes: &mut usize| -> Result<Option<Node>, SolverError> {
            *nodes += 1;
            let lp = solve_lp(&node_problem(&base, &binaries, &fixed))?;
            if lp.status != LpStatus::Optimal {
                return Ok(None);
            }
            seq += 1;
            Ok(Some(Node {
                bound: lp.objective,
                seq,
                fixed,
                lp,
            }))
        };

    if let Some(root) = evaluate(vec![None; binaries.len()], &mut nodes)? {
        heap.push(root);
    }

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - PRUNE_TOL {
                continue;
            }
        }
        match branching_variable(&node.lp.x, &binaries) {
            None => {
                // Integral: polish with every binary fixed at its rounded value.
                let fixed: Vec<Option<bool>> =
                    binaries.iter().map(|&v| Some(node.lp.x[v] > 0.5)).collect();
                nodes += 1;
                let polished = solve_lp(&node_problem(&base, &binaries, &fixed))?;
                let (obj, x) = if polished.status == LpStatus::Optimal {
                    (polished.objective, polished.x)
                } else {
                    (node.lp.objective, node.lp.x)
                };
                if incumbent
                    .as_ref()
                    .is_none_or(|(best, _)| obj < best - PRUNE_TOL)
                {
                    incumbent = Some((obj, x));
                }
            }
            Some(pos) => {
                if nodes >= node_limit {
                    hit_limit = true;
                    break;
                }
                for value in [false, true] {
                    let mut fixed = node.fixed.clone();
                    fixed[pos] = Some(value);
                    if let Some(child) = evaluate(fixed, &mut nodes)? {
                        heap.push(child);
                    }
                }
            }
        }
    }

    let (status, solution) = match incumbent {
        Some((_, x)) => {
            let sol = MilpSolution::from_vector(&x, params);
            (
                if hit_limit {
                    SolveStatus::NodeLimit
                } else {
                    SolveStatus::Optimal
                },
                Some(sol),
            )
        }
        None if hit_limit => (SolveStatus::NodeLimit, None),
        None => (SolveStatus::Infeasible, None),
    };
    Ok(SolveReport {
        status,
        objective: solution.as_ref().map(|s| s.objective),
        solution,
        nodes,
        wall_time: started.elapsed(),
    })
}
