use std::time::Instant;

use super::lp::{solve_lp, LpProblem, LpStatus};
use super::{SolveReport, SolveStatus, SolverError};
use crate::model::{build_model, MilpSolution, MissionParams, VarLayout};

/// Largest number of allocation matrices [`brute_force`] will enumerate.
pub const ENUMERATION_BUDGET: usize = 4096;

/// Does allocation `mask` (bit `i * R + j` is `k_ij`) pass the allocation
/// bounds on rows and columns?
fn allocation_ok(mask: usize, params: &MissionParams) -> bool {
    let (ns, nr) = (params.num_rendezvous, params.num_robots);
    let bit = |i: usize, j: usize| (mask >> (i * nr + j)) & 1;
    let rows_ok = (0..ns).all(|i| {
        let a: usize = (0..nr).map(|j| bit(i, j)).sum();
        a >= params.min_robots && a <= params.max_robots && a < nr
    });
    rows_ok && (0..nr).all(|j| (0..ns).any(|i| bit(i, j) == 1))
}

/// Exhaustive oracle: every `K` that passes the allocation bounds is fixed in
/// turn and the remaining continuous LP is solved; the best objective wins
/// (first in enumeration order on ties).
pub fn brute_force(params: &MissionParams) -> Result<SolveReport, SolverError> {
    let started = Instant::now();
    params.validate()?;
    let cells = params.num_jobs();
    if cells >= usize::BITS as usize || (1usize << cells) > ENUMERATION_BUDGET {
        return Err(SolverError::InstanceTooLarge {
            cells,
            budget: ENUMERATION_BUDGET,
        });
    }
    let model = build_model(params)?;
    let lay = VarLayout::new(params);
    let base = LpProblem::relaxation(&model);

    let mut nodes = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1usize << cells) {
        if !allocation_ok(mask, params) {
            continue;
        }
        let mut lp = base.clone();
        for v in lay.binary_indices() {
            let val = ((mask >> v) & 1) as f64;
            lp.lower[v] = val;
            lp.upper[v] = val;
        }
        nodes += 1;
        let sol = solve_lp(&lp)?;
        if sol.status == LpStatus::Optimal
            && best.as_ref().is_none_or(|(b, _)| sol.objective < b - 1e-9)
        {
            best = Some((sol.objective, sol.x));
        }
    }

    let solution = best.map(|(_, x)| MilpSolution::from_vector(&x, params));
    Ok(SolveReport {
        status: if solution.is_some() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        },
        objective: solution.as_ref().map(|s| s.objective),
        solution,
        nodes,
        wall_time: started.elapsed(),
    })
}

/// Allocation matrices that pass the row and column bounds, in enumeration order.
pub fn feasible_allocations(params: &MissionParams) -> Vec<Vec<Vec<u8>>> {
    let (ns, nr) = (params.num_rendezvous, params.num_robots);
    let cells = ns * nr;
    if cells >= usize::BITS as usize || (1usize << cells) > ENUMERATION_BUDGET {
        return Vec::new();
    }
    (0..(1usize << cells))
        .filter(|&m| allocation_ok(m, params))
        .map(|m| {
            (0..ns)
                .map(|i| (0..nr).map(|j| ((m >> (i * nr + j)) & 1) as u8).collect())
                .collect()
        })
        .collect()
}
