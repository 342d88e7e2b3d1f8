//! Dense two-phase primal simplex with implicit variable bounds.
//!
//! Variables are shifted to `0 <= y <= u`, fixed columns are substituted out,
//! and every row gets a slack (and, when the slack cannot start basic, an
//! artificial). Nonbasic columns rest at either bound; entering and leaving
//! choices follow Bland's smallest-index rule, so the method terminates and
//! is deterministic for identical input.

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::model::{MilpModel, Relation};

/// Pivot element magnitude below which a column entry is treated as zero.
pub const PIVOT_TOL: f64 = 1e-9;
/// Row residual tolerance for a reported optimum.
pub const LP_FEASIBILITY_TOL: f64 = 1e-7;

const REDUCED_COST_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimize `objective · x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Continuous relaxation of a model.
    pub fn relaxation(model: &MilpModel) -> Self {
        Self {
            objective: model.objective.clone(),
            rows: model
                .constraints
                .iter()
                .map(|c| LpRow {
                    coeffs: c.coeffs.clone(),
                    relation: c.relation,
                    rhs: c.rhs,
                })
                .collect(),
            lower: model.variables.iter().map(|v| v.lower).collect(),
            upper: model.variables.iter().map(|v| v.upper).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "{} objective entries but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if let Some(&(v, _)) = row.coeffs.iter().find(|(v, _)| *v >= n) {
                return Err(SolverError::DimensionMismatch(format!(
                    "row {r} references variable {v} of {n}"
                )));
            }
        }
        if let Some(j) = self.lower.iter().position(|l| !l.is_finite()) {
            return Err(SolverError::DimensionMismatch(format!(
                "variable {j} has a non-finite lower bound"
            )));
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let lhs: f64 = r.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
            r.relation.violation(lhs, r.rhs)
        });
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, pivots: usize) -> Self {
        let objective = if status == LpStatus::Infeasible {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        Self {
            status,
            x: Vec::new(),
            objective,
            pivots,
        }
    }
}

/// Solves `lp` to optimality (or proves it infeasible/unbounded).
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution, SolverError> {
    lp.check()?;
    let n = lp.num_vars();
    let mut range = vec![0.0; n];
    for j in 0..n {
        range[j] = lp.upper[j] - lp.lower[j];
        if range[j] < -LP_FEASIBILITY_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
        }
        range[j] = range[j].max(0.0);
    }

    // Presolve: drop fixed columns, keep the rest in original order.
    let free: Vec<usize> = (0..n).filter(|&j| range[j] > 0.0).collect();
    let mut col_of = vec![usize::MAX; n];
    for (c, &j) in free.iter().enumerate() {
        col_of[j] = c;
    }

    let mut tab = Tableau::build(lp, &free, &col_of, &range);
    let mut pivots = 0;

    // Phase I.
    if tab.num_artificial > 0 {
        let cost: Vec<f64> = (0..tab.n)
            .map(|c| if tab.is_artificial(c) { 1.0 } else { 0.0 })
            .collect();
        tab.set_costs(&cost);
        match tab.run(&mut pivots, true)? {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded => unreachable!("phase one is bounded below by zero"),
        }
        let infeasibility: f64 = (0..tab.m)
            .filter(|&r| tab.is_artificial(tab.basis[r]))
            .map(|r| tab.beta[r])
            .sum();
        if infeasibility > LP_FEASIBILITY_TOL * (1.0 + tab.rhs_scale) {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, pivots));
        }
        // Artificials may stay basic at zero in redundant rows; pin them there.
        for c in 0..tab.n {
            if tab.is_artificial(c) {
                tab.upper[c] = 0.0;
            }
        }
    }

    // Phase II.
    let mut cost = vec![0.0; tab.n];
    for (c, &j) in free.iter().enumerate() {
        cost[c] = lp.objective[j];
    }
    tab.set_costs(&cost);
    if let RunOutcome::Unbounded = tab.run(&mut pivots, false)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, pivots));
    }

    let values = tab.refined_values();
    let mut x = lp.lower.clone();
    for (c, &j) in free.iter().enumerate() {
        x[j] += values[c].clamp(0.0, range[j]);
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        pivots,
    })
}

enum RunOutcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Number of structural (non-slack, non-artificial) columns.
    structural: usize,
    first_artificial: usize,
    num_artificial: usize,
    /// `B^-1 A`, row-major `m × n`.
    a: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    reduced: Vec<f64>,
    cost: Vec<f64>,
    /// Starting tableau and right-hand side, kept for the final refinement.
    orig: Vec<f64>,
    rhs0: Vec<f64>,
    rhs_scale: f64,
}

impl Tableau {
    fn build(lp: &LpProblem, free: &[usize], col_of: &[usize], range: &[f64]) -> Self {
        let m = lp.rows.len();
        let structural = free.len();
        let slacks = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();

        // Shifted right-hand sides: b - A lower.
        let mut rhs: Vec<f64> = lp
            .rows
            .iter()
            .map(|r| r.rhs - r.coeffs.iter().map(|&(v, c)| c * lp.lower[v]).sum::<f64>())
            .collect();
        let mut row_sign = vec![1.0; m];
        let mut slack_sign = vec![0.0; m];
        for (r, row) in lp.rows.iter().enumerate() {
            slack_sign[r] = match row.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => 0.0,
            };
            if rhs[r] < 0.0 {
                row_sign[r] = -1.0;
                rhs[r] = -rhs[r];
            }
        }
        let needs_artificial: Vec<bool> =
            (0..m).map(|r| slack_sign[r] * row_sign[r] <= 0.0).collect();
        let num_artificial = needs_artificial.iter().filter(|&&b| b).count();
        let first_artificial = structural + slacks;
        let n = first_artificial + num_artificial;

        let mut a = vec![0.0; m * n];
        let mut basis = vec![0; m];
        let mut next_slack = structural;
        let mut next_art = first_artificial;
        for (r, row) in lp.rows.iter().enumerate() {
            let base = r * n;
            for &(v, c) in &row.coeffs {
                if col_of[v] != usize::MAX {
                    a[base + col_of[v]] += row_sign[r] * c;
                }
            }
            if slack_sign[r] != 0.0 {
                a[base + next_slack] = row_sign[r] * slack_sign[r];
                if !needs_artificial[r] {
                    basis[r] = next_slack;
                }
                next_slack += 1;
            }
            if needs_artificial[r] {
                a[base + next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }

        let mut upper = vec![f64::INFINITY; n];
        for (c, &j) in free.iter().enumerate() {
            upper[c] = range[j];
        }
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        let rhs_scale = rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Tableau {
            m,
            n,
            structural,
            first_artificial,
            num_artificial,
            orig: a.clone(),
            rhs0: rhs.clone(),
            a,
            beta: rhs,
            basis,
            is_basic,
            upper,
            at_upper: vec![false; n],
            reduced: vec![0.0; n],
            cost: vec![0.0; n],
            rhs_scale,
        }
    }

    fn is_artificial(&self, c: usize) -> bool {
        c >= self.first_artificial
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.cost = cost.to_vec();
        self.reduced = cost.to_vec();
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.a[r * self.n..(r + 1) * self.n];
                for (d, &v) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * v;
                }
            }
        }
    }

    fn run(&mut self, pivots: &mut usize, phase_one: bool) -> Result<RunOutcome, SolverError> {
        loop {
            // Bland: first eligible column.
            let entering = (0..self.n).find(|&c| {
                if self.is_basic[c] || (!phase_one && self.is_artificial(c)) {
                    return false;
                }
                let d = self.reduced[c];
                if self.at_upper[c] {
                    d > REDUCED_COST_TOL
                } else {
                    d < -REDUCED_COST_TOL && self.upper[c] > 0.0
                }
            });
            let Some(q) = entering else {
                return Ok(RunOutcome::Optimal);
            };
            let sigma = if self.at_upper[q] { -1.0 } else { 1.0 };

            // Ratio test; `None` as the leaving row means a bound flip of `q`.
            let mut best_t = self.upper[q];
            let mut best_row: Option<usize> = None;
            let mut best_var = q;
            for r in 0..self.m {
                let alpha = sigma * self.a[r * self.n + q];
                let b = self.basis[r];
                let t = if alpha > PIVOT_TOL {
                    self.beta[r] / alpha
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    (self.upper[b] - self.beta[r]) / -alpha
                } else {
                    continue;
                };
                let t = t.max(0.0);
                if t < best_t - 1e-12 || ((t - best_t).abs() <= 1e-12 && b < best_var) {
                    best_t = t;
                    best_row = Some(r);
                    best_var = b;
                }
            }
            if !best_t.is_finite() {
                return Ok(RunOutcome::Unbounded);
            }

            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(SolverError::IterationLimit(MAX_PIVOTS));
            }

            for r in 0..self.m {
                let a = self.a[r * self.n + q];
                if a != 0.0 {
                    self.beta[r] -= sigma * a * best_t;
                }
            }
            match best_row {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some(r) => {
                    let leaving = self.basis[r];
                    let alpha = sigma * self.a[r * self.n + q];
                    self.at_upper[leaving] = alpha < 0.0;
                    let start = if sigma > 0.0 { 0.0 } else { self.upper[q] };
                    self.pivot(r, q);
                    self.beta[r] = start + sigma * best_t;
                    self.is_basic[leaving] = false;
                    self.is_basic[q] = true;
                    self.at_upper[q] = false;
                    self.basis[r] = q;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let p = self.a[r * n + q];
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.a[r * n..(r + 1) * n].to_vec();
        let nz: Vec<usize> = (0..n).filter(|&c| pivot_row[c] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * n..(i + 1) * n];
            for &c in &nz {
                row[c] -= f * pivot_row[c];
            }
            row[q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for &c in &nz {
                self.reduced[c] -= f * pivot_row[c];
            }
            self.reduced[q] = 0.0;
        }
    }

    /// Recomputes the basic values from the original columns, which removes
    /// drift accumulated by the incremental updates of `beta`.
    fn refined_values(&self) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut value = vec![0.0; n];
        for c in 0..n {
            if !self.is_basic[c] && self.at_upper[c] {
                value[c] = self.upper[c];
            }
        }
        for r in 0..m {
            value[self.basis[r]] = self.beta[r];
        }
        if m == 0 {
            return value[..self.structural].to_vec();
        }
        let mut rhs = self.rhs0.clone();
        for c in 0..n {
            if !self.is_basic[c] && self.at_upper[c] {
                for (r, b) in rhs.iter_mut().enumerate() {
                    *b -= self.orig[r * n + c] * self.upper[c];
                }
            }
        }
        let mut bmat = vec![0.0; m * m];
        for r in 0..m {
            for (k, &c) in self.basis.iter().enumerate() {
                bmat[r * m + k] = self.orig[r * n + c];
            }
        }
        if let Some(xb) = solve_dense(&mut bmat, &mut rhs, m) {
            let worst = xb
                .iter()
                .zip(&self.beta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if worst < 1e-4 * (1.0 + self.rhs_scale) {
                for (k, &c) in self.basis.iter().enumerate() {
                    value[c] = xb[k];
                }
            }
        }
        value[..self.structural].to_vec()
    }
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let piv =
            (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            b.swap(piv, col);
        }
        let p = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / p;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r * m + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * m + r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[(usize, f64)], relation: Relation, rhs: f64) -> LpRow {
        LpRow {
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        }
    }

    #[test]
    fn one_variable_lower_bound_row() {
        let lp = LpProblem {
            objective: vec![1.0],
            rows: vec![
                row(&[(0, 1.0)], Relation::Ge, 3.0),
                row(&[(0, 1.0)], Relation::Le, 10.0),
            ],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LpProblem {
            objective: vec![0.0],
            rows: vec![row(&[(0, 1.0)], Relation::Le, -1.0)],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
        let lp = LpProblem {
            objective: vec![0.0],
            rows: vec![],
            lower: vec![2.0],
            upper: vec![1.0],
        };
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let lp = LpProblem {
            objective: vec![-1.0, 0.0],
            rows: vec![row(&[(0, 1.0), (1, -1.0)], Relation::Le, 1.0)],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let lp = LpProblem {
            objective: vec![-3.0, -5.0],
            rows: vec![
                row(&[(0, 1.0)], Relation::Le, 4.0),
                row(&[(1, 2.0)], Relation::Le, 12.0),
                row(&[(0, 3.0), (1, 2.0)], Relation::Le, 18.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn upper_bounds_and_equalities() {
        // min -x - y, x + y = 5, x <= 2, y in [1, 4] -> x=2? any split; objective -5.
        let lp = LpProblem {
            objective: vec![-1.0, -2.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 5.0)],
            lower: vec![0.0, 1.0],
            upper: vec![2.0, 4.0],
        };
        let s = solve_lp(&lp).unwrap();
        assert!(
            (s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 4.0).abs() < 1e-9,
            "{:?}",
            s.x
        );
        assert!((s.objective + 9.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_columns_are_substituted() {
        let lp = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Relation::Ge, 3.0)],
            lower: vec![2.0, 0.0],
            upper: vec![2.0, 10.0],
        };
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.x, vec![2.0, 1.0]);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling LP; Bland's rule must terminate at -0.05.
        let lp = LpProblem {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            rows: vec![
                row(
                    &[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
                    Relation::Le,
                    0.0,
                ),
                row(
                    &[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
                    Relation::Le,
                    0.0,
                ),
                row(&[(2, 1.0)], Relation::Le, 1.0),
            ],
            lower: vec![0.0; 4],
            upper: vec![f64::INFINITY; 4],
        };
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn dimension_mismatch() {
        let lp = LpProblem {
            objective: vec![1.0],
            rows: vec![row(&[(3, 1.0)], Relation::Le, 1.0)],
            lower: vec![0.0],
            upper: vec![1.0],
        };
        assert!(matches!(
            solve_lp(&lp),
            Err(SolverError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn redundant_equalities() {
        let lp = LpProblem {
            objective: vec![1.0, 2.0],
            rows: vec![
                row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 4.0),
                row(&[(0, 2.0), (1, 2.0)], Relation::Eq, 8.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 4.0).abs() < 1e-9);
        assert!(lp.max_violation(&s.x) < LP_FEASIBILITY_TOL);
    }
}
