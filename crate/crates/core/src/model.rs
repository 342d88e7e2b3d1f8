//! Rendezvous-plan MILP.
//!
//! Decision variables are laid out as five `S × R` blocks (`k`, `s`, `e`, `l`)
//! plus the `h` array, followed by the objective auxiliaries: one `w` for the
//! absolute total-work error and one `d[i][j]` per job for the absolute
//! deviation from the mean job length. Rows are tagged with the constraint
//! family they implement so that violations can be reported by name.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on time values for every feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid-params: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solution violates invariants: {0}")]
    InvalidSolution(String),
}

/// Everything the rendezvous MILP needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "MissionParamsRepr")]
pub struct MissionParams {
    pub num_robots: usize,
    pub num_rendezvous: usize,
    /// Mission time budget, seconds.
    pub m_assign: f64,
    /// Minimum length of an allocated job, seconds.
    pub min_proc: f64,
    pub min_robots: usize,
    pub max_robots: usize,
    pub alpha: f64,
    pub beta: f64,
    pub big_m: f64,
}

#[derive(Deserialize)]
struct MissionParamsRepr {
    num_robots: usize,
    num_rendezvous: usize,
    m_assign: f64,
    min_proc: f64,
    min_robots: Option<usize>,
    max_robots: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    big_m: Option<f64>,
}

impl From<MissionParamsRepr> for MissionParams {
    fn from(r: MissionParamsRepr) -> Self {
        let mut p = MissionParams::new(r.num_robots, r.num_rendezvous, r.m_assign, r.min_proc);
        if let Some(v) = r.min_robots {
            p.min_robots = v;
            p.max_robots = p.max_robots.max(v);
        }
        if let Some(v) = r.max_robots {
            p.max_robots = v;
        }
        p.alpha = r.alpha.unwrap_or(p.alpha);
        p.beta = r.beta.unwrap_or(p.beta);
        p.big_m = r.big_m.unwrap_or(p.big_m);
        p
    }
}

impl MissionParams {
    /// Parameters with the default weights (`alpha = beta = 1`), team sizes
    /// (`2..=R-1`) and `big_m = 2 * m_assign`.
    pub fn new(num_robots: usize, num_rendezvous: usize, m_assign: f64, min_proc: f64) -> Self {
        let min_robots = 2;
        Self {
            num_robots,
            num_rendezvous,
            m_assign,
            min_proc,
            min_robots,
            max_robots: num_robots.saturating_sub(1).max(min_robots),
            alpha: 1.0,
            beta: 1.0,
            big_m: 2.0 * m_assign,
        }
    }

    pub fn with_weights(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_team_size(mut self, min_robots: usize, max_robots: usize) -> Self {
        self.min_robots = min_robots;
        self.max_robots = max_robots;
        self
    }

    /// Upper bound on a rendezvous' team size once the `R - 1` cap applies.
    pub fn team_cap(&self) -> usize {
        self.max_robots.min(self.num_robots.saturating_sub(1))
    }

    pub fn num_jobs(&self) -> usize {
        self.num_robots * self.num_rendezvous
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidParams(m));
        if self.num_robots < 2 {
            return fail(format!(
                "num_robots >= 2 violated (got {}); min_robots <= R-1 cannot hold",
                self.num_robots
            ));
        }
        if self.num_rendezvous < 1 {
            return fail("num_rendezvous >= 1 violated".into());
        }
        if self.min_robots < 2 {
            return fail(format!(
                "min_robots >= 2 violated (got {})",
                self.min_robots
            ));
        }
        if self.min_robots > self.max_robots {
            return fail(format!(
                "min_robots <= max_robots violated ({} > {})",
                self.min_robots, self.max_robots
            ));
        }
        if !(self.m_assign.is_finite() && self.min_proc.is_finite()) {
            return fail("m_assign and min_proc must be finite".into());
        }
        if !(self.min_proc > 0.0 && self.min_proc <= self.m_assign) {
            return fail(format!(
                "0 < min_proc <= m_assign violated (min_proc={}, m_assign={})",
                self.min_proc, self.m_assign
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha >= 0 violated (got {})", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta >= 0 violated (got {})", self.beta));
        }
        if !(self.big_m.is_finite() && self.big_m >= 2.0 * self.m_assign) {
            return fail(format!(
                "big_m >= 2*m_assign violated (big_m={}, m_assign={})",
                self.big_m, self.m_assign
            ));
        }
        Ok(())
    }

    /// Cheap structural reasons the model can have no feasible `K`, named by
    /// the constraint tag responsible. `None` does not imply feasibility.
    pub fn structural_infeasibility(&self) -> Option<String> {
        let cap = self.team_cap();
        if self.min_robots > self.num_robots.saturating_sub(1) {
            return Some(format!(
                "e4: a_i <= R-1 = {} < min_robots = {}",
                self.num_robots.saturating_sub(1),
                self.min_robots
            ));
        }
        if self.min_robots > cap {
            return Some(format!(
                "e3: max_robots = {} < min_robots = {}",
                cap, self.min_robots
            ));
        }
        if self.num_rendezvous * cap < self.num_robots {
            return Some(format!(
                "e1: {} rendezvous of at most {} robots cannot cover {} robots",
                self.num_rendezvous, cap, self.num_robots
            ));
        }
        if self.min_proc > self.m_assign {
            return Some("c4: min_proc exceeds the horizon".into());
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    /// Signed violation of `lhs rel rhs`; non-positive when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Relation::Le => lhs - rhs,
            Relation::Ge => rhs - lhs,
            Relation::Eq => (lhs - rhs).abs(),
        }
    }
}

/// Constraint families of the formulation. `WPos`/`WNeg` and `DevPos`/`DevNeg`
/// are the objective linearization rows; `HExact`/`LExact` only appear in
/// feasibility reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    A1,
    B1,
    B2,
    B3,
    B4,
    B5,
    C1,
    C2,
    C3,
    C4,
    D1,
    D2,
    E1,
    E2,
    E3,
    E4,
    F1,
    F2,
    F3,
    F4,
    WPos,
    WNeg,
    DevPos,
    DevNeg,
    HExact,
    LExact,
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintTag::A1 => "a1",
            ConstraintTag::B1 => "b1",
            ConstraintTag::B2 => "b2",
            ConstraintTag::B3 => "b3",
            ConstraintTag::B4 => "b4",
            ConstraintTag::B5 => "b5",
            ConstraintTag::C1 => "c1",
            ConstraintTag::C2 => "c2",
            ConstraintTag::C3 => "c3",
            ConstraintTag::C4 => "c4",
            ConstraintTag::D1 => "d1",
            ConstraintTag::D2 => "d2",
            ConstraintTag::E1 => "e1",
            ConstraintTag::E2 => "e2",
            ConstraintTag::E3 => "e3",
            ConstraintTag::E4 => "e4",
            ConstraintTag::F1 => "f1",
            ConstraintTag::F2 => "f2",
            ConstraintTag::F3 => "f3",
            ConstraintTag::F4 => "f4",
            ConstraintTag::WPos => "w+",
            ConstraintTag::WNeg => "w-",
            ConstraintTag::DevPos => "dev+",
            ConstraintTag::DevNeg => "dev-",
            ConstraintTag::HExact => "h-exact",
            ConstraintTag::LExact => "l-exact",
        };
        f.write_str(s)
    }
}

/// Tag plus 1-based rendezvous (`i`) and robot (`j`) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowLabel {
    pub tag: ConstraintTag,
    pub i: Option<usize>,
    pub j: Option<usize>,
}

impl RowLabel {
    fn new(tag: ConstraintTag, i: Option<usize>, j: Option<usize>) -> Self {
        Self {
            tag,
            i: i.map(|v| v + 1),
            j: j.map(|v| v + 1),
        }
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.tag)?;
        if let Some(i) = self.i {
            write!(f, ", i={i}")?;
        }
        if let Some(j) = self.j {
            write!(f, ", j={j}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub label: RowLabel,
    /// Sparse `(variable index, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

/// Index arithmetic for the variable layout of [`build_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub rendezvous: usize,
    pub robots: usize,
}

impl VarLayout {
    pub fn new(params: &MissionParams) -> Self {
        Self {
            rendezvous: params.num_rendezvous,
            robots: params.num_robots,
        }
    }

    fn block(&self) -> usize {
        self.rendezvous * self.robots
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rendezvous && j < self.robots);
        i * self.robots + j
    }

    pub fn k(&self, i: usize, j: usize) -> usize {
        self.cell(i, j)
    }
    pub fn s(&self, i: usize, j: usize) -> usize {
        self.block() + self.cell(i, j)
    }
    pub fn e(&self, i: usize, j: usize) -> usize {
        2 * self.block() + self.cell(i, j)
    }
    pub fn l(&self, i: usize, j: usize) -> usize {
        3 * self.block() + self.cell(i, j)
    }
    pub fn h(&self, i: usize) -> usize {
        4 * self.block() + i
    }
    pub fn w(&self) -> usize {
        4 * self.block() + self.rendezvous
    }
    pub fn d(&self, i: usize, j: usize) -> usize {
        self.w() + 1 + self.cell(i, j)
    }

    /// Number of `K, S, E, L, H` variables.
    pub fn core_len(&self) -> usize {
        4 * self.block() + self.rendezvous
    }

    pub fn len(&self) -> usize {
        self.core_len() + 1 + self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn binary_indices(&self) -> std::ops::Range<usize> {
        0..self.block()
    }
}

/// Solver-independent linear model: minimize `objective · x` subject to
/// `constraints` and the variable bounds/kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Vec<f64>,
}

impl MilpModel {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Rows (and bounds/integrality, reported as `f1`/`f2`/`f4`) violated by `x`.
    pub fn violated_rows(&self, x: &[f64], tol: f64) -> Vec<RowLabel> {
        let mut out = Vec::new();
        for c in &self.constraints {
            if c.relation.violation(c.lhs(x), c.rhs) > tol {
                out.push(c.label);
            }
        }
        out
    }
}

/// Builds the rendezvous MILP for `params`.
pub fn build_model(params: &MissionParams) -> Result<MilpModel, ModelError> {
    params.validate()?;
    let lay = VarLayout::new(params);
    let (ns, nr) = (params.num_rendezvous, params.num_robots);
    let m = params.big_m;
    let jobs = params.num_jobs() as f64;

    let mut variables = Vec::with_capacity(lay.len());
    let cont = |name: String, upper: f64| Variable {
        name,
        kind: VarKind::Continuous,
        lower: 0.0,
        upper,
    };
    for i in 0..ns {
        for j in 0..nr {
            variables.push(Variable {
                name: format!("k_{}_{}", i + 1, j + 1),
                kind: VarKind::Binary,
                lower: 0.0,
                upper: 1.0,
            });
        }
    }
    for prefix in ["s", "e", "l"] {
        for i in 0..ns {
            for j in 0..nr {
                variables.push(cont(format!("{prefix}_{}_{}", i + 1, j + 1), m));
            }
        }
    }
    for i in 0..ns {
        variables.push(cont(format!("h_{}", i + 1), m));
    }
    variables.push(cont("w".into(), m * jobs.max(1.0)));
    for i in 0..ns {
        for j in 0..nr {
            variables.push(cont(format!("d_{}_{}", i + 1, j + 1), m));
        }
    }
    debug_assert_eq!(variables.len(), lay.len());

    let mut rows = Vec::new();
    let mut push =
        |tag, i: Option<usize>, j: Option<usize>, coeffs: Vec<(usize, f64)>, relation, rhs| {
            rows.push(LinearConstraint {
                label: RowLabel::new(tag, i, j),
                coeffs,
                relation,
                rhs,
            });
        };
    use ConstraintTag as T;
    use Relation::{Eq, Ge, Le};

    // h_i >= e_ij - M(1 - k_ij)
    for i in 0..ns {
        for j in 0..nr {
            push(
                T::A1,
                Some(i),
                Some(j),
                vec![(lay.h(i), 1.0), (lay.e(i, j), -1.0), (lay.k(i, j), -m)],
                Ge,
                -m,
            );
        }
    }
    // Propagation of the latest-available time along each robot's column.
    for i in 1..ns {
        for j in 0..nr {
            let (l, lp, kp, hp) = (lay.l(i, j), lay.l(i - 1, j), lay.k(i - 1, j), lay.h(i - 1));
            push(
                T::B1,
                Some(i),
                Some(j),
                vec![(l, 1.0), (lp, -1.0), (kp, m)],
                Ge,
                0.0,
            );
            push(
                T::B2,
                Some(i),
                Some(j),
                vec![(l, 1.0), (lp, -1.0), (kp, -m)],
                Le,
                0.0,
            );
            push(
                T::B3,
                Some(i),
                Some(j),
                vec![(l, 1.0), (hp, -1.0), (kp, -m)],
                Ge,
                -m,
            );
            push(
                T::B4,
                Some(i),
                Some(j),
                vec![(l, 1.0), (hp, -1.0), (kp, m)],
                Le,
                m,
            );
            push(
                T::B5,
                Some(i),
                Some(j),
                vec![(lay.s(i, j), 1.0), (l, -1.0), (lay.k(i, j), -m)],
                Ge,
                -m,
            );
        }
    }
    for i in 0..ns {
        for j in 0..nr {
            let (k, s, e) = (lay.k(i, j), lay.s(i, j), lay.e(i, j));
            push(T::D1, Some(i), Some(j), vec![(s, 1.0), (k, -m)], Le, 0.0);
            push(T::D2, Some(i), Some(j), vec![(e, 1.0), (k, -m)], Le, 0.0);
            push(T::C1, Some(i), Some(j), vec![(e, 1.0), (s, -1.0)], Ge, 0.0);
            push(T::C2, Some(i), Some(j), vec![(e, 1.0)], Le, params.m_assign);
            push(
                T::C3,
                Some(i),
                Some(j),
                vec![(e, 1.0), (s, -1.0), (k, -m)],
                Le,
                0.0,
            );
            push(
                T::C4,
                Some(i),
                Some(j),
                vec![(e, 1.0), (s, -1.0), (k, -params.min_proc)],
                Ge,
                0.0,
            );
        }
    }
    for j in 0..nr {
        push(
            T::E1,
            None,
            Some(j),
            (0..ns).map(|i| (lay.k(i, j), 1.0)).collect(),
            Ge,
            1.0,
        );
    }
    for i in 0..ns {
        let row: Vec<_> = (0..nr).map(|j| (lay.k(i, j), 1.0)).collect();
        push(
            T::E2,
            Some(i),
            None,
            row.clone(),
            Ge,
            params.min_robots as f64,
        );
        push(
            T::E3,
            Some(i),
            None,
            row.clone(),
            Le,
            params.max_robots as f64,
        );
        push(T::E4, Some(i), None, row, Le, (nr - 1) as f64);
    }
    for j in 0..nr {
        push(T::F3, Some(0), Some(j), vec![(lay.s(0, j), 1.0)], Eq, 0.0);
        push(T::F3, Some(0), Some(j), vec![(lay.l(0, j), 1.0)], Eq, 0.0);
    }

    // Objective linearization: w >= |sum(e - s) - m_assign| and
    // d_ij >= |(e_ij - s_ij) - tau|, tau = sum(e - s) / (S R).
    let total_proc: Vec<(usize, f64)> = (0..ns)
        .flat_map(|i| (0..nr).flat_map(move |j| [(lay.e(i, j), 1.0), (lay.s(i, j), -1.0)]))
        .collect();
    let mut wpos = vec![(lay.w(), 1.0)];
    wpos.extend(total_proc.iter().map(|&(v, c)| (v, -c)));
    push(T::WPos, None, None, wpos, Ge, -params.m_assign);
    let mut wneg = vec![(lay.w(), 1.0)];
    wneg.extend(total_proc.iter().copied());
    push(T::WNeg, None, None, wneg, Ge, params.m_assign);
    for i in 0..ns {
        for j in 0..nr {
            let (e, s) = (lay.e(i, j), lay.s(i, j));
            // proc_ij - tau expressed over the e/s columns.
            let mut dev: Vec<(usize, f64)> =
                total_proc.iter().map(|&(v, c)| (v, -c / jobs)).collect();
            for t in dev.iter_mut() {
                if t.0 == e {
                    t.1 += 1.0;
                } else if t.0 == s {
                    t.1 -= 1.0;
                }
            }
            let mut pos = vec![(lay.d(i, j), 1.0)];
            pos.extend(dev.iter().map(|&(v, c)| (v, -c)));
            push(T::DevPos, Some(i), Some(j), pos, Ge, 0.0);
            let mut neg = vec![(lay.d(i, j), 1.0)];
            neg.extend(dev.iter().copied());
            push(T::DevNeg, Some(i), Some(j), neg, Ge, 0.0);
        }
    }

    let mut objective = vec![0.0; lay.len()];
    objective[lay.w()] = params.alpha;
    for i in 0..ns {
        for j in 0..nr {
            objective[lay.d(i, j)] = params.beta / jobs;
        }
    }

    Ok(MilpModel {
        variables,
        constraints: rows,
        objective,
    })
}

/// Row-major `S × R` matrix.
pub type Matrix = Vec<Vec<f64>>;

/// A candidate (or solver-produced) assignment of the formulation's variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub k: Vec<Vec<u8>>,
    pub s: Matrix,
    pub e: Matrix,
    pub l: Matrix,
    pub h: Vec<f64>,
    pub objective: f64,
}

impl MilpSolution {
    pub fn num_rendezvous(&self) -> usize {
        self.k.len()
    }

    pub fn num_robots(&self) -> usize {
        self.k.first().map_or(0, Vec::len)
    }

    /// Reads the `K, S, E` blocks out of a model vector, snaps them to exact
    /// values and fills `H`, `L` and the objective from their reference
    /// semantics.
    pub fn from_vector(x: &[f64], params: &MissionParams) -> Self {
        let lay = VarLayout::new(params);
        let (ns, nr) = (params.num_rendezvous, params.num_robots);
        let snap = |v: f64| {
            // Simplex round-off lands a few ulps off exact schedule times.
            let v = v.clamp(0.0, params.m_assign);
            let r = (v * 1e6).round() / 1e6;
            if (v - r).abs() < 1e-9 {
                r
            } else {
                v
            }
        };
        let mut k = vec![vec![0u8; nr]; ns];
        let mut s = vec![vec![0.0; nr]; ns];
        let mut e = vec![vec![0.0; nr]; ns];
        for i in 0..ns {
            for j in 0..nr {
                if x[lay.k(i, j)] > 0.5 {
                    k[i][j] = 1;
                    s[i][j] = snap(x[lay.s(i, j)]);
                    e[i][j] = snap(x[lay.e(i, j)]).max(s[i][j]);
                }
            }
        }
        let mut sol = MilpSolution {
            k,
            s,
            e,
            l: Vec::new(),
            h: Vec::new(),
            objective: 0.0,
        };
        sol.recompute_exact(params);
        sol
    }

    /// Replaces `H`, `L` and `objective` with their exact values.
    pub fn recompute_exact(&mut self, params: &MissionParams) {
        self.h = compute_highest_endings(&self.e, &self.k).expect("square by construction");
        self.l = compute_latest_available(&self.e, &self.k).expect("square by construction");
        self.objective = objective_value_unchecked(self, params).total;
    }

    /// Full model vector including the objective auxiliaries at their tight values.
    pub fn to_vector(&self, params: &MissionParams) -> Vec<f64> {
        let lay = VarLayout::new(params);
        let mut x = vec![0.0; lay.len()];
        let jobs = params.num_jobs() as f64;
        let mut total = 0.0;
        for i in 0..params.num_rendezvous {
            for j in 0..params.num_robots {
                x[lay.k(i, j)] = f64::from(self.k[i][j]);
                x[lay.s(i, j)] = self.s[i][j];
                x[lay.e(i, j)] = self.e[i][j];
                x[lay.l(i, j)] = self.l[i][j];
                total += self.e[i][j] - self.s[i][j];
            }
            x[lay.h(i)] = self.h[i];
        }
        x[lay.w()] = (total - params.m_assign).abs();
        let tau = total / jobs;
        for i in 0..params.num_rendezvous {
            for j in 0..params.num_robots {
                x[lay.d(i, j)] = ((self.e[i][j] - self.s[i][j]) - tau).abs();
            }
        }
        x
    }

    fn check_shape(&self, params: &MissionParams) -> Result<(), ModelError> {
        let (ns, nr) = (params.num_rendezvous, params.num_robots);
        let ok_matrix = |m: &Matrix| m.len() == ns && m.iter().all(|r| r.len() == nr);
        let ok = self.k.len() == ns
            && self.k.iter().all(|r| r.len() == nr)
            && ok_matrix(&self.s)
            && ok_matrix(&self.e)
            && ok_matrix(&self.l)
            && self.h.len() == ns;
        if ok {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch(format!(
                "solution is not {ns}x{nr}"
            )))
        }
    }
}

fn check_dims(e: &Matrix, k: &[Vec<u8>]) -> Result<(), ModelError> {
    let cols = k.first().map_or(0, Vec::len);
    if e.len() != k.len() || k.iter().any(|r| r.len() != cols) || e.iter().any(|r| r.len() != cols)
    {
        return Err(ModelError::DimensionMismatch(format!(
            "E is {}x{} but K is {}x{}",
            e.len(),
            e.first().map_or(0, Vec::len),
            k.len(),
            cols
        )));
    }
    Ok(())
}

/// `h_i = max_{j: k_ij = 1} e_ij`, or 0 for an unallocated row.
pub fn compute_highest_endings(e: &Matrix, k: &[Vec<u8>]) -> Result<Vec<f64>, ModelError> {
    check_dims(e, k)?;
    Ok(e.iter()
        .zip(k)
        .map(|(er, kr)| {
            er.iter()
                .zip(kr)
                .filter(|(_, &kv)| kv == 1)
                .map(|(&ev, _)| ev)
                .fold(0.0, f64::max)
        })
        .collect())
}

/// `l_ij` is the highest ending of the most recent earlier row where robot `j`
/// is allocated, 0 when there is none.
pub fn compute_latest_available(e: &Matrix, k: &[Vec<u8>]) -> Result<Matrix, ModelError> {
    let h = compute_highest_endings(e, k)?;
    let cols = k.first().map_or(0, Vec::len);
    let mut l = vec![vec![0.0; cols]; k.len()];
    for j in 0..cols {
        let mut last = 0.0;
        for i in 0..k.len() {
            l[i][j] = last;
            if k[i][j] == 1 {
                last = h[i];
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub w_err: f64,
    pub j_err: f64,
    pub total: f64,
}

fn objective_value_unchecked(sol: &MilpSolution, params: &MissionParams) -> ObjectiveBreakdown {
    let procs: Vec<f64> = sol
        .s
        .iter()
        .zip(&sol.e)
        .flat_map(|(sr, er)| sr.iter().zip(er).map(|(s, e)| e - s))
        .collect();
    let total: f64 = procs.iter().sum();
    let jobs = params.num_jobs() as f64;
    let tau = total / jobs;
    let w_err = (total - params.m_assign).abs();
    let j_err = procs.iter().map(|p| (p - tau).abs()).sum::<f64>() / jobs;
    ObjectiveBreakdown {
        w_err,
        j_err,
        total: params.alpha * w_err + params.beta * j_err,
    }
}

/// `alpha * |W_err| + beta * J_err` for a solution.
pub fn objective_value(
    sol: &MilpSolution,
    params: &MissionParams,
) -> Result<ObjectiveBreakdown, ModelError> {
    sol.check_shape(params)?;
    for (i, (kr, (sr, er))) in sol.k.iter().zip(sol.s.iter().zip(&sol.e)).enumerate() {
        for (j, (&kv, (&s, &e))) in kr.iter().zip(sr.iter().zip(er)).enumerate() {
            if kv > 1 {
                return Err(ModelError::InvalidSolution(format!(
                    "k[{}][{}] = {kv} is not binary",
                    i + 1,
                    j + 1
                )));
            }
            if s < -FEASIBILITY_TOL || e < s - FEASIBILITY_TOL {
                return Err(ModelError::InvalidSolution(format!(
                    "job ({}, {}) has s = {s}, e = {e}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(objective_value_unchecked(sol, params))
}

/// Every constraint row, bound and integrality requirement violated by `sol`,
/// plus disagreements with the exact `H`/`L` semantics. Empty means feasible.
pub fn check_feasibility(sol: &MilpSolution, params: &MissionParams) -> Vec<RowLabel> {
    use ConstraintTag as T;
    if sol.check_shape(params).is_err() || params.validate().is_err() {
        return vec![RowLabel {
            tag: T::F4,
            i: None,
            j: None,
        }];
    }
    let model = build_model(params).expect("validated above");
    let lay = VarLayout::new(params);
    let x = sol.to_vector(params);
    let mut out = Vec::new();

    for i in 0..params.num_rendezvous {
        for j in 0..params.num_robots {
            let lbl = |t| RowLabel::new(t, Some(i), Some(j));
            if sol.k[i][j] > 1 {
                out.push(lbl(T::F4));
            }
            if sol.s[i][j] < -FEASIBILITY_TOL || sol.e[i][j] < -FEASIBILITY_TOL {
                out.push(lbl(T::F2));
            }
            if sol.l[i][j] < -FEASIBILITY_TOL {
                out.push(lbl(T::F1));
            }
        }
        if sol.h[i] < -FEASIBILITY_TOL {
            out.push(RowLabel::new(T::F1, Some(i), None));
        }
    }
    // Only the formulation rows; objective auxiliaries are tight by construction.
    for c in &model.constraints {
        if matches!(c.label.tag, T::WPos | T::WNeg | T::DevPos | T::DevNeg) {
            continue;
        }
        if c.relation.violation(c.lhs(&x), c.rhs) > FEASIBILITY_TOL {
            out.push(c.label);
        }
    }
    let h = compute_highest_endings(&sol.e, &sol.k).expect("shape checked");
    let l = compute_latest_available(&sol.e, &sol.k).expect("shape checked");
    for i in 0..params.num_rendezvous {
        if (h[i] - x[lay.h(i)]).abs() > FEASIBILITY_TOL {
            out.push(RowLabel::new(T::HExact, Some(i), None));
        }
        for j in 0..params.num_robots {
            if (l[i][j] - sol.l[i][j]).abs() > FEASIBILITY_TOL {
                out.push(RowLabel::new(T::LExact, Some(i), Some(j)));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
