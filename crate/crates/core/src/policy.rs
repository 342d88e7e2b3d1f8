//! Per-robot decision logic: frontier utilities and allocation, the RTUS
//! departure trigger, rendezvous-location consensus and the single-robot
//! part of a simulation tick.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::RendezvousPlan;
use crate::world::{
    astar_path, detect_frontiers, distance_field, nearest_free_cell, octile_to_point, sense, Cell,
    Frontier, GridWorld, KnownMap, WorldError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("robot {robot}: plan cursor {cursor} is inconsistent with a plan of {events} events")]
    InconsistentCursor {
        robot: u32,
        cursor: usize,
        events: usize,
    },
    #[error("robot {robot} has no location for event {event}")]
    MissingLocation { robot: u32, event: u32 },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exploring,
    HeadingToRendezvous,
    Waiting,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    /// Leave for the rendezvous as soon as the remaining window no longer
    /// covers the travel time.
    Rtus,
    /// Leave for the rendezvous once its deadline has been reached.
    Baseline,
}

impl std::str::FromStr for PolicyVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rtus" => Ok(Self::Rtus),
            "baseline" => Ok(Self::Baseline),
            other => Err(format!(
                "unknown policy {other:?} (expected rtus or baseline)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommKind {
    Opportunistic,
    Scheduled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub time: f64,
    pub participants: Vec<u32>,
    pub kind: CommKind,
    /// Plan event completed by a scheduled contact.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub event: Option<u32>,
}

/// Knobs shared by every robot in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub variant: PolicyVariant,
    /// Tick length, seconds.
    pub dt: f64,
    /// Expected speed, m/s.
    pub speed: f64,
    pub sensor_range: f64,
    pub comm_range: f64,
    /// Relative amplitude of the deterministic utility perturbation.
    pub utility_jitter: f64,
    /// Share of the time between two obligations a robot may spend
    /// travelling between their locations when meetings are relocated.
    pub reach_fraction: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            variant: PolicyVariant::Rtus,
            dt: 1.0,
            speed: 1.0,
            sensor_range: 10.0,
            comm_range: 10.0,
            utility_jitter: 0.0,
            reach_fraction: 0.5,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    /// Multiplicative perturbation for a frontier, identical for every robot
    /// so that robots sharing a map rank frontiers identically.
    pub fn jitter(&self, frontier: &Frontier) -> f64 {
        if self.utility_jitter <= 0.0 {
            return 1.0;
        }
        let c = frontier.min_cell();
        let key =
            self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((c.row as u64) << 32 | c.col as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        1.0 + self.utility_jitter * rng.gen::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: u32,
    pub pose: Cell,
    pub spawn: Cell,
    /// Global mission clock, seconds.
    pub clock: f64,
    pub known: KnownMap,
    /// Index into the plan's events of this robot's next rendezvous;
    /// `plan.events.len()` once none remain.
    pub cursor: usize,
    pub mode: Mode,
    pub target: Option<Cell>,
    /// Remaining cells to visit, excluding the pose.
    pub path: Vec<Cell>,
    /// Unspent travel distance, metres.
    pub budget: f64,
    /// Rendezvous location per plan event id.
    pub locations: BTreeMap<u32, Cell>,
    /// RTUS value computed in the last tick, if any.
    pub last_h: Option<f64>,
}

impl RobotState {
    pub fn new(id: u32, spawn: Cell, world: &GridWorld, plan: &RendezvousPlan) -> Self {
        let cursor = plan.next_event_for(id, 0).unwrap_or(plan.events.len());
        Self {
            id,
            pose: spawn,
            spawn,
            clock: 0.0,
            known: KnownMap::for_world(world),
            cursor,
            mode: if cursor < plan.events.len() {
                Mode::Exploring
            } else {
                Mode::Done
            },
            target: None,
            path: Vec::new(),
            budget: 0.0,
            locations: BTreeMap::new(),
            last_h: None,
        }
    }

    /// Current event id and its location.
    pub fn current_rendezvous(
        &self,
        plan: &RendezvousPlan,
    ) -> Result<Option<(u32, f64, Cell)>, PolicyError> {
        if self.cursor >= plan.events.len() {
            if self.cursor > plan.events.len() {
                return Err(self.cursor_error(plan));
            }
            return Ok(None);
        }
        let ev = &plan.events[self.cursor];
        if !ev.involves(self.id) {
            return Err(self.cursor_error(plan));
        }
        let loc = *self
            .locations
            .get(&ev.id)
            .ok_or(PolicyError::MissingLocation {
                robot: self.id,
                event: ev.id,
            })?;
        Ok(Some((ev.id, ev.deadline, loc)))
    }

    fn cursor_error(&self, plan: &RendezvousPlan) -> PolicyError {
        PolicyError::InconsistentCursor {
            robot: self.id,
            cursor: self.cursor,
            events: plan.events.len(),
        }
    }

    pub fn stop(&mut self) {
        self.path.clear();
        self.budget = 0.0;
    }
}

/// `H = (deadline - clock) - T_path`; `-inf` when the location cannot be
/// reached through known space.
pub fn rtus_heuristic(state: &RobotState, rendezvous_loc: Cell, deadline: f64, speed: f64) -> f64 {
    match astar_path(&state.known, state.pose, rendezvous_loc) {
        Some(p) => (deadline - state.clock) - p.length / speed,
        None => f64::NEG_INFINITY,
    }
}

/// Frontier size over the path length to its target, floored at one cell.
pub fn utility(frontier: &Frontier, state: &RobotState) -> f64 {
    match astar_path(&state.known, state.pose, frontier.target()) {
        Some(p) => frontier.size() as f64 / p.length.max(state.known.cell_size),
        None => 0.0,
    }
}

/// [`utility`] for every frontier from one shortest-path tree rooted at `from`.
pub fn utilities(frontiers: &[Frontier], known: &KnownMap, from: Cell) -> Vec<f64> {
    let dist = distance_field(known, from);
    frontiers
        .iter()
        .map(|f| {
            let t = f.target();
            let d = dist[t.row * known.width + t.col];
            if d.is_finite() {
                f.size() as f64 / d.max(known.cell_size)
            } else {
                0.0
            }
        })
        .collect()
}

/// Ranks frontiers by utility (descending, ties by frontier order) and hands
/// out the one at my position among the ids in range, clamped to the last.
pub fn allocate_frontier<'a>(
    frontiers: &'a [Frontier],
    utilities: &[f64],
    ids_in_range: &[u32],
    my_id: u32,
) -> Option<&'a Frontier> {
    if frontiers.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..frontiers.len()).collect();
    order.sort_by(|&a, &b| {
        utilities[b]
            .total_cmp(&utilities[a])
            .then_with(|| frontiers[a].min_cell().cmp(&frontiers[b].min_cell()))
    });
    let mut ids = ids_in_range.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let rank = ids.iter().position(|&i| i == my_id).unwrap_or(0);
    Some(&frontiers[order[rank.min(order.len() - 1)]])
}

/// Known-free cell nearest the centroid of `targets`, or of all known-free
/// space when there are no targets.
pub fn update_rendezvous_location(
    targets: &[Cell],
    merged: &KnownMap,
) -> Result<Cell, PolicyError> {
    let (row, col) = if targets.is_empty() {
        let (mut n, mut r, mut c) = (0.0, 0.0, 0.0);
        for cell in merged.free_cells() {
            n += 1.0;
            r += cell.row as f64;
            c += cell.col as f64;
        }
        if n == 0.0 {
            return Err(WorldError::NoFreeCell.into());
        }
        (r / n, c / n)
    } else {
        let n = targets.len() as f64;
        (
            targets.iter().map(|t| t.row as f64).sum::<f64>() / n,
            targets.iter().map(|t| t.col as f64).sum::<f64>() / n,
        )
    };
    nearest_free_cell(merged, row, col).ok_or(PolicyError::World(WorldError::NoFreeCell))
}

/// Upper bound on the path length from `anchor` to a rendezvous location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachLimit {
    pub anchor: Cell,
    /// Metres.
    pub max_length: f64,
}

/// [`update_rendezvous_location`] restricted to cells within every reach
/// limit. Anchors unreachable in `merged` are ignored. When no cell meets
/// all limits the one with the smallest worst-case overrun ratio is used.
pub fn place_rendezvous(
    targets: &[Cell],
    merged: &KnownMap,
    limits: &[ReachLimit],
) -> Result<Cell, PolicyError> {
    let ideal = update_rendezvous_location(targets, merged)?;
    let fields: Vec<(Vec<f64>, f64)> = limits
        .iter()
        .filter(|l| merged.in_bounds(l.anchor) && merged.is_free(l.anchor))
        .map(|l| {
            (
                distance_field(merged, l.anchor),
                l.max_length.max(merged.cell_size),
            )
        })
        .collect();
    if fields.is_empty() {
        return Ok(ideal);
    }
    let w = merged.width;
    let overrun = |c: Cell| {
        fields
            .iter()
            .map(|(d, max)| d[c.row * w + c.col] / max)
            .fold(0.0, f64::max)
    };
    if overrun(ideal) <= 1.0 {
        return Ok(ideal);
    }
    let (row, col) = if targets.is_empty() {
        (ideal.row as f64, ideal.col as f64)
    } else {
        let n = targets.len() as f64;
        (
            targets.iter().map(|t| t.row as f64).sum::<f64>() / n,
            targets.iter().map(|t| t.col as f64).sum::<f64>() / n,
        )
    };
    let inside = merged
        .free_cells()
        .filter(|&c| overrun(c) <= 1.0)
        .map(|c| (octile_to_point(c, row, col), c))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if let Some((_, c)) = inside {
        return Ok(c);
    }
    merged
        .free_cells()
        .map(|c| (overrun(c), c))
        .filter(|(o, _)| o.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
        .ok_or(PolicyError::World(WorldError::NoFreeCell))
}

/// Recomputes frontiers on the robot's map and takes the one allotted to it
/// among `ids`, ranking by utilities seen from `ranking_pose`. Returns false
/// when no frontier is left.
pub fn choose_target(
    state: &mut RobotState,
    ids: &[u32],
    ranking_pose: Cell,
    cfg: &PolicyConfig,
) -> bool {
    let frontiers = detect_frontiers(&state.known);
    let mut u = utilities(&frontiers, &state.known, ranking_pose);
    for (v, f) in u.iter_mut().zip(&frontiers) {
        *v *= cfg.jitter(f);
    }
    // Frontiers unreachable from the robot are useless to it.
    let reachable = distance_field(&state.known, state.pose);
    for (v, f) in u.iter_mut().zip(&frontiers) {
        let t = f.target();
        if !reachable[t.row * state.known.width + t.col].is_finite() {
            *v = f64::NEG_INFINITY;
        }
    }
    let pick = allocate_frontier(&frontiers, &u, ids, state.id)
        .filter(|f| {
            let t = f.target();
            reachable[t.row * state.known.width + t.col].is_finite()
        })
        .map(Frontier::target);
    state.stop();
    state.target = pick;
    if let Some(t) = pick {
        state.path = astar_path(&state.known, state.pose, t)
            .map(|p| p.cells[1..].to_vec())
            .unwrap_or_default();
    }
    pick.is_some()
}

/// Spends the travel budget along `state.path`. Returns true when the path
/// was completed this tick.
fn advance(state: &mut RobotState, cfg: &PolicyConfig) -> bool {
    if state.path.is_empty() {
        state.budget = 0.0;
        return false;
    }
    state.budget += cfg.speed * cfg.dt;
    let cs = state.known.cell_size;
    let mut steps = 0;
    for &next in &state.path {
        let cost = if next.row != state.pose.row && next.col != state.pose.col {
            std::f64::consts::SQRT_2 * cs
        } else {
            cs
        };
        if state.budget + 1e-9 < cost {
            break;
        }
        state.budget -= cost;
        state.pose = next;
        steps += 1;
    }
    state.path.drain(..steps);
    if state.path.is_empty() {
        state.budget = 0.0;
        true
    } else {
        false
    }
}

/// What a robot reports from its own tick.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    Arrived { event: u32, time: f64 },
}

/// One tick of a single robot after communication has been resolved:
/// stop conditions, the departure trigger, motion, arrival, sensing at the
/// new pose, clock advance.
pub fn step_robot(
    state: &mut RobotState,
    plan: &RendezvousPlan,
    world: &GridWorld,
    cfg: &PolicyConfig,
    stopped: bool,
) -> Result<Vec<StepEvent>, PolicyError> {
    let mut out = Vec::new();
    state.last_h = None;
    let rendezvous = state.current_rendezvous(plan)?;

    if state.mode != Mode::Done && (rendezvous.is_none() || state.clock >= plan.m_assign) {
        state.mode = Mode::Done;
        state.target = None;
        state.stop();
    }

    if state.mode == Mode::Exploring {
        let (_, deadline, loc) = rendezvous.expect("exploring implies a pending event");
        let leave = match cfg.variant {
            PolicyVariant::Rtus => {
                let h = rtus_heuristic(state, loc, deadline, cfg.speed);
                state.last_h = Some(h);
                h <= 0.0
            }
            PolicyVariant::Baseline => state.clock >= deadline,
        };
        if leave {
            state.mode = Mode::HeadingToRendezvous;
            state.target = None;
            state.path.clear();
        }
    }

    if state.mode == Mode::Exploring && !stopped {
        let stale = state
            .target
            .is_none_or(|t| !state.known.is_frontier_cell(t))
            || state.path.is_empty();
        // With nothing left to explore the robot holds position until the
        // departure rule sends it to the rendezvous.
        if (!stale || choose_target(state, &[state.id], state.pose, cfg)) && advance(state, cfg) {
            // Reached the frontier: stop and look again next tick.
            state.target = None;
        }
    }

    if state.mode == Mode::HeadingToRendezvous && !stopped {
        let (event, _, loc) = rendezvous.expect("heading implies a pending event");
        if state.pose != loc {
            let keep = std::mem::take(&mut state.budget);
            state.path = match astar_path(&state.known, state.pose, loc) {
                Some(p) => p.cells[1..].to_vec(),
                None => Vec::new(),
            };
            state.budget = keep;
            advance(state, cfg);
        }
        if state.pose == loc {
            state.mode = Mode::Waiting;
            state.stop();
            out.push(StepEvent::Arrived {
                event,
                time: state.clock + cfg.dt,
            });
        }
    }

    if state.mode == Mode::Done && state.pose != state.spawn && !stopped {
        if state.path.last() != Some(&state.spawn) {
            state.path = astar_path(&state.known, state.pose, state.spawn)
                .map(|p| p.cells[1..].to_vec())
                .unwrap_or_default();
        }
        advance(state, cfg);
    }

    sense(world, &mut state.known, state.pose, cfg.sensor_range)?;
    state.clock += cfg.dt;
    Ok(out)
}
