//! Lockstep multi-robot simulation.
//!
//! Every tick first resolves communication against the poses all robots
//! held at the start of the tick (scheduled meetings, then new proximity
//! contacts), then steps each robot independently. The run is recorded as a
//! sequence of [`TraceRecord`]s from which [`RunMetrics`] are derived.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::RendezvousPlan;
use crate::policy::{
    choose_target, place_rendezvous, step_robot, CommEvent, CommKind, Mode, PolicyConfig,
    PolicyError, PolicyVariant, ReachLimit, RobotState, StepEvent,
};
use crate::world::{
    merge_maps, nearest_free_cell, sense, Cell, GridWorld, KnownMap, MapSnapshot, WorldError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("plan/config mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSample {
    pub id: u32,
    pub pose: Cell,
    pub mode: Mode,
    pub cursor: usize,
    /// RTUS value this tick; absent when not evaluated.
    pub h: Option<f64>,
    /// Set when the rendezvous was unreachable through known space.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub h_unreachable: bool,
    pub known_free: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Meta {
        policy: PolicyConfig,
        width: usize,
        height: usize,
        cell_size: f64,
        #[serde(with = "crate::keys")]
        spawns: BTreeMap<u32, Cell>,
        plan: RendezvousPlan,
        /// Initial rendezvous location per event id.
        #[serde(with = "crate::keys")]
        locations: BTreeMap<u32, Cell>,
    },
    Tick {
        time: f64,
        robots: Vec<RobotSample>,
    },
    Comm(CommEvent),
    Arrival {
        time: f64,
        robot: u32,
        event: u32,
    },
    Relocate {
        time: f64,
        event: u32,
        location: Cell,
    },
    Complete {
        time: f64,
        event: u32,
        first_arrival: f64,
        last_arrival: f64,
    },
    End {
        time: f64,
        #[serde(with = "crate::keys")]
        maps: BTreeMap<u32, MapSnapshot>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub policy: PolicyConfig,
    /// Hard stop, seconds.
    pub max_time: f64,
}

impl SimOptions {
    pub fn new(policy: PolicyConfig, m_assign: f64) -> Self {
        Self {
            policy,
            max_time: 2.0 * m_assign,
        }
    }
}

pub struct Simulation<'a> {
    world: &'a GridWorld,
    plan: &'a RendezvousPlan,
    opts: SimOptions,
    robots: Vec<RobotState>,
    contacts: BTreeSet<(u32, u32)>,
    arrivals: BTreeMap<u32, BTreeMap<u32, f64>>,
    completed: BTreeSet<u32>,
    trace: Vec<TraceRecord>,
    time: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        world: &'a GridWorld,
        plan: &'a RendezvousPlan,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        if plan.num_robots == 0 {
            return Err(SimError::Mismatch("plan has no robots".into()));
        }
        let mut robots = Vec::with_capacity(plan.num_robots);
        for id in 1..=plan.num_robots as u32 {
            let spawn = *world
                .spawns
                .get(&id)
                .ok_or_else(|| SimError::Mismatch(format!("map has no spawn for robot {id}")))?;
            let mut r = RobotState::new(id, spawn, world, plan);
            sense(world, &mut r.known, spawn, opts.policy.sensor_range)?;
            robots.push(r);
        }
        for ev in &plan.events {
            if let Some(&bad) = ev
                .participants
                .iter()
                .find(|&&p| p == 0 || p as usize > plan.num_robots)
            {
                return Err(SimError::Mismatch(format!(
                    "event {} names robot {bad}",
                    ev.id
                )));
            }
        }

        // Agreed before departure: nearest free cell to the participants'
        // spawn centroid, on the union of their first scans.
        let mut locations = BTreeMap::new();
        for ev in &plan.events {
            let members: Vec<&RobotState> = robots.iter().filter(|r| ev.involves(r.id)).collect();
            let mut union = members[0].known.clone();
            for m in &members[1..] {
                union = merge_maps(&union, &m.known)?;
            }
            let n = members.len() as f64;
            let row = members.iter().map(|m| m.spawn.row as f64).sum::<f64>() / n;
            let col = members.iter().map(|m| m.spawn.col as f64).sum::<f64>() / n;
            let loc = nearest_free_cell(&union, row, col).ok_or(WorldError::NoFreeCell)?;
            locations.insert(ev.id, loc);
        }
        for r in &mut robots {
            r.locations = locations.clone();
        }

        let mut sim = Self {
            world,
            plan,
            robots,
            contacts: BTreeSet::new(),
            arrivals: BTreeMap::new(),
            completed: BTreeSet::new(),
            trace: Vec::new(),
            time: 0.0,
            opts,
        };
        sim.trace.push(TraceRecord::Meta {
            policy: sim.opts.policy,
            width: world.width,
            height: world.height,
            cell_size: world.cell_size,
            spawns: sim.robots.iter().map(|r| (r.id, r.spawn)).collect(),
            plan: plan.clone(),
            locations,
        });
        sim.record_tick();
        Ok(sim)
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    fn record_tick(&mut self) {
        let robots = self
            .robots
            .iter()
            .map(|r| RobotSample {
                id: r.id,
                pose: r.pose,
                mode: r.mode,
                cursor: r.cursor,
                h: r.last_h.filter(|h| h.is_finite()),
                h_unreachable: r.last_h == Some(f64::NEG_INFINITY),
                known_free: r.known.known_free_count(),
            })
            .collect();
        self.trace.push(TraceRecord::Tick {
            time: self.time,
            robots,
        });
    }

    fn in_range(&self, a: &RobotState, b: &RobotState) -> bool {
        a.pose.euclid(b.pose) * self.world.cell_size <= self.opts.policy.comm_range + 1e-9
    }

    fn finished(&self) -> bool {
        self.robots
            .iter()
            .all(|r| r.mode == Mode::Done && r.pose == r.spawn)
    }

    /// Runs until every robot is home and done, or the time cap.
    pub fn run(mut self) -> Result<Vec<TraceRecord>, SimError> {
        while !self.finished() && self.time < self.opts.max_time {
            self.tick()?;
        }
        let maps = self
            .robots
            .iter()
            .map(|r| (r.id, r.known.snapshot()))
            .collect();
        self.trace.push(TraceRecord::End {
            time: self.time,
            maps,
        });
        Ok(self.trace)
    }

    pub fn tick(&mut self) -> Result<(), SimError> {
        let busy = self.resolve_scheduled()?;
        let stopped = self.resolve_opportunistic(&busy)?;
        for idx in 0..self.robots.len() {
            let halted = stopped.contains(&self.robots[idx].id);
            let events = step_robot(
                &mut self.robots[idx],
                self.plan,
                self.world,
                &self.opts.policy,
                halted,
            )?;
            let id = self.robots[idx].id;
            for StepEvent::Arrived { event, time } in events {
                self.arrivals
                    .entry(event)
                    .or_default()
                    .entry(id)
                    .or_insert(time);
                self.trace.push(TraceRecord::Arrival {
                    time,
                    robot: id,
                    event,
                });
            }
        }
        self.time += self.opts.policy.dt;
        self.record_tick();
        Ok(())
    }

    fn index_of(&self, id: u32) -> usize {
        id as usize - 1
    }

    /// Completes every event whose participants are all waiting at its
    /// location. Returns the robots involved.
    fn resolve_scheduled(&mut self) -> Result<BTreeSet<u32>, SimError> {
        let mut busy = BTreeSet::new();
        for (k, ev) in self.plan.events.iter().enumerate() {
            if self.completed.contains(&ev.id) {
                continue;
            }
            let ready = ev.participants.iter().all(|&p| {
                let r = &self.robots[self.index_of(p)];
                r.cursor == k && r.mode == Mode::Waiting && r.locations.get(&ev.id) == Some(&r.pose)
            });
            if !ready {
                continue;
            }
            let team: Vec<usize> = ev.participants.iter().map(|&p| self.index_of(p)).collect();
            let mut merged = self.robots[team[0]].known.clone();
            for &m in &team[1..] {
                merged = merge_maps(&merged, &self.robots[m].known)?;
            }
            let leader = *ev.participants.iter().max().expect("non-empty team");
            let leader_pose = self.robots[self.index_of(leader)].pose;
            for &m in &team {
                let r = &mut self.robots[m];
                r.known = merged.clone();
                r.cursor = self
                    .plan
                    .next_event_for(r.id, k + 1)
                    .unwrap_or(self.plan.events.len());
                r.stop();
                r.target = None;
                if r.cursor < self.plan.events.len() {
                    r.mode = Mode::Exploring;
                    choose_target(r, &ev.participants, leader_pose, &self.opts.policy);
                } else {
                    r.mode = Mode::Done;
                }
            }

            // The leader places every later meeting of this sub-team around
            // where its members are about to explore, within reach of their
            // neighbouring obligations.
            let team_set: BTreeSet<u32> = ev.participants.iter().copied().collect();
            let subset = |q: usize| {
                self.plan.events[q]
                    .participants
                    .iter()
                    .all(|p| team_set.contains(p))
            };
            for kk in k + 1..self.plan.events.len() {
                if !subset(kk) {
                    continue;
                }
                let later = &self.plan.events[kk];
                let targets: Vec<Cell> = later
                    .participants
                    .iter()
                    .filter_map(|&p| self.robots[self.index_of(p)].target)
                    .collect();
                let reach = |dt: f64| {
                    self.opts.policy.reach_fraction * self.opts.policy.speed * dt.max(0.0)
                };
                let mut limits = Vec::new();
                for &p in &later.participants {
                    let table = &self.robots[self.index_of(p)].locations;
                    let prev = (k + 1..kk).rev().find(|&q| self.plan.events[q].involves(p));
                    let (anchor, since) = match prev {
                        Some(q) => (table[&self.plan.events[q].id], self.plan.events[q].deadline),
                        None => (leader_pose, self.time),
                    };
                    limits.push(ReachLimit {
                        anchor,
                        max_length: reach(later.deadline - since),
                    });
                    let next =
                        (kk + 1..self.plan.events.len()).find(|&q| self.plan.events[q].involves(p));
                    if let Some(q) = next.filter(|&q| !subset(q)) {
                        let nq = &self.plan.events[q];
                        limits.push(ReachLimit {
                            anchor: table[&nq.id],
                            max_length: reach(nq.deadline - later.deadline),
                        });
                    }
                }
                let loc = place_rendezvous(&targets, &merged, &limits)?;
                for &m in &team {
                    self.robots[m].locations.insert(later.id, loc);
                }
                self.trace.push(TraceRecord::Relocate {
                    time: self.time,
                    event: later.id,
                    location: loc,
                });
            }

            let times = &self.arrivals[&ev.id];
            let first = times.values().copied().fold(f64::INFINITY, f64::min);
            let last = times.values().copied().fold(f64::NEG_INFINITY, f64::max);
            self.trace.push(TraceRecord::Comm(CommEvent {
                time: self.time,
                participants: ev.participants.clone(),
                kind: CommKind::Scheduled,
                event: Some(ev.id),
            }));
            self.trace.push(TraceRecord::Complete {
                time: self.time,
                event: ev.id,
                first_arrival: first,
                last_arrival: last,
            });
            self.completed.insert(ev.id);
            busy.extend(ev.participants.iter().copied());
        }
        Ok(busy)
    }

    /// Robots that come into range of someone they were not in range of on
    /// the previous tick share maps; explorers among them stop and re-split
    /// the frontiers. Returns the robots that stopped.
    fn resolve_opportunistic(&mut self, busy: &BTreeSet<u32>) -> Result<BTreeSet<u32>, SimError> {
        let n = self.robots.len();
        let mut now = BTreeSet::new();
        for a in 0..n {
            for b in a + 1..n {
                if self.in_range(&self.robots[a], &self.robots[b]) {
                    now.insert((self.robots[a].id, self.robots[b].id));
                }
            }
        }
        let fresh: BTreeSet<(u32, u32)> = now.difference(&self.contacts).copied().collect();
        self.contacts = now.clone();

        let snapshot: Vec<KnownMap> = self.robots.iter().map(|r| r.known.clone()).collect();
        let poses: Vec<Cell> = self.robots.iter().map(|r| r.pose).collect();
        let mut stopped = BTreeSet::new();
        let mut emitted: BTreeSet<Vec<u32>> = BTreeSet::new();
        for idx in 0..n {
            let id = self.robots[idx].id;
            if busy.contains(&id)
                || !fresh
                    .iter()
                    .any(|&(a, b)| (a == id || b == id) && !busy.contains(&(a ^ b ^ id)))
            {
                continue;
            }
            let mut group: Vec<u32> = now
                .iter()
                .filter(|&&(a, b)| a == id || b == id)
                .map(|&(a, b)| if a == id { b } else { a })
                .filter(|o| !busy.contains(o))
                .collect();
            group.push(id);
            group.sort_unstable();
            let mut merged = snapshot[idx].clone();
            for &o in &group {
                if o != id {
                    merged = merge_maps(&merged, &snapshot[self.index_of(o)])?;
                }
            }
            let leader = *group.last().expect("contains self");
            let r = &mut self.robots[idx];
            r.known = merged;
            if r.mode == Mode::Exploring {
                choose_target(r, &group, poses[(leader - 1) as usize], &self.opts.policy);
                stopped.insert(id);
            }
            if emitted.insert(group.clone()) {
                self.trace.push(TraceRecord::Comm(CommEvent {
                    time: self.time,
                    participants: group,
                    kind: CommKind::Opportunistic,
                    event: None,
                }));
            }
        }
        Ok(stopped)
    }
}

/// Outcome of one plan event in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub id: u32,
    pub deadline: f64,
    pub participants: Vec<u32>,
    #[serde(with = "crate::keys")]
    pub arrivals: BTreeMap<u32, f64>,
    /// Last participant arrival, seconds; absent if the meeting never happened.
    pub accomplishment: Option<f64>,
    /// Last minus first participant arrival, seconds.
    pub waiting: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: PolicyVariant,
    pub seed: u64,
    pub events: Vec<EventMetrics>,
    /// Known-free area averaged over robots at each whole minute, m².
    pub area_curve: Vec<f64>,
    /// Known-free area averaged over robots when the run ended, m².
    pub final_area: f64,
    /// Known-free area of the union of all robots' final maps, m².
    pub total_area: f64,
    pub end_time: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    Malformed(String),
}

impl RunMetrics {
    pub fn from_trace(trace: &[TraceRecord]) -> Result<Self, TraceError> {
        let Some(TraceRecord::Meta {
            policy,
            plan,
            cell_size,
            ..
        }) = trace.first()
        else {
            return Err(TraceError::Malformed("first record is not meta".into()));
        };
        let mut arrivals: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
        let mut complete: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        let mut samples: Vec<(f64, f64)> = Vec::new();
        let mut end = None;
        for rec in &trace[1..] {
            match rec {
                TraceRecord::Meta { .. } => {
                    return Err(TraceError::Malformed("repeated meta record".into()))
                }
                TraceRecord::Tick { time, robots } => {
                    if robots.is_empty() {
                        return Err(TraceError::Malformed(format!(
                            "tick at {time} has no robots"
                        )));
                    }
                    let mean = robots.iter().map(|r| r.known_free as f64).sum::<f64>()
                        / robots.len() as f64;
                    samples.push((*time, mean * cell_size * cell_size));
                }
                TraceRecord::Arrival { time, robot, event } => {
                    arrivals
                        .entry(*event)
                        .or_default()
                        .entry(*robot)
                        .or_insert(*time);
                }
                TraceRecord::Complete {
                    event,
                    first_arrival,
                    last_arrival,
                    ..
                } => {
                    complete.insert(*event, (*first_arrival, *last_arrival));
                }
                TraceRecord::End { time, maps } => end = Some((*time, maps)),
                TraceRecord::Comm(_) | TraceRecord::Relocate { .. } => {}
            }
        }
        let (end_time, maps) =
            end.ok_or_else(|| TraceError::Malformed("missing end record".into()))?;
        let mut union: Option<KnownMap> = None;
        for snap in maps.values() {
            let m =
                KnownMap::from_snapshot(snap).map_err(|e| TraceError::Malformed(e.to_string()))?;
            union = Some(match union {
                None => m,
                Some(u) => merge_maps(&u, &m).map_err(|e| TraceError::Malformed(e.to_string()))?,
            });
        }
        let total_area = union.map_or(0.0, |u| u.known_free_area());
        if samples.is_empty() {
            return Err(TraceError::Malformed("no tick records".into()));
        }

        let events = plan
            .events
            .iter()
            .map(|ev| {
                let done = complete.get(&ev.id);
                EventMetrics {
                    id: ev.id,
                    deadline: ev.deadline,
                    participants: ev.participants.clone(),
                    arrivals: arrivals.get(&ev.id).cloned().unwrap_or_default(),
                    accomplishment: done.map(|&(_, last)| last),
                    waiting: done.map(|&(first, last)| last - first),
                }
            })
            .collect();

        let minutes = (plan.m_assign / 60.0).ceil() as usize;
        let mut area_curve = Vec::with_capacity(minutes + 1);
        let mut cursor = 0;
        for m in 0..=minutes {
            let t = 60.0 * m as f64;
            while cursor + 1 < samples.len() && samples[cursor + 1].0 <= t + 1e-9 {
                cursor += 1;
            }
            area_curve.push(samples[cursor].1);
        }
        Ok(Self {
            policy: policy.variant,
            seed: policy.seed,
            events,
            area_curve,
            final_area: samples.last().expect("non-empty").1,
            total_area,
            end_time,
        })
    }

    pub fn completed(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.accomplishment.is_some())
            .count()
    }

    /// Mean waiting time over completed events.
    pub fn mean_waiting(&self) -> Option<f64> {
        let w: Vec<f64> = self.events.iter().filter_map(|e| e.waiting).collect();
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    }
}

/// Runs one simulation and returns its trace.
pub fn simulate(
    world: &GridWorld,
    plan: &RendezvousPlan,
    opts: SimOptions,
) -> Result<Vec<TraceRecord>, SimError> {
    Simulation::new(world, plan, opts)?.run()
}
