//! Executable rendezvous plans extracted from MILP solutions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_feasibility, MilpSolution, MissionParams, RowLabel, FEASIBILITY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("infeasible-solution: {}", join(.0))]
    InfeasibleSolution(Vec<RowLabel>),
}

fn join(labels: &[RowLabel]) -> String {
    labels
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// One scheduled meeting of a sub-team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvent {
    /// 1-based row of `K`.
    pub id: u32,
    /// Robot ids (1-based), ascending.
    pub participants: Vec<u32>,
    /// Arrival deadline, seconds.
    pub deadline: f64,
    /// Job start per participant, seconds.
    #[serde(with = "crate::keys")]
    pub starts: BTreeMap<u32, f64>,
}

impl PlanEvent {
    pub fn involves(&self, robot: u32) -> bool {
        self.participants.contains(&robot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RendezvousPlan {
    pub m_assign: f64,
    pub num_robots: usize,
    pub events: Vec<PlanEvent>,
}

impl RendezvousPlan {
    /// Index of the first event at or after `from` that `robot` takes part in.
    pub fn next_event_for(&self, robot: u32, from: usize) -> Option<usize> {
        (from..self.events.len()).find(|&k| self.events[k].involves(robot))
    }

    pub fn event_by_id(&self, id: u32) -> Option<&PlanEvent> {
        self.events.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlanRule {
    #[serde(rename = "ordering")]
    Ordering,
    #[serde(rename = "c2-horizon")]
    Horizon,
    #[serde(rename = "e2-min-team")]
    MinTeam,
    #[serde(rename = "e3-max-team")]
    MaxTeam,
    #[serde(rename = "e4-team-cap")]
    TeamCap,
    #[serde(rename = "e1-coverage")]
    Coverage,
    #[serde(rename = "overlap")]
    Overlap,
    #[serde(rename = "unknown-robot")]
    UnknownRobot,
    #[serde(rename = "event-count")]
    EventCount,
}

impl fmt::Display for PlanRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PlanRule::Ordering => "ordering",
            PlanRule::Horizon => "c2-horizon",
            PlanRule::MinTeam => "e2-min-team",
            PlanRule::MaxTeam => "e3-max-team",
            PlanRule::TeamCap => "e4-team-cap",
            PlanRule::Coverage => "e1-coverage",
            PlanRule::Overlap => "overlap",
            PlanRule::UnknownRobot => "unknown-robot",
            PlanRule::EventCount => "event-count",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub rule: PlanRule,
    pub event: Option<u32>,
    pub robot: Option<u32>,
    pub detail: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.rule)?;
        if let Some(e) = self.event {
            write!(f, " event {e}")?;
        }
        if let Some(r) = self.robot {
            write!(f, " robot {r}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// One event per allocated row of `K`, ordered by deadline and then row.
pub fn extract_plan(
    sol: &MilpSolution,
    params: &MissionParams,
) -> Result<RendezvousPlan, PlanError> {
    let violations = check_feasibility(sol, params);
    if !violations.is_empty() {
        return Err(PlanError::InfeasibleSolution(violations));
    }
    let mut events: Vec<PlanEvent> = sol
        .k
        .iter()
        .enumerate()
        .filter(|(_, row)| row.contains(&1))
        .map(|(i, row)| {
            let participants: Vec<u32> = row
                .iter()
                .enumerate()
                .filter(|(_, &k)| k == 1)
                .map(|(j, _)| j as u32 + 1)
                .collect();
            let starts = participants
                .iter()
                .map(|&r| (r, sol.s[i][r as usize - 1]))
                .collect();
            PlanEvent {
                id: i as u32 + 1,
                participants,
                deadline: sol.h[i],
                starts,
            }
        })
        .collect();
    events.sort_by(|a, b| a.deadline.total_cmp(&b.deadline).then(a.id.cmp(&b.id)));
    Ok(RendezvousPlan {
        m_assign: params.m_assign,
        num_robots: params.num_robots,
        events,
    })
}

/// Every plan invariant that does not hold.
pub fn validate_plan(plan: &RendezvousPlan, params: &MissionParams) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let v = |rule, event: Option<u32>, robot: Option<u32>, detail: String| PlanViolation {
        rule,
        event,
        robot,
        detail,
    };
    let nr = params.num_robots as u32;

    if plan.num_robots != params.num_robots {
        out.push(v(
            PlanRule::UnknownRobot,
            None,
            None,
            format!(
                "plan is for {} robots, mission has {}",
                plan.num_robots, params.num_robots
            ),
        ));
    }
    if (plan.m_assign - params.m_assign).abs() > FEASIBILITY_TOL {
        out.push(v(
            PlanRule::Horizon,
            None,
            None,
            format!(
                "plan budget {} differs from mission budget {}",
                plan.m_assign, params.m_assign
            ),
        ));
    }
    if plan.events.len() != params.num_rendezvous {
        out.push(v(
            PlanRule::EventCount,
            None,
            None,
            format!(
                "plan has {} events, mission has {}",
                plan.events.len(),
                params.num_rendezvous
            ),
        ));
    }

    for pair in plan.events.windows(2) {
        if pair[1].deadline < pair[0].deadline {
            out.push(v(
                PlanRule::Ordering,
                Some(pair[1].id),
                None,
                format!(
                    "deadline {} precedes previous {}",
                    pair[1].deadline, pair[0].deadline
                ),
            ));
        }
    }
    for ev in &plan.events {
        let id = Some(ev.id);
        if ev.deadline > params.m_assign + FEASIBILITY_TOL || ev.deadline < 0.0 {
            out.push(v(
                PlanRule::Horizon,
                id,
                None,
                format!("deadline {} outside [0, {}]", ev.deadline, params.m_assign),
            ));
        }
        let size = ev.participants.len();
        if size < params.min_robots {
            out.push(v(
                PlanRule::MinTeam,
                id,
                None,
                format!("{size} participants < {}", params.min_robots),
            ));
        }
        if size > params.max_robots {
            out.push(v(
                PlanRule::MaxTeam,
                id,
                None,
                format!("{size} participants > {}", params.max_robots),
            ));
        }
        if size + 1 > params.num_robots {
            out.push(v(
                PlanRule::TeamCap,
                id,
                None,
                format!("{size} participants leave nobody outside the team"),
            ));
        }
        for &r in &ev.participants {
            if r == 0 || r > nr {
                out.push(v(
                    PlanRule::UnknownRobot,
                    id,
                    Some(r),
                    format!("robot id outside 1..={nr}"),
                ));
            }
            match ev.starts.get(&r) {
                None => out.push(v(
                    PlanRule::Overlap,
                    id,
                    Some(r),
                    "participant has no job start".into(),
                )),
                Some(&s) if s > ev.deadline + FEASIBILITY_TOL || s < -FEASIBILITY_TOL => {
                    out.push(v(
                        PlanRule::Horizon,
                        id,
                        Some(r),
                        format!("job start {s} outside [0, {}]", ev.deadline),
                    ))
                }
                _ => {}
            }
        }
    }
    for r in 1..=nr {
        let mine: Vec<&PlanEvent> = plan.events.iter().filter(|e| e.involves(r)).collect();
        if mine.is_empty() {
            out.push(v(
                PlanRule::Coverage,
                None,
                Some(r),
                "robot takes part in no event".into(),
            ));
        }
        for pair in mine.windows(2) {
            if let Some(&start) = pair[1].starts.get(&r) {
                if start < pair[0].deadline - FEASIBILITY_TOL {
                    out.push(v(
                        PlanRule::Overlap,
                        Some(pair[1].id),
                        Some(r),
                        format!(
                            "job starts at {start} before event {} ends at {}",
                            pair[0].id, pair[0].deadline
                        ),
                    ));
                }
            }
        }
    }
    out
}
