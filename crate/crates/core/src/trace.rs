//! Episode traces: one JSON record per line, a post-hoc safety and Karma
//! checker that works on the file alone, and replay to metrics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conflicts::{AgentId, Time};
use crate::error::TraceError;
use crate::negotiation::{NegotiationOutcome, PlanEvent, PlanStatus};
use crate::sim::{MetricsSummary, Phase, SimConfig, Task, TaskId};
use crate::world::{Action, Cell, Pose};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent: AgentId,
    pub pose: Pose,
    pub phase: Phase,
    pub karma: i64,
    pub status: PlanStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskEvent {
    Spawn { pickup: Cell, delivery: Cell },
    Assign { agent: AgentId },
    Pickup { agent: AgentId, baseline: Option<u32> },
    Deliver { agent: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header { schema_version: u32, config: SimConfig },
    /// State after all events of time `t`.
    Step { t: Time, agents: Vec<AgentSnapshot> },
    Task { t: Time, task: TaskId, event: TaskEvent },
    Plan(PlanEvent),
    Negotiation(Box<NegotiationOutcome>),
}

pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> Result<(), TraceError> {
    let io = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write_records(&mut out, records).map_err(io)?;
    out.flush().map_err(io)
}

pub fn write_records<W: Write>(out: &mut W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let io = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    VertexCollision { t: Time, a: AgentId, b: AgentId, cell: Cell },
    Swap { t: Time, a: AgentId, b: AgentId },
    IllegalMove { t: Time, agent: AgentId },
    KarmaTransfer { t: Time, initiator: AgentId, counterpart: AgentId },
    KarmaNotConserved { t: Time, initiator: AgentId, counterpart: AgentId },
    KarmaNotReset { t: Time, agent: AgentId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub steps: usize,
    pub negotiations: usize,
    pub pickups: usize,
    pub violations: Vec<Violation>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn header(records: &[TraceRecord]) -> Result<&SimConfig, TraceError> {
    match records.first() {
        Some(TraceRecord::Header { schema_version, config }) => {
            if *schema_version != SCHEMA_VERSION {
                return Err(TraceError::Malformed(format!(
                    "schema version {schema_version}, expected {SCHEMA_VERSION}"
                )));
            }
            Ok(config)
        }
        _ => Err(TraceError::Malformed("first record is not a header".into())),
    }
}

/// Checks executed moves for collisions, swaps and illegal kinematics, and
/// Karma bookkeeping: transfers equal the replanner's Δ, each negotiation
/// conserves the pair's balance sum, and balances are zero right after a
/// pickup.
pub fn check_trace(records: &[TraceRecord]) -> Result<TraceReport, TraceError> {
    let config = header(records)?;
    let karma = config.mechanism.is_karma();
    let mut report = TraceReport::default();
    let mut prev: Option<(Time, &[AgentSnapshot])> = None;
    let mut pending_pickups: Vec<(Time, AgentId)> = Vec::new();

    for record in &records[1..] {
        match record {
            TraceRecord::Header { .. } => return Err(TraceError::Malformed("second header".into())),
            TraceRecord::Step { t, agents } => {
                report.steps += 1;
                check_positions(*t, agents, &mut report.violations);
                if let Some((pt, before)) = prev {
                    if *t != pt + 1 || before.len() != agents.len() {
                        return Err(TraceError::Malformed(format!("step {t} does not follow step {pt}")));
                    }
                    check_moves(pt, before, agents, &mut report.violations);
                }
                for (pt, agent) in pending_pickups.drain(..) {
                    let balance = agents.iter().find(|a| a.agent == agent).map(|a| a.karma);
                    if pt != *t || balance != Some(0) {
                        report.violations.push(Violation::KarmaNotReset { t: pt, agent });
                    }
                }
                prev = Some((*t, agents));
            }
            TraceRecord::Task { t, event, .. } => {
                if let TaskEvent::Pickup { agent, .. } = event {
                    report.pickups += 1;
                    if karma {
                        pending_pickups.push((*t, *agent));
                    }
                }
            }
            TraceRecord::Plan(_) => {}
            TraceRecord::Negotiation(o) => {
                report.negotiations += 1;
                check_karma(o, karma, &mut report.violations);
            }
        }
    }
    for (t, agent) in pending_pickups {
        report.violations.push(Violation::KarmaNotReset { t, agent });
    }
    Ok(report)
}

fn check_positions(t: Time, agents: &[AgentSnapshot], out: &mut Vec<Violation>) {
    let mut seen: BTreeMap<Cell, AgentId> = BTreeMap::new();
    for a in agents {
        if let Some(&other) = seen.get(&a.pose.cell) {
            out.push(Violation::VertexCollision {
                t,
                a: other,
                b: a.agent,
                cell: a.pose.cell,
            });
        } else {
            seen.insert(a.pose.cell, a.agent);
        }
    }
}

fn check_moves(t: Time, before: &[AgentSnapshot], after: &[AgentSnapshot], out: &mut Vec<Violation>) {
    for (b, a) in before.iter().zip(after) {
        if b.agent != a.agent || Action::between(b.pose, a.pose).is_none() {
            out.push(Violation::IllegalMove { t, agent: a.agent });
        }
    }
    let moved: BTreeMap<(Cell, Cell), AgentId> = before
        .iter()
        .zip(after)
        .filter(|(b, a)| b.pose.cell != a.pose.cell)
        .map(|(b, a)| ((b.pose.cell, a.pose.cell), b.agent))
        .collect();
    for (&(from, to), &agent) in &moved {
        if let Some(&other) = moved.get(&(to, from)) {
            if agent < other {
                out.push(Violation::Swap { t, a: agent, b: other });
            }
        }
    }
}

fn check_karma(o: &NegotiationOutcome, karma: bool, out: &mut Vec<Violation>) {
    let t = o.time;
    let (initiator, counterpart) = (o.initiator, o.counterpart);
    let expected = match (karma, &o.new_trajectory) {
        (true, Some(_)) => o.delta_replanner.finite(),
        _ => Some(0),
    };
    if expected != Some(o.karma_transfer) {
        out.push(Violation::KarmaTransfer { t, initiator, counterpart });
    }
    let before: i64 = o.karma_before.iter().sum();
    let after: i64 = o.karma_after.iter().sum();
    if before != after {
        out.push(Violation::KarmaNotConserved { t, initiator, counterpart });
    }
}

/// Rebuilds the episode's metrics from its trace alone.
pub fn replay(records: &[TraceRecord]) -> Result<MetricsSummary, TraceError> {
    header(records)?;
    let mut tasks: BTreeMap<TaskId, Task> = BTreeMap::new();
    let mut astar_calls = 0;
    let mut plan_events = 0;
    let mut negotiations = 0;
    let missing = |id: TaskId| TraceError::Malformed(format!("event for unknown task {id}"));
    for record in records {
        match record {
            TraceRecord::Task { t, task, event } => match *event {
                TaskEvent::Spawn { pickup, delivery } => {
                    tasks.insert(*task, Task::new(*task, pickup, delivery, *t));
                }
                TaskEvent::Assign { agent } => {
                    let k = tasks.get_mut(task).ok_or_else(|| missing(*task))?;
                    k.assign_t = Some(*t);
                    k.agent = Some(agent);
                }
                TaskEvent::Pickup { baseline, .. } => {
                    let k = tasks.get_mut(task).ok_or_else(|| missing(*task))?;
                    k.pickup_t = Some(*t);
                    k.baseline = baseline;
                }
                TaskEvent::Deliver { .. } => {
                    tasks.get_mut(task).ok_or_else(|| missing(*task))?.deliver_t = Some(*t);
                }
            },
            TraceRecord::Plan(e) => {
                plan_events += 1;
                astar_calls += e.astar_calls;
            }
            TraceRecord::Negotiation(_) => negotiations += 1,
            TraceRecord::Header { .. } | TraceRecord::Step { .. } => {}
        }
    }
    Ok(MetricsSummary::from_records(
        tasks.values().map(Task::record).collect(),
        astar_calls,
        plan_events,
        negotiations,
    ))
}
