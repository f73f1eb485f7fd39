//! Pairwise decision rules: who has to replan when two agents collide.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conflicts::{AgentId, Conflict};
use crate::error::ContractError;

/// Trajectory cost increase an agent incurs by replanning around one more
/// agent. `Infeasible` ranks above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaCost {
    Finite(i64),
    Infeasible,
}

impl DeltaCost {
    pub fn finite(self) -> Option<i64> {
        match self {
            DeltaCost::Finite(v) => Some(v),
            DeltaCost::Infeasible => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, DeltaCost::Finite(_))
    }

    fn composite(self, karma: i64, tau: f64) -> f64 {
        match self {
            DeltaCost::Finite(d) => d as f64 + tau * karma as f64,
            DeltaCost::Infeasible => f64::INFINITY,
        }
    }
}

impl fmt::Display for DeltaCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaCost::Finite(v) => write!(f, "{v}"),
            DeltaCost::Infeasible => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismKind {
    TokenPassing,
    Egoistic,
    Altruistic,
    Karma { tau: f64 },
}

impl MechanismKind {
    pub fn karma(tau: f64) -> Result<Self, ContractError> {
        if tau.is_finite() && tau >= 0.0 {
            Ok(MechanismKind::Karma { tau })
        } else {
            Err(ContractError::Invalid(format!("tau must be a finite non-negative number, got {tau}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MechanismKind::TokenPassing => "token",
            MechanismKind::Egoistic => "egoistic",
            MechanismKind::Altruistic => "altruistic",
            MechanismKind::Karma { .. } => "karma",
        }
    }

    pub fn is_karma(&self) -> bool {
        matches!(self, MechanismKind::Karma { .. })
    }
}

/// One side of a bilateral negotiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Initiator,
    Counterpart,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Initiator => Side::Counterpart,
            Side::Counterpart => Side::Initiator,
        }
    }
}

fn coin<R: Rng + ?Sized>(rng: &mut R) -> Side {
    if rng.random_bool(0.5) {
        Side::Initiator
    } else {
        Side::Counterpart
    }
}

/// The counterpart gives way only if replanning costs it nothing.
pub fn negotiate_egoistic(_di: DeltaCost, dj: DeltaCost) -> Side {
    match dj {
        DeltaCost::Finite(d) if d <= 0 => Side::Counterpart,
        _ => Side::Initiator,
    }
}

/// The cheaper replanner gives way; a fair coin decides ties. `None` when
/// neither side can replan.
pub fn negotiate_altruistic<R: Rng + ?Sized>(di: DeltaCost, dj: DeltaCost, rng: &mut R) -> Option<Side> {
    if !di.is_feasible() && !dj.is_feasible() {
        return None;
    }
    Some(match dj.cmp(&di) {
        Ordering::Less => Side::Counterpart,
        Ordering::Greater => Side::Initiator,
        Ordering::Equal => coin(rng),
    })
}

/// Compares `Δ + τ·k` on both sides; the lower composite replans. With
/// `τ = 0` this consumes randomness exactly like [`negotiate_altruistic`].
pub fn negotiate_karma<R: Rng + ?Sized>(
    di: DeltaCost,
    dj: DeltaCost,
    ki: i64,
    kj: i64,
    tau: f64,
    rng: &mut R,
) -> Option<Side> {
    if !di.is_feasible() && !dj.is_feasible() {
        return None;
    }
    let ci = di.composite(ki, tau);
    let cj = dj.composite(kj, tau);
    Some(if cj < ci {
        Side::Counterpart
    } else if cj > ci {
        Side::Initiator
    } else {
        coin(rng)
    })
}

/// Pays the replanner its cost increase out of the other agent's balance.
pub fn apply_karma_update(ki: i64, kj: i64, replanner: Side, delta_r: i64) -> (i64, i64) {
    match replanner {
        Side::Initiator => (ki + delta_r, kj - delta_r),
        Side::Counterpart => (ki - delta_r, kj + delta_r),
    }
}

/// Picks the conflict whose counterpart would cost the initiator most to
/// avoid; ties go to the earliest conflict, then the smallest agent id.
pub fn select_priority_conflict(
    conflicts: &[Conflict],
    deltas: &BTreeMap<AgentId, DeltaCost>,
) -> Result<Conflict, ContractError> {
    let mut best: Option<(&Conflict, DeltaCost)> = None;
    for c in conflicts {
        let d = *deltas
            .get(&c.agent_b)
            .ok_or(ContractError::MissingDelta(c.agent_b))?;
        let better = match best {
            None => true,
            Some((b, bd)) => d > bd || (d == bd && (c.time, c.agent_b) < (b.time, b.agent_b)),
        };
        if better {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| *c).ok_or(ContractError::NoConflicts)
}
