//! Decentralized multi-agent path finding with Karma-based conflict
//! negotiation, plus a lifelong pickup-and-delivery warehouse simulator and
//! a centralized CBS solver for checking small instances.
//!
//! Module map:
//!
//! - [`world`]: grid floor, poses with heading, one-step kinematics
//! - [`conflicts`]: timed trajectories, reservation table, conflict detection
//! - [`planner`]: space-time A* with A*-call accounting
//! - [`negotiation`]: token passing, egoistic / altruistic / Karma rules and
//!   the bilateral negotiation loop
//! - [`cbs`]: conflict-based search and a joint-state brute-force checker
//! - [`assignment`]: Hungarian linear sum assignment
//! - [`sim`]: the lifelong pickup-and-delivery episode and its metrics
//! - [`trace`], [`scenario`], [`cli`]: run outputs, config files, commands

pub mod assignment;
pub mod cbs;
pub mod cli;
pub mod conflicts;
pub mod error;
pub mod negotiation;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod world;

pub use conflicts::{detect_conflicts, AgentId, Conflict, ConflictKind, ReservationTable, Time, Trajectory};
pub use error::{ConfigError, ContractError, OracleError, SimError, TraceError};
pub use negotiation::{DeltaCost, Fleet, MechanismKind, NegotiationOutcome};
pub use planner::{plan, AstarCounter, SearchQuery};
pub use world::{successors, unconstrained_cost, Action, Cell, GridMap, Orientation, Pose};
