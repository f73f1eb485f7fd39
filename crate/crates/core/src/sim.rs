//! Lifelong pickup-and-delivery episodes on a warehouse grid.
//!
//! One [`Simulation::step`] spawns tasks, assigns them, lets agents that
//! need a plan run the active mechanism, executes one action per agent and
//! then handles pickups and deliveries.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::conflicts::{AgentId, Time};
use crate::error::{ConfigError, SimError};
use crate::negotiation::{Fleet, MechanismKind, PlanStatus};
use crate::planner::default_horizon;
use crate::trace::{AgentSnapshot, TaskEvent, TraceRecord, SCHEMA_VERSION};
use crate::world::{Cell, DistanceTable, GridMap, Orientation, Pose};

pub type TaskId = u64;

const STREAM_SPAWN: u64 = 1;
const STREAM_PLACEMENT: u64 = 2;
const STREAM_NEGOTIATION: u64 = 3;
const STREAM_ORDER: u64 = 4;

/// Cost used for agent/task pairs that cannot be matched.
const UNREACHABLE: f64 = 1e12;

/// Independent random stream `stream` derived from `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub pickup: Cell,
    pub delivery: Cell,
    pub spawn_t: Time,
    pub assign_t: Option<Time>,
    pub pickup_t: Option<Time>,
    pub deliver_t: Option<Time>,
    pub agent: Option<AgentId>,
    /// Free-floor cost from the pose at pickup to the delivery cell.
    pub baseline: Option<u32>,
}

impl Task {
    pub fn new(id: TaskId, pickup: Cell, delivery: Cell, spawn_t: Time) -> Self {
        Self {
            id,
            pickup,
            delivery,
            spawn_t,
            assign_t: None,
            pickup_t: None,
            deliver_t: None,
            agent: None,
            baseline: None,
        }
    }

    pub fn record(&self) -> TaskRecord {
        let task_time = self.deliver_t.zip(self.assign_t).map(|(d, a)| d - a);
        let service_time = self.deliver_t.zip(self.pickup_t).map(|(d, p)| d - p);
        TaskRecord {
            task_id: self.id,
            spawn_t: self.spawn_t,
            assign_t: self.assign_t,
            pickup_t: self.pickup_t,
            deliver_t: self.deliver_t,
            agent_id: self.agent.map(|a| a.0),
            task_time,
            service_time,
            service_time_increase: service_time
                .zip(self.baseline)
                .map(|(s, b)| s as i64 - b as i64),
        }
    }
}

/// One row of `tasks.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub spawn_t: Time,
    pub assign_t: Option<Time>,
    pub pickup_t: Option<Time>,
    pub deliver_t: Option<Time>,
    pub agent_id: Option<u32>,
    pub task_time: Option<Time>,
    pub service_time: Option<Time>,
    pub service_time_increase: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "task", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    ToPickup(TaskId),
    ToDelivery(TaskId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub phase: Phase,
    /// Task picked up right after the current delivery.
    pub next_task: Option<TaskId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenOrder {
    /// Ascending agent id.
    #[default]
    Ascending,
    /// A fresh seeded permutation every step.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub interior_width: u32,
    pub interior_height: u32,
    pub border: u32,
    pub agents: usize,
    pub mechanism: MechanismKind,
    pub steps: u32,
    /// Expected new tasks per step.
    pub task_rate: f64,
    pub seed: u64,
    pub horizon: u32,
    pub token_order: TokenOrder,
    /// Spawned tasks beyond this many waiting ones are dropped.
    pub max_queue: usize,
}

impl SimConfig {
    /// Warehouse defaults: one-cell border, 100 steps, 0.5 tasks per agent
    /// and step, ascending planning order.
    pub fn new(width: u32, height: u32, agents: usize, mechanism: MechanismKind, seed: u64) -> Self {
        let map = GridMap::warehouse(width, height);
        Self {
            interior_width: width,
            interior_height: height,
            border: 1,
            agents,
            mechanism,
            steps: 100,
            task_rate: default_task_rate(agents),
            seed,
            horizon: default_horizon(&map),
            token_order: TokenOrder::Ascending,
            max_queue: default_max_queue(agents),
        }
    }

    pub fn map(&self) -> GridMap {
        GridMap::new(self.interior_width, self.interior_height, self.border)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.interior_width == 0 || self.interior_height == 0 {
            return Err(ConfigError::invalid("grid", "interior width and height must be positive"));
        }
        if self.interior_width * self.interior_height < 2 {
            return Err(ConfigError::invalid("grid", "interior needs at least two cells"));
        }
        let area = self.map().traversable_area();
        if self.agents > area {
            return Err(ConfigError::invalid(
                "agents",
                format!("{} agents do not fit on {area} cells", self.agents),
            ));
        }
        if let MechanismKind::Karma { tau } = self.mechanism {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(ConfigError::invalid("tau", format!("must be finite and >= 0, got {tau}")));
            }
        }
        if !(self.task_rate.is_finite() && self.task_rate >= 0.0) {
            return Err(ConfigError::invalid(
                "task_rate",
                format!("must be finite and >= 0, got {}", self.task_rate),
            ));
        }
        if self.horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be positive"));
        }
        Ok(())
    }
}

pub fn default_task_rate(agents: usize) -> f64 {
    0.5 * agents as f64
}

pub fn default_max_queue(agents: usize) -> usize {
    2 * agents.max(1)
}

/// Summary statistics over delivered tasks. Standard deviations are
/// population standard deviations; `None` when nothing was delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub spawned_tasks: usize,
    pub completed_tasks: usize,
    pub mean_task_time: Option<f64>,
    pub std_task_time: Option<f64>,
    pub mean_service_time: Option<f64>,
    pub std_service_time: Option<f64>,
    pub mean_service_time_increase: Option<f64>,
    pub std_service_time_increase: Option<f64>,
    pub astar_calls: u64,
    pub plan_events: usize,
    pub negotiations: usize,
    pub tasks: Vec<TaskRecord>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

impl MetricsSummary {
    pub fn from_records(tasks: Vec<TaskRecord>, astar_calls: u64, plan_events: usize, negotiations: usize) -> Self {
        let done: Vec<&TaskRecord> = tasks.iter().filter(|t| t.deliver_t.is_some()).collect();
        let collect = |f: &dyn Fn(&TaskRecord) -> Option<f64>| -> Vec<f64> { done.iter().filter_map(|t| f(t)).collect() };
        let (mean_task_time, std_task_time) = mean_std(&collect(&|t| t.task_time.map(f64::from)));
        let (mean_service_time, std_service_time) = mean_std(&collect(&|t| t.service_time.map(f64::from)));
        let (mean_service_time_increase, std_service_time_increase) =
            mean_std(&collect(&|t| t.service_time_increase.map(|v| v as f64)));
        Self {
            spawned_tasks: tasks.len(),
            completed_tasks: done.len(),
            mean_task_time,
            std_task_time,
            mean_service_time,
            std_service_time,
            mean_service_time_increase,
            std_service_time_increase,
            astar_calls,
            plan_events,
            negotiations,
            tasks,
        }
    }
}

/// Poisson number of tasks with mean `rate`, each with distinct uniformly
/// drawn interior pickup and delivery cells. Ids start at `next_id`.
pub fn spawn_tasks<R: Rng + ?Sized>(rng: &mut R, rate: f64, t: Time, map: &GridMap, next_id: TaskId) -> Vec<Task> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let cells: Vec<Cell> = map.interior_cells().collect();
    assert!(cells.len() >= 2, "interior needs at least two cells");
    let count = Poisson::new(rate).expect("positive finite rate").sample(rng) as u64;
    (0..count)
        .map(|k| {
            let pickup = cells[rng.random_range(0..cells.len())];
            let delivery = loop {
                let c = cells[rng.random_range(0..cells.len())];
                if c != pickup {
                    break c;
                }
            };
            Task::new(next_id + k, pickup, delivery, t)
        })
        .collect()
}

/// When and where an agent can start its next task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Availability {
    pub agent: AgentId,
    pub pose: Pose,
    /// Steps until the agent is free; 0 for idle agents.
    pub delay: u32,
}

/// Minimum total-cost matching of tasks to agents, where each entry is the
/// agent's delay plus its free-floor cost to the pickup. Unmatched or
/// unreachable tasks are left out.
pub fn assign_tasks(tasks: &[Task], agents: &[Availability], dist: &DistanceTable) -> Vec<(AgentId, TaskId)> {
    if tasks.is_empty() || agents.is_empty() {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = agents
        .iter()
        .map(|a| {
            tasks
                .iter()
                .map(|t| match dist.cost(a.pose, t.pickup) {
                    Some(c) => f64::from(a.delay + c),
                    None => UNREACHABLE,
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
        .into_iter()
        .filter(|&(r, c)| cost[r][c] < UNREACHABLE)
        .map(|(r, c)| (agents[r].agent, tasks[c].id))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    dist: DistanceTable,
    fleet: Fleet,
    agents: Vec<AgentRecord>,
    tasks: Vec<Task>,
    queue: Vec<TaskId>,
    spawn_rng: ChaCha8Rng,
    negotiation_rng: ChaCha8Rng,
    order_rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    plan_events: usize,
    negotiations: usize,
}

/// Everything one episode produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: MetricsSummary,
    pub trace: Vec<TraceRecord>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let map = config.map();
        let mut placement = substream(config.seed, STREAM_PLACEMENT);
        let cells: Vec<Cell> = map.cells().filter(|c| map.is_traversable(*c)).collect();
        let chosen: Vec<Cell> = cells.choose_multiple(&mut placement, config.agents).copied().collect();
        let poses: Vec<Pose> = chosen
            .into_iter()
            .map(|cell| Pose::new(cell, Orientation::ALL[placement.random_range(0..4)]))
            .collect();
        Ok(Self::with_poses(config, &poses))
    }

    /// Starts from the given poses instead of random ones.
    pub fn with_poses(config: SimConfig, poses: &[Pose]) -> Self {
        let map = config.map();
        let fleet = Fleet::new(map.clone(), config.horizon, poses);
        let agents = (0..poses.len())
            .map(|i| AgentRecord {
                id: AgentId(i as u32),
                phase: Phase::Idle,
                next_task: None,
            })
            .collect();
        let mut sim = Self {
            dist: DistanceTable::new(&map),
            fleet,
            agents,
            tasks: Vec::new(),
            queue: Vec::new(),
            spawn_rng: substream(config.seed, STREAM_SPAWN),
            negotiation_rng: substream(config.seed, STREAM_NEGOTIATION),
            order_rng: substream(config.seed, STREAM_ORDER),
            trace: Vec::new(),
            plan_events: 0,
            negotiations: 0,
            config,
        };
        sim.trace.push(TraceRecord::Header {
            schema_version: SCHEMA_VERSION,
            config: sim.config.clone(),
        });
        sim.snapshot();
        sim
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> Time {
        self.fleet.now()
    }

    pub fn fleet(&self) -> &Fleet {
        &self.fleet
    }

    pub fn fleet_mut(&mut self) -> &mut Fleet {
        &mut self.fleet
    }

    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn queue(&self) -> &[TaskId] {
        &self.queue
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Adds a task by hand, bypassing the spawner.
    pub fn push_task(&mut self, pickup: Cell, delivery: Cell) -> TaskId {
        let id = self.tasks.len() as TaskId;
        let task = Task::new(id, pickup, delivery, self.now());
        self.trace.push(TraceRecord::Task {
            t: self.now(),
            task: id,
            event: TaskEvent::Spawn { pickup, delivery },
        });
        self.tasks.push(task);
        self.queue.push(id);
        id
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        self.spawn();
        self.assign();
        self.plan();
        self.fleet.execute_step()?;
        self.arrivals();
        self.snapshot();
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        for _ in 0..self.config.steps {
            self.step()?;
        }
        Ok(RunOutput {
            summary: self.metrics(),
            trace: self.trace,
        })
    }

    pub fn metrics(&self) -> MetricsSummary {
        MetricsSummary::from_records(
            self.tasks.iter().map(Task::record).collect(),
            self.fleet.astar_calls(),
            self.plan_events,
            self.negotiations,
        )
    }

    fn spawn(&mut self) {
        let t = self.now();
        let map = self.fleet.map().clone();
        let spawned = spawn_tasks(
            &mut self.spawn_rng,
            self.config.task_rate,
            t,
            &map,
            self.tasks.len() as TaskId,
        );
        let room = self.config.max_queue.saturating_sub(self.queue.len());
        for task in spawned.into_iter().take(room) {
            let id = self.tasks.len() as TaskId;
            self.trace.push(TraceRecord::Task {
                t,
                task: id,
                event: TaskEvent::Spawn {
                    pickup: task.pickup,
                    delivery: task.delivery,
                },
            });
            self.tasks.push(Task { id, ..task });
            self.queue.push(id);
        }
    }

    fn availability(&self) -> Vec<Availability> {
        let now = self.now();
        self.agents
            .iter()
            .filter_map(|a| {
                let fa = self.fleet.agent(a.id);
                match a.phase {
                    Phase::Idle => Some(Availability {
                        agent: a.id,
                        pose: fa.trajectory.first(),
                        delay: 0,
                    }),
                    Phase::ToDelivery(_) if a.next_task.is_none() && fa.status == PlanStatus::Committed => {
                        Some(Availability {
                            agent: a.id,
                            pose: fa.trajectory.last(),
                            delay: fa.trajectory.end_time().saturating_sub(now),
                        })
                    }
                    _ => None,
                }
            })
            .collect()
    }

    fn assign(&mut self) {
        let t = self.now();
        let waiting: Vec<Task> = self.queue.iter().map(|&id| self.tasks[id as usize].clone()).collect();
        let pairs = assign_tasks(&waiting, &self.availability(), &self.dist);
        for (agent, task_id) in pairs {
            self.queue.retain(|&q| q != task_id);
            let task = &mut self.tasks[task_id as usize];
            task.assign_t = Some(t);
            task.agent = Some(agent);
            let pickup = task.pickup;
            let record = &mut self.agents[agent.0 as usize];
            if record.phase == Phase::Idle {
                record.phase = Phase::ToPickup(task_id);
                self.fleet.set_goal(agent, Some(pickup));
            } else {
                record.next_task = Some(task_id);
            }
            self.trace.push(TraceRecord::Task {
                t,
                task: task_id,
                event: TaskEvent::Assign { agent },
            });
        }
    }

    fn plan(&mut self) {
        let mut order: Vec<AgentId> = self.fleet.ids().collect();
        if self.config.token_order == TokenOrder::Shuffled {
            order.shuffle(&mut self.order_rng);
        }
        let report = self
            .fleet
            .plan_round(self.config.mechanism, &order, &mut self.negotiation_rng);
        self.plan_events += report.events.len();
        self.negotiations += report.negotiations.len();
        for event in report.events {
            self.trace.push(TraceRecord::Plan(event));
        }
        for outcome in report.negotiations {
            self.trace.push(TraceRecord::Negotiation(Box::new(outcome)));
        }
    }

    fn arrivals(&mut self) {
        let t = self.now();
        for n in 0..self.agents.len() {
            let id = AgentId(n as u32);
            if !self.fleet.has_arrived(id) {
                continue;
            }
            match self.agents[n].phase {
                Phase::Idle => {}
                Phase::ToPickup(k) => {
                    let pose = self.fleet.pose(id);
                    let task = &mut self.tasks[k as usize];
                    task.pickup_t = Some(t);
                    task.baseline = self.dist.cost(pose, task.delivery);
                    let delivery = task.delivery;
                    let baseline = task.baseline;
                    if self.config.mechanism.is_karma() {
                        self.fleet.reset_karma(id);
                    }
                    self.agents[n].phase = Phase::ToDelivery(k);
                    self.fleet.set_goal(id, Some(delivery));
                    self.trace.push(TraceRecord::Task {
                        t,
                        task: k,
                        event: TaskEvent::Pickup { agent: id, baseline },
                    });
                }
                Phase::ToDelivery(k) => {
                    self.tasks[k as usize].deliver_t = Some(t);
                    self.trace.push(TraceRecord::Task {
                        t,
                        task: k,
                        event: TaskEvent::Deliver { agent: id },
                    });
                    match self.agents[n].next_task.take() {
                        Some(next) => {
                            self.agents[n].phase = Phase::ToPickup(next);
                            let pickup = self.tasks[next as usize].pickup;
                            self.fleet.set_goal(id, Some(pickup));
                        }
                        None => {
                            self.agents[n].phase = Phase::Idle;
                            self.fleet.set_goal(id, None);
                        }
                    }
                }
            }
        }
    }

    fn snapshot(&mut self) {
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let fa = self.fleet.agent(a.id);
                AgentSnapshot {
                    agent: a.id,
                    pose: fa.trajectory.first(),
                    phase: a.phase,
                    karma: fa.karma,
                    status: fa.status,
                }
            })
            .collect();
        self.trace.push(TraceRecord::Step { t: self.now(), agents });
    }
}

/// Runs one seeded episode.
pub fn run(config: SimConfig) -> Result<RunOutput, SimError> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflicts::detect_conflicts;
    use crate::trace::{check_trace, replay};
    use proptest::prelude::*;

    const E: Orientation = Orientation::East;
    const W: Orientation = Orientation::West;

    fn pose(x: i32, y: i32, h: Orientation) -> Pose {
        Pose::new(Cell::new(x, y), h)
    }

    fn all_mechanisms() -> [MechanismKind; 4] {
        [
            MechanismKind::TokenPassing,
            MechanismKind::Egoistic,
            MechanismKind::Altruistic,
            MechanismKind::Karma { tau: 0.5 },
        ]
    }

    fn quiet(width: u32, agents: usize, mechanism: MechanismKind) -> SimConfig {
        SimConfig {
            task_rate: 0.0,
            ..SimConfig::new(width, width, agents, mechanism, 1)
        }
    }

    #[test]
    fn zero_rate_spawns_nothing() {
        let map = GridMap::warehouse(5, 5);
        let mut rng = substream(9, STREAM_SPAWN);
        for t in 0..1000 {
            assert!(spawn_tasks(&mut rng, 0.0, t, &map, 0).is_empty());
        }
    }

    #[test]
    fn spawned_cells_are_interior_and_distinct() {
        let map = GridMap::warehouse(3, 2);
        let mut rng = substream(4, STREAM_SPAWN);
        let mut seen = 0;
        while seen < 10_000 {
            for task in spawn_tasks(&mut rng, 2.0, 0, &map, 0) {
                assert!(map.is_interior(task.pickup) && map.is_interior(task.delivery));
                assert_ne!(task.pickup, task.delivery);
                seen += 1;
            }
        }
    }

    #[test]
    fn spawn_count_mean_matches_rate() {
        let map = GridMap::warehouse(5, 5);
        let mut rng = substream(11, STREAM_SPAWN);
        let rate = 1.7;
        let n = 100_000;
        let total: usize = (0..n).map(|t| spawn_tasks(&mut rng, rate, t, &map, 0).len()).sum();
        let mean = total as f64 / n as f64;
        let sigma = (rate / n as f64).sqrt();
        assert!((mean - rate).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn busy_agent_close_to_pickup_wins() {
        let map = GridMap::warehouse(5, 1);
        let dist = DistanceTable::new(&map);
        let task = Task::new(0, Cell::new(3, 1), Cell::new(5, 1), 0);
        let idle = Availability {
            agent: AgentId(0),
            pose: pose(1, 1, E),
            delay: 0,
        };
        let busy = Availability {
            agent: AgentId(1),
            pose: pose(3, 1, E),
            delay: 1,
        };
        assert_eq!(dist.cost(idle.pose, task.pickup), Some(2));
        assert_eq!(assign_tasks(&[task], &[idle, busy], &dist), vec![(AgentId(1), 0)]);
    }

    #[test]
    fn assignment_minimizes_the_sum() {
        let map = GridMap::warehouse(9, 1);
        let dist = DistanceTable::new(&map);
        let agents = [
            Availability {
                agent: AgentId(0),
                pose: pose(2, 1, E),
                delay: 0,
            },
            Availability {
                agent: AgentId(1),
                pose: pose(5, 1, W),
                delay: 0,
            },
        ];
        let tasks = [
            Task::new(0, Cell::new(4, 1), Cell::new(9, 1), 0),
            Task::new(1, Cell::new(1, 1), Cell::new(9, 1), 0),
        ];
        let cost = |a: usize, t: usize| dist.cost(agents[a].pose, tasks[t].pickup).unwrap();
        let best = (cost(0, 0) + cost(1, 1)).min(cost(0, 1) + cost(1, 0));
        // agent 0 grabbing its nearest task first
        let greedy = if cost(0, 0) <= cost(0, 1) {
            cost(0, 0) + cost(1, 1)
        } else {
            cost(0, 1) + cost(1, 0)
        };
        assert!(greedy > best);
        let pairs = assign_tasks(&tasks, &agents, &dist);
        assert_eq!(pairs.len(), 2);
        let got: u32 = pairs.iter().map(|&(a, t)| cost(a.0 as usize, t as usize)).sum();
        assert_eq!(got, best);
    }

    #[test]
    fn single_task_is_assigned_now() {
        let mut sim = Simulation::with_poses(quiet(5, 1, MechanismKind::TokenPassing), &[pose(1, 1, E)]);
        sim.step().unwrap();
        let id = sim.push_task(Cell::new(4, 4), Cell::new(2, 2));
        sim.step().unwrap();
        assert_eq!(sim.tasks()[id as usize].assign_t, Some(1));
        assert_eq!(sim.agents()[0].phase, Phase::ToPickup(id));
    }

    #[test]
    fn idle_agent_waits() {
        let start = pose(2, 2, W);
        let mut sim = Simulation::with_poses(quiet(5, 1, MechanismKind::Karma { tau: 0.5 }), &[start]);
        sim.step().unwrap();
        assert_eq!(sim.fleet().pose(AgentId(0)), start);
        assert_eq!(sim.agents()[0].phase, Phase::Idle);
        assert!(sim.tasks().is_empty());
        assert_eq!(sim.fleet().astar_calls(), 0);
    }

    #[test]
    fn pickup_next_door_resets_karma() {
        let mut sim = Simulation::with_poses(quiet(5, 1, MechanismKind::Karma { tau: 0.5 }), &[pose(1, 1, E)]);
        sim.fleet_mut().set_karma(AgentId(0), 7);
        let id = sim.push_task(Cell::new(2, 1), Cell::new(4, 4));
        sim.step().unwrap();
        let task = &sim.tasks()[id as usize];
        assert_eq!(task.pickup_t, Some(1));
        assert_eq!(sim.fleet().karma(AgentId(0)), 0);
        assert_eq!(sim.agents()[0].phase, Phase::ToDelivery(id));
    }

    #[test]
    fn collision_course_stays_safe_under_every_mechanism() {
        for mech in all_mechanisms() {
            let cfg = quiet(5, 2, mech);
            let mut sim = Simulation::with_poses(cfg, &[pose(1, 3, E), pose(5, 3, W)]);
            sim.push_task(Cell::new(4, 3), Cell::new(5, 5));
            sim.push_task(Cell::new(2, 3), Cell::new(1, 1));
            for _ in 0..30 {
                sim.step().unwrap();
                let trajs: Vec<_> = sim.fleet().trajectories().cloned().collect();
                assert!(detect_conflicts(&trajs[0], &trajs[1..]).is_empty(), "{mech:?}");
            }
            let report = check_trace(sim.trace()).unwrap();
            assert!(report.is_clean(), "{mech:?}: {:?}", report.violations);
            assert_eq!(sim.metrics().completed_tasks, 2, "{mech:?}");
        }
    }

    #[test]
    fn empty_fleet_does_nothing() {
        let out = run(SimConfig::new(5, 5, 0, MechanismKind::Egoistic, 3)).unwrap();
        assert_eq!(out.summary.completed_tasks, 0);
        assert_eq!(out.summary.astar_calls, 0);
    }

    #[test]
    fn lone_agent_takes_shortest_routes() {
        for seed in 0..5 {
            let out = run(SimConfig::new(5, 5, 1, MechanismKind::Altruistic, seed)).unwrap();
            assert!(out.summary.completed_tasks > 0);
            for t in out.summary.tasks.iter().filter(|t| t.deliver_t.is_some()) {
                assert_eq!(t.service_time_increase, Some(0));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        for mech in all_mechanisms() {
            let cfg = SimConfig {
                token_order: TokenOrder::Shuffled,
                ..SimConfig::new(5, 5, 5, mech, 17)
            };
            let a = run(cfg.clone()).unwrap();
            let b = run(cfg).unwrap();
            assert_eq!(a.summary, b.summary);
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn invalid_configs_name_the_key() {
        let mut cfg = SimConfig::new(3, 3, 30, MechanismKind::Egoistic, 0);
        assert!(matches!(cfg.validate(), Err(ConfigError::InvalidValue { ref key, .. }) if key == "agents"));
        cfg.agents = 2;
        cfg.task_rate = -1.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::InvalidValue { ref key, .. }) if key == "task_rate"));
        cfg.task_rate = 1.0;
        cfg.mechanism = MechanismKind::Karma { tau: -0.5 };
        assert!(matches!(cfg.validate(), Err(ConfigError::InvalidValue { ref key, .. }) if key == "tau"));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, Some(5.0));
        assert_eq!(s, Some(2.0));
        assert_eq!(mean_std(&[]), (None, None));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn episodes_are_safe_and_consistent(seed in 0u64..10_000, agents in 1usize..9, mech in 0usize..4) {
            let mut cfg = SimConfig::new(5, 5, agents, all_mechanisms()[mech], seed);
            cfg.steps = 40;
            let out = run(cfg).unwrap();
            let report = check_trace(&out.trace).unwrap();
            prop_assert!(report.is_clean(), "{:?}", report.violations);
            for t in &out.summary.tasks {
                let stamps = [Some(t.spawn_t), t.assign_t, t.pickup_t, t.deliver_t];
                let set: Vec<u32> = stamps.iter().map_while(|s| *s).collect();
                prop_assert!(stamps[set.len()..].iter().all(Option::is_none));
                prop_assert!(set.windows(2).all(|w| w[0] <= w[1]));
                if let Some(inc) = t.service_time_increase {
                    prop_assert!(inc >= 0);
                }
            }
            prop_assert_eq!(replay(&out.trace).unwrap(), out.summary);
        }
    }
}
