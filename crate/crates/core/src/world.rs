//! Grid environment and the orientation-aware kinematic state space.
//!
//! Coordinates have their origin at the top-left corner of the bordered
//! area: `x` grows east, `y` grows south. The interior grid starts at
//! `(border_width, border_width)`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn step(self, heading: Orientation) -> Cell {
        let (dx, dy) = heading.offset();
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "W")]
    West,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::North,
        Orientation::East,
        Orientation::South,
        Orientation::West,
    ];

    pub fn offset(self) -> (i32, i32) {
        match self {
            Orientation::North => (0, -1),
            Orientation::East => (1, 0),
            Orientation::South => (0, 1),
            Orientation::West => (-1, 0),
        }
    }

    pub fn rotate_cw(self) -> Self {
        match self {
            Orientation::North => Orientation::East,
            Orientation::East => Orientation::South,
            Orientation::South => Orientation::West,
            Orientation::West => Orientation::North,
        }
    }

    pub fn rotate_ccw(self) -> Self {
        match self {
            Orientation::North => Orientation::West,
            Orientation::West => Orientation::South,
            Orientation::South => Orientation::East,
            Orientation::East => Orientation::North,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of quarter turns needed to go from `self` to `other` (0, 1 or 2).
    pub fn quarter_turns_to(self, other: Orientation) -> u32 {
        let diff = (other.index() + 4 - self.index()) % 4;
        if diff == 3 {
            1
        } else {
            diff as u32
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Orientation::North => "N",
            Orientation::East => "E",
            Orientation::South => "S",
            Orientation::West => "W",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Orientation,
}

impl Pose {
    pub const fn new(cell: Cell, heading: Orientation) -> Self {
        Self { cell, heading }
    }

    pub fn apply(self, action: Action) -> Pose {
        match action {
            Action::Wait => self,
            Action::Forward => Pose::new(self.cell.step(self.heading), self.heading),
            Action::RotateCw => Pose::new(self.cell, self.heading.rotate_cw()),
            Action::RotateCcw => Pose::new(self.cell, self.heading.rotate_ccw()),
        }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.cell, self.heading.symbol())
    }
}

/// One-time-step action of a robot. Turning and driving never combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Wait,
    Forward,
    RotateCw,
    RotateCcw,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Wait,
        Action::Forward,
        Action::RotateCw,
        Action::RotateCcw,
    ];

    /// Recovers the action that takes `from` to `to`, if one exists.
    pub fn between(from: Pose, to: Pose) -> Option<Action> {
        Action::ALL.into_iter().find(|a| from.apply(*a) == to)
    }
}

/// Rectangular warehouse floor: an interior grid wrapped in a traversable
/// border ring, with optional static obstacles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    interior_width: u32,
    interior_height: u32,
    border_width: u32,
    blocked: BTreeSet<Cell>,
}

impl GridMap {
    pub fn new(interior_width: u32, interior_height: u32, border_width: u32) -> Self {
        Self {
            interior_width,
            interior_height,
            border_width,
            blocked: BTreeSet::new(),
        }
    }

    /// Interior of `width × height` cells with the one-cell border used by
    /// the warehouse scenarios.
    pub fn warehouse(width: u32, height: u32) -> Self {
        Self::new(width, height, 1)
    }

    pub fn with_blocked(mut self, cells: impl IntoIterator<Item = Cell>) -> Self {
        for cell in cells {
            if self.in_bounds(cell) {
                self.blocked.insert(cell);
            }
        }
        self
    }

    pub fn interior_width(&self) -> u32 {
        self.interior_width
    }

    pub fn interior_height(&self) -> u32 {
        self.interior_height
    }

    pub fn border_width(&self) -> u32 {
        self.border_width
    }

    pub fn blocked(&self) -> &BTreeSet<Cell> {
        &self.blocked
    }

    pub fn total_width(&self) -> u32 {
        self.interior_width + 2 * self.border_width
    }

    pub fn total_height(&self) -> u32 {
        self.interior_height + 2 * self.border_width
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0
            && cell.y >= 0
            && (cell.x as u32) < self.total_width()
            && (cell.y as u32) < self.total_height()
    }

    pub fn is_traversable(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.blocked.contains(&cell)
    }

    pub fn is_interior(&self, cell: Cell) -> bool {
        let b = self.border_width as i32;
        cell.x >= b
            && cell.y >= b
            && cell.x < b + self.interior_width as i32
            && cell.y < b + self.interior_height as i32
    }

    pub fn traversable_area(&self) -> usize {
        (self.total_width() * self.total_height()) as usize - self.blocked.len()
    }

    /// Traversable cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.total_width() as i32;
        let h = self.total_height() as i32;
        (0..h)
            .flat_map(move |y| (0..w).map(move |x| Cell::new(x, y)))
            .filter(|c| !self.blocked.contains(c))
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| self.is_interior(*c))
    }

    pub fn poses(&self) -> impl Iterator<Item = Pose> + '_ {
        self.cells()
            .flat_map(|c| Orientation::ALL.into_iter().map(move |h| Pose::new(c, h)))
    }

    /// Dense index of a cell in `0..total_width * total_height`.
    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.y as usize * self.total_width() as usize + cell.x as usize
    }

    pub fn pose_index(&self, pose: Pose) -> usize {
        self.cell_index(pose.cell) * 4 + pose.heading.index()
    }

    pub fn pose_count(&self) -> usize {
        (self.total_width() * self.total_height()) as usize * 4
    }
}

/// Legal one-step transitions from `pose`, in the fixed order
/// `[Wait, Forward, RotateCw, RotateCcw]`; `Forward` is omitted when the
/// cell ahead is not traversable.
pub fn successors(map: &GridMap, pose: Pose) -> Vec<(Action, Pose)> {
    let mut out = Vec::with_capacity(4);
    for action in Action::ALL {
        if action == Action::Forward && !map.is_traversable(pose.cell.step(pose.heading)) {
            continue;
        }
        out.push((action, pose.apply(action)));
    }
    out
}

/// Fewest time steps from `start` to any pose on `goal`, ignoring other
/// agents. `None` when the goal cannot be reached.
pub fn unconstrained_cost(map: &GridMap, start: Pose, goal: Cell) -> Option<u32> {
    if !map.is_traversable(goal) || !map.is_traversable(start.cell) {
        return None;
    }
    if start.cell == goal {
        return Some(0);
    }
    let mut dist = vec![u32::MAX; map.pose_count()];
    let mut queue = VecDeque::new();
    dist[map.pose_index(start)] = 0;
    queue.push_back(start);
    while let Some(pose) = queue.pop_front() {
        let d = dist[map.pose_index(pose)];
        for (action, next) in successors(map, pose) {
            if action == Action::Wait {
                continue;
            }
            let idx = map.pose_index(next);
            if dist[idx] != u32::MAX {
                continue;
            }
            if next.cell == goal {
                return Some(d + 1);
            }
            dist[idx] = d + 1;
            queue.push_back(next);
        }
    }
    None
}

/// All-pairs table of unconstrained costs from every pose to every cell,
/// built once per map by reverse breadth-first search from each cell.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    map: GridMap,
    // [goal cell index][pose index]
    table: Vec<Vec<u32>>,
}

impl DistanceTable {
    pub fn new(map: &GridMap) -> Self {
        let cells = (map.total_width() * map.total_height()) as usize;
        let mut table = vec![Vec::new(); cells];
        for goal in map.cells() {
            table[map.cell_index(goal)] = reverse_bfs(map, goal);
        }
        Self {
            map: map.clone(),
            table,
        }
    }

    pub fn cost(&self, from: Pose, goal: Cell) -> Option<u32> {
        if !self.map.is_traversable(goal) || !self.map.is_traversable(from.cell) {
            return None;
        }
        let d = self.table[self.map.cell_index(goal)][self.map.pose_index(from)];
        (d != u32::MAX).then_some(d)
    }
}

fn reverse_bfs(map: &GridMap, goal: Cell) -> Vec<u32> {
    let mut dist = vec![u32::MAX; map.pose_count()];
    let mut queue = VecDeque::new();
    for heading in Orientation::ALL {
        let pose = Pose::new(goal, heading);
        dist[map.pose_index(pose)] = 0;
        queue.push_back(pose);
    }
    while let Some(pose) = queue.pop_front() {
        let d = dist[map.pose_index(pose)];
        // predecessors: rotations are self-inverse pairs, forward comes from
        // the cell behind with the same heading
        let mut preds = vec![
            Pose::new(pose.cell, pose.heading.rotate_cw()),
            Pose::new(pose.cell, pose.heading.rotate_ccw()),
        ];
        let back = Cell::new(
            pose.cell.x - pose.heading.offset().0,
            pose.cell.y - pose.heading.offset().1,
        );
        if map.is_traversable(back) {
            preds.push(Pose::new(back, pose.heading));
        }
        for p in preds {
            let idx = map.pose_index(p);
            if dist[idx] == u32::MAX {
                dist[idx] = d + 1;
                queue.push_back(p);
            }
        }
    }
    dist
}
