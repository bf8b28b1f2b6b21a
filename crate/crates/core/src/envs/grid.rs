//! Four-room grid world with Minigrid-style seven-action semantics.
//!
//! The default 13x13 grid is split by one vertical and one horizontal wall
//! into four 5x5 rooms, numbered clockwise from the upper left:
//!
//! ```text
//!  1 | 2
//! ---+---
//!  4 | 3
//! ```
//!
//! Each wall segment has a single-cell doorway. In the locked scenarios the
//! left upper/lower doorway holds a door and the right one is walled up, so
//! the door is the only way between the upper and lower halves.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Environment, StepResult};
use crate::rng::{self, ChaCha8Rng};
use crate::{Error, Result};

pub const NUM_GRID_ACTIONS: usize = 7;
/// wall, goal, key, door-locked, door-open, agent facing N/E/S/W
pub const GRID_CHANNELS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridScenario {
    AlternatingGoalSource,
    AlternatingGoalTarget,
    LockedSource,
    LockedTarget,
}

impl GridScenario {
    pub fn has_door(self) -> bool {
        matches!(self, GridScenario::LockedSource | GridScenario::LockedTarget)
    }

    pub fn is_source(self) -> bool {
        matches!(self, GridScenario::AlternatingGoalSource | GridScenario::LockedSource)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl GridAction {
    pub fn from_index(i: usize) -> Option<Self> {
        use GridAction::*;
        [TurnLeft, TurnRight, Forward, Pickup, Drop, Toggle, Done].get(i).copied()
    }
}

pub type Pos = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Room {
    UpperLeft = 1,
    UpperRight = 2,
    LowerRight = 3,
    LowerLeft = 4,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub scenario: GridScenario,
    pub max_steps: usize,
    pub seed: u64,
    /// Start the agent anywhere instead of in the upper-left room.
    pub start_anywhere: bool,
}

impl GridConfig {
    pub fn new(scenario: GridScenario, seed: u64) -> Self {
        Self { width: 13, height: 13, scenario, max_steps: 400, seed, start_anywhere: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 7 || self.height < 7 || self.width.is_multiple_of(2) || self.height.is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!(
                "grid must be odd-sized and at least 7x7, got {}x{}",
                self.width,
                self.height
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub goal_pos: Pos,
    pub key_pos: Option<Pos>,
    pub carrying_key: bool,
    pub door_locked: bool,
    pub step: usize,
}

/// Static walls and the door position for one configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub door: Option<Pos>,
}

impl GridLayout {
    pub fn new(config: &GridConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = (config.width, config.height);
        let (mx, my) = (w / 2, h / 2);
        let mut walls = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                walls[y * w + x] = x == 0 || y == 0 || x == w - 1 || y == h - 1 || x == mx || y == my;
            }
        }
        let gaps = Self::doorways(w, h);
        for &(x, y) in &gaps {
            walls[y * w + x] = false;
        }
        let door = if config.scenario.has_door() {
            // right upper/lower gap sealed, left one becomes the door
            let (rx, ry) = gaps[3];
            walls[ry * w + rx] = true;
            Some(gaps[2])
        } else {
            None
        };
        Ok(Self { width: w, height: h, walls, door })
    }

    /// Doorways: upper vertical, lower vertical, left horizontal, right horizontal.
    fn doorways(w: usize, h: usize) -> [Pos; 4] {
        let (mx, my) = (w / 2, h / 2);
        [(mx, my / 2), (mx, (my + 1 + h - 2) / 2), (mx / 2, my), ((mx + 1 + w - 2) / 2, my)]
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        self.walls[p.1 * self.width + p.0]
    }

    pub fn room_of(&self, p: Pos) -> Option<Room> {
        let (mx, my) = (self.width / 2, self.height / 2);
        let (x, y) = p;
        if x == 0 || y == 0 || x >= self.width - 1 || y >= self.height - 1 || x == mx || y == my {
            return None;
        }
        Some(match (x < mx, y < my) {
            (true, true) => Room::UpperLeft,
            (false, true) => Room::UpperRight,
            (false, false) => Room::LowerRight,
            (true, false) => Room::LowerLeft,
        })
    }

    pub fn room_cells(&self, room: Room) -> Vec<Pos> {
        let mut cells = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.room_of((x, y)) == Some(room) {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    /// Every non-wall cell that is not the door.
    pub fn free_cells(&self) -> Vec<Pos> {
        let mut cells = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.is_wall((x, y)) && self.door != Some((x, y)) {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    fn ahead(&self, p: Pos, d: Direction) -> Option<Pos> {
        let (dx, dy) = d.delta();
        let nx = p.0 as isize + dx;
        let ny = p.1 as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            return None;
        }
        Some((nx as usize, ny as usize))
    }
}

/// What occupies the cell in front of the agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ahead {
    Wall,
    LockedDoor,
    OpenDoor,
    Key,
    Goal,
    Floor,
}

fn pick<R: Rng>(rng: &mut R, cells: &[Pos]) -> Pos {
    cells[rng::index(rng, cells.len())]
}

pub struct GridWorld {
    config: GridConfig,
    layout: GridLayout,
    state: GridState,
    rng: ChaCha8Rng,
}

impl GridWorld {
    /// Environment worker `env_index` of run `config.seed`.
    pub fn new(config: GridConfig, env_index: u64) -> Result<Self> {
        let layout = GridLayout::new(&config)?;
        let mut rng = rng::stream(config.seed, rng::streams::ENV_BASE + env_index);
        let state = grid_reset(&config, &layout, &mut rng);
        Ok(Self { config, layout, state, rng })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    /// Replaces the current state; used by tests and scripted probes.
    pub fn set_state(&mut self, state: GridState) {
        self.state = state;
    }

    fn ahead(&self) -> Ahead {
        let s = &self.state;
        let Some(p) = self.layout.ahead(s.agent_pos, s.agent_dir) else { return Ahead::Wall };
        if self.layout.door == Some(p) {
            return if s.door_locked { Ahead::LockedDoor } else { Ahead::OpenDoor };
        }
        if self.layout.is_wall(p) {
            Ahead::Wall
        } else if s.key_pos == Some(p) {
            Ahead::Key
        } else if s.goal_pos == p {
            Ahead::Goal
        } else {
            Ahead::Floor
        }
    }

    /// Seven-entry mask: turns always enabled; forward unless facing a wall
    /// or locked door; pickup only facing a key; toggle only facing a door;
    /// drop and done never.
    pub fn action_mask_bits(&self) -> [bool; NUM_GRID_ACTIONS] {
        let ahead = self.ahead();
        [
            true,
            true,
            !matches!(ahead, Ahead::Wall | Ahead::LockedDoor),
            ahead == Ahead::Key,
            false,
            matches!(ahead, Ahead::LockedDoor | Ahead::OpenDoor),
            false,
        ]
    }

    pub fn step_action(&mut self, action: usize) -> Result<StepResult> {
        let mask = self.action_mask_bits();
        if action >= NUM_GRID_ACTIONS || !mask[action] {
            return Err(Error::MaskedAction { action });
        }
        let ahead = self.ahead();
        let front = self.layout.ahead(self.state.agent_pos, self.state.agent_dir);
        let s = &mut self.state;
        let mut reward = 0.0;
        let mut done = false;
        match GridAction::from_index(action).expect("validated") {
            GridAction::TurnLeft => s.agent_dir = s.agent_dir.left(),
            GridAction::TurnRight => s.agent_dir = s.agent_dir.right(),
            GridAction::Forward => match ahead {
                Ahead::Goal => {
                    s.agent_pos = front.expect("goal is in bounds");
                    reward = 1.0;
                    done = true;
                }
                Ahead::Floor | Ahead::OpenDoor => s.agent_pos = front.expect("in bounds"),
                // keys block movement
                Ahead::Key | Ahead::Wall | Ahead::LockedDoor => {}
            },
            GridAction::Pickup => {
                s.key_pos = None;
                s.carrying_key = true;
            }
            GridAction::Toggle => {
                if ahead == Ahead::LockedDoor && s.carrying_key {
                    s.door_locked = false;
                }
            }
            GridAction::Drop | GridAction::Done => unreachable!("always masked"),
        }
        s.step += 1;
        if s.step >= self.config.max_steps {
            done = true;
        }
        Ok(StepResult { obs: self.observe_vec(), reward, done })
    }

    pub fn ground_truth(&self) -> bool {
        grid_ground_truth_id(&self.state, &self.layout, self.config.scenario)
    }

    pub fn observe_vec(&self) -> Vec<f64> {
        grid_observe(&self.state, &self.layout)
    }
}

/// Samples a fresh episode state.
pub fn grid_reset<R: Rng>(config: &GridConfig, layout: &GridLayout, rng: &mut R) -> GridState {
    let room1 = layout.room_cells(Room::UpperLeft);
    let goal_pos = match config.scenario {
        GridScenario::AlternatingGoalSource => pick(rng, &room1),
        GridScenario::AlternatingGoalTarget => {
            let room = if rng.gen_bool(0.5) { Room::UpperLeft } else { Room::LowerRight };
            pick(rng, &layout.room_cells(room))
        }
        GridScenario::LockedSource | GridScenario::LockedTarget => {
            let mut lower = layout.room_cells(Room::LowerRight);
            lower.extend(layout.room_cells(Room::LowerLeft));
            pick(rng, &lower)
        }
    };
    let key_pos = if config.scenario == GridScenario::LockedTarget {
        let mut upper = layout.room_cells(Room::UpperLeft);
        upper.extend(layout.room_cells(Room::UpperRight));
        Some(pick(rng, &upper))
    } else {
        None
    };
    let candidates: Vec<Pos> = if config.start_anywhere { layout.free_cells() } else { room1 }
        .into_iter()
        .filter(|&p| p != goal_pos && Some(p) != key_pos)
        .collect();
    let agent_pos = pick(rng, &candidates);
    let agent_dir = Direction::ALL[rng::index(rng, 4)];
    GridState {
        agent_pos,
        agent_dir,
        goal_pos,
        key_pos,
        carrying_key: false,
        door_locked: config.scenario == GridScenario::LockedTarget,
        step: 0,
    }
}

/// Whether the teacher's experience applies to this state. In the
/// alternating-goal target that means the goal sits in room 1; in the locked
/// target, that the key has been picked up or the door opened. Source states
/// are always in distribution.
pub fn grid_ground_truth_id(state: &GridState, layout: &GridLayout, scenario: GridScenario) -> bool {
    match scenario {
        GridScenario::AlternatingGoalTarget => layout.room_of(state.goal_pos) == Some(Room::UpperLeft),
        GridScenario::LockedTarget => state.carrying_key || !state.door_locked,
        GridScenario::AlternatingGoalSource | GridScenario::LockedSource => true,
    }
}

/// Channel-major one-hot encoding `[GRID_CHANNELS, height, width]`,
/// flattened.
pub fn grid_observe(state: &GridState, layout: &GridLayout) -> Vec<f64> {
    let (w, h) = (layout.width, layout.height);
    let plane = w * h;
    let mut obs = vec![0.0; GRID_CHANNELS * plane];
    let mut set = |c: usize, p: Pos| obs[c * plane + p.1 * w + p.0] = 1.0;
    for y in 0..h {
        for x in 0..w {
            if layout.is_wall((x, y)) {
                set(0, (x, y));
            }
        }
    }
    set(1, state.goal_pos);
    if let Some(k) = state.key_pos {
        set(2, k);
    }
    if let Some(d) = layout.door {
        set(if state.door_locked { 3 } else { 4 }, d);
    }
    set(5 + state.agent_dir.index(), state.agent_pos);
    obs
}

/// Inverse of [`grid_observe`] (minus the step counter). Fails if the
/// encoding is not a well-formed grid state for `layout`. In the locked
/// target a missing key means the agent carries it.
pub fn grid_decode(obs: &[f64], layout: &GridLayout, scenario: GridScenario) -> Result<GridState> {
    let (w, h) = (layout.width, layout.height);
    let plane = w * h;
    if obs.len() != GRID_CHANNELS * plane {
        return Err(Error::invalid("grid_decode", "observation length does not match layout"));
    }
    let bad = |m: &str| Error::invalid("grid_decode", alloc::string::String::from(m));
    let cells = |c: usize| -> Vec<Pos> {
        (0..plane).filter(|&i| obs[c * plane + i] == 1.0).map(|i| (i % w, i / w)).collect()
    };
    if obs.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(bad("non-binary entry"));
    }
    for y in 0..h {
        for x in 0..w {
            if (obs[y * w + x] == 1.0) != layout.is_wall((x, y)) {
                return Err(bad("wall channel disagrees with layout"));
            }
        }
    }
    let goals = cells(1);
    let keys = cells(2);
    let locked = cells(3);
    let open = cells(4);
    let mut agent = None;
    for d in Direction::ALL {
        for p in cells(5 + d.index()) {
            if agent.replace((p, d)).is_some() {
                return Err(bad("more than one agent cell"));
            }
        }
    }
    let (agent_pos, agent_dir) = agent.ok_or_else(|| bad("no agent cell"))?;
    if goals.len() != 1 || keys.len() > 1 {
        return Err(bad("expected one goal and at most one key"));
    }
    let door_locked = match (layout.door, locked.as_slice(), open.as_slice()) {
        (None, [], []) => false,
        (Some(d), [l], []) if *l == d => true,
        (Some(d), [], [o]) if *o == d => false,
        _ => return Err(bad("door channels disagree with layout")),
    };
    for p in [agent_pos, goals[0]].iter().chain(keys.iter()) {
        if layout.is_wall(*p) {
            return Err(bad("object inside a wall"));
        }
    }
    Ok(GridState {
        agent_pos,
        agent_dir,
        goal_pos: goals[0],
        key_pos: keys.first().copied(),
        carrying_key: scenario == GridScenario::LockedTarget && keys.is_empty(),
        door_locked,
        step: 0,
    })
}

impl Environment for GridWorld {
    fn num_actions(&self) -> usize {
        NUM_GRID_ACTIONS
    }

    fn obs_dim(&self) -> usize {
        GRID_CHANNELS * self.layout.width * self.layout.height
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = grid_reset(&self.config, &self.layout, &mut self.rng);
        self.observe_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.step_action(action)
    }

    fn action_mask(&self) -> Vec<bool> {
        self.action_mask_bits().to_vec()
    }

    fn observe(&self) -> Vec<f64> {
        self.observe_vec()
    }

    fn ground_truth_id(&self) -> bool {
        self.ground_truth()
    }

    fn episode_step(&self) -> usize {
        self.state.step
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn state_key(&self) -> Vec<u32> {
        let s = &self.state;
        vec![
            s.agent_pos.0 as u32,
            s.agent_pos.1 as u32,
            s.agent_dir.index() as u32,
            s.goal_pos.0 as u32,
            s.goal_pos.1 as u32,
            s.key_pos.map(|k| (k.1 * self.layout.width + k.0) as u32 + 1).unwrap_or(0),
            s.carrying_key as u32,
            s.door_locked as u32,
        ]
    }
}
