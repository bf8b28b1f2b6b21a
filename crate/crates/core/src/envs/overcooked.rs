//! Single-agent Overcooked-style kitchen.
//!
//! One recipe is active at a time. The agent loads three matching
//! ingredients into the pot, waits for the soup to cook, plates it with a
//! dish and delivers it to the serving station. Shaped rewards (scaled by a
//! linearly decaying coefficient) mark progress; the sparse delivery reward
//! is never scaled. After every delivery a new recipe is drawn.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::grid::{Direction, Pos};
use super::layout::{Cell, KitchenLayout, RING_ROOM, SIMPLE_ROOM};
use super::{Environment, StepResult};
use crate::rng::{self, ChaCha8Rng};
use crate::{Error, Result};

pub const NUM_OC_ACTIONS: usize = 6;
pub const POT_CAPACITY: usize = 3;

pub const REWARD_INGREDIENT: f64 = 3.0;
pub const REWARD_DISH_PICKUP: f64 = 3.0;
pub const REWARD_SOUP_PICKUP: f64 = 5.0;
pub const REWARD_ANY_DELIVERY: f64 = 3.0;
pub const REWARD_CORRECT_DELIVERY: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ingredient {
    Onion = 0,
    Tomato = 1,
    Fish = 2,
}

impl Ingredient {
    pub const ALL: [Ingredient; 3] = [Ingredient::Onion, Ingredient::Tomato, Ingredient::Fish];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Ingredient::Onion => 'O',
            Ingredient::Tomato => 'T',
            Ingredient::Fish => 'F',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Station {
    Dispenser(Ingredient),
    DishDispenser,
    Pot,
    Serving,
}

impl Station {
    pub fn symbol(self) -> char {
        match self {
            Station::Dispenser(i) => i.symbol(),
            Station::DishDispenser => 'D',
            Station::Pot => 'P',
            Station::Serving => 'S',
        }
    }

    /// Channel in the per-cell station map (0 is a bare counter).
    fn channel(self) -> usize {
        match self {
            Station::Dispenser(i) => 1 + i.index(),
            Station::DishDispenser => 4,
            Station::Pot => 5,
            Station::Serving => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Item {
    Ingredient(Ingredient),
    Dish,
    Soup(Ingredient),
}

impl Item {
    /// Index in the 7-way item one-hot (nothing-held is handled separately).
    fn index(self) -> usize {
        match self {
            Item::Ingredient(i) => i.index(),
            Item::Dish => 3,
            Item::Soup(i) => 4 + i.index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum KitchenLayoutKind {
    SimpleRoom,
    RingRoom,
    Custom(KitchenLayout),
}

impl KitchenLayoutKind {
    pub fn layout(&self) -> Result<KitchenLayout> {
        match self {
            KitchenLayoutKind::SimpleRoom => KitchenLayout::parse(SIMPLE_ROOM),
            KitchenLayoutKind::RingRoom => KitchenLayout::parse(RING_ROOM),
            KitchenLayoutKind::Custom(l) => Ok(l.clone()),
        }
    }
}

impl core::hash::Hash for KitchenLayout {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.render(&[], None).hash(state)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OvercookedConfig {
    pub layout: KitchenLayoutKind,
    pub ingredient_types: Vec<Ingredient>,
    pub allowed_recipes: Vec<Ingredient>,
    pub cook_time: u32,
    /// Global steps over which shaped rewards decay to zero.
    pub shaping_horizon: u64,
    pub max_steps: usize,
    pub seed: u64,
}

impl OvercookedConfig {
    pub fn new(layout: KitchenLayoutKind, ingredients: &[Ingredient], recipes: &[Ingredient], seed: u64) -> Self {
        Self {
            layout,
            ingredient_types: ingredients.to_vec(),
            allowed_recipes: recipes.to_vec(),
            cook_time: 20,
            shaping_horizon: 1_000_000,
            max_steps: 400,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.allowed_recipes.is_empty() {
            return Err(Error::InvalidConfig("allowed_recipes must be non-empty".into()));
        }
        if self.cook_time == 0 {
            return Err(Error::InvalidConfig("cook_time must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if let Some(r) = self.allowed_recipes.iter().find(|r| !self.ingredient_types.contains(r)) {
            return Err(Error::InvalidConfig(alloc::format!("recipe {:?} needs an ingredient that is not available", r)));
        }
        Ok(())
    }

    fn required_stations(&self) -> Vec<Station> {
        let mut v: Vec<Station> = Ingredient::ALL
            .iter()
            .filter(|i| self.ingredient_types.contains(i))
            .map(|&i| Station::Dispenser(i))
            .collect();
        v.extend([Station::DishDispenser, Station::Pot, Station::Serving]);
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pot {
    pub contents: Vec<Ingredient>,
    pub cook_timer: Option<u32>,
    pub ready: bool,
}

impl Pot {
    fn is_full(&self) -> bool {
        self.contents.len() >= POT_CAPACITY
    }

    /// Soup is on the stove (cooking or done).
    pub fn busy(&self) -> bool {
        self.cook_timer.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OvercookedState {
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub held: Option<Item>,
    pub pot: Pot,
    pub active_recipe: Ingredient,
    pub stations: Vec<(Pos, Station)>,
    pub counter_items: BTreeMap<Pos, Item>,
    pub step: usize,
}

impl OvercookedState {
    pub fn station_at(&self, p: Pos) -> Option<Station> {
        self.stations.iter().find(|(q, _)| *q == p).map(|&(_, s)| s)
    }
}

/// Shaped-reward coefficient at global step `t`: `max(0, 1 - t / horizon)`.
pub fn shaping_coeff(t: u64, horizon: u64) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    f64::max(0.0, 1.0 - t as f64 / horizon as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OvercookedAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
    Interact = 5,
}

/// Rewards earned by one step, split by source.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardBreakdown {
    pub shaped: f64,
    pub sparse: f64,
    pub delivered: bool,
}

pub struct Overcooked {
    config: OvercookedConfig,
    layout: KitchenLayout,
    state: OvercookedState,
    rng: ChaCha8Rng,
    shaping: f64,
    source_recipes: Option<Vec<Ingredient>>,
}

pub fn oc_reset<R: Rng>(config: &OvercookedConfig, layout: &KitchenLayout, rng: &mut R) -> Result<OvercookedState> {
    config.validate()?;
    let needed = config.required_stations();
    let stations = if layout.has_fixed_stations() {
        let fixed = layout.stations();
        for s in &needed {
            if !fixed.iter().any(|(_, f)| f == s) {
                return Err(Error::Layout(alloc::format!("map lacks station {:?}", s)));
            }
        }
        fixed
    } else {
        let mut slots = layout.reachable_counters();
        if slots.len() < needed.len() {
            return Err(Error::Layout(alloc::format!(
                "{} stations need {} reachable counters, map has {}",
                needed.len(),
                needed.len(),
                slots.len()
            )));
        }
        // partial Fisher-Yates: first needed.len() slots are a uniform draw
        for i in 0..needed.len() {
            let j = i + rng::index(rng, slots.len() - i);
            slots.swap(i, j);
        }
        needed.iter().zip(&slots).map(|(&s, &p)| (p, s)).collect()
    };
    let floor = layout.floor_cells();
    let agent_pos = floor[rng::index(rng, floor.len())];
    let agent_dir = Direction::ALL[rng::index(rng, 4)];
    let active_recipe = config.allowed_recipes[rng::index(rng, config.allowed_recipes.len())];
    Ok(OvercookedState {
        agent_pos,
        agent_dir,
        held: None,
        pot: Pot::default(),
        active_recipe,
        stations,
        counter_items: BTreeMap::new(),
        step: 0,
    })
}

/// Advances `state` by one action. Returns the reward and its breakdown.
pub fn oc_step<R: Rng>(
    state: &mut OvercookedState,
    layout: &KitchenLayout,
    config: &OvercookedConfig,
    action: usize,
    shaping_coeff: f64,
    rng: &mut R,
) -> Result<(f64, bool, RewardBreakdown)> {
    if action >= NUM_OC_ACTIONS {
        return Err(Error::invalid("oc_step", alloc::format!("action {} out of range", action)));
    }
    let mut rb = RewardBreakdown::default();
    let filled_now = match action {
        0..=3 => {
            let dir = [Direction::North, Direction::South, Direction::West, Direction::East][action];
            state.agent_dir = dir;
            let (dx, dy) = dir.delta();
            let target = ((state.agent_pos.0 as isize + dx) as usize, (state.agent_pos.1 as isize + dy) as usize);
            if layout.is_floor(target) {
                state.agent_pos = target;
            }
            false
        }
        4 => false,
        _ => interact(state, layout, config, &mut rb, rng),
    };
    if !filled_now {
        if let Some(t) = state.pot.cook_timer {
            if t > 0 {
                let t = t - 1;
                state.pot.cook_timer = Some(t);
                if t == 0 {
                    state.pot.ready = true;
                }
            }
        }
    }
    state.step += 1;
    let done = state.step >= config.max_steps;
    Ok((shaping_coeff * rb.shaped + rb.sparse, done, rb))
}

/// Context action on the faced cell. Returns whether the pot was filled.
fn interact<R: Rng>(
    state: &mut OvercookedState,
    layout: &KitchenLayout,
    config: &OvercookedConfig,
    rb: &mut RewardBreakdown,
    rng: &mut R,
) -> bool {
    let (dx, dy) = state.agent_dir.delta();
    let front = ((state.agent_pos.0 as isize + dx) as usize, (state.agent_pos.1 as isize + dy) as usize);
    match (state.station_at(front), state.held) {
        (Some(Station::Dispenser(i)), None) => state.held = Some(Item::Ingredient(i)),
        (Some(Station::DishDispenser), None) => {
            let dish_on_counter = state.counter_items.values().any(|&it| it == Item::Dish);
            if !dish_on_counter && state.pot.busy() {
                rb.shaped += REWARD_DISH_PICKUP;
            }
            state.held = Some(Item::Dish);
        }
        (Some(Station::Pot), Some(Item::Ingredient(i))) => {
            let pot = &mut state.pot;
            let matches_pot = pot.contents.first().is_none_or(|&c| c == i);
            if !pot.is_full() && !pot.busy() && matches_pot {
                pot.contents.push(i);
                state.held = None;
                if i == state.active_recipe {
                    rb.shaped += REWARD_INGREDIENT;
                }
                if pot.is_full() {
                    pot.cook_timer = Some(config.cook_time);
                    return true;
                }
            }
        }
        (Some(Station::Pot), Some(Item::Dish)) => {
            if state.pot.ready {
                let kind = state.pot.contents[0];
                state.pot = Pot::default();
                state.held = Some(Item::Soup(kind));
                rb.shaped += REWARD_SOUP_PICKUP;
            }
        }
        (Some(Station::Serving), Some(Item::Soup(kind))) => {
            state.held = None;
            rb.shaped += REWARD_ANY_DELIVERY;
            rb.delivered = true;
            if kind == state.active_recipe {
                rb.sparse += REWARD_CORRECT_DELIVERY;
            }
            state.active_recipe = config.allowed_recipes[rng::index(rng, config.allowed_recipes.len())];
        }
        (None, held) if layout.cell(front) == Cell::Counter => match (held, state.counter_items.get(&front).copied()) {
            (Some(item), None) => {
                state.counter_items.insert(front, item);
                state.held = None;
            }
            (None, Some(item)) => {
                state.counter_items.remove(&front);
                state.held = Some(item);
            }
            _ => {}
        },
        _ => {}
    }
    false
}

/// True when the active recipe is one the teacher was trained on.
pub fn oc_ground_truth_id(state: &OvercookedState, source: &OvercookedConfig) -> bool {
    source.allowed_recipes.contains(&state.active_recipe)
}

/// Layout of the flat observation vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsLayout {
    pub cells: usize,
}

impl ObsLayout {
    pub const STATION_CHANNELS: usize = 7;
    pub const ITEM_CHANNELS: usize = 7;

    pub fn agent_pos(&self) -> core::ops::Range<usize> {
        0..self.cells
    }
    pub fn agent_dir(&self) -> core::ops::Range<usize> {
        let s = self.cells;
        s..s + 4
    }
    /// Nothing held + seven item kinds.
    pub fn held(&self) -> core::ops::Range<usize> {
        let s = self.agent_dir().end;
        s..s + 8
    }
    pub fn stations(&self) -> core::ops::Range<usize> {
        let s = self.held().end;
        s..s + self.cells * Self::STATION_CHANNELS
    }
    pub fn counter_items(&self) -> core::ops::Range<usize> {
        let s = self.stations().end;
        s..s + self.cells * Self::ITEM_CHANNELS
    }
    pub fn pot_counts(&self) -> core::ops::Range<usize> {
        let s = self.counter_items().end;
        s..s + 3
    }
    pub fn pot_timer(&self) -> usize {
        self.pot_counts().end
    }
    pub fn pot_ready(&self) -> usize {
        self.pot_timer() + 1
    }
    pub fn recipe(&self) -> core::ops::Range<usize> {
        let s = self.pot_ready() + 1;
        s..s + 3
    }
    pub fn dim(&self) -> usize {
        self.recipe().end
    }
}

pub fn oc_observe(state: &OvercookedState, layout: &KitchenLayout, config: &OvercookedConfig) -> Vec<f64> {
    let ol = ObsLayout { cells: layout.width * layout.height };
    let mut obs = vec![0.0; ol.dim()];
    let cell = |p: Pos| p.1 * layout.width + p.0;
    obs[ol.agent_pos().start + cell(state.agent_pos)] = 1.0;
    obs[ol.agent_dir().start + state.agent_dir.index()] = 1.0;
    obs[ol.held().start + state.held.map_or(0, |i| 1 + i.index())] = 1.0;
    for y in 0..layout.height {
        for x in 0..layout.width {
            if layout.cell((x, y)) == Cell::Counter {
                obs[ol.stations().start + cell((x, y)) * ObsLayout::STATION_CHANNELS] = 1.0;
            }
        }
    }
    for &(p, s) in &state.stations {
        let base = ol.stations().start + cell(p) * ObsLayout::STATION_CHANNELS;
        obs[base] = 0.0;
        obs[base + s.channel()] = 1.0;
    }
    for (&p, &item) in &state.counter_items {
        obs[ol.counter_items().start + cell(p) * ObsLayout::ITEM_CHANNELS + item.index()] = 1.0;
    }
    for i in &state.pot.contents {
        obs[ol.pot_counts().start + i.index()] += 1.0 / POT_CAPACITY as f64;
    }
    if let Some(t) = state.pot.cook_timer {
        obs[ol.pot_timer()] = t as f64 / config.cook_time as f64;
    }
    obs[ol.pot_ready()] = if state.pot.ready { 1.0 } else { 0.0 };
    obs[ol.recipe().start + state.active_recipe.index()] = 1.0;
    obs
}

/// Greedy scripted cook: fetches ingredients for the active recipe, fills
/// the pot, waits with a dish, plates the soup and serves it.
pub fn expert_action(state: &OvercookedState, layout: &KitchenLayout) -> usize {
    let find = |s: Station| state.stations.iter().find(|(_, t)| *t == s).map(|&(p, _)| p);
    let pot = &state.pot;
    let (target, act) = match state.held {
        Some(Item::Soup(_)) => (find(Station::Serving), true),
        Some(Item::Dish) => (find(Station::Pot), pot.ready),
        Some(Item::Ingredient(_)) => (find(Station::Pot), true),
        None if pot.busy() => (find(Station::DishDispenser), true),
        None => (find(Station::Dispenser(state.active_recipe)), true),
    };
    let Some(target) = target else { return OvercookedAction::Stay as usize };
    let here = state.agent_pos;
    let adjacent = |p: Pos| p.0.abs_diff(target.0) + p.1.abs_diff(target.1) == 1;
    if adjacent(here) {
        let facing = Direction::ALL.into_iter().find(|d| {
            let (dx, dy) = d.delta();
            ((here.0 as isize + dx) as usize, (here.1 as isize + dy) as usize) == target
        });
        let dir = facing.expect("adjacent target");
        if dir != state.agent_dir {
            return move_action(dir);
        }
        return if act { OvercookedAction::Interact as usize } else { OvercookedAction::Stay as usize };
    }
    // breadth-first search over floor cells towards any cell next to the target
    let w = layout.width;
    let mut prev: Vec<Option<Pos>> = vec![None; w * layout.height];
    let mut queue = alloc::collections::VecDeque::from([here]);
    prev[here.1 * w + here.0] = Some(here);
    while let Some(p) = queue.pop_front() {
        if adjacent(p) {
            let mut step = p;
            while let Some(back) = prev[step.1 * w + step.0] {
                if back == here {
                    break;
                }
                step = back;
            }
            let d = Direction::ALL
                .into_iter()
                .find(|d| {
                    let (dx, dy) = d.delta();
                    ((here.0 as isize + dx) as usize, (here.1 as isize + dy) as usize) == step
                })
                .expect("neighbouring step");
            return move_action(d);
        }
        for d in Direction::ALL {
            let (dx, dy) = d.delta();
            let n = ((p.0 as isize + dx) as usize, (p.1 as isize + dy) as usize);
            if layout.is_floor(n) && prev[n.1 * w + n.0].is_none() {
                prev[n.1 * w + n.0] = Some(p);
                queue.push_back(n);
            }
        }
    }
    OvercookedAction::Stay as usize
}

fn move_action(d: Direction) -> usize {
    (match d {
        Direction::North => OvercookedAction::Up,
        Direction::South => OvercookedAction::Down,
        Direction::West => OvercookedAction::Left,
        Direction::East => OvercookedAction::Right,
    }) as usize
}

impl Overcooked {
    pub fn new(config: OvercookedConfig, env_index: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout.layout()?;
        let mut rng = rng::stream(config.seed, rng::streams::ENV_BASE + env_index);
        let state = oc_reset(&config, &layout, &mut rng)?;
        Ok(Self { config, layout, state, rng, shaping: 1.0, source_recipes: None })
    }

    /// Labels states against the recipes of the teacher's source task.
    pub fn with_source_recipes(mut self, recipes: Vec<Ingredient>) -> Self {
        self.source_recipes = Some(recipes);
        self
    }

    pub fn state(&self) -> &OvercookedState {
        &self.state
    }

    pub fn set_state(&mut self, state: OvercookedState) {
        self.state = state;
    }

    pub fn layout(&self) -> &KitchenLayout {
        &self.layout
    }

    pub fn config(&self) -> &OvercookedConfig {
        &self.config
    }

    pub fn set_shaping_coeff(&mut self, c: f64) {
        self.shaping = c.clamp(0.0, 1.0);
    }

    pub fn step_detailed(&mut self, action: usize) -> Result<(StepResult, RewardBreakdown)> {
        let (reward, done, rb) = oc_step(&mut self.state, &self.layout, &self.config, action, self.shaping, &mut self.rng)?;
        Ok((StepResult { obs: self.observe_vec(), reward, done }, rb))
    }

    pub fn observe_vec(&self) -> Vec<f64> {
        oc_observe(&self.state, &self.layout, &self.config)
    }

    pub fn render(&self) -> alloc::string::String {
        self.layout.render(&self.state.stations, Some(self.state.agent_pos))
    }
}

impl Environment for Overcooked {
    fn num_actions(&self) -> usize {
        NUM_OC_ACTIONS
    }

    fn obs_dim(&self) -> usize {
        ObsLayout { cells: self.layout.width * self.layout.height }.dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = oc_reset(&self.config, &self.layout, &mut self.rng).expect("config validated at construction");
        self.observe_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.step_detailed(action).map(|(r, _)| r)
    }

    fn action_mask(&self) -> Vec<bool> {
        vec![true; NUM_OC_ACTIONS]
    }

    fn observe(&self) -> Vec<f64> {
        self.observe_vec()
    }

    fn ground_truth_id(&self) -> bool {
        match &self.source_recipes {
            Some(r) => r.contains(&self.state.active_recipe),
            None => true,
        }
    }

    fn set_global_step(&mut self, t: u64) {
        self.shaping = shaping_coeff(t, self.config.shaping_horizon);
    }

    fn set_eval_mode(&mut self, eval: bool) {
        if eval {
            self.shaping = 0.0;
        }
    }

    fn episode_step(&self) -> usize {
        self.state.step
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn state_key(&self) -> Vec<u32> {
        let s = &self.state;
        let mut k = vec![
            s.agent_pos.0 as u32,
            s.agent_pos.1 as u32,
            s.agent_dir.index() as u32,
            s.held.map_or(0, |i| 1 + i.index() as u32),
            s.pot.contents.len() as u32,
            s.pot.cook_timer.unwrap_or(u32::MAX),
            s.active_recipe.index() as u32,
        ];
        k.extend(s.stations.iter().flat_map(|&((x, y), _)| [x as u32, y as u32]));
        k
    }
}
