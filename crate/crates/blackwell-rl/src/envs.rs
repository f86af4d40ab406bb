//! Environments: the cliff-walking gridworld benchmark and a seeded
//! random-MDP generator for property tests.
//!
//! Cliff walking (Sutton & Barto, example 6.6): a 4×12 grid, start at the
//! bottom-left, goal at the bottom-right, and a cliff spanning the bottom
//! cells between them. Every move costs −1; stepping into the cliff costs
//! −100 and teleports the agent back to the start without ending the
//! episode. Reaching the goal ends the episode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MdpModel;

/// A stepped, episodic environment over integer state/action indices.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Starts a new episode and returns the initial state.
    fn reset(&mut self) -> usize;
    /// Applies an action; returns (next_state, reward, terminal).
    fn step(&mut self, action: usize) -> Result<(usize, f64, bool)>;
}

/// The four grid movements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn from_index(index: usize) -> Option<GridAction> {
        Self::ALL.get(index).copied()
    }

    pub fn arrow(self) -> char {
        match self {
            GridAction::Up => '^',
            GridAction::Down => 'v',
            GridAction::Left => '<',
            GridAction::Right => '>',
        }
    }
}

fn default_rows() -> usize {
    4
}
fn default_cols() -> usize {
    12
}
fn default_start() -> (usize, usize) {
    (3, 0)
}
fn default_goal() -> (usize, usize) {
    (3, 11)
}
fn default_cliff() -> Vec<(usize, usize)> {
    (1..11).map(|c| (3, c)).collect()
}
fn default_step_reward() -> f64 {
    -1.0
}
fn default_cliff_reward() -> f64 {
    -100.0
}

/// Gridworld geometry and rewards. The serde defaults reproduce the
/// canonical 4×12 cliff-walking layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_cols")]
    pub cols: usize,
    #[serde(default = "default_start")]
    pub start: (usize, usize),
    #[serde(default = "default_goal")]
    pub goal: (usize, usize),
    #[serde(default = "default_cliff")]
    pub cliff: Vec<(usize, usize)>,
    #[serde(default = "default_step_reward")]
    pub step_reward: f64,
    #[serde(default = "default_cliff_reward")]
    pub cliff_reward: f64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        Self::cliff_walking()
    }
}

impl GridWorldSpec {
    /// The canonical 4×12 layout: start (3,0), goal (3,11), cliff on the ten
    /// bottom cells between them.
    pub fn cliff_walking() -> Self {
        Self {
            rows: default_rows(),
            cols: default_cols(),
            start: default_start(),
            goal: default_goal(),
            cliff: default_cliff(),
            step_reward: default_step_reward(),
            cliff_reward: default_cliff_reward(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument("grid must be non-empty".into()));
        }
        let in_bounds = |cell: (usize, usize)| cell.0 < self.rows && cell.1 < self.cols;
        if !in_bounds(self.start) || !in_bounds(self.goal) {
            return Err(Error::InvalidArgument("start/goal out of bounds".into()));
        }
        if self.start == self.goal {
            return Err(Error::InvalidArgument("start equals goal".into()));
        }
        for &cell in &self.cliff {
            if !in_bounds(cell) {
                return Err(Error::InvalidArgument(format!(
                    "cliff cell {cell:?} out of bounds"
                )));
            }
            if cell == self.start || cell == self.goal {
                return Err(Error::InvalidArgument(
                    "cliff overlaps start or goal".into(),
                ));
            }
        }
        if !self.step_reward.is_finite() || !self.cliff_reward.is_finite() {
            return Err(Error::InvalidArgument("rewards must be finite".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_index(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.cols + cell.1
    }

    pub fn is_cliff(&self, cell: (usize, usize)) -> bool {
        self.cliff.contains(&cell)
    }

    fn moved(&self, cell: (usize, usize), action: GridAction) -> (usize, usize) {
        let (r, c) = cell;
        match action {
            GridAction::Up => (r.saturating_sub(1), c),
            GridAction::Down => ((r + 1).min(self.rows - 1), c),
            GridAction::Left => (r, c.saturating_sub(1)),
            GridAction::Right => (r, (c + 1).min(self.cols - 1)),
        }
    }
}

/// Per-episode simulator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    pub cell: (usize, usize),
    pub steps: usize,
    pub episode: usize,
}

/// One environment transition. Movement is clipped at the boundary (a wall
/// bump keeps the position but still costs `step_reward`); entering a cliff
/// cell costs `cliff_reward` and teleports to the start without ending the
/// episode; entering the goal costs `step_reward` and is terminal.
pub fn cliff_step(
    spec: &GridWorldSpec,
    state: &EnvState,
    action: GridAction,
) -> Result<(EnvState, f64, bool)> {
    if state.cell == spec.goal {
        return Err(Error::InvalidArgument(
            "cliff_step called on a terminal state".into(),
        ));
    }
    let landed = spec.moved(state.cell, action);
    let (next_cell, reward, terminal) = if spec.is_cliff(landed) {
        (spec.start, spec.cliff_reward, false)
    } else if landed == spec.goal {
        (landed, spec.step_reward, true)
    } else {
        (landed, spec.step_reward, false)
    };
    let next = EnvState {
        cell: next_cell,
        steps: state.steps + 1,
        episode: state.episode,
    };
    Ok((next, reward, terminal))
}

/// Gridworld as a stepped [`Environment`]. States are cell indices
/// (row-major); the absorbing terminal used by [`to_mdp`] is not part of
/// the stepped interface — `step` reports `terminal = true` instead.
#[derive(Debug, Clone)]
pub struct CliffWalk {
    spec: GridWorldSpec,
    state: EnvState,
    done: bool,
}

impl CliffWalk {
    pub fn new(spec: GridWorldSpec) -> Result<Self> {
        spec.validate()?;
        let state = EnvState {
            cell: spec.start,
            steps: 0,
            episode: 0,
        };
        Ok(Self {
            spec,
            state,
            done: false,
        })
    }

    pub fn canonical() -> Self {
        Self::new(GridWorldSpec::cliff_walking()).expect("canonical spec is valid")
    }

    pub fn spec(&self) -> &GridWorldSpec {
        &self.spec
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

impl Environment for CliffWalk {
    fn num_states(&self) -> usize {
        self.spec.num_cells()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&mut self) -> usize {
        self.state = EnvState {
            cell: self.spec.start,
            steps: 0,
            episode: self.state.episode + 1,
        };
        self.done = false;
        self.spec.cell_index(self.state.cell)
    }

    fn step(&mut self, action: usize) -> Result<(usize, f64, bool)> {
        if self.done {
            return Err(Error::InvalidArgument(
                "step called on a finished episode".into(),
            ));
        }
        let action = GridAction::from_index(action)
            .ok_or_else(|| Error::IndexOutOfRange(format!("grid action {action}")))?;
        let (next, reward, terminal) = cliff_step(&self.spec, &self.state, action)?;
        self.state = next;
        self.done = terminal;
        Ok((self.spec.cell_index(next.cell), reward, terminal))
    }
}

/// Exact MDP form of a gridworld: deterministic transitions plus an
/// absorbing zero-reward terminal state appended at index `rows·cols`.
/// Entering the goal transitions straight to the terminal state.
pub fn to_mdp(spec: &GridWorldSpec, discount: f64) -> Result<MdpModel> {
    spec.validate()?;
    let cells = spec.num_cells();
    let n = cells + 1;
    let terminal = cells;
    let na = 4;
    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];

    let mut set = |s: usize, a: usize, s2: usize, r: f64| {
        transition[(s * na + a) * n + s2] = 1.0;
        reward[s * na + a] = r;
    };

    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let s = spec.cell_index((row, col));
            for (a, &action) in GridAction::ALL.iter().enumerate() {
                if (row, col) == spec.goal {
                    // Unreachable as a resting state; absorb with no cost.
                    set(s, a, terminal, 0.0);
                    continue;
                }
                let landed = spec.moved((row, col), action);
                if spec.is_cliff(landed) {
                    set(s, a, spec.cell_index(spec.start), spec.cliff_reward);
                } else if landed == spec.goal {
                    set(s, a, terminal, spec.step_reward);
                } else {
                    set(s, a, spec.cell_index(landed), spec.step_reward);
                }
            }
        }
    }
    for a in 0..na {
        set(terminal, a, terminal, 0.0);
    }

    MdpModel::new(n, na, transition, reward, discount)
}

/// Follows the greedy (argmax, lowest index on ties) policy of `qtable`
/// through the gridworld from the start. Returns the number of steps to the
/// goal, or `None` if the goal is not reached within `max_steps`.
pub fn greedy_path_length(
    spec: &GridWorldSpec,
    qtable: &crate::mdp::QTable,
    max_steps: usize,
) -> Option<usize> {
    let mut state = EnvState {
        cell: spec.start,
        steps: 0,
        episode: 0,
    };
    for _ in 0..max_steps {
        let s = spec.cell_index(state.cell);
        let a = crate::mdp::argmax(qtable.row(s));
        let (next, _, terminal) = cliff_step(spec, &state, GridAction::ALL[a]).ok()?;
        state = next;
        if terminal {
            return Some(state.steps);
        }
    }
    None
}

/// ASCII dump of the greedy action per cell, for eyeballing learned
/// policies: `S` start, `G` goal, `C` cliff, arrows elsewhere.
pub fn render_greedy(spec: &GridWorldSpec, qtable: &crate::mdp::QTable) -> String {
    let mut out = String::new();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let cell = (row, col);
            let ch = if cell == spec.goal {
                'G'
            } else if spec.is_cliff(cell) {
                'C'
            } else if cell == spec.start {
                'S'
            } else {
                let a = crate::mdp::argmax(qtable.row(spec.cell_index(cell)));
                GridAction::ALL[a].arrow()
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

/// Dense random MDP, reproducible from `seed`: transition rows are
/// symmetric-Dirichlet (concentration 1, i.e. normalized unit exponentials),
/// rewards uniform in [0, 1]. The dense rows make the chain irreducible with
/// probability one.
pub fn random_mdp(
    num_states: usize,
    num_actions: usize,
    discount: f64,
    seed: u64,
) -> Result<MdpModel> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument(
            "num_states and num_actions must be positive".into(),
        ));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidDiscount {
            value: discount,
            expected: "random MDPs require 0 < discount < 1",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let mut row: Vec<f64> = (0..num_states)
            .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
            .collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        transition.extend_from_slice(&row);
    }
    let reward: Vec<f64> = (0..num_states * num_actions)
        .map(|_| rng.random::<f64>())
        .collect();
    MdpModel::new(num_states, num_actions, transition, reward, discount)
}

/// Simulator over an explicit [`MdpModel`]: next states are sampled from the
/// transition tensor, rewards may carry zero-mean Gaussian noise so observed
/// rewards are unbiased estimates of r(s,a). Episodes never terminate on
/// their own; callers truncate.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: MdpModel,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    state: usize,
    start_state: usize,
}

impl MdpEnv {
    pub fn new(mdp: MdpModel, rng: ChaCha8Rng) -> Self {
        Self {
            mdp,
            rng,
            noise: None,
            state: 0,
            start_state: 0,
        }
    }

    /// Attaches zero-mean Gaussian reward noise with standard deviation
    /// `sigma` (`sigma = 0` disables it).
    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma {sigma}")));
        }
        self.noise = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).expect("valid normal parameters"))
        } else {
            None
        };
        Ok(self)
    }

    pub fn mdp(&self) -> &MdpModel {
        &self.mdp
    }
}

impl Environment for MdpEnv {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn reset(&mut self) -> usize {
        self.state = self.start_state;
        self.state
    }

    fn step(&mut self, action: usize) -> Result<(usize, f64, bool)> {
        if action >= self.mdp.num_actions() {
            return Err(Error::IndexOutOfRange(format!("action {action}")));
        }
        let row = self.mdp.transition_row(self.state, action);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (s2, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s2;
                break;
            }
        }
        let mut reward = self.mdp.reward(self.state, action);
        if let Some(noise) = &self.noise {
            reward += noise.sample(&mut self.rng);
        }
        self.state = next;
        Ok((next, reward, false))
    }
}
