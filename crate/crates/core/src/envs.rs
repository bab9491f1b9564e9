//! Deterministic grid environments with ground-truth rewards.
//!
//! `grid_walker`: reach the far corner of an 8×8 grid. `button_grid`:
//! walk to a button and press it. Both reward normalized progress toward
//! the goal, charge a small per-step cost, and pay a completion bonus.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ActionRec, Segment, State};

pub const STEP_PENALTY: f64 = 0.01;
pub const GOAL_BONUS: f64 = 1.0;

pub const NOOP: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const DOWN: usize = 3;
pub const UP: usize = 4;
pub const PRESS: usize = 5;

const ACTION_NAMES: [&str; 6] = ["noop", "left", "right", "down", "up", "press"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    GridWalker,
    ButtonGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvSpec {
    pub name: String,
    pub kind: EnvKind,
    pub grid_width: usize,
    pub grid_height: usize,
    pub action_count: usize,
    pub feature_schema: Vec<String>,
    /// Typical magnitude of each feature, used to normalize network inputs.
    pub feature_scale: Vec<f64>,
    pub max_episode_steps: usize,
    pub start: (usize, usize),
    /// Goal cell (the button for `button_grid`).
    pub goal: (usize, usize),
    pub goal_description: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: ActionRec,
    pub next_state: State,
    pub true_reward: f64,
    pub done: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action_id} is invalid for {env} ({count} actions)")]
    InvalidAction {
        env: String,
        action_id: usize,
        count: usize,
    },
    #[error("state belongs to {actual}, not {expected}")]
    WrongEnv { expected: String, actual: String },
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("segment length must be in [2, {max}], got {got}")]
    SegmentLength { max: usize, got: usize },
}

/// Something that picks actions.
pub trait Policy {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> ActionRec;
}

/// Uniform over all actions.
#[derive(Clone, Copy, Debug)]
pub struct RandomPolicy {
    pub action_count: usize,
}

impl Policy for RandomPolicy {
    fn act(&self, _state: &State, rng: &mut dyn RngCore) -> ActionRec {
        ActionRec::new(rng.gen_range(0..self.action_count))
    }
}

impl<F> Policy for F
where
    F: Fn(&State) -> ActionRec,
{
    fn act(&self, state: &State, _rng: &mut dyn RngCore) -> ActionRec {
        self(state)
    }
}

impl EnvSpec {
    pub fn grid_walker() -> Self {
        Self {
            name: "grid_walker".into(),
            kind: EnvKind::GridWalker,
            grid_width: 8,
            grid_height: 8,
            action_count: 5,
            feature_schema: vec![
                "pos_x".into(),
                "pos_y".into(),
                "dist_goal".into(),
                "velocity".into(),
            ],
            feature_scale: vec![7.0, 7.0, 14.0, 1.0],
            max_episode_steps: 50,
            start: (0, 0),
            goal: (7, 7),
            goal_description: "reach the goal cell (7,7) from (0,0)".into(),
        }
    }

    pub fn button_grid() -> Self {
        Self {
            name: "button_grid".into(),
            kind: EnvKind::ButtonGrid,
            grid_width: 8,
            grid_height: 8,
            action_count: 6,
            feature_schema: vec![
                "pos_x".into(),
                "pos_y".into(),
                "dist_goal".into(),
                "velocity".into(),
                "pressed".into(),
            ],
            feature_scale: vec![7.0, 7.0, 14.0, 1.0, 1.0],
            max_episode_steps: 50,
            start: (0, 0),
            goal: (5, 5),
            goal_description: "walk to the button at (5,5) and press it".into(),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "grid_walker" => Some(Self::grid_walker()),
            "button_grid" => Some(Self::button_grid()),
            _ => None,
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::grid_walker(), Self::button_grid()]
    }

    pub fn state_count(&self) -> usize {
        let cells = self.grid_width * self.grid_height;
        match self.kind {
            EnvKind::GridWalker => cells,
            EnvKind::ButtonGrid => cells * 2,
        }
    }

    pub fn action_name(&self, action_id: usize) -> Option<&'static str> {
        (action_id < self.action_count).then(|| ACTION_NAMES[action_id])
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_schema.iter().position(|f| f == name)
    }

    /// Normalizer for the progress term: the largest possible Manhattan distance.
    fn progress_scale(&self) -> f64 {
        (self.grid_width - 1 + self.grid_height - 1) as f64
    }

    pub fn manhattan_to_goal(&self, cell: (usize, usize)) -> usize {
        cell.0.abs_diff(self.goal.0) + cell.1.abs_diff(self.goal.1)
    }

    pub fn make_state(&self, cell: (usize, usize), pressed: bool, velocity: f64) -> State {
        let dist = self.manhattan_to_goal(cell) as f64;
        let mut features = vec![cell.0 as f64, cell.1 as f64, dist, velocity];
        let mut index = cell.1 * self.grid_width + cell.0;
        if self.kind == EnvKind::ButtonGrid {
            features.push(if pressed { 1.0 } else { 0.0 });
            if pressed {
                index += self.grid_width * self.grid_height;
            }
        }
        State {
            env_id: self.name.clone(),
            features,
            discrete_index: index,
        }
    }

    pub fn cell_of(&self, state: &State) -> (usize, usize) {
        let cell = state.discrete_index % (self.grid_width * self.grid_height);
        (cell % self.grid_width, cell / self.grid_width)
    }

    pub fn is_pressed(&self, state: &State) -> bool {
        self.kind == EnvKind::ButtonGrid
            && state.discrete_index >= self.grid_width * self.grid_height
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        match self.kind {
            EnvKind::GridWalker => self.cell_of(state) == self.goal,
            EnvKind::ButtonGrid => self.is_pressed(state),
        }
    }

    /// Start state. The layout is fixed, so every seed gives the same state.
    pub fn reset(&self, _seed: u64) -> State {
        self.make_state(self.start, false, 0.0)
    }

    pub fn step(&self, state: &State, action: ActionRec) -> Result<Transition, EnvError> {
        if state.env_id != self.name {
            return Err(EnvError::WrongEnv {
                expected: self.name.clone(),
                actual: state.env_id.clone(),
            });
        }
        if action.action_id >= self.action_count {
            return Err(EnvError::InvalidAction {
                env: self.name.clone(),
                action_id: action.action_id,
                count: self.action_count,
            });
        }
        let cell = self.cell_of(state);
        if self.is_terminal(state) {
            return Ok(Transition {
                state: state.clone(),
                action,
                next_state: self.make_state(cell, self.is_pressed(state), 0.0),
                true_reward: -STEP_PENALTY,
                done: true,
            });
        }
        let (x, y) = cell;
        let next_cell = match action.action_id {
            LEFT => (x.saturating_sub(1), y),
            RIGHT => ((x + 1).min(self.grid_width - 1), y),
            DOWN => (x, y.saturating_sub(1)),
            UP => (x, (y + 1).min(self.grid_height - 1)),
            _ => (x, y),
        };
        let moved = (next_cell.0.abs_diff(x) + next_cell.1.abs_diff(y)) as f64;
        let pressed = self.kind == EnvKind::ButtonGrid && action.action_id == PRESS && cell == self.goal;
        let next_state = self.make_state(next_cell, pressed, moved);

        let progress = (self.manhattan_to_goal(cell) as f64
            - self.manhattan_to_goal(next_cell) as f64)
            / self.progress_scale();
        let mut reward = progress - STEP_PENALTY;
        let done = match self.kind {
            EnvKind::GridWalker => next_cell == self.goal,
            EnvKind::ButtonGrid => pressed,
        };
        if done {
            reward += GOAL_BONUS;
        }
        Ok(Transition {
            state: state.clone(),
            action,
            next_state,
            true_reward: reward,
            done,
        })
    }

    /// Collects exactly `length` steps with `policy`, restarting the episode
    /// whenever it ends or hits `max_episode_steps`.
    pub fn rollout_segment(
        &self,
        policy: &dyn Policy,
        length: usize,
        seed: u64,
    ) -> Result<Segment, EnvError> {
        if length < 2 || length > self.max_episode_steps {
            return Err(EnvError::SegmentLength {
                max: self.max_episode_steps,
                got: length,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.reset(seed);
        let mut episode_steps = 0;
        let mut steps = Vec::with_capacity(length);
        while steps.len() < length {
            let action = policy.act(&state, &mut rng);
            let tr = self.step(&state, action)?;
            steps.push((state, action));
            episode_steps += 1;
            state = if tr.done || episode_steps >= self.max_episode_steps {
                episode_steps = 0;
                self.reset(seed)
            } else {
                tr.next_state
            };
        }
        Ok(Segment {
            steps,
            env_id: self.name.clone(),
            segment_id: seed,
            policy_version: 0,
        })
    }

    /// The class-style environment sketch handed to language models.
    pub fn abstraction(&self) -> &'static str {
        match self.kind {
            EnvKind::GridWalker => include_str!("../assets/grid_walker.abstraction.txt"),
            EnvKind::ButtonGrid => include_str!("../assets/button_grid.abstraction.txt"),
        }
    }

    pub fn task_description(&self) -> &'static str {
        match self.kind {
            EnvKind::GridWalker => include_str!("../assets/grid_walker.task.txt"),
            EnvKind::ButtonGrid => include_str!("../assets/button_grid.task.txt"),
        }
    }
}

/// Sum of ground-truth rewards along a segment.
pub fn segment_return(segment: &Segment) -> Result<f64, EnvError> {
    let spec =
        EnvSpec::by_name(&segment.env_id).ok_or_else(|| EnvError::UnknownEnv(segment.env_id.clone()))?;
    segment
        .steps
        .iter()
        .map(|(s, a)| spec.step(s, *a).map(|t| t.true_reward))
        .sum()
}
