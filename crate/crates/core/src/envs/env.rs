use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layout::{Cell, MazeLayout};
use super::transform::TaskTransform;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const OBS_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = 2;
/// Success radius around the goal, in metres.
pub const GOAL_RADIUS: f64 = 0.5;
/// Speed cap per axis, metres per step.
pub const V_MAX: f64 = 0.2;
pub const VELOCITY_DECAY: f64 = 0.8;
pub const ACTION_GAIN: f64 = 0.2;
/// Start/goal positions are jittered by at most this much around a cell centre
/// (as a fraction of the cell size).
const SPAWN_JITTER: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub goal: [f64; 2],
    pub t: usize,
}

impl EnvState {
    /// Untransformed `(x, y, vx, vy)`.
    pub fn raw_obs(&self) -> [f64; OBS_DIM] {
        [self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Sparse goal-reaching reward.
pub fn reward(position: [f64; 2], goal: [f64; 2]) -> f64 {
    if distance(position, goal) <= GOAL_RADIUS {
        1.0
    } else {
        0.0
    }
}

/// Goal map φ: the position part of a raw observation.
pub fn achieved_goal(raw_obs: &[f64]) -> [f64; 2] {
    [raw_obs[0], raw_obs[1]]
}

/// What a policy is given at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalObs {
    /// Observation after the task transform.
    pub observation: Vec<f64>,
    /// φ(s), untransformed.
    pub achieved: [f64; 2],
    pub desired: [f64; 2],
}

/// Kinematic point agent in a maze, seen through a task transform.
#[derive(Debug, Clone)]
pub struct Env {
    pub layout: MazeLayout,
    pub transform: TaskTransform,
    pub horizon: usize,
    free: Vec<Cell>,
    rng: Rng,
}

pub fn make_env(layout: MazeLayout, transform: TaskTransform, horizon: usize, seed: u64) -> Result<Env> {
    layout.validate()?;
    let free = layout.free_cells();
    if free.is_empty() {
        return Err(Error::InvalidLayout("no free cells".into()));
    }
    Ok(Env {
        layout,
        transform,
        horizon,
        free,
        rng: seeded(seed),
    })
}

/// Default horizon for the built-in layouts.
pub fn default_horizon(layout_id: &str) -> usize {
    match layout_id {
        "U" => 300,
        "M" => 600,
        _ => 900,
    }
}

impl Env {
    /// Start and goal drawn independently and uniformly over free cells,
    /// jittered around the cell centres.
    pub fn sample_state(&self, rng: &mut Rng) -> EnvState {
        let s = self.free[rng.random_range(0..self.free.len())];
        let g = self.free[rng.random_range(0..self.free.len())];
        let position = self.spawn_in(s, rng);
        let goal = self.spawn_in(g, rng);
        self.reset_to(position, goal)
    }

    fn spawn_in(&self, cell: Cell, rng: &mut Rng) -> [f64; 2] {
        let c = self.layout.center(cell);
        let j = SPAWN_JITTER * self.layout.cell_size;
        [c[0] + rng.random_range(-j..=j), c[1] + rng.random_range(-j..=j)]
    }

    /// Draws the next start/goal pair from the env's own seeded stream.
    pub fn reset(&mut self) -> EnvState {
        let mut rng = self.rng.clone();
        let s = self.sample_state(&mut rng);
        self.rng = rng;
        s
    }

    pub fn reset_to(&self, position: [f64; 2], goal: [f64; 2]) -> EnvState {
        EnvState {
            position,
            velocity: [0.0, 0.0],
            goal,
            t: 0,
        }
    }

    pub fn observe(&self, state: &EnvState) -> GoalObs {
        GoalObs {
            observation: self.transform.observe(&state.raw_obs()),
            achieved: state.position,
            desired: state.goal,
        }
    }

    /// Advances one step with an agent-frame action.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<(EnvState, f64, bool)> {
        if action.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                context: "action",
                expected: ACTION_DIM,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let native = self.transform.actuate(action);
        Ok(self.step_native(state, [native[0], native[1]]))
    }

    /// Dynamics in the untransformed frame; the action is clipped to `[-1, 1]`.
    pub fn step_native(&self, state: &EnvState, action: [f64; 2]) -> (EnvState, f64, bool) {
        let mut next = *state;
        for axis in 0..2 {
            let a = action[axis].clamp(-1.0, 1.0);
            let v = VELOCITY_DECAY * state.velocity[axis] + ACTION_GAIN * a * V_MAX;
            next.velocity[axis] = v.clamp(-V_MAX, V_MAX);
        }
        // Axis-separated sliding: a move into a wall cancels that axis only.
        for axis in 0..2 {
            let mut probe = next.position;
            probe[axis] += next.velocity[axis];
            if self.layout.is_wall_at(probe) {
                next.velocity[axis] = 0.0;
            } else {
                next.position = probe;
            }
        }
        next.t = state.t + 1;
        let r = reward(next.position, next.goal);
        let done = r > 0.0 || next.t >= self.horizon;
        (next, r, done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u_env(t: TaskTransform) -> Env {
        make_env(MazeLayout::builtin("U").unwrap(), t, 300, 0).unwrap()
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = u_env(TaskTransform::N);
        let mut b = u_env(TaskTransform::N);
        for _ in 0..10 {
            assert_eq!(a.reset(), b.reset());
        }
    }

    #[test]
    fn identity_transform_observes_raw_state() {
        let mut env = u_env(TaskTransform::N);
        let s = env.reset();
        assert_eq!(env.observe(&s).observation, s.raw_obs().to_vec());
    }

    #[test]
    fn zero_action_from_rest_stays_put() {
        let env = u_env(TaskTransform::N);
        let s = env.reset_to([1.5, 1.5], [3.5, 3.5]);
        let (n, r, done) = env.step(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(n.position, s.position);
        assert_eq!(r, 0.0);
        assert!(!done);
    }

    #[test]
    fn reaching_goal_rewards_and_terminates() {
        let env = u_env(TaskTransform::N);
        let s = env.reset_to([1.5, 1.5], [1.5 + 0.04 + 0.45, 1.5]);
        let (n, r, done) = env.step(&s, &[1.0, 0.0]).unwrap();
        assert!(distance(n.position, s.goal) <= GOAL_RADIUS);
        assert_eq!(r, 1.0);
        assert!(done);
    }

    #[test]
    fn wall_blocks_only_its_axis() {
        let env = u_env(TaskTransform::N);
        // Cell (1,1) has a wall below it (row 2, col 1). Push down-right from
        // right against the lower edge.
        let mut s = env.reset_to([1.5, 1.99], [3.5, 3.5]);
        s.velocity = [0.1, 0.1];
        let (n, _, _) = env.step(&s, &[1.0, 1.0]).unwrap();
        assert_eq!(n.position[1], 1.99);
        assert_eq!(n.velocity[1], 0.0);
        let expected_vx = (0.8f64 * 0.1 + 0.2 * V_MAX).min(V_MAX);
        assert_eq!(n.velocity[0], expected_vx);
        assert_eq!(n.position[0], 1.5 + expected_vx);
        assert!(!env.layout.is_wall_at(n.position));
    }

    #[test]
    fn inverse_action_task_mirrors_motion() {
        let n_env = u_env(TaskTransform::N);
        let ia_env = u_env(TaskTransform::IA);
        let s = n_env.reset_to([2.5, 1.5], [3.5, 3.5]);
        let (a, _, _) = n_env.step(&s, &[0.5, 0.0]).unwrap();
        let (b, _, _) = ia_env.step(&s, &[-0.5, 0.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_action_rejected() {
        let env = u_env(TaskTransform::N);
        let s = env.reset_to([1.5, 1.5], [3.5, 3.5]);
        assert!(env.step(&s, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn horizon_terminates() {
        let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::N, 3, 0).unwrap();
        let mut s = env.reset_to([1.5, 1.5], [3.5, 3.5]);
        let mut done = false;
        for _ in 0..3 {
            let out = env.step(&s, &[0.0, 0.0]).unwrap();
            s = out.0;
            done = out.2;
        }
        assert!(done);
        assert_eq!(s.t, 3);
    }
}
