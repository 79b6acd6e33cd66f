use rand_distr::{Distribution, Normal};

use super::dataset::{Episode, Step};
use serde::{Deserialize, Serialize};

use super::env::{Env, EnvState, ACTION_GAIN, VELOCITY_DECAY, V_MAX};
use super::layout::MazeLayout;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Feedback law the expert uses to reach its target point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    /// Clipped PD: `a = kp (target − p) − kd v`.
    Pd { kp: f64, kd: f64 },
    /// Picks the action whose next velocity is `gain (target − p)`, capped at
    /// the top speed.
    Deadbeat { gain: f64 },
}

/// Scripted shortest-path expert. Its action depends only on the current
/// position, velocity and goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub controller: Controller,
    /// Std of Gaussian noise added to the native action before clipping.
    pub noise_std: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            controller: Controller::Pd { kp: 5.0, kd: 5.0 },
            noise_std: 0.0,
        }
    }
}

/// Native-frame action steering towards `target`.
pub fn track(position: [f64; 2], velocity: [f64; 2], target: [f64; 2], controller: &Controller) -> [f64; 2] {
    let mut out = [0.0; 2];
    match *controller {
        Controller::Pd { kp, kd } => {
            for axis in 0..2 {
                out[axis] = (kp * (target[axis] - position[axis]) - kd * velocity[axis]).clamp(-1.0, 1.0);
            }
        }
        Controller::Deadbeat { gain } => {
            let mut desired = [(target[0] - position[0]) * gain, (target[1] - position[1]) * gain];
            let speed = desired[0].hypot(desired[1]);
            if speed > V_MAX {
                desired = [desired[0] * V_MAX / speed, desired[1] * V_MAX / speed];
            }
            for axis in 0..2 {
                out[axis] = ((desired[axis] - VELOCITY_DECAY * velocity[axis]) / (ACTION_GAIN * V_MAX)).clamp(-1.0, 1.0);
            }
        }
    }
    out
}

/// Centre of the next cell on a shortest path to the goal cell, or the goal
/// itself once inside the goal cell. `field` is the distance field to the
/// goal cell.
pub fn expert_target(layout: &MazeLayout, field: &[Option<usize>], position: [f64; 2], goal: [f64; 2]) -> Option<[f64; 2]> {
    let here = layout.cell_of(position)?;
    let cols = layout.cols();
    let d = field[here.0 * cols + here.1]?;
    if d == 0 {
        return Some(goal);
    }
    let next = layout
        .neighbours(here)
        .find(|&(r, c)| field[r * cols + c] == Some(d - 1))?;
    Some(layout.center(next))
}

/// Noise-free native expert action for `state`.
pub fn expert_action(env: &Env, field: &[Option<usize>], state: &EnvState, cfg: &ExpertConfig) -> Option<[f64; 2]> {
    let target = expert_target(&env.layout, field, state.position, state.goal)?;
    Some(track(state.position, state.velocity, target, &cfg.controller))
}

/// Rolls out the expert from `start` to the env's goal, recording agent-frame
/// transitions. Fails if the goal is unreachable or the horizon runs out.
pub fn expert_episode_from(env: &Env, start: EnvState, cfg: &ExpertConfig, rng: &mut Rng) -> Result<Episode> {
    let layout = &env.layout;
    let goal_cell = layout.cell_of(start.goal).ok_or(Error::Unreachable)?;
    let field = layout.distance_field(goal_cell);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");
    let mut state = start;
    let mut steps = Vec::new();
    loop {
        let mut native = expert_action(env, &field, &state, cfg).ok_or(Error::Unreachable)?;
        if cfg.noise_std > 0.0 {
            for a in &mut native {
                *a = (*a + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        let action = env.transform.unactuate(&native);
        let (next, r, done) = env.step(&state, &action)?;
        steps.push(Step {
            o: env.observe(&state).observation,
            a: action,
            r: r as u8,
            no: env.observe(&next).observation,
        });
        state = next;
        if done {
            break;
        }
    }
    if steps.last().is_some_and(|s| s.r == 1) {
        Ok(Episode {
            goal: start.goal,
            steps,
        })
    } else {
        Err(Error::Unreachable)
    }
}

/// Expert episode from a freshly drawn start/goal pair.
pub fn expert_episode(env: &Env, cfg: &ExpertConfig, rng: &mut Rng) -> Result<Episode> {
    let start = env.sample_state(rng);
    expert_episode_from(env, start, cfg, rng)
}
