use rand::Rng as _;

use crate::envs::{expert_episode_from, Env, EnvState, ExpertConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::gcrl::{Actor, HierPolicy};
use crate::rng::{child, seeded, Rng};

/// Start/goal pair for evaluation episode `i` under `seed`.
pub fn eval_start(env: &Env, seed: u64, i: usize) -> EnvState {
    env.sample_state(&mut child(seed, &[i as u64]))
}

/// Runs one episode; true iff the goal is reached before the horizon.
pub fn rollout<A: Actor>(actor: &mut A, env: &Env, start: EnvState) -> Result<bool> {
    actor.reset();
    let mut state = start;
    for t in 0..env.horizon {
        let action = actor.act(&env.observe(&state), t);
        let (next, r, _) = env.step(&state, &action)?;
        if r > 0.0 {
            return Ok(true);
        }
        state = next;
    }
    Ok(false)
}

/// Fraction of `n` seeded episodes that reach the goal. Episodes run in
/// parallel unless the `parallel` feature is off; the result does not depend
/// on the execution mode.
pub fn success_rate<A, F>(make_actor: F, env: &Env, n: usize, seed: u64) -> Result<f64>
where
    A: Actor,
    F: Fn() -> A + Sync,
{
    if n == 0 {
        return Err(Error::Config("success_rate needs at least one episode".into()));
    }
    let outcomes = exec::map_indices(n, |i| rollout(&mut make_actor(), env, eval_start(env, seed, i)));
    let mut hits = 0usize;
    for o in outcomes {
        hits += o? as usize;
    }
    Ok(hits as f64 / n as f64)
}

pub fn policy_success(policy: &HierPolicy, env: &Env, n: usize, seed: u64) -> Result<f64> {
    success_rate(|| policy.actor(), env, n, seed)
}

/// Uniform random actions in the agent frame.
pub struct RandomActor {
    rng: Rng,
}

impl RandomActor {
    pub fn new(seed: u64) -> Self {
        RandomActor { rng: seeded(seed) }
    }
}

impl Actor for RandomActor {
    fn reset(&mut self) {}

    fn act(&mut self, _obs: &crate::envs::GoalObs, _t: usize) -> [f64; 2] {
        [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)]
    }
}

/// Success of the scripted expert over the same start/goal draws.
pub fn expert_success(env: &Env, n: usize, seed: u64) -> Result<f64> {
    let cfg = ExpertConfig::default();
    let outcomes = exec::map_indices(n, |i| {
        let mut rng = child(seed, &[i as u64, 1]);
        expert_episode_from(env, eval_start(env, seed, i), &cfg, &mut rng).is_ok()
    });
    Ok(outcomes.iter().filter(|&&ok| ok).count() as f64 / n.max(1) as f64)
}
