use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::policy_input;
use crate::envs::{distance, GoalObs, GOAL_RADIUS};
use crate::error::{Error, Result};
use crate::nnet::{predict, NetShape, ParamVector};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Anything that maps one input row to one output row in eval mode.
pub trait PolicyNet: Sync {
    fn predict_one(&self, input: &[f64]) -> Vec<f64>;
}

impl PolicyNet for ParamVector {
    fn predict_one(&self, input: &[f64]) -> Vec<f64> {
        predict(&self.shape, &self.values, input).expect("policy input width matches its shape")
    }
}

/// A closed-loop controller for rollouts.
pub trait Actor {
    fn reset(&mut self);
    fn act(&mut self, obs: &GoalObs, t: usize) -> [f64; 2];
}

/// High-level subgoal proposer over a low-level subgoal follower. With no high
/// level the policy is flat goal-conditioned BC: the subgoal is the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierPolicy {
    pub high: Option<ParamVector>,
    pub low: ParamVector,
    pub waystep: usize,
}

impl HierPolicy {
    pub fn param_count(&self) -> usize {
        self.high.as_ref().map_or(0, ParamVector::len) + self.low.len()
    }

    pub fn actor(&self) -> HierActor<'_> {
        HierActor::new(self.high.as_ref().map(|h| h as &dyn PolicyNet), &self.low, self.waystep)
    }
}

/// Rollout state for a hierarchical policy.
pub struct HierActor<'a> {
    high: Option<&'a dyn PolicyNet>,
    low: &'a dyn PolicyNet,
    waystep: usize,
    subgoal: Option<[f64; 2]>,
}

impl<'a> HierActor<'a> {
    pub fn new(high: Option<&'a dyn PolicyNet>, low: &'a dyn PolicyNet, waystep: usize) -> Self {
        HierActor {
            high,
            low,
            waystep: waystep.max(1),
            subgoal: None,
        }
    }

    pub fn subgoal(&self) -> Option<[f64; 2]> {
        self.subgoal
    }
}

impl Actor for HierActor<'_> {
    fn reset(&mut self) {
        self.subgoal = None;
    }

    fn act(&mut self, obs: &GoalObs, t: usize) -> [f64; 2] {
        hier_act(self, obs, t)
    }
}

/// One control step: refresh the subgoal every `k` steps or once it is
/// reached, then query the low level and clip to the action box.
pub fn hier_act(actor: &mut HierActor<'_>, obs: &GoalObs, t: usize) -> [f64; 2] {
    let here = obs.achieved;
    let subgoal = match actor.high {
        None => obs.desired,
        Some(high) => {
            let stale = match actor.subgoal {
                None => true,
                Some(sg) => t % actor.waystep == 0 || distance(sg, here) <= GOAL_RADIUS,
            };
            if stale {
                let offset = high.predict_one(&policy_input(&obs.observation, here, obs.desired));
                actor.subgoal = Some([here[0] + offset[0], here[1] + offset[1]]);
            }
            actor.subgoal.expect("set above")
        }
    };
    let a = actor.low.predict_one(&policy_input(&obs.observation, here, subgoal));
    [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub shape_h: Option<NetShape>,
    pub shape_l: NetShape,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub theta_h: Option<Vec<f64>>,
    pub theta_l: Vec<f64>,
}

impl From<&HierPolicy> for Checkpoint {
    fn from(p: &HierPolicy) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                shape_h: p.high.as_ref().map(|h| h.shape.clone()),
                shape_l: p.low.shape.clone(),
                k: p.waystep,
            },
            theta_h: p.high.as_ref().map(|h| h.values.clone()),
            theta_l: p.low.values.clone(),
        }
    }
}

impl TryFrom<Checkpoint> for HierPolicy {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                c.header.format_version
            )));
        }
        let high = match (c.header.shape_h, c.theta_h) {
            (Some(s), Some(v)) => Some(ParamVector::new(s, v)?),
            (None, None) => None,
            _ => return Err(Error::Config("high-level shape and parameters disagree".into())),
        };
        Ok(HierPolicy {
            high,
            low: ParamVector::new(c.header.shape_l, c.theta_l)?,
            waystep: c.header.k,
        })
    }
}

pub fn save_policy(policy: &HierPolicy, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from(policy))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<HierPolicy> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let c: Checkpoint = serde_json::from_str(&text)?;
    HierPolicy::try_from(c)
}
