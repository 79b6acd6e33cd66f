use rand::Rng as _;

use super::her::{her_index, her_relabel, HerConfig};
use crate::envs::{Dataset, ACTION_DIM, GOAL_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::nnet::Batch;
use crate::rng::Rng;

/// Network input width for goal-conditioned heads: observation ⊕ goal offset.
pub const POLICY_INPUT_DIM: usize = OBS_DIM + GOAL_DIM;

/// Episode in learner-friendly form.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeView {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// φ(s_0..=s_T).
    pub achieved: Vec<[f64; 2]>,
    pub goal: [f64; 2],
}

impl EpisodeView {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// φ(s_{t+k}), clamped to the episode end.
    pub fn subgoal(&self, t: usize, k: usize) -> [f64; 2] {
        self.subgoal_until(t, k, self.len())
    }

    /// φ(s_{t+k}), clamped to state `end`.
    pub fn subgoal_until(&self, t: usize, k: usize, end: usize) -> [f64; 2] {
        self.achieved[(t + k).min(end).min(self.len())]
    }
}

/// A dataset decoded for training: achieved goals recovered through the
/// inverse observation transform, plus a flat transition index.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub episodes: Vec<EpisodeView>,
    index: Vec<(u32, u32)>,
}

/// Goal-conditioned input row: `obs ⊕ (goal − φ(s))`.
pub fn policy_input(obs: &[f64], achieved: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
    let mut row = Vec::with_capacity(obs.len() + 2);
    row.extend_from_slice(obs);
    row.push(goal[0] - achieved[0]);
    row.push(goal[1] - achieved[1]);
    row
}

impl TaskData {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let t = dataset.transform();
        let data = Self::from_episodes(
            dataset
                .episodes
                .iter()
                .map(|ep| EpisodeView {
                    obs: ep.steps.iter().map(|s| s.o.clone()).collect(),
                    actions: ep.steps.iter().map(|s| s.a.clone()).collect(),
                    achieved: ep.achieved(t),
                    goal: ep.goal,
                })
                .collect(),
        );
        if data.index.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(data)
    }

    /// Empty episodes are dropped.
    pub fn from_episodes(views: Vec<EpisodeView>) -> Self {
        let mut episodes = Vec::with_capacity(views.len());
        let mut index = Vec::new();
        for ep in views.into_iter().filter(|e| !e.is_empty()) {
            let e = episodes.len() as u32;
            index.extend((0..ep.len() as u32).map(|s| (e, s)));
            episodes.push(ep);
        }
        TaskData { episodes, index }
    }

    pub fn n_transitions(&self) -> usize {
        self.index.len()
    }

    fn sample(&self, rng: &mut Rng) -> (&EpisodeView, usize) {
        let (e, t) = self.index[rng.random_range(0..self.index.len())];
        (&self.episodes[e as usize], t as usize)
    }

    fn transitions(&self) -> impl Iterator<Item = (&EpisodeView, usize)> {
        self.index
            .iter()
            .map(|&(e, t)| (&self.episodes[e as usize], t as usize))
    }

    /// `end` is the index of the goal state; a relabelled episode ends there.
    /// A subgoal that would reach or pass `end` is the goal itself.
    fn high_row(ep: &EpisodeView, t: usize, end: usize, goal: [f64; 2], k: usize, batch: &mut Batch) {
        let here = ep.achieved[t];
        let sub = if t + k >= end { goal } else { ep.achieved[t + k] };
        batch.push(&policy_input(&ep.obs[t], here, goal), &[sub[0] - here[0], sub[1] - here[1]]);
    }

    fn low_row(ep: &EpisodeView, t: usize, k: usize, batch: &mut Batch) {
        batch.push(&policy_input(&ep.obs[t], ep.achieved[t], ep.subgoal(t, k)), &ep.actions[t]);
    }

    fn flat_row(ep: &EpisodeView, t: usize, goal: [f64; 2], batch: &mut Batch) {
        batch.push(&policy_input(&ep.obs[t], ep.achieved[t], goal), &ep.actions[t]);
    }

    /// High-level rows: `obs ⊕ (g − φ(s_t)) → φ(s_{t+k}) − φ(s_t)`, goals
    /// optionally relabelled. A goal relabelled to φ(s_{t+Δ}) also clamps the
    /// subgoal at `t + Δ`.
    pub fn high_batch(&self, k: usize, batch_size: usize, her: Option<&HerConfig>, rng: &mut Rng) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, GOAL_DIM, batch_size);
        for _ in 0..batch_size {
            let (ep, t) = self.sample(rng);
            let relabel = her.and_then(|cfg| her_index(ep.len(), t, cfg, rng));
            match relabel {
                Some(i) => Self::high_row(ep, t, i, ep.achieved[i], k, &mut b),
                None => Self::high_row(ep, t, ep.len(), ep.goal, k, &mut b),
            }
        }
        b
    }

    /// Low-level rows: `obs ⊕ (φ(s_{t+k}) − φ(s_t)) → a_t`.
    pub fn low_batch(&self, k: usize, batch_size: usize, rng: &mut Rng) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, ACTION_DIM, batch_size);
        for _ in 0..batch_size {
            let (ep, t) = self.sample(rng);
            Self::low_row(ep, t, k, &mut b);
        }
        b
    }

    /// Flat goal-conditioned rows: `obs ⊕ (g − φ(s_t)) → a_t`.
    pub fn flat_batch(&self, batch_size: usize, her: Option<&HerConfig>, rng: &mut Rng) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, ACTION_DIM, batch_size);
        for _ in 0..batch_size {
            let (ep, t) = self.sample(rng);
            let goal = match her {
                Some(cfg) => her_relabel(&ep.achieved, ep.goal, t, cfg, rng),
                None => ep.goal,
            };
            Self::flat_row(ep, t, goal, &mut b);
        }
        b
    }

    /// Every transition once, original goals.
    pub fn full_high_batch(&self, k: usize) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, GOAL_DIM, self.n_transitions());
        for (ep, t) in self.transitions() {
            Self::high_row(ep, t, ep.len(), ep.goal, k, &mut b);
        }
        b
    }

    pub fn full_low_batch(&self, k: usize) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, ACTION_DIM, self.n_transitions());
        for (ep, t) in self.transitions() {
            Self::low_row(ep, t, k, &mut b);
        }
        b
    }

    pub fn full_flat_batch(&self) -> Batch {
        let mut b = Batch::with_capacity(POLICY_INPUT_DIM, ACTION_DIM, self.n_transitions());
        for (ep, t) in self.transitions() {
            Self::flat_row(ep, t, ep.goal, &mut b);
        }
        b
    }
}

/// Free-function forms mirroring the batch builders.
pub fn make_high_batch(data: &TaskData, k: usize, batch_size: usize, her: Option<&HerConfig>, rng: &mut Rng) -> Batch {
    data.high_batch(k, batch_size, her, rng)
}

pub fn make_low_batch(data: &TaskData, k: usize, batch_size: usize, rng: &mut Rng) -> Batch {
    data.low_batch(k, batch_size, rng)
}
