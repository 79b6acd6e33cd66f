use serde::{Deserialize, Serialize};

use super::data::{TaskData, POLICY_INPUT_DIM};
use super::her::HerConfig;
use super::policy::HierPolicy;
use crate::envs::{ACTION_DIM, GOAL_DIM};
use crate::error::{Error, Result};
use crate::nnet::{init_params, loss_and_grad, nll_loss, Adam, Batch, Mode, NetShape, ParamVector, DEFAULT_LR};
use crate::rng::{child, derive_path, Rng};

/// Ratio of desk-maze expert episode lengths to the reference point-agent
/// episode lengths; scales way-steps and HER temperatures.
pub const DESK_STEP_SCALE: f64 = 0.2;

/// Reference way-steps for the U / M / L point mazes.
pub fn reference_waystep(layout_id: &str) -> usize {
    match layout_id {
        "U" => 50,
        _ => 25,
    }
}

/// Reference HER temperatures for the U / M / L point mazes.
pub fn reference_her_temperature(layout_id: &str) -> f64 {
    match layout_id {
        "M" => 75.0,
        _ => 100.0,
    }
}

/// Way-step for a desk maze: the reference value scaled to desk episode
/// lengths, at least 3.
pub fn desk_waystep(layout_id: &str) -> usize {
    ((reference_waystep(layout_id) as f64 * DESK_STEP_SCALE).round() as usize).max(3)
}

pub fn desk_her_temperature(layout_id: &str) -> f64 {
    reference_her_temperature(layout_id) * DESK_STEP_SCALE
}

/// Which head a loss or batch refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    High,
    Low,
    /// Goal-conditioned flat BC.
    Flat,
}

impl Level {
    pub fn output_dim(self) -> usize {
        match self {
            Level::High => GOAL_DIM,
            Level::Low | Level::Flat => ACTION_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub her: HerConfig,
    pub waystep: usize,
    /// Gradient steps per epoch; `None` means one pass over the transitions.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 256,
            lr: DEFAULT_LR,
            her: HerConfig {
                temperature: desk_her_temperature("U"),
                fraction: 0.8,
            },
            waystep: desk_waystep("U"),
            steps_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self, n_transitions: usize) -> usize {
        let per_epoch = self
            .steps_per_epoch
            .unwrap_or_else(|| n_transitions.div_ceil(self.batch_size.max(1)));
        self.epochs * per_epoch
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Network architectures for the two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbcShapes {
    pub high: NetShape,
    pub low: NetShape,
}

impl HbcShapes {
    /// 64-unit high level, 256-unit low level, layer norm, dropout 0.1.
    pub fn reference() -> Self {
        Self::with_widths(64, 256, 0.1)
    }

    /// Smaller widths for laptop-scale runs.
    pub fn desk() -> Self {
        Self::with_widths(32, 64, 0.1)
    }

    pub fn with_widths(high: usize, low: usize, dropout: f64) -> Self {
        HbcShapes {
            high: NetShape::new(POLICY_INPUT_DIM, vec![high, high], GOAL_DIM).with_dropout(dropout),
            low: NetShape::new(POLICY_INPUT_DIM, vec![low, low], ACTION_DIM).with_dropout(dropout),
        }
    }

    pub fn for_level(&self, level: Level) -> &NetShape {
        match level {
            Level::High => &self.high,
            Level::Low | Level::Flat => &self.low,
        }
    }
}

/// Minibatch for one training step of `level`.
pub fn level_batch(level: Level, data: &TaskData, cfg: &TrainConfig, rng: &mut Rng) -> Batch {
    match level {
        Level::High => data.high_batch(cfg.waystep, cfg.batch_size, Some(&cfg.her), rng),
        Level::Low => data.low_batch(cfg.waystep, cfg.batch_size, rng),
        Level::Flat => data.flat_batch(cfg.batch_size, Some(&cfg.her), rng),
    }
}

/// Every transition of `data`, original goals.
pub fn level_full_batch(level: Level, data: &TaskData, waystep: usize) -> Batch {
    match level {
        Level::High => data.full_high_batch(waystep),
        Level::Low => data.full_low_batch(waystep),
        Level::Flat => data.full_flat_batch(),
    }
}

/// Adam descent on `params` for `steps` steps. `objective` returns the
/// minibatch loss and gradient at the given point.
pub fn fit<F>(params: &mut [f64], steps: usize, lr: f64, mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut opt = Adam::new(params.len());
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, g) = objective(params)?;
        opt.step(params, &g, lr)?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Trains one head from `init` on minibatches of `level`.
pub fn train_level(
    level: Level,
    init: ParamVector,
    data: &TaskData,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<ParamVector> {
    if data.n_transitions() == 0 {
        return Err(Error::EmptyDataset);
    }
    let steps = cfg.total_steps(data.n_transitions());
    let shape = init.shape.clone();
    let mut values = init.values;
    fit(&mut values, steps, cfg.lr, |p| {
        let batch = level_batch(level, data, cfg, rng);
        loss_and_grad(&shape, p, &batch, Mode::Train, Some(rng))
    })?;
    Ok(ParamVector { shape, values })
}

/// Full-dataset eval-mode loss of one head.
pub fn level_loss(level: Level, params: &ParamVector, data: &TaskData, waystep: usize) -> Result<f64> {
    nll_loss(&params.shape, &params.values, &level_full_batch(level, data, waystep))
}

/// Fresh heads for a hierarchical policy (seeded from `cfg.seed`).
pub fn init_hbc(shapes: &HbcShapes, cfg: &TrainConfig) -> HierPolicy {
    HierPolicy {
        high: Some(init_params(&shapes.high, derive_path(cfg.seed, &[0, 1]))),
        low: init_params(&shapes.low, derive_path(cfg.seed, &[0, 2])),
        waystep: cfg.waystep,
    }
}

/// Continues training both heads of `policy` on `data`, independently.
pub fn finetune_hbc(policy: HierPolicy, data: &TaskData, cfg: &TrainConfig) -> Result<HierPolicy> {
    let high = match policy.high {
        Some(h) => Some(train_level(Level::High, h, data, cfg, &mut child(cfg.seed, &[1, 1]))?),
        None => None,
    };
    let low_level = if high.is_some() { Level::Low } else { Level::Flat };
    let low = train_level(low_level, policy.low, data, cfg, &mut child(cfg.seed, &[1, 2]))?;
    Ok(HierPolicy {
        high,
        low,
        waystep: cfg.waystep,
    })
}

/// Hierarchical BC from scratch.
pub fn train_hbc(data: &TaskData, shapes: &HbcShapes, cfg: &TrainConfig) -> Result<HierPolicy> {
    finetune_hbc(init_hbc(shapes, cfg), data, cfg)
}

/// Flat goal-conditioned BC from scratch (no high level).
pub fn train_bc(data: &TaskData, shape: &NetShape, cfg: &TrainConfig) -> Result<HierPolicy> {
    let init = HierPolicy {
        high: None,
        low: init_params(shape, derive_path(cfg.seed, &[0, 2])),
        waystep: cfg.waystep,
    };
    finetune_hbc(init, data, cfg)
}
