use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pnn::{pnn_actor, PnnNet, PnnPolicy};
use super::reg::{estimate_fisher, train_level_penalized, RegKind, RegState};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::gcrl::{finetune_hbc, init_hbc, level_full_batch, train_hbc, HbcShapes, HierPolicy, Level, TaskData, TrainConfig};
use crate::metrics::success_rate;
use crate::nnet::ParamVector;
use crate::rng::{child, derive_path};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    SC1,
    SCN,
    FT1,
    FTN,
    FZ,
    L2,
    EWC,
    PNN,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::SC1,
        StrategyKind::SCN,
        StrategyKind::FT1,
        StrategyKind::FTN,
        StrategyKind::FZ,
        StrategyKind::L2,
        StrategyKind::EWC,
        StrategyKind::PNN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::SC1 => "SC1",
            StrategyKind::SCN => "SCN",
            StrategyKind::FT1 => "FT1",
            StrategyKind::FTN => "FTN",
            StrategyKind::FZ => "FZ",
            StrategyKind::L2 => "L2",
            StrategyKind::EWC => "EWC",
            StrategyKind::PNN => "PNN",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, StrategyKind::L2 | StrategyKind::EWC)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "strategy",
                name: s.to_string(),
            })
    }
}

/// Baseline-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Regularization strength for L2 and EWC.
    pub lambda: f64,
    /// Rows sampled per Fisher estimate.
    pub fisher_samples: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            lambda: 1.0,
            fisher_samples: 1000,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {} must be finite and nonnegative", self.lambda)));
        }
        if self.fisher_samples == 0 {
            return Err(Error::Config("fisher_samples must be positive".into()));
        }
        Ok(())
    }
}

/// What a strategy keeps after each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyStore {
    /// One policy answers for every task.
    Single(HierPolicy),
    /// Checkpoint `j` answers for task `j`.
    PerTask(Vec<HierPolicy>),
    /// Column `j` answers for task `j`.
    Progressive(PnnPolicy),
}

impl PolicyStore {
    pub fn stored_params(&self) -> usize {
        match self {
            PolicyStore::Single(p) => p.param_count(),
            PolicyStore::PerTask(ps) => ps.iter().map(HierPolicy::param_count).sum(),
            PolicyStore::Progressive(p) => p.param_count(),
        }
    }

    /// Number of tasks the store can answer for individually.
    pub fn entries(&self) -> usize {
        match self {
            PolicyStore::Single(_) => 1,
            PolicyStore::PerTask(ps) => ps.len(),
            PolicyStore::Progressive(p) => p.n_columns(),
        }
    }

    /// The checkpoint used for `task`, where one exists as a plain policy.
    pub fn policy(&self, task: usize) -> Option<&HierPolicy> {
        match self {
            PolicyStore::Single(p) => Some(p),
            PolicyStore::PerTask(ps) => ps.get(task),
            PolicyStore::Progressive(_) => None,
        }
    }

    /// Success rate on `env` of the policy the store uses for `task`.
    pub fn success(&self, task: usize, env: &Env, n: usize, seed: u64) -> Result<f64> {
        match self {
            PolicyStore::Progressive(p) => {
                if task >= p.n_columns() {
                    return Err(Error::Config(format!("no column for task {task}")));
                }
                let (high, low) = p.views(task);
                success_rate(|| pnn_actor(&high, &low, p.waystep), env, n, seed)
            }
            _ => {
                let policy = self
                    .policy(task)
                    .ok_or_else(|| Error::Config(format!("no checkpoint for task {task}")))?;
                success_rate(|| policy.actor(), env, n, seed)
            }
        }
    }
}

/// Per-head quadratic anchors of the regularized strategies.
#[derive(Debug, Default, Clone)]
struct Anchors {
    high: Vec<RegState>,
    low: Vec<RegState>,
}

fn penalized_finetune(
    policy: HierPolicy,
    data: &TaskData,
    cfg: &TrainConfig,
    kind: RegKind,
    anchors: &Anchors,
) -> Result<HierPolicy> {
    let high = match policy.high {
        Some(h) => Some(train_level_penalized(Level::High, h, data, cfg, kind, &anchors.high, &mut child(cfg.seed, &[1, 1]))?),
        None => None,
    };
    let level = if high.is_some() { Level::Low } else { Level::Flat };
    let low = train_level_penalized(level, policy.low, data, cfg, kind, &anchors.low, &mut child(cfg.seed, &[1, 2]))?;
    Ok(HierPolicy {
        high,
        low,
        waystep: cfg.waystep,
    })
}

fn anchor_for(
    kind: RegKind,
    level: Level,
    params: &ParamVector,
    data: &TaskData,
    cfg: &TrainConfig,
    scfg: &StrategyConfig,
    label: u64,
) -> Result<RegState> {
    match kind {
        RegKind::L2 => Ok(RegState::l2(scfg.lambda, params.values.clone())),
        RegKind::Ewc => {
            let rows = level_full_batch(level, data, cfg.waystep);
            let fisher = estimate_fisher(
                &params.shape,
                &params.values,
                &rows,
                scfg.fisher_samples,
                &mut child(cfg.seed, &[2, label]),
            )?;
            RegState::ewc(scfg.lambda, params.values.clone(), fisher)
        }
    }
}

/// Runs `kind` over the task datasets in order. `after_task(j, store)` is
/// called once task `j` has been learned.
pub fn learn_baseline_stream<F>(
    kind: StrategyKind,
    tasks: &[TaskData],
    shapes: &HbcShapes,
    train: &TrainConfig,
    scfg: &StrategyConfig,
    seed: u64,
    mut after_task: F,
) -> Result<PolicyStore>
where
    F: FnMut(usize, &PolicyStore) -> Result<()>,
{
    if tasks.is_empty() {
        return Err(Error::Config("empty task stream".into()));
    }
    scfg.validate()?;
    let mut store: Option<PolicyStore> = None;
    let mut anchors = Anchors::default();
    for (j, data) in tasks.iter().enumerate() {
        let cfg = train.with_seed(derive_path(seed, &[j as u64]));
        let phase = format!("{kind} training");
        let next = learn_one(kind, data, store.take(), &mut anchors, shapes, &cfg, scfg).map_err(|e| e.in_task(j, phase))?;
        after_task(j, &next)?;
        store = Some(next);
    }
    Ok(store.expect("at least one task"))
}

#[allow(clippy::too_many_arguments)]
fn learn_one(
    kind: StrategyKind,
    data: &TaskData,
    store: Option<PolicyStore>,
    anchors: &mut Anchors,
    shapes: &HbcShapes,
    cfg: &TrainConfig,
    scfg: &StrategyConfig,
) -> Result<PolicyStore> {
    use StrategyKind::*;
    let last_policy = |store: Option<PolicyStore>| -> Option<HierPolicy> {
        match store? {
            PolicyStore::Single(p) => Some(p),
            PolicyStore::PerTask(mut ps) => ps.pop(),
            PolicyStore::Progressive(_) => None,
        }
    };
    Ok(match kind {
        SC1 => PolicyStore::Single(train_hbc(data, shapes, cfg)?),
        SCN => {
            let mut ps = match store {
                Some(PolicyStore::PerTask(ps)) => ps,
                _ => Vec::new(),
            };
            ps.push(train_hbc(data, shapes, cfg)?);
            PolicyStore::PerTask(ps)
        }
        FT1 => {
            let start = last_policy(store).unwrap_or_else(|| init_hbc(shapes, cfg));
            PolicyStore::Single(finetune_hbc(start, data, cfg)?)
        }
        FTN => {
            let mut ps = match store {
                Some(PolicyStore::PerTask(ps)) => ps,
                _ => Vec::new(),
            };
            let start = ps.last().cloned().unwrap_or_else(|| init_hbc(shapes, cfg));
            ps.push(finetune_hbc(start, data, cfg)?);
            PolicyStore::PerTask(ps)
        }
        FZ => match store {
            Some(s) => s,
            None => PolicyStore::Single(train_hbc(data, shapes, cfg)?),
        },
        L2 | EWC => {
            let reg = if kind == L2 { RegKind::L2 } else { RegKind::Ewc };
            let policy = match last_policy(store) {
                None => train_hbc(data, shapes, cfg)?,
                Some(p) => penalized_finetune(p, data, cfg, reg, anchors)?,
            };
            let high = match &policy.high {
                Some(h) => Some(anchor_for(reg, Level::High, h, data, cfg, scfg, 1)?),
                None => None,
            };
            let low_level = if policy.high.is_some() { Level::Low } else { Level::Flat };
            let low = anchor_for(reg, low_level, &policy.low, data, cfg, scfg, 2)?;
            match reg {
                // L2 pulls towards the latest parameters only.
                RegKind::L2 => {
                    anchors.high = high.into_iter().collect();
                    anchors.low = vec![low];
                }
                RegKind::Ewc => {
                    anchors.high.extend(high);
                    anchors.low.push(low);
                }
            }
            PolicyStore::Single(policy)
        }
        PNN => {
            let mut p = match store {
                Some(PolicyStore::Progressive(mut p)) => {
                    if let Some(h) = p.high.as_mut() {
                        h.add_column(derive_path(cfg.seed, &[0, 1]));
                    }
                    p.low.add_column(derive_path(cfg.seed, &[0, 2]));
                    p
                }
                _ => PnnPolicy {
                    high: Some(PnnNet::new(shapes.high.clone(), derive_path(cfg.seed, &[0, 1]))?),
                    low: PnnNet::new(shapes.low.clone(), derive_path(cfg.seed, &[0, 2]))?,
                    waystep: cfg.waystep,
                },
            };
            if let Some(h) = p.high.as_mut() {
                h.train_newest(Level::High, data, cfg, &mut child(cfg.seed, &[1, 1]))?;
            }
            p.low.train_newest(Level::Low, data, cfg, &mut child(cfg.seed, &[1, 2]))?;
            PolicyStore::Progressive(p)
        }
    })
}
