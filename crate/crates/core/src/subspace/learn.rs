use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::anchor::{Anchor, LoraAnchor, LoraBase};
use super::objective::Objective;
use super::simplex::{project_simplex, sample_simplex, softmax, SimplexWeights};
use super::space::{combine_dense, PolicySubspace};
use crate::error::{Error, Result};
use crate::exec;
use crate::gcrl::fit;
use crate::nnet::{layers::dot, Adam};
use crate::rng::{seeded, Rng};

/// Zero-shot reuse test parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacConfig {
    /// Accepted L2 distance between prediction and dataset target.
    pub d_epsilon: f64,
    /// Tolerated fraction of transitions outside `d_epsilon`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceConfig {
    /// Prune when `L_prev ≤ (1 + ε) L_curr`.
    pub epsilon: f64,
    /// Dirichlet draws when exploring the previous subspace.
    pub samples: usize,
    /// Std of the Gaussian jitter on anchor weights during extension.
    pub weight_jitter_std: f64,
    /// Rank of low-rank anchors; `None` means full anchors.
    pub lora_rank: Option<usize>,
    pub lora_base: LoraBase,
    pub pac: Option<PacConfig>,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        SubspaceConfig {
            epsilon: 0.25,
            samples: 64,
            weight_jitter_std: 0.1,
            lora_rank: None,
            lora_base: LoraBase::default(),
            pac: None,
        }
    }
}

impl SubspaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.samples == 0 {
            return Err(Error::Config("at least one Dirichlet sample is needed".into()));
        }
        if !(self.weight_jitter_std >= 0.0) {
            return Err(Error::Config("weight jitter std must be non-negative".into()));
        }
        if self.lora_rank == Some(0) {
            return Err(Error::Config("LoRA rank must be at least 1".into()));
        }
        if let Some(p) = self.pac {
            if !(p.d_epsilon >= 0.0) || !(0.0..=1.0).contains(&p.delta) {
                return Err(Error::Config(format!("invalid PAC gate {p:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Prune,
    Extend,
}

/// Prune iff `l_prev ≤ (1 + ε) · l_curr`.
pub fn adapt_decision(l_prev: f64, l_curr: f64, epsilon: f64) -> Result<Decision> {
    if !l_prev.is_finite() || !l_curr.is_finite() {
        return Err(Error::NonFinite("subspace loss"));
    }
    if l_prev < 0.0 {
        return Err(Error::NegativeLoss(l_prev));
    }
    if l_curr < 0.0 {
        return Err(Error::NegativeLoss(l_curr));
    }
    Ok(if l_prev <= (1.0 + epsilon) * l_curr {
        Decision::Prune
    } else {
        Decision::Extend
    })
}

/// Trains a first anchor from scratch; returns it and its full-data loss.
pub fn train_first_anchor(obj: &Objective<'_>, seed: u64) -> Result<(Vec<f64>, f64)> {
    let mut rng = seeded(seed);
    let mut theta = obj.shape.init(&mut rng);
    let steps = obj.train.total_steps(obj.data.n_transitions());
    fit(&mut theta, steps, obj.train.lr, |p| obj.minibatch(p, &mut rng))?;
    let loss = obj.full_loss(&theta)?;
    Ok((theta, loss))
}

/// A trained candidate anchor with its learned weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    pub anchor: Anchor,
    pub scores: Vec<f64>,
    /// `softmax(scores)` over the previous anchors plus the candidate.
    pub alpha: SimplexWeights,
    /// Full-data loss at `alpha`.
    pub loss: f64,
}

/// Trains a new anchor together with anchor scores; previous anchors stay
/// frozen. Each step mixes the anchors with `softmax(scores)` plus Gaussian
/// jitter projected back onto the simplex.
pub fn train_new_anchor(
    space: &PolicySubspace,
    obj: &Objective<'_>,
    cfg: &SubspaceConfig,
    seed: u64,
) -> Result<Extension> {
    let mut rng = seeded(seed);
    let prev = space.materialized();
    let n = prev.len() + 1;
    let mut lora = match cfg.lora_rank {
        Some(r) => Some(LoraAnchor::init(&space.shape, r, &mut rng)?),
        None => None,
    };
    let mut x = match &lora {
        Some(l) => l.flat(),
        None => space.shape.init(&mut rng),
    };
    let n_anchor = x.len();
    x.extend(std::iter::repeat_n(0.0, n));
    let jitter = Normal::new(0.0, cfg.weight_jitter_std).map_err(|e| Error::Config(e.to_string()))?;
    let first = prev[0].clone();
    let steps = obj.train.total_steps(obj.data.n_transitions());

    let materialize = |x: &[f64], lora: &mut Option<LoraAnchor>| -> Vec<f64> {
        match lora {
            Some(l) => {
                l.set_flat(&x[..n_anchor]);
                Anchor::Lora(l.clone()).materialize(&space.shape, space.lora_base, &first)
            }
            None => x[..n_anchor].to_vec(),
        }
    };

    let mut opt = Adam::new(x.len());
    for _ in 0..steps {
        let alpha = softmax(&x[n_anchor..]);
        let mixed = if cfg.weight_jitter_std > 0.0 {
            let noisy: Vec<f64> = alpha.iter().map(|a| a + jitter.sample(&mut rng)).collect();
            project_simplex(&noisy)
        } else {
            alpha.clone()
        };
        let candidate = materialize(&x, &mut lora);
        let mut theta = combine_dense(&prev, &mixed[..n - 1])?;
        for (t, c) in theta.iter_mut().zip(&candidate) {
            *t += mixed[n - 1] * c;
        }
        let (_, g) = obj.minibatch(&theta, &mut rng)?;

        // Jitter and projection are held fixed when differentiating.
        let mut d: Vec<f64> = prev.iter().map(|p| dot(&g, p)).collect();
        d.push(dot(&g, &candidate));
        let mean: f64 = alpha.iter().zip(&d).map(|(a, di)| a * di).sum();
        let w_new = mixed[n - 1];
        let mut grad = match &lora {
            Some(l) => {
                let mut ga = l.grad_flat(&space.shape, &g);
                ga.iter_mut().for_each(|v| *v *= w_new);
                ga
            }
            None => g.iter().map(|v| w_new * v).collect(),
        };
        grad.extend(alpha.iter().zip(&d).map(|(a, di)| a * (di - mean)));
        opt.step(&mut x, &grad, obj.train.lr)?;
    }

    let scores = x[n_anchor..].to_vec();
    let alpha = SimplexWeights::new(project_simplex(&softmax(&scores)))?;
    let candidate = materialize(&x, &mut lora);
    let mut dense = prev;
    dense.push(candidate);
    let loss = obj.full_loss(&combine_dense(&dense, alpha.as_slice())?)?;
    let anchor = match lora {
        Some(l) => Anchor::Lora(l),
        None => Anchor::Full(x[..n_anchor].to_vec()),
    };
    Ok(Extension {
        anchor,
        scores,
        alpha,
        loss,
    })
}

/// Candidate points for exploration: stored task weights first, then
/// `samples` Dirichlet draws.
pub fn exploration_candidates(space: &PolicySubspace, samples: usize, rng: &mut Rng) -> Vec<SimplexWeights> {
    let n = space.n_anchors();
    if n == 1 {
        return vec![SimplexWeights::vertex(1, 0)];
    }
    let mut c: Vec<SimplexWeights> = space.task_weights.values().cloned().collect();
    c.extend((0..samples).map(|_| sample_simplex(n, rng)));
    c
}

/// Best point of the current subspace on the new task's data.
pub fn explore_previous(
    space: &PolicySubspace,
    obj: &Objective<'_>,
    samples: usize,
    rng: &mut Rng,
) -> Result<(SimplexWeights, f64)> {
    let candidates = exploration_candidates(space, samples, rng);
    let dense = space.materialized();
    let losses = exec::map_slice(&candidates, |a| obj.full_loss(&combine_dense(&dense, a.as_slice())?));
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in losses.into_iter().enumerate() {
        let l = l?;
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((i, l));
        }
    }
    let (i, l) = best.expect("at least one candidate");
    Ok((candidates[i].clone(), l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacOutcome {
    pub pass: bool,
    pub alpha: SimplexWeights,
    pub fraction: f64,
    pub loss: f64,
}

/// Passes iff at least `1 − δ` of the transitions are predicted within
/// `d_epsilon` by the best point of the current subspace.
pub fn pac_gate(
    space: &PolicySubspace,
    obj: &Objective<'_>,
    pac: &PacConfig,
    samples: usize,
    rng: &mut Rng,
) -> Result<PacOutcome> {
    let (alpha, loss) = explore_previous(space, obj, samples, rng)?;
    let fraction = obj.within_fraction(&space.combine(&alpha)?, pac.d_epsilon)?;
    Ok(PacOutcome {
        pass: fraction >= 1.0 - pac.delta,
        alpha,
        fraction,
        loss,
    })
}

/// What happened to a subspace on one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    /// First task: the initial anchor was trained.
    Initial,
    /// The PAC gate passed; no training.
    Reused,
    Pruned,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    pub outcome: Outcome,
    pub l_prev: Option<f64>,
    pub l_curr: Option<f64>,
    pub pac_fraction: Option<f64>,
    pub alpha: Vec<f64>,
    pub n_anchors: usize,
    pub param_count: usize,
}

/// First task: one full anchor with weights (1).
pub fn learn_first_task(obj: &Objective<'_>, cfg: &SubspaceConfig, task: usize, seed: u64) -> Result<(PolicySubspace, TaskRecord)> {
    let (theta, loss) = train_first_anchor(obj, seed)?;
    let mut space = PolicySubspace::new(obj.shape.clone(), theta, cfg.lora_base)?;
    space.assign(task, SimplexWeights::vertex(1, 0))?;
    let record = TaskRecord {
        task,
        outcome: Outcome::Initial,
        l_prev: None,
        l_curr: Some(loss),
        pac_fraction: None,
        alpha: vec![1.0],
        n_anchors: 1,
        param_count: space.param_count(),
    };
    Ok((space, record))
}

/// Later tasks: optional PAC gate, then extension, exploration and the
/// prune/extend decision.
pub fn learn_next_task(
    space: &mut PolicySubspace,
    obj: &Objective<'_>,
    cfg: &SubspaceConfig,
    task: usize,
    seed: u64,
) -> Result<TaskRecord> {
    let mut explore_rng = seeded(crate::rng::derive_seed(seed, 1));
    let mut pac_fraction = None;
    if let Some(pac) = &cfg.pac {
        let gate = pac_gate(space, obj, pac, cfg.samples, &mut seeded(crate::rng::derive_seed(seed, 3)))?;
        pac_fraction = Some(gate.fraction);
        if gate.pass {
            space.assign(task, gate.alpha.clone())?;
            return Ok(TaskRecord {
                task,
                outcome: Outcome::Reused,
                l_prev: Some(gate.loss),
                l_curr: None,
                pac_fraction,
                alpha: gate.alpha.as_slice().to_vec(),
                n_anchors: space.n_anchors(),
                param_count: space.param_count(),
            });
        }
    }
    let ext = train_new_anchor(space, obj, cfg, crate::rng::derive_seed(seed, 2))?;
    let (alpha_prev, l_prev) = explore_previous(space, obj, cfg.samples, &mut explore_rng)?;
    let decision = adapt_decision(l_prev, ext.loss, cfg.epsilon)?;
    let (outcome, alpha) = match decision {
        Decision::Prune => {
            space.assign(task, alpha_prev.clone())?;
            (Outcome::Pruned, alpha_prev)
        }
        Decision::Extend => {
            space.extend(ext.anchor, task, ext.alpha.clone())?;
            (Outcome::Extended, ext.alpha)
        }
    };
    Ok(TaskRecord {
        task,
        outcome,
        l_prev: Some(l_prev),
        l_curr: Some(ext.loss),
        pac_fraction,
        alpha: alpha.as_slice().to_vec(),
        n_anchors: space.n_anchors(),
        param_count: space.param_count(),
    })
}
