use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcrl::{fit, level_batch, Level, TaskData, TrainConfig};
use crate::nnet::{grad, loss_and_grad, Batch, Mode, NetShape, ParamVector};
use crate::rng::Rng;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegKind {
    L2,
    Ewc,
}

/// Quadratic anchor for one head: `λ‖θ − θ_old‖²` (L2) or
/// `λ/2 Σ F_i (θ_i − θ_old,i)²` (EWC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegState {
    pub lambda: f64,
    pub theta_old: Vec<f64>,
    pub fisher: Option<Vec<f64>>,
}

impl RegState {
    pub fn l2(lambda: f64, theta_old: Vec<f64>) -> Self {
        RegState {
            lambda,
            theta_old,
            fisher: None,
        }
    }

    pub fn ewc(lambda: f64, theta_old: Vec<f64>, fisher: Vec<f64>) -> Result<Self> {
        if fisher.len() != theta_old.len() {
            return Err(Error::DimensionMismatch {
                context: "fisher",
                expected: theta_old.len(),
                got: fisher.len(),
            });
        }
        if fisher.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::Config("fisher entries must be finite and nonnegative".into()));
        }
        Ok(RegState {
            lambda,
            theta_old,
            fisher: Some(fisher),
        })
    }
}

/// Penalty value and its gradient at `params`.
pub fn reg_penalty(kind: RegKind, params: &[f64], state: &RegState) -> Result<(f64, Vec<f64>)> {
    if params.len() != state.theta_old.len() {
        return Err(Error::DimensionMismatch {
            context: "regularizer anchor",
            expected: state.theta_old.len(),
            got: params.len(),
        });
    }
    let lambda = state.lambda;
    let mut value = 0.0;
    let mut g = vec![0.0; params.len()];
    match kind {
        RegKind::L2 => {
            for ((gi, p), o) in g.iter_mut().zip(params).zip(&state.theta_old) {
                let d = p - o;
                value += d * d;
                *gi = 2.0 * lambda * d;
            }
            value *= lambda;
        }
        RegKind::Ewc => {
            let fisher = state.fisher.as_ref().ok_or(Error::MissingFisher)?;
            for (((gi, p), o), f) in g.iter_mut().zip(params).zip(&state.theta_old).zip(fisher) {
                let d = p - o;
                value += f * d * d;
                *gi = lambda * f * d;
            }
            value *= 0.5 * lambda;
        }
    }
    Ok((value, g))
}

/// Sum of penalties over several anchors (EWC keeps one per past task).
pub fn total_penalty(kind: RegKind, params: &[f64], states: &[RegState]) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut g = vec![0.0; params.len()];
    for s in states {
        let (v, gs) = reg_penalty(kind, params, s)?;
        value += v;
        for (a, b) in g.iter_mut().zip(gs) {
            *a += b;
        }
    }
    Ok((value, g))
}

/// Diagonal empirical Fisher: mean over `n_samples` rows drawn from `rows`
/// (with replacement) of the squared per-row loss gradient.
pub fn estimate_fisher(shape: &NetShape, params: &[f64], rows: &Batch, n_samples: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_samples == 0 {
        return Err(Error::Config("fisher needs at least one sample".into()));
    }
    let mut fisher = vec![0.0; params.len()];
    let mut one = Batch::with_capacity(rows.input_dim, rows.output_dim, 1);
    for _ in 0..n_samples {
        let r = rng.random_range(0..rows.rows());
        one.inputs.clear();
        one.targets.clear();
        one.push(rows.input(r), rows.target(r));
        let g = grad(shape, params, &one, Mode::Eval, None)?;
        for (f, gi) in fisher.iter_mut().zip(g) {
            *f += gi * gi;
        }
    }
    let inv = 1.0 / n_samples as f64;
    fisher.iter_mut().for_each(|f| *f *= inv);
    Ok(fisher)
}

/// [`crate::gcrl::train_level`] with a quadratic penalty added to every step.
pub fn train_level_penalized(
    level: Level,
    init: ParamVector,
    data: &TaskData,
    cfg: &TrainConfig,
    kind: RegKind,
    states: &[RegState],
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
        let (loss, mut g) = loss_and_grad(&shape, p, &batch, Mode::Train, Some(rng))?;
        let (pen, pg) = total_penalty(kind, p, states)?;
        for (a, b) in g.iter_mut().zip(pg) {
            *a += b;
        }
        Ok((loss + pen, g))
    })?;
    Ok(ParamVector { shape, values })
}
