use serde::{Deserialize, Serialize};

use super::anchor::SubspaceShape;
use crate::error::{Error, Result};
use crate::gcrl::{level_batch, level_full_batch, Level, TaskData, TrainConfig};
use crate::nnet::{forward_batch, loss_and_grad, nll_loss, Batch, Mode};
use crate::rng::Rng;

/// Which heads a subspace parameterises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    High,
    Low,
    /// Both heads in one parameter vector, high first.
    Joint,
}

impl Role {
    pub fn levels(self) -> &'static [Level] {
        match self {
            Role::High => &[Level::High],
            Role::Low => &[Level::Low],
            Role::Joint => &[Level::High, Level::Low],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::High => "high",
            Role::Low => "low",
            Role::Joint => "joint",
        }
    }
}

/// Imitation loss of a subspace point on one task's data.
pub struct Objective<'a> {
    pub role: Role,
    pub shape: &'a SubspaceShape,
    pub data: &'a TaskData,
    pub train: &'a TrainConfig,
    full: Vec<Batch>,
}

impl<'a> Objective<'a> {
    pub fn new(role: Role, shape: &'a SubspaceShape, data: &'a TaskData, train: &'a TrainConfig) -> Result<Self> {
        if shape.nets.len() != role.levels().len() {
            return Err(Error::DimensionMismatch {
                context: "networks per subspace role",
                expected: role.levels().len(),
                got: shape.nets.len(),
            });
        }
        let full = role
            .levels()
            .iter()
            .map(|&l| level_full_batch(l, data, train.waystep))
            .collect();
        Ok(Objective {
            role,
            shape,
            data,
            train,
            full,
        })
    }

    /// Eval-mode loss over every transition (summed over heads).
    pub fn full_loss(&self, theta: &[f64]) -> Result<f64> {
        let parts = self.shape.split(theta)?;
        let mut total = 0.0;
        for (p, batch) in parts.iter().zip(&self.full) {
            total += nll_loss(&p.shape, &p.values, batch)?;
        }
        Ok(total)
    }

    /// Train-mode minibatch loss and gradient w.r.t. `theta`.
    pub fn minibatch(&self, theta: &[f64], rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let parts = self.shape.split(theta)?;
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(theta.len());
        for (p, &level) in parts.iter().zip(self.role.levels()) {
            let batch = level_batch(level, self.data, self.train, rng);
            let (l, g) = loss_and_grad(&p.shape, &p.values, &batch, Mode::Train, Some(rng))?;
            total += l;
            grad.extend(g);
        }
        Ok((total, grad))
    }

    /// Fraction of transitions whose prediction lies within `d` (L2) of the
    /// dataset target; the smallest fraction over heads.
    pub fn within_fraction(&self, theta: &[f64], d: f64) -> Result<f64> {
        let parts = self.shape.split(theta)?;
        let mut worst: f64 = 1.0;
        for (p, batch) in parts.iter().zip(&self.full) {
            let (out, _) = forward_batch(&p.shape, &p.values, &batch.inputs, batch.rows(), Mode::Eval, None)?;
            let od = batch.output_dim;
            let hits = (0..batch.rows())
                .filter(|&r| {
                    let e: f64 = out[r * od..(r + 1) * od]
                        .iter()
                        .zip(batch.target(r))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    e.sqrt() <= d
                })
                .count();
            worst = worst.min(hits as f64 / batch.rows().max(1) as f64);
        }
        Ok(worst)
    }
}
