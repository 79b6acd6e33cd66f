use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-task change of the agent's observation/action channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskTransform {
    /// Normal.
    N,
    /// Inverse actions.
    IA,
    /// Inverse observations.
    IO,
    /// Permute actions (cyclic shift by one).
    PA,
    /// Permute observations (cyclic shift by one).
    PO,
}

fn rotate_left(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| v[(i + 1) % n]).collect()
}

fn rotate_right(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| v[(i + n - 1) % n]).collect()
}

impl TaskTransform {
    pub const ALL: [TaskTransform; 5] = [Self::N, Self::IA, Self::IO, Self::PA, Self::PO];

    /// Raw observation → what the agent sees.
    pub fn observe(self, obs: &[f64]) -> Vec<f64> {
        match self {
            Self::IO => obs.iter().map(|v| -v).collect(),
            Self::PO => rotate_left(obs),
            _ => obs.to_vec(),
        }
    }

    /// What the agent sees → raw observation.
    pub fn unobserve(self, obs: &[f64]) -> Vec<f64> {
        match self {
            Self::IO => obs.iter().map(|v| -v).collect(),
            Self::PO => rotate_right(obs),
            _ => obs.to_vec(),
        }
    }

    /// Agent-emitted action → action fed to the dynamics.
    pub fn actuate(self, action: &[f64]) -> Vec<f64> {
        match self {
            Self::IA => action.iter().map(|v| -v).collect(),
            Self::PA => rotate_left(action),
            _ => action.to_vec(),
        }
    }

    /// Dynamics-frame action → the agent action that produces it.
    pub fn unactuate(self, action: &[f64]) -> Vec<f64> {
        match self {
            Self::IA => action.iter().map(|v| -v).collect(),
            Self::PA => rotate_right(action),
            _ => action.to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::N => "N",
            Self::IA => "IA",
            Self::IO => "IO",
            Self::PA => "PA",
            Self::PO => "PO",
        }
    }
}

/// `(obs', action')` as seen through `transform`. Goals are never transformed.
pub fn apply_transform(transform: TaskTransform, obs: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (transform.observe(obs), transform.actuate(action))
}

impl fmt::Display for TaskTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "transform",
                name: s.to_string(),
            })
    }
}
