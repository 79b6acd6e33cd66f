use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::anchor::{Anchor, SubspaceShape};
use super::learn::{learn_first_task, learn_next_task, SubspaceConfig, TaskRecord};
use super::objective::{Objective, Role};
use super::space::PolicySubspace;
use crate::error::{Error, Result};
use crate::gcrl::{HbcShapes, HierPolicy, TaskData, TrainConfig};
use crate::rng::derive_path;

pub const MODEL_VERSION: u32 = 1;

/// Default rank of low-rank anchors.
pub const DEFAULT_LORA_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Separate full-anchor subspaces for the high and low heads.
    HiSPO,
    /// As HiSPO, with low-rank anchors after the first.
    HiLOW,
    /// One subspace over both heads, one decision per task.
    CSPO,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::HiSPO, Variant::HiLOW, Variant::CSPO];

    pub fn name(self) -> &'static str {
        match self {
            Variant::HiSPO => "HiSPO",
            Variant::HiLOW => "HiLOW",
            Variant::CSPO => "CSPO",
        }
    }

    pub fn roles(self) -> &'static [Role] {
        match self {
            Variant::HiSPO | Variant::HiLOW => &[Role::High, Role::Low],
            Variant::CSPO => &[Role::Joint],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "subspace variant",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HispoConfig {
    pub variant: Variant,
    pub subspace: SubspaceConfig,
    pub shapes: HbcShapes,
    pub train: TrainConfig,
}

impl HispoConfig {
    /// Subspace settings with the LoRA rank resolved for the variant.
    pub fn effective_subspace(&self) -> SubspaceConfig {
        let mut c = self.subspace.clone();
        c.lora_rank = match self.variant {
            Variant::HiLOW => Some(c.lora_rank.unwrap_or(DEFAULT_LORA_RANK)),
            _ => None,
        };
        c
    }

    pub fn shape_for(&self, role: Role) -> SubspaceShape {
        match role {
            Role::High => SubspaceShape::single(self.shapes.high.clone()),
            Role::Low => SubspaceShape::single(self.shapes.low.clone()),
            Role::Joint => SubspaceShape {
                nets: vec![self.shapes.high.clone(), self.shapes.low.clone()],
            },
        }
    }
}

/// One subspace together with its per-task history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSubspace {
    pub role: Role,
    pub space: PolicySubspace,
    pub history: Vec<TaskRecord>,
}

/// A learned stream: one or two subspaces and the per-task weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub format_version: u32,
    pub variant: Variant,
    pub waystep: usize,
    pub shapes: HbcShapes,
    pub n_tasks: usize,
    pub subspaces: Vec<RoleSubspace>,
}

impl SubspaceModel {
    pub fn subspace(&self, role: Role) -> Option<&RoleSubspace> {
        self.subspaces.iter().find(|s| s.role == role)
    }

    /// The hierarchical policy stored for `task`.
    pub fn policy(&self, task: usize) -> Result<HierPolicy> {
        let mut high = None;
        let mut low = None;
        for s in &self.subspaces {
            let mut parts = s.space.shape.split(&s.space.task_params(task)?)?.into_iter();
            match s.role {
                Role::High => high = parts.next(),
                Role::Low => low = parts.next(),
                Role::Joint => {
                    high = parts.next();
                    low = parts.next();
                }
            }
        }
        Ok(HierPolicy {
            high,
            low: low.ok_or_else(|| Error::InvalidShape("model has no low-level head".into()))?,
            waystep: self.waystep,
        })
    }

    /// Stored parameters: anchors plus weight vectors of every subspace.
    pub fn param_count(&self) -> usize {
        self.subspaces.iter().map(|s| s.space.param_count()).sum()
    }

    /// Parameters of one plain hierarchical policy of the same shapes.
    pub fn single_policy_params(&self) -> usize {
        self.shapes.high.param_count() + self.shapes.low.param_count()
    }

    pub fn anchor_counts(&self) -> Vec<(Role, usize)> {
        self.subspaces.iter().map(|s| (s.role, s.space.n_anchors())).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SubspaceModel = serde_json::from_str(&text)?;
        model
            .validate()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(model)
    }

    /// Checks the format version and that every subspace starts from a full
    /// anchor.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "model version {} (expected {MODEL_VERSION})",
                self.format_version
            )));
        }
        for s in &self.subspaces {
            if !s.space.anchors.first().is_some_and(Anchor::is_full) {
                return Err(Error::Config("first anchor must be full".into()));
            }
        }
        Ok(())
    }
}

/// Learns the tasks in order. `after_task(j, model)` runs once task `j` is
/// learned, e.g. to evaluate every task seen so far.
pub fn learn_stream<F>(tasks: &[TaskData], cfg: &HispoConfig, seed: u64, mut after_task: F) -> Result<SubspaceModel>
where
    F: FnMut(usize, &SubspaceModel) -> Result<()>,
{
    if tasks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sub_cfg = cfg.effective_subspace();
    sub_cfg.validate()?;
    let shapes: Vec<(Role, SubspaceShape)> = cfg.variant.roles().iter().map(|&r| (r, cfg.shape_for(r))).collect();
    let mut model = SubspaceModel {
        format_version: MODEL_VERSION,
        variant: cfg.variant,
        waystep: cfg.train.waystep,
        shapes: cfg.shapes.clone(),
        n_tasks: 0,
        subspaces: Vec::new(),
    };
    for (j, data) in tasks.iter().enumerate() {
        for (ri, (role, shape)) in shapes.iter().enumerate() {
            let phase = format!("{} subspace", role.name());
            let obj = Objective::new(*role, shape, data, &cfg.train).map_err(|e| e.in_task(j, phase.as_str()))?;
            let role_seed = derive_path(seed, &[j as u64, ri as u64]);
            if j == 0 {
                let (space, rec) = learn_first_task(&obj, &sub_cfg, j, role_seed).map_err(|e| e.in_task(j, phase.as_str()))?;
                model.subspaces.push(RoleSubspace {
                    role: *role,
                    space,
                    history: vec![rec],
                });
            } else {
                let slot = &mut model.subspaces[ri];
                let rec = learn_next_task(&mut slot.space, &obj, &sub_cfg, j, role_seed)
                    .map_err(|e| e.in_task(j, phase.as_str()))?;
                slot.history.push(rec);
            }
        }
        model.n_tasks = j + 1;
        after_task(j, &model).map_err(|e| e.in_task(j, "evaluation"))?;
    }
    Ok(model)
}
