use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::anchor::{Anchor, LoraBase, SubspaceShape};
use super::simplex::SimplexWeights;
use crate::error::{Error, Result};

/// Convex hull of a list of anchors, plus the point chosen for each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySubspace {
    pub shape: SubspaceShape,
    pub lora_base: LoraBase,
    pub anchors: Vec<Anchor>,
    pub task_weights: BTreeMap<usize, SimplexWeights>,
}

impl PolicySubspace {
    /// One full anchor, no tasks yet.
    pub fn new(shape: SubspaceShape, first: Vec<f64>, lora_base: LoraBase) -> Result<Self> {
        if first.len() != shape.dim() {
            return Err(Error::DimensionMismatch {
                context: "first anchor",
                expected: shape.dim(),
                got: first.len(),
            });
        }
        Ok(PolicySubspace {
            shape,
            lora_base,
            anchors: vec![Anchor::Full(first)],
            task_weights: BTreeMap::new(),
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Every anchor as a dense vector.
    pub fn materialized(&self) -> Vec<Vec<f64>> {
        let first = match &self.anchors[0] {
            Anchor::Full(v) => v.as_slice(),
            Anchor::Lora(_) => unreachable!("the first anchor is always full"),
        };
        self.anchors
            .iter()
            .map(|a| a.materialize(&self.shape, self.lora_base, first))
            .collect()
    }

    /// `Σ α_i θ_i`.
    pub fn combine(&self, alpha: &SimplexWeights) -> Result<Vec<f64>> {
        combine_dense(&self.materialized(), alpha.as_slice())
    }

    /// Point stored for `task`.
    pub fn task_params(&self, task: usize) -> Result<Vec<f64>> {
        let w = self
            .task_weights
            .get(&task)
            .ok_or_else(|| Error::Config(format!("no weights stored for task {task}")))?;
        self.combine(w)
    }

    /// Stores `alpha` for `task` within the current anchors.
    pub fn assign(&mut self, task: usize, alpha: SimplexWeights) -> Result<()> {
        if alpha.len() != self.n_anchors() {
            return Err(Error::DimensionMismatch {
                context: "task weights",
                expected: self.n_anchors(),
                got: alpha.len(),
            });
        }
        self.task_weights.insert(task, alpha);
        Ok(())
    }

    /// Appends `anchor`, zero-pads every stored weight vector and stores
    /// `alpha` (over the enlarged set) for `task`.
    pub fn extend(&mut self, anchor: Anchor, task: usize, alpha: SimplexWeights) -> Result<()> {
        let n = self.n_anchors() + 1;
        if alpha.len() != n {
            return Err(Error::DimensionMismatch {
                context: "task weights after extension",
                expected: n,
                got: alpha.len(),
            });
        }
        if let Anchor::Full(v) = &anchor {
            if v.len() != self.shape.dim() {
                return Err(Error::DimensionMismatch {
                    context: "new anchor",
                    expected: self.shape.dim(),
                    got: v.len(),
                });
            }
        }
        self.anchors.push(anchor);
        for w in self.task_weights.values_mut() {
            *w = w.padded(n);
        }
        self.task_weights.insert(task, alpha);
        Ok(())
    }

    pub fn anchor_param_count(&self) -> usize {
        self.anchors.iter().map(Anchor::param_count).sum()
    }

    /// Anchors plus stored weight entries.
    pub fn param_count(&self) -> usize {
        self.anchor_param_count() + self.task_weights.values().map(SimplexWeights::len).sum::<usize>()
    }
}

/// `Σ α_i θ_i` over dense anchors.
pub fn combine_dense(anchors: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != anchors.len() {
        return Err(Error::DimensionMismatch {
            context: "anchor weights",
            expected: anchors.len(),
            got: alpha.len(),
        });
    }
    let dim = anchors.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (a, &w) in anchors.iter().zip(alpha) {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(a) {
            *o += w * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::NetShape;
    use crate::rng::seeded;
    use crate::subspace::anchor::LoraAnchor;
    use crate::subspace::simplex::sample_simplex;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn shape() -> SubspaceShape {
        SubspaceShape::single(NetShape::new(6, vec![8, 8], 2))
    }

    fn random_space(n: usize, seed: u64) -> PolicySubspace {
        let s = shape();
        let mut rng = seeded(seed);
        let mut space = PolicySubspace::new(s.clone(), s.init(&mut rng), LoraBase::Zero).unwrap();
        space.assign(0, SimplexWeights::vertex(1, 0)).unwrap();
        for t in 1..n {
            let a = Anchor::Full((0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect());
            space.extend(a, t, SimplexWeights::vertex(t + 1, t)).unwrap();
        }
        space
    }

    #[test]
    fn single_anchor_combines_to_itself() {
        let space = random_space(1, 0);
        let Anchor::Full(first) = &space.anchors[0] else { panic!() };
        assert_eq!(&space.combine(&SimplexWeights::vertex(1, 0)).unwrap(), first);
    }

    #[test]
    fn identical_anchors_combine_to_either() {
        let s = shape();
        let theta = s.init(&mut seeded(1));
        let mut space = PolicySubspace::new(s, theta.clone(), LoraBase::Zero).unwrap();
        space.extend(Anchor::Full(theta.clone()), 1, SimplexWeights::vertex(2, 1)).unwrap();
        let a = SimplexWeights::new(vec![0.3, 0.7]).unwrap();
        for (x, y) in space.combine(&a).unwrap().iter().zip(&theta) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn three_anchors_match_elementwise_oracle() {
        let space = random_space(3, 2);
        let alpha = sample_simplex(3, &mut seeded(9));
        let got = space.combine(&alpha).unwrap();
        let dense: Vec<&Vec<f64>> = space
            .anchors
            .iter()
            .map(|a| match a {
                Anchor::Full(v) => v,
                _ => unreachable!(),
            })
            .collect();
        for i in 0..got.len() {
            let mut want = 0.0;
            for k in 0..3 {
                want += alpha.as_slice()[k] * dense[k][i];
            }
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_pads_previous_weights() {
        let space = random_space(3, 3);
        assert_eq!(space.task_weights[&0].as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(space.task_weights[&1].as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(space.param_count(), 3 * shape().dim() + 9);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let mut space = random_space(2, 4);
        assert!(space.combine(&SimplexWeights::uniform(3)).is_err());
        assert!(space.assign(5, SimplexWeights::uniform(3)).is_err());
        assert!(space.extend(Anchor::Full(vec![0.0; 3]), 2, SimplexWeights::uniform(3)).is_err());
    }

    #[test]
    fn lora_extension_adds_factor_parameters() {
        let s = SubspaceShape::single(NetShape::new(6, vec![32, 32], 2));
        let mut space = PolicySubspace::new(s.clone(), s.init(&mut seeded(0)), LoraBase::FirstAnchor).unwrap();
        let before = space.anchor_param_count();
        let l = LoraAnchor::init(&s, 4, &mut seeded(1)).unwrap();
        let want: usize = s
            .weight_slots()
            .iter()
            .map(|m| crate::subspace::anchor::layer_rank(4, m.rows, m.cols) * (m.rows + m.cols))
            .sum();
        space.extend(Anchor::Lora(l), 1, SimplexWeights::vertex(2, 1)).unwrap();
        assert_eq!(space.anchor_param_count() - before, want);
        assert!(want < s.dim());
    }

    proptest! {
        #[test]
        fn combine_is_affine(seed in any::<u64>(), lambda in 0.0f64..1.0) {
            let space = random_space(3, seed);
            let mut rng = seeded(seed ^ 1);
            let a = sample_simplex(3, &mut rng);
            let b = sample_simplex(3, &mut rng);
            let mix: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
            let mixed = space.combine(&SimplexWeights::new(mix).unwrap()).unwrap();
            let ca = space.combine(&a).unwrap();
            let cb = space.combine(&b).unwrap();
            for i in 0..mixed.len() {
                prop_assert!((mixed[i] - (lambda * ca[i] + (1.0 - lambda) * cb[i])).abs() < 1e-9);
            }
        }
    }
}
