use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tolerance on the unit sum of stored weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Convex-combination coefficients over a subspace's anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("simplex weights"));
        }
        if alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::Config(format!("negative simplex weight in {alpha:?}")));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Config(format!("simplex weights sum to {sum}")));
        }
        Ok(SimplexWeights(alpha))
    }

    /// All mass on anchor `i` of `n`.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n, "vertex {i} of a {n}-simplex");
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        SimplexWeights(a)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1);
        SimplexWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same point with zero weight on `n − len` appended anchors.
    pub fn padded(&self, n: usize) -> Self {
        let mut a = self.0.clone();
        a.resize(n.max(a.len()), 0.0);
        SimplexWeights(a)
    }
}

impl TryFrom<Vec<f64>> for SimplexWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexWeights::new(v)
    }
}

impl From<SimplexWeights> for Vec<f64> {
    fn from(w: SimplexWeights) -> Self {
        w.0
    }
}

/// Uniform draw from the `n`-simplex (symmetric Dirichlet(1, …, 1)) by stick
/// breaking: piece `i` takes a Beta(1, n − 1 − i) fraction of what is left.
pub fn sample_simplex(n: usize, rng: &mut Rng) -> SimplexWeights {
    assert!(n >= 1, "empty simplex");
    let mut alpha = Vec::with_capacity(n);
    let mut rest = 1.0;
    for i in 0..n - 1 {
        let b = (n - 1 - i) as f64;
        // Beta(1, b) by inversion: 1 − U^{1/b}.
        let u: f64 = rng.random();
        let frac = -(u.ln() / b).exp_m1();
        let piece = rest * frac;
        alpha.push(piece);
        rest -= piece;
    }
    alpha.push(rest.max(0.0));
    SimplexWeights(alpha)
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Clips at zero and renormalises; an all-zero vector maps to the barycentre.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let z: f64 = clipped.iter().sum();
    if z > 0.0 {
        clipped.into_iter().map(|x| x / z).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn one_anchor_is_the_vertex() {
        assert_eq!(sample_simplex(1, &mut seeded(0)).as_slice(), &[1.0]);
    }

    #[test]
    fn three_anchor_means_are_a_third() {
        let mut rng = seeded(11);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let a = sample_simplex(3, &mut rng);
            for i in 0..3 {
                sum[i] += a.as_slice()[i];
                sq[i] += a.as_slice()[i].powi(2);
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "coord {i}: {mean} ± {se}");
        }
    }

    #[test]
    fn validation() {
        assert!(SimplexWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexWeights::new(vec![]).is_err());
        assert!(serde_json::from_str::<SimplexWeights>("[0.2, 0.2]").is_err());
        let w: SimplexWeights = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0; 3]), vec![1.0 / 3.0; 3]);
        assert_eq!(project_simplex(&[-1.0, -2.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn draws_lie_on_the_simplex(n in 1usize..12, seed in any::<u64>()) {
            let a = sample_simplex(n, &mut seeded(seed));
            prop_assert_eq!(a.len(), n);
            prop_assert!(a.as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn padding_keeps_the_point(n in 1usize..6, extra in 0usize..4, seed in any::<u64>()) {
            let a = sample_simplex(n, &mut seeded(seed));
            let p = a.padded(n + extra);
            prop_assert_eq!(&p.as_slice()[..n], a.as_slice());
            prop_assert!(p.as_slice()[n..].iter().all(|&x| x == 0.0));
            prop_assert!(SimplexWeights::new(p.as_slice().to_vec()).is_ok());
        }

        #[test]
        fn projection_lands_on_the_simplex(v in proptest::collection::vec(-2.0f64..2.0, 1..8)) {
            let p = project_simplex(&v);
            prop_assert!(SimplexWeights::new(p).is_ok());
        }
    }
}
