use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Hindsight relabelling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerConfig {
    /// Temperature τ of the `exp(−Δ/τ)` offset distribution.
    pub temperature: f64,
    /// Probability of relabelling a sampled transition.
    pub fraction: f64,
}

impl Default for HerConfig {
    fn default() -> Self {
        HerConfig {
            temperature: 100.0,
            fraction: 0.8,
        }
    }
}

/// Draws Δ ∈ {1, …, remaining} with probability ∝ exp(−Δ/τ), by inverting the
/// truncated geometric CDF.
pub fn her_offset(remaining: usize, temperature: f64, rng: &mut Rng) -> usize {
    assert!(remaining >= 1, "no future state to relabel with");
    if remaining == 1 {
        return 1;
    }
    let u: f64 = rng.random();
    let ln_q = -1.0 / temperature;
    if !(ln_q < -1e-12) {
        // τ = ∞ (or numerically so): uniform.
        return 1 + ((u * remaining as f64) as usize).min(remaining - 1);
    }
    // 1 − q^M, computed without cancellation.
    let tail = -(ln_q * remaining as f64).exp_m1();
    let x = (-u * tail).ln_1p() / ln_q;
    1 + (x.floor().max(0.0) as usize).min(remaining - 1)
}

/// Index of the relabelled goal state for transition `t` of an episode with
/// `steps` transitions: with probability `fraction`, `t + Δ`; otherwise `None`
/// (keep the original goal).
pub fn her_index(steps: usize, t: usize, cfg: &HerConfig, rng: &mut Rng) -> Option<usize> {
    debug_assert!(t < steps);
    if cfg.fraction <= 0.0 || (cfg.fraction < 1.0 && rng.random::<f64>() >= cfg.fraction) {
        return None;
    }
    Some(t + her_offset(steps - t, cfg.temperature, rng))
}

/// Goal for transition `t` of an episode whose achieved goals are
/// `achieved[0..=T]`: with probability `fraction`, φ(s_{t+Δ}); otherwise the
/// original goal.
pub fn her_relabel(achieved: &[[f64; 2]], goal: [f64; 2], t: usize, cfg: &HerConfig, rng: &mut Rng) -> [f64; 2] {
    match her_index(achieved.len() - 1, t, cfg, rng) {
        Some(i) => achieved[i],
        None => goal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn last_step_uses_final_state() {
        let achieved = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let cfg = HerConfig {
            temperature: 50.0,
            fraction: 1.0,
        };
        let mut rng = seeded(0);
        for _ in 0..20 {
            assert_eq!(her_relabel(&achieved, [9.0, 9.0], 1, &cfg, &mut rng), [2.0, 0.0]);
        }
    }

    #[test]
    fn cold_temperature_picks_next_state() {
        let mut rng = seeded(1);
        for _ in 0..1000 {
            assert_eq!(her_offset(50, 1e-3, &mut rng), 1);
        }
    }

    #[test]
    fn zero_fraction_keeps_goal() {
        let achieved = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let cfg = HerConfig {
            temperature: 50.0,
            fraction: 0.0,
        };
        assert_eq!(her_relabel(&achieved, [9.0, 9.0], 0, &cfg, &mut seeded(0)), [9.0, 9.0]);
    }

    #[test]
    fn offset_distribution_matches_exponential_weights() {
        // χ² goodness of fit over Δ ∈ {1..100}, τ = 50, 10⁵ draws, against
        // weights computed directly from exp(−Δ/τ).
        let (m, tau, n) = (100usize, 50.0f64, 100_000usize);
        let weights: Vec<f64> = (1..=m).map(|d| (-(d as f64) / tau).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut counts = vec![0usize; m];
        let mut rng = seeded(2024);
        for _ in 0..n {
            counts[her_offset(m, tau, &mut rng) - 1] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(&c, w)| {
                let e = n as f64 * w / z;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 99.9% quantile of χ² with 99 degrees of freedom is ≈ 148.2.
        assert!(chi2 < 148.2, "chi2 = {chi2}");
    }
}
