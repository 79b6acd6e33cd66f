use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 3e-4;

/// Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "adam state",
                expected: self.m.len(),
                got: params.len().max(grad.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`Adam::step`].
pub fn adam_step(mut state: Adam, mut params: Vec<f64>, grad: &[f64], lr: f64) -> Result<(Adam, Vec<f64>)> {
    state.step(&mut params, grad, lr)?;
    Ok((state, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut opt = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..50 {
            opt.step(&mut p, &[0.0; 3], DEFAULT_LR).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (_, p) = adam_step(Adam::new(3), vec![0.0; 3], &[0.3, -5.0, 0.0], DEFAULT_LR).unwrap();
        assert!((p[0] + DEFAULT_LR).abs() < 1e-10);
        assert!((p[1] - DEFAULT_LR).abs() < 1e-10);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn descends_quadratic() {
        let loss = |x: f64| (x - 2.0).powi(2);
        let mut opt = Adam::new(1);
        let mut p = vec![-1.0];
        let initial = loss(p[0]);
        for _ in 0..200 {
            let g = [2.0 * (p[0] - 2.0)];
            opt.step(&mut p, &g, 1e-2).unwrap();
        }
        assert!(loss(p[0]) < initial);
    }

    #[test]
    fn rejects_non_finite() {
        let mut opt = Adam::new(1);
        assert!(matches!(
            opt.step(&mut [0.0], &[f64::NAN], 1e-3),
            Err(Error::NonFinite(_))
        ));
    }
}
