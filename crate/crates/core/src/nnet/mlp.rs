use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{
    dense_backward, dense_forward, layer_norm_backward, layer_norm_forward, tanh_backward,
    tanh_inplace,
};
use super::shape::NetShape;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

/// Flat parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub shape: NetShape,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(shape: NetShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: shape.param_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVector { shape, values })
    }

    pub fn zeros(shape: NetShape) -> Self {
        let n = shape.param_count();
        ParamVector {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        forward(&self.shape, &self.values, input, Mode::Eval, None)
    }
}

/// Supervised rows for one network: `inputs` is `rows × input_dim`,
/// `targets` is `rows × output_dim`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Batch {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Batch {
            inputs: Vec::new(),
            targets: Vec::new(),
            input_dim,
            output_dim,
        }
    }

    pub fn with_capacity(input_dim: usize, output_dim: usize, rows: usize) -> Self {
        Batch {
            inputs: Vec::with_capacity(rows * input_dim),
            targets: Vec::with_capacity(rows * output_dim),
            input_dim,
            output_dim,
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        debug_assert_eq!(input.len(), self.input_dim);
        debug_assert_eq!(target.len(), self.output_dim);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn rows(&self) -> usize {
        self.inputs.len() / self.input_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn input(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.input_dim..(r + 1) * self.input_dim]
    }

    pub fn target(&self, r: usize) -> &[f64] {
        &self.targets[r * self.output_dim..(r + 1) * self.output_dim]
    }

    fn check(&self, shape: &NetShape) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.input_dim != shape.input_dim {
            return Err(Error::DimensionMismatch {
                context: "batch input",
                expected: shape.input_dim,
                got: self.input_dim,
            });
        }
        if self.output_dim != shape.output_dim {
            return Err(Error::DimensionMismatch {
                context: "batch target",
                expected: shape.output_dim,
                got: self.output_dim,
            });
        }
        if self.targets.len() != self.rows() * self.output_dim {
            return Err(Error::DimensionMismatch {
                context: "batch rows",
                expected: self.rows() * self.output_dim,
                got: self.targets.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
pub fn init_params(shape: &NetShape, seed: u64) -> ParamVector {
    let mut rng = seeded(seed);
    init_with(shape, &mut rng)
}

pub fn init_with(shape: &NetShape, rng: &mut Rng) -> ParamVector {
    let mut values = vec![0.0; shape.param_count()];
    for l in shape.layers() {
        let limit = (6.0 / (l.d_in + l.d_out) as f64).sqrt();
        for w in &mut values[l.weight..l.bias] {
            *w = rng.random_range(-limit..limit);
        }
        if let Some((gain, _)) = l.norm {
            values[gain..gain + l.d_out].fill(1.0);
        }
    }
    ParamVector {
        shape: shape.clone(),
        values,
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    rows: usize,
    layer_inputs: Vec<Vec<f64>>,
    normed: Vec<Vec<f64>>,
    inv_std: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

/// Batched forward pass; returns outputs (`rows × output_dim`) and the tape.
pub fn forward_batch(
    shape: &NetShape,
    params: &[f64],
    inputs: &[f64],
    rows: usize,
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, Tape)> {
    if params.len() != shape.param_count() {
        return Err(Error::DimensionMismatch {
            context: "parameters",
            expected: shape.param_count(),
            got: params.len(),
        });
    }
    if inputs.len() != rows * shape.input_dim {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: rows * shape.input_dim,
            got: inputs.len(),
        });
    }
    let use_dropout = mode == Mode::Train && shape.dropout_rate > 0.0;
    if use_dropout && rng.is_none() {
        return Err(Error::MissingRng);
    }
    let layers = shape.layers();
    let mut tape = Tape {
        rows,
        ..Tape::default()
    };
    let mut x = inputs.to_vec();
    for l in &layers {
        let w = &params[l.weight..l.bias];
        let b = &params[l.bias..l.bias + l.d_out];
        let mut z = dense_forward(w, b, &x, rows, l.d_in, l.d_out);
        tape.layer_inputs.push(std::mem::take(&mut x));
        if !l.hidden {
            x = z;
            break;
        }
        if let Some((g, o)) = l.norm {
            let mut normed = Vec::new();
            let mut inv_std = Vec::new();
            z = layer_norm_forward(
                &z,
                rows,
                l.d_out,
                &params[g..g + l.d_out],
                &params[o..o + l.d_out],
                &mut normed,
                &mut inv_std,
            );
            tape.normed.push(normed);
            tape.inv_std.push(inv_std);
        } else {
            tape.normed.push(Vec::new());
            tape.inv_std.push(Vec::new());
        }
        tanh_inplace(&mut z);
        tape.activations.push(z.clone());
        if use_dropout {
            let mask = dropout_mask(z.len(), shape.dropout_rate, rng.as_deref_mut().expect("checked"));
            for (v, m) in z.iter_mut().zip(&mask) {
                *v *= m;
            }
            tape.masks.push(Some(mask));
        } else {
            tape.masks.push(None);
        }
        x = z;
    }
    Ok((x, tape))
}

/// Gradient of the parameters given `d_out = ∂L/∂outputs`.
pub fn backward(shape: &NetShape, params: &[f64], tape: &Tape, d_out: &[f64]) -> Vec<f64> {
    let layers = shape.layers();
    let rows = tape.rows;
    let mut grad = vec![0.0; params.len()];
    let mut delta = d_out.to_vec();
    for (li, l) in layers.iter().enumerate().rev() {
        if l.hidden {
            if let Some(mask) = &tape.masks[li] {
                for (d, m) in delta.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            delta = tanh_backward(&tape.activations[li], &delta);
            if let Some((g, o)) = l.norm {
                let (head, tail) = grad.split_at_mut(o);
                delta = layer_norm_backward(
                    &delta,
                    &tape.normed[li],
                    &tape.inv_std[li],
                    &params[g..g + l.d_out],
                    rows,
                    l.d_out,
                    &mut head[g..g + l.d_out],
                    &mut tail[..l.d_out],
                );
            }
        }
        let need_dx = li > 0;
        let mut dx = if need_dx { vec![0.0; rows * l.d_in] } else { Vec::new() };
        let (gw, rest) = grad[l.weight..].split_at_mut(l.bias - l.weight);
        dense_backward(
            &params[l.weight..l.bias],
            &tape.layer_inputs[li],
            &delta,
            rows,
            l.d_in,
            l.d_out,
            gw,
            Some(&mut rest[..l.d_out]),
            if need_dx { Some(&mut dx) } else { None },
        );
        delta = dx;
    }
    grad
}

/// Single-input forward pass.
pub fn forward(
    shape: &NetShape,
    params: &[f64],
    input: &[f64],
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    if input.len() != shape.input_dim {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: shape.input_dim,
            got: input.len(),
        });
    }
    forward_batch(shape, params, input, 1, mode, rng).map(|(out, _)| out)
}

/// Eval-mode outputs for every row of `inputs`.
pub fn predict(shape: &NetShape, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
    let rows = inputs.len() / shape.input_dim;
    forward_batch(shape, params, inputs, rows, Mode::Eval, None).map(|(out, _)| out)
}

fn half_sq_mean(outputs: &[f64], batch: &Batch) -> f64 {
    let rows = batch.rows();
    let total: f64 = outputs
        .iter()
        .zip(&batch.targets)
        .map(|(f, y)| (f - y) * (f - y))
        .sum();
    0.5 * total / rows as f64
}

/// Unit-variance Gaussian negative log-likelihood without its constant:
/// the batch mean of `½‖f(x) − y‖²`. Evaluated in eval mode.
pub fn nll_loss(shape: &NetShape, params: &[f64], batch: &Batch) -> Result<f64> {
    batch.check(shape)?;
    let out = predict(shape, params, &batch.inputs)?;
    Ok(half_sq_mean(&out, batch))
}

/// Loss and gradient in one pass. Train mode draws one dropout mask per call.
pub fn loss_and_grad(
    shape: &NetShape,
    params: &[f64],
    batch: &Batch,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<(f64, Vec<f64>)> {
    batch.check(shape)?;
    let rows = batch.rows();
    let (out, tape) = forward_batch(shape, params, &batch.inputs, rows, mode, rng)?;
    let loss = half_sq_mean(&out, batch);
    let inv = 1.0 / rows as f64;
    let d_out: Vec<f64> = out
        .iter()
        .zip(&batch.targets)
        .map(|(f, y)| (f - y) * inv)
        .collect();
    Ok((loss, backward(shape, params, &tape, &d_out)))
}

/// Gradient of [`nll_loss`].
pub fn grad(
    shape: &NetShape,
    params: &[f64],
    batch: &Batch,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    loss_and_grad(shape, params, batch, mode, rng).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn random_batch(shape: &NetShape, rows: usize, rng: &mut Rng) -> Batch {
        let mut b = Batch::new(shape.input_dim, shape.output_dim);
        for _ in 0..rows {
            let x: Vec<f64> = (0..shape.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..shape.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            b.push(&x, &y);
        }
        b
    }

    #[test]
    fn zero_linear_net_outputs_zero() {
        let shape = NetShape::new(3, vec![], 2).with_layernorm(false);
        let p = ParamVector::zeros(shape);
        assert_eq!(p.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_one_one_one() {
        // [w1, b1, w2, b2]
        let shape = NetShape::new(1, vec![1], 1).with_layernorm(false);
        let p = ParamVector::new(shape, vec![0.5, 0.25, 2.0, -1.0]).unwrap();
        let expected = 2.0 * (0.5f64 * 1.0 + 0.25).tanh() - 1.0;
        assert_eq!(p.forward(&[1.0]).unwrap(), vec![expected]);
    }

    #[test]
    fn eval_is_deterministic() {
        let shape = NetShape::new(4, vec![8, 8], 2).with_dropout(0.1);
        let p = init_params(&shape, 3);
        assert_eq!(p.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap(), p.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap());
    }

    #[test]
    fn init_is_reproducible_and_biases_zero() {
        let shape = NetShape::new(4, vec![8, 6], 2);
        let a = init_params(&shape, 11);
        assert_eq!(a, init_params(&shape, 11));
        assert_ne!(a, init_params(&shape, 12));
        for l in shape.layers() {
            assert!(a.values[l.bias..l.bias + l.d_out].iter().all(|&b| b == 0.0));
            if let Some((g, o)) = l.norm {
                assert!(a.values[g..g + l.d_out].iter().all(|&v| v == 1.0));
                assert!(a.values[o..o + l.d_out].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn train_mode_without_rng_is_rejected() {
        let shape = NetShape::new(2, vec![4], 1).with_dropout(0.5);
        let p = init_params(&shape, 0);
        assert!(matches!(
            forward(&shape, &p.values, &[0.0, 1.0], Mode::Train, None),
            Err(Error::MissingRng)
        ));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let shape = NetShape::new(2, vec![4], 1);
        let p = init_params(&shape, 0);
        assert!(matches!(p.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn scalar_loss_example() {
        // Linear 1 -> 1 with weight 0, bias 1 predicts 1.0 everywhere.
        let shape = NetShape::new(1, vec![], 1).with_layernorm(false);
        let mut b = Batch::new(1, 1);
        b.push(&[0.7], &[3.0]);
        assert_eq!(nll_loss(&shape, &[0.0, 1.0], &b).unwrap(), 2.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let shape = NetShape::new(1, vec![], 1);
        assert!(matches!(
            nll_loss(&shape, &[0.0, 0.0], &Batch::new(1, 1)),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn loss_matches_independent_recomputation() {
        let shape = NetShape::new(2, vec![3], 1).with_layernorm(false);
        let mut rng = seeded(5);
        let p = init_params(&shape, 9).values;
        let b = random_batch(&shape, 5, &mut rng);
        // Oracle: explicit scalar formulas for a 2-3-1 tanh net.
        let mut total = 0.0;
        for r in 0..5 {
            let x = b.input(r);
            let mut out = p[3 * 2 + 3 + 3];
            for j in 0..3 {
                let h = (p[j * 2] * x[0] + p[j * 2 + 1] * x[1] + p[6 + j]).tanh();
                out += p[9 + j] * h;
            }
            total += 0.5 * (out - b.target(r)[0]).powi(2);
        }
        let loss = nll_loss(&shape, &p, &b).unwrap();
        assert!((loss - total / 5.0).abs() < 1e-14);
    }

    #[test]
    fn zero_residual_means_zero_loss_and_grad() {
        let shape = NetShape::new(3, vec![], 2).with_layernorm(false);
        let p = init_params(&shape, 1);
        let mut b = Batch::new(3, 2);
        for x in [[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]] {
            let y = p.forward(&x).unwrap();
            b.push(&x, &y);
        }
        let (loss, g) = loss_and_grad(&shape, &p.values, &b, Mode::Eval, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_rows_same_gradient() {
        let shape = NetShape::new(3, vec![5], 2);
        let p = init_params(&shape, 2).values;
        let mut rng = seeded(3);
        let b = random_batch(&shape, 4, &mut rng);
        let mut dup = b.clone();
        for r in 0..4 {
            dup.push(&b.input(r).to_vec(), &b.target(r).to_vec());
        }
        let g1 = grad(&shape, &p, &b, Mode::Eval, None).unwrap();
        let g2 = grad(&shape, &p, &dup, Mode::Eval, None).unwrap();
        for (a, c) in g1.iter().zip(&g2) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn dropout_expectation_matches_eval() {
        let shape = NetShape::new(3, vec![6], 1).with_layernorm(false).with_dropout(0.1);
        let p = init_params(&shape, 4).values;
        let x = [0.3, -0.2, 0.9];
        let eval = forward(&shape, &p, &x, Mode::Eval, None).unwrap()[0];
        let mut rng = seeded(77);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| forward(&shape, &p, &x, Mode::Train, Some(&mut rng)).unwrap()[0])
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        assert!((mean - eval).abs() < 4.0 * stderr + 1e-12, "{mean} vs {eval} ± {stderr}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded(12);
        for (ln, dropout) in [(false, 0.0), (true, 0.0), (true, 0.25)] {
            let shape = NetShape::new(3, vec![4, 3], 2).with_layernorm(ln).with_dropout(dropout);
            let p = init_params(&shape, 6).values;
            let b = random_batch(&shape, 4, &mut rng);
            let f = |q: &[f64]| loss_and_grad(&shape, q, &b, Mode::Train, Some(&mut seeded(1))).unwrap();
            let g = f(&p).1;
            let h = 1e-5;
            for k in 0..p.len() {
                let (mut a, mut c) = (p.clone(), p.clone());
                a[k] += h;
                c[k] -= h;
                let fd = (f(&a).0 - f(&c).0) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
            }
        }
    }
}
