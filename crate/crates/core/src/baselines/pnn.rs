//! Progressive networks: one column per task, earlier columns frozen, lateral
//! maps from earlier columns' hidden activations into every later layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcrl::{fit, level_batch, HierActor, Level, PolicyNet, TaskData, TrainConfig};
use crate::nnet::layers::{
    dense_accumulate, dense_backward, dense_forward, layer_norm_backward, layer_norm_forward,
    tanh_backward, tanh_inplace,
};
use crate::nnet::{dropout_mask, init_with, Batch, Mode, NetShape};
use crate::rng::{seeded, Rng};
use rand::Rng as _;

/// One column. `laterals` holds, for each earlier column `j` in order, one
/// `d_out × d_in` matrix per layer `ℓ ≥ 1` reading column `j`'s activations of
/// layer `ℓ − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnnColumn {
    pub params: Vec<f64>,
    pub laterals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnnNet {
    pub shape: NetShape,
    pub columns: Vec<PnnColumn>,
}

/// Forward record of one column.
#[derive(Debug, Default)]
struct ColumnTape {
    layer_inputs: Vec<Vec<f64>>,
    normed: Vec<Vec<f64>>,
    inv_std: Vec<Vec<f64>>,
    /// Post-tanh hidden activations, before dropout.
    activations: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

/// Parameters in one source column's block of lateral maps.
pub fn lateral_block(shape: &NetShape) -> usize {
    shape.layers().iter().skip(1).map(|l| l.d_in * l.d_out).sum()
}

/// Parameter count of a network with `columns` columns.
pub fn pnn_param_count(shape: &NetShape, columns: usize) -> usize {
    let p = shape.param_count();
    let l = lateral_block(shape);
    columns * p + l * columns * columns.saturating_sub(1) / 2
}

fn lateral_offsets(shape: &NetShape) -> Vec<usize> {
    let mut out = vec![0];
    let mut acc = 0;
    for l in shape.layers().iter().skip(1) {
        out.push(acc);
        acc += l.d_in * l.d_out;
    }
    out
}

/// Runs one column over `rows` inputs. `prev[j]` are column `j`'s hidden
/// activations, one vector per hidden layer.
fn column_forward(
    shape: &NetShape,
    col: &PnnColumn,
    prev: &[Vec<Vec<f64>>],
    inputs: &[f64],
    rows: usize,
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, ColumnTape)> {
    let layers = shape.layers();
    let block = lateral_block(shape);
    let offs = lateral_offsets(shape);
    let use_dropout = mode == Mode::Train && shape.dropout_rate > 0.0;
    if use_dropout && rng.is_none() {
        return Err(Error::MissingRng);
    }
    let p = &col.params;
    let mut tape = ColumnTape::default();
    let mut x = inputs.to_vec();
    for (li, l) in layers.iter().enumerate() {
        let mut z = dense_forward(&p[l.weight..l.bias], &p[l.bias..l.bias + l.d_out], &x, rows, l.d_in, l.d_out);
        if li > 0 {
            for (j, acts) in prev.iter().enumerate() {
                let o = j * block + offs[li];
                let u = &col.laterals[o..o + l.d_in * l.d_out];
                dense_accumulate(u, &acts[li - 1], rows, l.d_in, l.d_out, &mut z);
            }
        }
        tape.layer_inputs.push(std::mem::take(&mut x));
        if !l.hidden {
            x = z;
            break;
        }
        let (mut normed, mut inv_std) = (Vec::new(), Vec::new());
        if let Some((g, o)) = l.norm {
            z = layer_norm_forward(&z, rows, l.d_out, &p[g..g + l.d_out], &p[o..o + l.d_out], &mut normed, &mut inv_std);
        }
        tape.normed.push(normed);
        tape.inv_std.push(inv_std);
        tanh_inplace(&mut z);
        tape.activations.push(z.clone());
        if use_dropout {
            let mask = dropout_mask(z.len(), shape.dropout_rate, rng.as_deref_mut().expect("checked"));
            z.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            tape.masks.push(Some(mask));
        } else {
            tape.masks.push(None);
        }
        x = z;
    }
    Ok((x, tape))
}

/// Gradients of the column's own parameters and of its lateral maps.
fn column_backward(
    shape: &NetShape,
    col: &PnnColumn,
    prev: &[Vec<Vec<f64>>],
    tape: &ColumnTape,
    rows: usize,
    d_out: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let layers = shape.layers();
    let block = lateral_block(shape);
    let offs = lateral_offsets(shape);
    let p = &col.params;
    let mut gp = vec![0.0; p.len()];
    let mut gl = vec![0.0; col.laterals.len()];
    let mut delta = d_out.to_vec();
    for (li, l) in layers.iter().enumerate().rev() {
        if l.hidden {
            if let Some(mask) = &tape.masks[li] {
                delta.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            delta = tanh_backward(&tape.activations[li], &delta);
            if let Some((g, o)) = l.norm {
                let (head, tail) = gp.split_at_mut(o);
                delta = layer_norm_backward(
                    &delta,
                    &tape.normed[li],
                    &tape.inv_std[li],
                    &p[g..g + l.d_out],
                    rows,
                    l.d_out,
                    &mut head[g..g + l.d_out],
                    &mut tail[..l.d_out],
                );
            }
        }
        if li > 0 {
            for (j, acts) in prev.iter().enumerate() {
                let o = j * block + offs[li];
                let n = l.d_in * l.d_out;
                dense_backward(&col.laterals[o..o + n], &acts[li - 1], &delta, rows, l.d_in, l.d_out, &mut gl[o..o + n], None, None);
            }
        }
        let need_dx = li > 0;
        let mut dx = if need_dx { vec![0.0; rows * l.d_in] } else { Vec::new() };
        let (gw, rest) = gp[l.weight..].split_at_mut(l.bias - l.weight);
        dense_backward(
            &p[l.weight..l.bias],
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
    (gp, gl)
}

impl PnnNet {
    /// A single-column network with Glorot-initialised weights.
    pub fn new(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut net = PnnNet {
            shape,
            columns: Vec::new(),
        };
        net.add_column(seed);
        Ok(net)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn param_count(&self) -> usize {
        self.columns.iter().map(|c| c.params.len() + c.laterals.len()).sum()
    }

    /// Appends a fresh column wired to every existing one.
    pub fn add_column(&mut self, seed: u64) {
        let mut rng = seeded(seed);
        let params = init_with(&self.shape, &mut rng).values;
        let k = self.columns.len();
        let mut laterals = Vec::with_capacity(k * lateral_block(&self.shape));
        for _ in 0..k {
            for l in self.shape.layers().iter().skip(1) {
                let limit = (6.0 / (l.d_in + l.d_out) as f64).sqrt();
                laterals.extend((0..l.d_in * l.d_out).map(|_| rng.random_range(-limit..limit)));
            }
        }
        self.columns.push(PnnColumn { params, laterals });
    }

    /// Eval-mode hidden activations of columns `0..upto`.
    fn hidden_upto(&self, upto: usize, inputs: &[f64], rows: usize) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut acts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(upto);
        for col in &self.columns[..upto] {
            let (_, tape) = column_forward(&self.shape, col, &acts, inputs, rows, Mode::Eval, None)?;
            acts.push(tape.activations);
        }
        Ok(acts)
    }

    /// Eval-mode output of `column` for every row of `inputs`.
    pub fn forward_column(&self, column: usize, inputs: &[f64]) -> Result<Vec<f64>> {
        if column >= self.columns.len() {
            return Err(Error::Config(format!(
                "column {column} of a {}-column network",
                self.columns.len()
            )));
        }
        if inputs.len() % self.shape.input_dim != 0 {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.shape.input_dim,
                got: inputs.len(),
            });
        }
        let rows = inputs.len() / self.shape.input_dim;
        let prev = self.hidden_upto(column, inputs, rows)?;
        column_forward(&self.shape, &self.columns[column], &prev, inputs, rows, Mode::Eval, None).map(|(o, _)| o)
    }

    /// Output of the newest column.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        self.forward_column(self.columns.len() - 1, inputs)
    }

    /// Loss and gradient of the newest column's trainable block, laid out as
    /// `params ++ laterals`.
    pub fn loss_and_grad(&self, batch: &Batch, mode: Mode, rng: Option<&mut Rng>) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let rows = batch.rows();
        let k = self.columns.len() - 1;
        let prev = self.hidden_upto(k, &batch.inputs, rows)?;
        let col = &self.columns[k];
        let (out, tape) = column_forward(&self.shape, col, &prev, &batch.inputs, rows, mode, rng)?;
        let inv = 1.0 / rows as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = out
            .iter()
            .zip(&batch.targets)
            .map(|(f, y)| {
                loss += (f - y) * (f - y);
                (f - y) * inv
            })
            .collect();
        let (mut gp, gl) = column_backward(&self.shape, col, &prev, &tape, rows, &d_out);
        gp.extend(gl);
        Ok((0.5 * loss * inv, gp))
    }

    fn newest_flat(&self) -> Vec<f64> {
        let c = self.columns.last().expect("at least one column");
        let mut v = c.params.clone();
        v.extend_from_slice(&c.laterals);
        v
    }

    fn set_newest_flat(&mut self, flat: &[f64]) {
        let c = self.columns.last_mut().expect("at least one column");
        let n = c.params.len();
        c.params.copy_from_slice(&flat[..n]);
        c.laterals.copy_from_slice(&flat[n..]);
    }

    /// Trains the newest column on `level` minibatches; older columns stay fixed.
    pub fn train_newest(&mut self, level: Level, data: &TaskData, cfg: &TrainConfig, rng: &mut Rng) -> Result<()> {
        if data.n_transitions() == 0 {
            return Err(Error::EmptyDataset);
        }
        let steps = cfg.total_steps(data.n_transitions());
        let mut flat = self.newest_flat();
        let mut scratch = self.clone();
        fit(&mut flat, steps, cfg.lr, |p| {
            scratch.set_newest_flat(p);
            let batch = level_batch(level, data, cfg, rng);
            scratch.loss_and_grad(&batch, Mode::Train, Some(rng))
        })?;
        self.set_newest_flat(&flat);
        Ok(())
    }

    pub fn view(&self, column: usize) -> PnnView<'_> {
        PnnView { net: self, column }
    }
}

/// A fixed column of a progressive network, usable as a policy head.
#[derive(Debug, Clone, Copy)]
pub struct PnnView<'a> {
    pub net: &'a PnnNet,
    pub column: usize,
}

impl PolicyNet for PnnView<'_> {
    fn predict_one(&self, input: &[f64]) -> Vec<f64> {
        self.net.forward_column(self.column, input).expect("input width matches the network")
    }
}

/// Progressive heads for a hierarchical policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnnPolicy {
    pub high: Option<PnnNet>,
    pub low: PnnNet,
    pub waystep: usize,
}

impl PnnPolicy {
    pub fn n_columns(&self) -> usize {
        self.low.n_columns()
    }

    pub fn param_count(&self) -> usize {
        self.high.as_ref().map_or(0, PnnNet::param_count) + self.low.param_count()
    }

    /// Heads for `column`.
    pub fn views(&self, column: usize) -> (Option<PnnView<'_>>, PnnView<'_>) {
        (self.high.as_ref().map(|h| h.view(column)), self.low.view(column))
    }
}

/// Rollout actor over column `column` of `high`/`low`.
pub fn pnn_actor<'a>(high: &'a Option<PnnView<'a>>, low: &'a PnnView<'a>, waystep: usize) -> HierActor<'a> {
    HierActor::new(high.as_ref().map(|h| h as &dyn PolicyNet), low, waystep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{loss_and_grad, predict};

    fn shape() -> NetShape {
        NetShape::new(3, vec![5, 4], 2)
    }

    fn batch(rows: usize, seed: u64) -> Batch {
        let mut rng = seeded(seed);
        let mut b = Batch::new(3, 2);
        for _ in 0..rows {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            b.push(&x, &y);
        }
        b
    }

    #[test]
    fn single_column_is_a_plain_mlp() {
        let net = PnnNet::new(shape(), 3).unwrap();
        let b = batch(6, 1);
        let plain = predict(&net.shape, &net.columns[0].params, &b.inputs).unwrap();
        assert_eq!(net.forward(&b.inputs).unwrap(), plain);
        let (l1, g1) = net.loss_and_grad(&b, Mode::Eval, None).unwrap();
        let (l2, g2) = loss_and_grad(&net.shape, &net.columns[0].params, &b, Mode::Eval, None).unwrap();
        assert_eq!((l1, g1), (l2, g2));
    }

    #[test]
    fn lateral_gradients_match_finite_differences() {
        let mut net = PnnNet::new(shape(), 3).unwrap();
        net.add_column(4);
        net.add_column(5);
        let b = batch(5, 2);
        let (_, g) = net.loss_and_grad(&b, Mode::Eval, None).unwrap();
        let flat = net.newest_flat();
        let h = 1e-5;
        let mut scratch = net.clone();
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let mut eval = |d: f64| {
                let mut v = flat.clone();
                v[i] += d;
                scratch.set_newest_flat(&v);
                scratch.loss_and_grad(&b, Mode::Eval, None).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn older_columns_are_untouched_by_training() {
        use crate::envs::{gen_dataset, make_env, ExpertConfig, MazeLayout, TaskTransform};
        let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::N, 300, 0).unwrap();
        let data = TaskData::from_dataset(&gen_dataset(&env, 10, 1, &ExpertConfig::default()).unwrap()).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            steps_per_epoch: Some(20),
            batch_size: 16,
            ..TrainConfig::default()
        };
        let mut net = PnnNet::new(NetShape::new(6, vec![8, 8], 2), 1).unwrap();
        net.train_newest(Level::Low, &data, &cfg, &mut seeded(0)).unwrap();
        let first = net.columns[0].clone();
        net.add_column(2);
        let before = net.columns[1].clone();
        net.train_newest(Level::Low, &data, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(net.columns[0], first);
        assert_ne!(net.columns[1], before);
    }

    #[test]
    fn parameter_tally_is_superlinear() {
        let s = shape();
        let p = s.param_count();
        let l = 5 * 4 + 4 * 2;
        assert_eq!(lateral_block(&s), l);
        let mut net = PnnNet::new(s.clone(), 0).unwrap();
        for k in 1..=5 {
            assert_eq!(net.param_count(), k * p + l * k * (k - 1) / 2);
            assert_eq!(net.param_count(), pnn_param_count(&s, k));
            net.add_column(k as u64);
        }
        assert!(pnn_param_count(&s, 4) > 4 * p);
    }

    #[test]
    fn earlier_column_outputs_ignore_later_columns() {
        let mut net = PnnNet::new(shape(), 1).unwrap();
        let b = batch(4, 3);
        let before = net.forward_column(0, &b.inputs).unwrap();
        net.add_column(9);
        assert_eq!(net.forward_column(0, &b.inputs).unwrap(), before);
        assert_ne!(net.forward_column(1, &b.inputs).unwrap(), before);
        assert!(net.forward_column(2, &b.inputs).is_err());
    }
}
