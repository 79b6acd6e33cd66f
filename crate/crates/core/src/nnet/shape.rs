use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a dense tanh network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub use_layernorm: bool,
    pub dropout_rate: f64,
}

/// Offsets of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major as `d_out × d_in`, followed by the bias, then
/// (hidden layers with layer norm only) the gain and the offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSlots {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: usize,
    pub bias: usize,
    pub norm: Option<(usize, usize)>,
    pub hidden: bool,
}

impl LayerSlots {
    pub fn end(&self) -> usize {
        match self.norm {
            Some((_, offset)) => offset + self.d_out,
            None => self.bias + self.d_out,
        }
    }
}

/// A weight matrix's position in a parameter vector (`rows × cols`, row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSlot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl NetShape {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        NetShape {
            input_dim,
            hidden_dims,
            output_dim,
            use_layernorm: true,
            dropout_rate: 0.0,
        }
    }

    pub fn with_layernorm(mut self, on: bool) -> Self {
        self.use_layernorm = on;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidShape("all dimensions must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidShape(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<LayerSlots> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        let n_layers = dims.len() - 1;
        let mut offset = 0;
        let mut out = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (d_in, d_out) = (dims[l], dims[l + 1]);
            let hidden = l + 1 < n_layers;
            let weight = offset;
            let bias = weight + d_in * d_out;
            let norm = if hidden && self.use_layernorm {
                Some((bias + d_out, bias + 2 * d_out))
            } else {
                None
            };
            let slots = LayerSlots {
                d_in,
                d_out,
                weight,
                bias,
                norm,
                hidden,
            };
            offset = slots.end();
            out.push(slots);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().last().map_or(0, LayerSlots::end)
    }

    pub fn weight_slots(&self) -> Vec<MatrixSlot> {
        self.layers()
            .iter()
            .map(|l| MatrixSlot {
                offset: l.weight,
                rows: l.d_out,
                cols: l.d_in,
            })
            .collect()
    }

    pub fn max_width(&self) -> usize {
        self.hidden_dims
            .iter()
            .copied()
            .chain([self.input_dim, self.output_dim])
            .max()
            .unwrap_or(0)
    }
}

/// Number of parameters implied by `shape`.
pub fn param_count(shape: &NetShape) -> usize {
    shape.param_count()
}
