use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{init_with, MatrixSlot, NetShape, ParamVector};
use crate::rng::Rng;

/// Parameter layout of a subspace: one or more networks laid end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceShape {
    pub nets: Vec<NetShape>,
}

impl SubspaceShape {
    pub fn single(net: NetShape) -> Self {
        SubspaceShape { nets: vec![net] }
    }

    pub fn dim(&self) -> usize {
        self.nets.iter().map(NetShape::param_count).sum()
    }

    /// Start offset of each network.
    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.nets
            .iter()
            .map(|n| {
                let o = at;
                at += n.param_count();
                o
            })
            .collect()
    }

    /// Weight matrices of every network, at global offsets.
    pub fn weight_slots(&self) -> Vec<MatrixSlot> {
        self.nets
            .iter()
            .zip(self.offsets())
            .flat_map(|(n, base)| {
                n.weight_slots().into_iter().map(move |s| MatrixSlot {
                    offset: s.offset + base,
                    ..s
                })
            })
            .collect()
    }

    /// Cuts a flat vector into per-network parameters.
    pub fn split(&self, theta: &[f64]) -> Result<Vec<ParamVector>> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace point",
                expected: self.dim(),
                got: theta.len(),
            });
        }
        self.nets
            .iter()
            .zip(self.offsets())
            .map(|(n, o)| ParamVector::new(n.clone(), theta[o..o + n.param_count()].to_vec()))
            .collect()
    }

    /// Fresh random point: each network initialised in turn from `rng`.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        self.nets.iter().flat_map(|n| init_with(n, rng).values).collect()
    }
}

/// Low-rank factors for one weight matrix `W: rows × cols`, as `A B` with
/// `A: rows × rank` and `B: rank × cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraFactor {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LoraFactor {
    pub fn param_count(&self) -> usize {
        self.rank * (self.rows + self.cols)
    }

    /// `out += scale · A B` for a row-major `rows × cols` block.
    pub fn add_product(&self, scale: f64, out: &mut [f64]) {
        for i in 0..self.rows {
            let row = &mut out[i * self.cols..(i + 1) * self.cols];
            for k in 0..self.rank {
                let aik = scale * self.a[i * self.rank + k];
                if aik == 0.0 {
                    continue;
                }
                let bk = &self.b[k * self.cols..(k + 1) * self.cols];
                for (o, &bkj) in row.iter_mut().zip(bk) {
                    *o += aik * bkj;
                }
            }
        }
    }

    /// Gradients of `⟨G, A B⟩` w.r.t. `A` and `B`, given `G: rows × cols`.
    pub fn grad(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, m, r) = (self.rows, self.cols, self.rank);
        let mut ga = vec![0.0; n * r];
        let mut gb = vec![0.0; r * m];
        for i in 0..n {
            let gi = &g[i * m..(i + 1) * m];
            for k in 0..r {
                let bk = &self.b[k * m..(k + 1) * m];
                ga[i * r + k] = gi.iter().zip(bk).map(|(x, y)| x * y).sum();
                let aik = self.a[i * r + k];
                if aik != 0.0 {
                    for (o, &x) in gb[k * m..(k + 1) * m].iter_mut().zip(gi) {
                        *o += aik * x;
                    }
                }
            }
        }
        (ga, gb)
    }
}

/// Rank used for a `rows × cols` matrix when the requested rank is `rank`:
/// at most half the smaller side, at least 1.
pub fn layer_rank(rank: usize, rows: usize, cols: usize) -> usize {
    rank.min((rows.min(cols) / 2).max(1)).max(1)
}

/// Low-rank anchor: one factor pair per weight matrix, nothing for biases or
/// normalisation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAnchor {
    pub rank: usize,
    pub factors: Vec<LoraFactor>,
}

impl LoraAnchor {
    /// `A = 0`, `B ~ N(0, 1/cols)`, so the update starts at zero.
    pub fn init(shape: &SubspaceShape, rank: usize, rng: &mut Rng) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("LoRA rank must be at least 1".into()));
        }
        let factors = shape
            .weight_slots()
            .into_iter()
            .map(|s| {
                let r = layer_rank(rank, s.rows, s.cols);
                let normal = Normal::new(0.0, 1.0 / (s.cols as f64).sqrt()).expect("finite std");
                LoraFactor {
                    rows: s.rows,
                    cols: s.cols,
                    rank: r,
                    a: vec![0.0; s.rows * r],
                    b: (0..r * s.cols).map(|_| normal.sample(rng)).collect(),
                }
            })
            .collect();
        Ok(LoraAnchor { rank, factors })
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().map(LoraFactor::param_count).sum()
    }

    /// Flat `[A₁, B₁, A₂, B₂, …]`.
    pub fn flat(&self) -> Vec<f64> {
        self.factors.iter().flat_map(|f| f.a.iter().chain(&f.b).copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        for f in &mut self.factors {
            let na = f.a.len();
            f.a.copy_from_slice(&values[at..at + na]);
            at += na;
            let nb = f.b.len();
            f.b.copy_from_slice(&values[at..at + nb]);
            at += nb;
        }
    }

    /// Flat gradient matching `flat()` given the gradient w.r.t. the full
    /// parameter vector.
    pub fn grad_flat(&self, shape: &SubspaceShape, g: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (f, s) in self.factors.iter().zip(shape.weight_slots()) {
            let (ga, gb) = f.grad(&g[s.offset..s.offset + s.rows * s.cols]);
            out.extend(ga);
            out.extend(gb);
        }
        out
    }
}

/// Where a low-rank anchor's update is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LoraBase {
    /// `θ_i = A_i B_i` at the weight slots, zero elsewhere.
    Zero,
    /// `θ_i = θ_1 + A_i B_i`: an adapter on top of the first anchor.
    #[default]
    FirstAnchor,
}

/// One vertex of a subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Anchor {
    Full(Vec<f64>),
    Lora(LoraAnchor),
}

impl Anchor {
    pub fn param_count(&self) -> usize {
        match self {
            Anchor::Full(v) => v.len(),
            Anchor::Lora(l) => l.param_count(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Anchor::Full(_))
    }

    /// Dense parameter vector; `first` is the materialised first anchor.
    pub fn materialize(&self, shape: &SubspaceShape, base: LoraBase, first: &[f64]) -> Vec<f64> {
        match self {
            Anchor::Full(v) => v.clone(),
            Anchor::Lora(l) => {
                let mut out = match base {
                    LoraBase::Zero => vec![0.0; shape.dim()],
                    LoraBase::FirstAnchor => first.to_vec(),
                };
                for (f, s) in l.factors.iter().zip(shape.weight_slots()) {
                    f.add_product(1.0, &mut out[s.offset..s.offset + s.rows * s.cols]);
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn shape() -> SubspaceShape {
        SubspaceShape {
            nets: vec![NetShape::new(6, vec![16, 16], 2), NetShape::new(6, vec![8], 2)],
        }
    }

    #[test]
    fn slots_cover_both_nets() {
        let s = shape();
        let slots = s.weight_slots();
        assert_eq!(slots.len(), 5);
        assert_eq!(slots[3].offset, s.nets[0].param_count());
        let theta: Vec<f64> = (0..s.dim()).map(|i| i as f64).collect();
        let parts = s.split(&theta).unwrap();
        assert_eq!(parts[1].values[0], s.nets[0].param_count() as f64);
    }

    #[test]
    fn ranks_are_capped() {
        assert_eq!(layer_rank(4, 16, 6), 3);
        assert_eq!(layer_rank(4, 2, 64), 1);
        assert_eq!(layer_rank(4, 64, 64), 4);
    }

    #[test]
    fn product_matches_naive_oracle() {
        let mut rng = seeded(3);
        let (n, m, r) = (5, 7, 2);
        let f = LoraFactor {
            rows: n,
            cols: m,
            rank: r,
            a: (0..n * r).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..r * m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let mut out = vec![0.0; n * m];
        f.add_product(1.0, &mut out);
        for i in 0..n {
            for j in 0..m {
                let want: f64 = (0..r).map(|k| f.a[i * r + k] * f.b[k * m + j]).sum();
                assert!((out[i * m + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn factor_gradient_matches_finite_differences() {
        let mut rng = seeded(4);
        let (n, m, r) = (4, 3, 2);
        let mut f = LoraFactor {
            rows: n,
            cols: m,
            rank: r,
            a: (0..n * r).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..r * m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let g: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |f: &LoraFactor| {
            let mut w = vec![0.0; n * m];
            f.add_product(1.0, &mut w);
            w.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>()
        };
        let (ga, gb) = f.grad(&g);
        let h = 1e-6;
        for i in 0..n * r {
            let x = f.a[i];
            f.a[i] = x + h;
            let up = objective(&f);
            f.a[i] = x - h;
            let down = objective(&f);
            f.a[i] = x;
            assert!(((up - down) / (2.0 * h) - ga[i]).abs() < 1e-7);
        }
        for i in 0..r * m {
            let x = f.b[i];
            f.b[i] = x + h;
            let up = objective(&f);
            f.b[i] = x - h;
            let down = objective(&f);
            f.b[i] = x;
            assert!(((up - down) / (2.0 * h) - gb[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn fresh_lora_is_zero_update() {
        let s = shape();
        let l = LoraAnchor::init(&s, 4, &mut seeded(0)).unwrap();
        let first: Vec<f64> = (0..s.dim()).map(|i| i as f64 * 0.01).collect();
        assert_eq!(Anchor::Lora(l.clone()).materialize(&s, LoraBase::FirstAnchor, &first), first);
        assert!(Anchor::Lora(l).materialize(&s, LoraBase::Zero, &first).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn flat_roundtrip() {
        let s = shape();
        let mut l = LoraAnchor::init(&s, 2, &mut seeded(1)).unwrap();
        let v: Vec<f64> = (0..l.param_count()).map(|i| i as f64).collect();
        l.set_flat(&v);
        assert_eq!(l.flat(), v);
    }
}
