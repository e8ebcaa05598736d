use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{Bound, Init, LayerNorm, Linear, Mlp, ParamId, ParamStore, INIT_STD};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Axis of a `(T, H', W', C)` token grid that attention mixes along.
/// `Full` attends over all tokens jointly and exists for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Height,
    Width,
    Full,
}

impl Axis {
    /// Processor order: repeating time, height, width.
    pub fn cyclic(index: usize) -> Axis {
        [Axis::Time, Axis::Height, Axis::Width][index % 3]
    }

    /// Permutation of `(T, H', W', C)` that moves the attended axis to
    /// position 2; it is its own inverse for every axis.
    fn perm(self) -> [usize; 4] {
        match self {
            Axis::Time => [2, 1, 0, 3],
            Axis::Height => [0, 2, 1, 3],
            Axis::Width | Axis::Full => [0, 1, 2, 3],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Height => "height",
            Axis::Width => "width",
            Axis::Full => "full",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" | "t" => Ok(Axis::Time),
            "height" | "h" => Ok(Axis::Height),
            "width" | "w" => Ok(Axis::Width),
            "full" => Ok(Axis::Full),
            other => Err(Error::Invalid(format!("unknown attention axis '{other}'"))),
        }
    }
}

thread_local! {
    static SCORE_OPS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-adds spent on `QKᵀ` and `AV` by this thread since the last reset.
pub fn attention_ops() -> u64 {
    SCORE_OPS.with(Cell::get)
}

pub fn reset_attention_ops() {
    SCORE_OPS.with(|c| c.set(0));
}

/// Closed-form score work of one attention layer along `axis` over a
/// `(T, H', W')` grid with `C` channels.
pub fn sweep_score_ops(grid: (usize, usize, usize), channels: usize, axes: &[Axis]) -> u64 {
    let (t, h, w) = (grid.0 as u64, grid.1 as u64, grid.2 as u64);
    let n = t * h * w;
    axes.iter()
        .map(|axis| {
            let len = match axis {
                Axis::Time => t,
                Axis::Height => h,
                Axis::Width => w,
                Axis::Full => n,
            };
            2 * (n / len) * len * len * channels as u64
        })
        .sum()
}

/// Multi-head self-attention applied independently to every 1-d slice of
/// the token grid along one axis; the other axes act as batch.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    /// `(dim, 3·dim)` joint query/key/value weight.
    pub qkv: ParamId,
    /// Query and value biases; keys carry none since a key bias only shifts
    /// every logit of a row by the same amount.
    pub qv_bias: ParamId,
    pub proj: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        dim: usize,
        heads: usize,
        proj_init: Init,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("{heads} heads do not divide embed dim {dim}")));
        }
        Ok(MultiHeadAttention {
            qkv: store.add(&format!("{name}.qkv.weight"), &[dim, 3 * dim], Init::TruncNormal(INIT_STD), rng),
            qv_bias: store.add(&format!("{name}.qkv.bias"), &[2 * dim], Init::Zeros, rng),
            proj: Linear::with_init(store, &format!("{name}.proj"), dim, dim, proj_init, rng),
            heads,
            dim,
        })
    }

    /// `x·W + (b_q, 0, b_v)` on the last axis.
    pub fn project_qkv<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Tensor<R> {
        let b = p.get(self.qv_bias);
        let c = self.dim;
        let bias = Tensor::concat(&[b.slice(0, 0, c), Tensor::zeros(&[c]), b.slice(0, c, c)], 0);
        x.matmul(p.get(self.qkv)).add_bias(&bias)
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>, axis: Axis) -> Result<Tensor<R>> {
        let s = x.shape();
        if s.len() != 4 || s[3] != self.dim {
            return Err(Error::Shape(format!("attention expects (T, H', W', {}), got {s:?}", self.dim)));
        }
        let perm = axis.perm();
        let moved = if axis == Axis::Time || axis == Axis::Height { x.permute(&perm) } else { x.clone() };
        let ms = moved.shape().to_vec();
        let (batch, len) = match axis {
            Axis::Full => (1, ms[0] * ms[1] * ms[2]),
            _ => (ms[0] * ms[1], ms[2]),
        };
        let (c, heads) = (self.dim, self.heads);
        let dh = c / heads;
        let qkv = self
            .project_qkv(p, &moved.reshape(&[batch, len, c]))
            .reshape(&[batch, len, 3, heads, dh])
            .permute(&[2, 0, 3, 1, 4])
            .reshape(&[3, batch * heads, len, dh]);
        let pick = |i| qkv.slice(0, i, 1).reshape(&[batch * heads, len, dh]);
        let (q, k, v) = (pick(0), pick(1), pick(2));
        let scale = R::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let weights = q.bmm(&k, false, true).scale(scale).softmax();
        let mixed = weights.bmm(&v, false, false);
        SCORE_OPS.with(|cnt| cnt.set(cnt.get() + 2 * (batch * heads * len * len * dh) as u64));
        let merged = mixed
            .reshape(&[batch, heads, len, dh])
            .permute(&[0, 2, 1, 3])
            .reshape(&[batch, len, c]);
        let out = self.proj.forward(p, &merged).reshape(&ms);
        Ok(if axis == Axis::Time || axis == Axis::Height { out.permute(&perm) } else { out })
    }
}

/// Pre-norm transformer block attending along one axis:
/// `x + Attn(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Debug, Clone)]
pub struct AxialBlock {
    pub axis: Axis,
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl AxialBlock {
    /// Output projections of attention and MLP start at zero, so a fresh
    /// block is the identity.
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        axis: Axis,
        dim: usize,
        mlp_dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(AxialBlock {
            axis,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim, rng),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, Init::Zeros, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim, rng),
            mlp: Mlp::new(store, &format!("{name}.mlp"), (dim, mlp_dim, dim), Init::Zeros, rng),
        })
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Result<Tensor<R>> {
        let x = x.add(&self.attn.forward(p, &self.norm1.forward(p, x), self.axis)?);
        Ok(x.add(&self.mlp.forward(p, &self.norm2.forward(p, &x))))
    }
}
