use rand::Rng;

use super::{Bound, Init, ParamId, ParamStore, INIT_STD};
use crate::error::{Error, Result};
use crate::tensor::{conv2d, conv_transpose2d, Real, Tensor};

/// Affine map along the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::with_init(store, name, in_dim, out_dim, Init::TruncNormal(INIT_STD), rng)
    }

    pub fn with_init<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(&format!("{name}.weight"), &[in_dim, out_dim], init, rng);
        let bias = store.add(&format!("{name}.bias"), &[out_dim], Init::Zeros, rng);
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Tensor<R> {
        x.matmul(p.get(self.weight)).add_bias(p.get(self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<R: Real>(store: &mut ParamStore<R>, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        LayerNorm {
            gamma: store.add(&format!("{name}.gamma"), &[dim], Init::Const(1.0), rng),
            beta: store.add(&format!("{name}.beta"), &[dim], Init::Zeros, rng),
        }
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Tensor<R> {
        x.layer_norm(p.get(self.gamma), p.get(self.beta), Self::EPS)
    }
}

/// Two affine maps with a GELU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        dims: (usize, usize, usize),
        out_init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        Mlp {
            fc1: Linear::new(store, &format!("{name}.fc1"), dims.0, dims.1, rng),
            fc2: Linear::with_init(store, &format!("{name}.fc2"), dims.1, dims.2, out_init, rng),
        }
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Tensor<R> {
        self.fc2.forward(p, &self.fc1.forward(p, x).gelu())
    }
}

#[derive(Debug, Clone)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        k: usize,
        channels: (usize, usize),
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Conv {
            weight: store.add(
                &format!("{name}.weight"),
                &[k, k, channels.0, channels.1],
                Init::TruncNormal(INIT_STD),
                rng,
            ),
            bias: store.add(&format!("{name}.bias"), &[channels.1], Init::Zeros, rng),
            stride,
            pad: (k - 1) / 2 * usize::from(stride == 1),
        }
    }

    fn forward<R: Real>(&self, p: &Bound<R>, x: &Tensor<R>) -> Tensor<R> {
        conv2d(x, p.get(self.weight), p.get(self.bias), self.stride, self.pad)
    }
}

/// Per-frame convolutional tokenizer: `hidden` 3×3 stride-1 stages of width
/// `C/2` with GELU, then a `P×P` stride-`P` stage of width `C`.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    hidden: Vec<Conv>,
    last: Conv,
    pub patch: usize,
    pub in_channels: usize,
    pub embed_dim: usize,
}

impl PatchEmbed {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        in_channels: usize,
        embed_dim: usize,
        patch: usize,
        hidden_stages: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let width = (embed_dim / 2).max(1);
        let mut hidden = Vec::with_capacity(hidden_stages);
        let mut c = in_channels;
        for i in 0..hidden_stages {
            hidden.push(Conv::new(store, &format!("{name}.conv{i}"), 3, (c, width), 1, rng));
            c = width;
        }
        let last = Conv::new(store, &format!("{name}.conv{hidden_stages}"), patch, (c, embed_dim), patch, rng);
        PatchEmbed { hidden, last, patch, in_channels, embed_dim }
    }

    /// `(T, H, W, D) -> (T, H/P, W/P, C)`.
    pub fn forward<R: Real>(&self, p: &Bound<R>, frames: &Tensor<R>) -> Result<Tensor<R>> {
        let s = frames.shape();
        if s.len() != 4 || s[3] != self.in_channels {
            return Err(Error::Shape(format!(
                "patchify expects (T, H, W, {}), got {s:?}",
                self.in_channels
            )));
        }
        for (axis, extent) in [("height", s[1]), ("width", s[2])] {
            if extent % self.patch != 0 {
                let pad = self.patch - extent % self.patch;
                return Err(Error::Indivisible { axis, extent, patch: self.patch, pad });
            }
        }
        let mut x = frames.clone();
        for conv in &self.hidden {
            x = conv.forward(p, &x).gelu();
        }
        Ok(self.last.forward(p, &x))
    }
}

/// Decoder head mirroring [`PatchEmbed`]: a `P×P` transposed stage of width
/// `C/2` with GELU, then 3×3 stages, the last mapping to the `D` field channels.
#[derive(Debug, Clone)]
pub struct PatchExpand {
    first_weight: ParamId,
    first_bias: ParamId,
    convs: Vec<Conv>,
    pub patch: usize,
    pub out_channels: usize,
}

impl PatchExpand {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        embed_dim: usize,
        out_channels: usize,
        patch: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let width = (embed_dim / 2).max(1);
        let first_weight = store.add(
            &format!("{name}.up.weight"),
            &[embed_dim, patch, patch, width],
            Init::TruncNormal(INIT_STD),
            rng,
        );
        let first_bias = store.add(&format!("{name}.up.bias"), &[width], Init::Zeros, rng);
        let convs = vec![
            Conv::new(store, &format!("{name}.conv0"), 3, (width, width), 1, rng),
            Conv::new(store, &format!("{name}.conv1"), 3, (width, out_channels), 1, rng),
        ];
        PatchExpand { first_weight, first_bias, convs, patch, out_channels }
    }

    /// `(N, H', W', C) -> (N, H'·P, W'·P, D)`.
    pub fn forward<R: Real>(&self, p: &Bound<R>, tokens: &Tensor<R>) -> Tensor<R> {
        let mut x = conv_transpose2d(tokens, p.get(self.first_weight), p.get(self.first_bias)).gelu();
        x = self.convs[0].forward(p, &x).gelu();
        self.convs[1].forward(p, &x)
    }

    /// Parameter ids of the head, for zeroing or inspection.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.first_weight, self.first_bias];
        for c in &self.convs {
            ids.push(c.weight);
            ids.push(c.bias);
        }
        ids
    }
}

/// Learnable `(1, H', W', C)` embedding added to every frame.
#[derive(Debug, Clone)]
pub struct SpatialPE {
    pub table: ParamId,
}

impl SpatialPE {
    pub fn new<R: Real>(store: &mut ParamStore<R>, name: &str, grid: (usize, usize), dim: usize, rng: &mut impl Rng) -> Self {
        SpatialPE {
            table: store.add(name, &[1, grid.0, grid.1, dim], Init::TruncNormal(INIT_STD), rng),
        }
    }

    pub fn forward<R: Real>(&self, p: &Bound<R>, tokens: &Tensor<R>) -> Tensor<R> {
        tokens.add(&p.get(self.table).broadcast_to(tokens.shape()))
    }
}

/// Feature-wise linear modulation by a scalar time distance:
/// `γ(t) ⊙ x + β(t)`, with `(γ, β)` from an MLP of `t`.
#[derive(Debug, Clone)]
pub struct Film {
    fc1: Linear,
    fc2: Linear,
    pub out: Linear,
    pub dim: usize,
}

impl Film {
    /// The output layer starts at zero weights with bias `(1, 0)`, so a fresh
    /// layer is the identity.
    pub fn new<R: Real>(store: &mut ParamStore<R>, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let fc1 = Linear::new(store, &format!("{name}.fc1"), 1, dim, rng);
        let fc2 = Linear::new(store, &format!("{name}.fc2"), dim, dim, rng);
        let out = Linear::with_init(store, &format!("{name}.out"), dim, 2 * dim, Init::Zeros, rng);
        let bias = &mut store.get_mut(out.bias).data;
        bias[..dim].iter_mut().for_each(|v| *v = R::one());
        Film { fc1, fc2, out, dim }
    }

    /// `(γ, β)`, each `(T, C)`.
    pub fn modulation<R: Real>(&self, p: &Bound<R>, timestamps: &[f64]) -> (Tensor<R>, Tensor<R>) {
        let t = Tensor::from_f64(timestamps, &[timestamps.len(), 1]);
        let h = self.fc1.forward(p, &t).gelu();
        let h = self.fc2.forward(p, &h).gelu();
        let gb = self.out.forward(p, &h);
        (gb.slice(1, 0, self.dim), gb.slice(1, self.dim, self.dim))
    }

    /// Modulates `(T, H', W', C)` tokens, one timestamp per frame.
    pub fn forward<R: Real>(&self, p: &Bound<R>, tokens: &Tensor<R>, timestamps: &[f64]) -> Result<Tensor<R>> {
        let s = tokens.shape();
        if s.len() != 4 || s[3] != self.dim {
            return Err(Error::Shape(format!("FiLM expects (T, H', W', {}), got {s:?}", self.dim)));
        }
        if timestamps.len() != s[0] {
            return Err(Error::Shape(format!(
                "FiLM got {} timestamps for {} frames",
                timestamps.len(),
                s[0]
            )));
        }
        let (gamma, beta) = self.modulation(p, timestamps);
        let (t, c) = (s[0], s[3]);
        let x = tokens.reshape(&[t, s[1] * s[2], c]);
        let gamma = gamma.reshape(&[t, 1, c]).broadcast_to(x.shape());
        let beta = beta.reshape(&[t, 1, c]).broadcast_to(x.shape());
        Ok(x.mul(&gamma).add(&beta).reshape(s))
    }
}
