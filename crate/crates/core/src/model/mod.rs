//! The TANTE network: convolutional tokenizer, spatial embedding and FiLM
//! time modulation, grouped axial transformer processor, and per-order
//! decoders for the radius and the temporal derivatives.

mod checkpoint;
mod jet;

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry};
pub use jet::{regularization, regularization_loss, JetGraph, TaylorJet};

use crate::data::FieldSequence;
use crate::error::{Error, Result};
use crate::nn::{AxialBlock, Axis, Bound, Film, Init, LayerNorm, Mlp, ParamStore, PatchEmbed, PatchExpand, SpatialPE, INIT_STD};
use crate::tensor::{Real, Tensor};

/// Hidden 3×3 stages in the tokenizer before the patch stage.
pub const PATCH_HIDDEN_STAGES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Maximum Taylor order; 0 selects the fixed-step variant.
    pub order: usize,
    pub patch: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub eps: f64,
    pub m: f64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
}

impl ModelConfig {
    /// Small configuration (embed 256, MLP 256, 8 heads, 9 blocks, patch 8).
    pub fn small(order: usize, frames: usize, height: usize, width: usize, channels: usize) -> Self {
        ModelConfig {
            order,
            patch: 8,
            embed_dim: 256,
            mlp_dim: 256,
            heads: 8,
            blocks: 9,
            r_min: 1.0,
            r_max: 2.0 * frames as f64,
            eps: 0.5,
            m: 2.0,
            channels,
            height,
            width,
            frames,
        }
    }

    /// Derivative orders actually decoded (the fixed-step variant decodes one).
    pub fn decoded_orders(&self) -> usize {
        self.order.max(1)
    }

    pub fn is_adaptive(&self) -> bool {
        self.order >= 1
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.blocks < self.decoded_orders() {
            return fail(format!("{} blocks cannot form {} groups", self.blocks, self.decoded_orders()));
        }
        if self.patch == 0 || self.height % self.patch != 0 || self.width % self.patch != 0 {
            return fail(format!("grid {}x{} not divisible by patch {}", self.height, self.width, self.patch));
        }
        if self.embed_dim < 2 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!("{} heads must divide embed dim {}", self.heads, self.embed_dim));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max) {
            return fail(format!("radius bounds [{}, {}] invalid", self.r_min, self.r_max));
        }
        if !(self.eps > 0.0) || !(self.m >= 1.0) {
            return fail(format!("regulariser needs eps > 0 and m >= 1, got {} and {}", self.eps, self.m));
        }
        if self.frames == 0 || self.channels == 0 || self.mlp_dim == 0 {
            return fail("frames, channels and mlp_dim must be positive".into());
        }
        Ok(())
    }
}

/// Splits `total` blocks into `groups` contiguous ranges whose sizes differ
/// by at most one, earlier groups taking the extra blocks.
pub fn partition_blocks(total: usize, groups: usize) -> Vec<Range<usize>> {
    assert!(groups > 0 && groups <= total, "cannot split {total} blocks into {groups} groups");
    let (base, extra) = (total / groups, total % groups);
    let mut start = 0;
    (0..groups)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Tante<R: Real> {
    pub config: ModelConfig,
    pub params: ParamStore<R>,
    patch: PatchEmbed,
    pos: SpatialPE,
    film: Film,
    blocks: Vec<AxialBlock>,
    groups: Vec<Range<usize>>,
    group_norms: Vec<LayerNorm>,
    radius_heads: Vec<Mlp>,
    deriv_heads: Vec<PatchExpand>,
}

impl<R: Real> Tante<R> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.embed_dim;
        let patch = PatchEmbed::new(&mut store, "encoder.patch", config.channels, c, config.patch, PATCH_HIDDEN_STAGES, &mut rng);
        let pos = SpatialPE::new(&mut store, "encoder.pos", config.grid(), c, &mut rng);
        let film = Film::new(&mut store, "encoder.film", c, &mut rng);
        let blocks = (0..config.blocks)
            .map(|i| {
                AxialBlock::new(&mut store, &format!("processor.block{i}"), Axis::cyclic(i), c, config.mlp_dim, config.heads, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let orders = config.decoded_orders();
        let groups = partition_blocks(config.blocks, orders);
        let group_norms = (0..orders)
            .map(|k| LayerNorm::new(&mut store, &format!("processor.norm{k}"), c, &mut rng))
            .collect();
        let radius_heads = if config.is_adaptive() {
            (0..orders)
                .map(|k| Mlp::new(&mut store, &format!("decoder.radius{k}"), (c, c, 1), Init::TruncNormal(INIT_STD), &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let deriv_heads = (0..orders)
            .map(|k| PatchExpand::new(&mut store, &format!("decoder.deriv{k}"), c, config.channels, config.patch, &mut rng))
            .collect();
        Ok(Tante { config, params: store, patch, pos, film, blocks, groups, group_norms, radius_heads, deriv_heads })
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn block_axes(&self) -> Vec<Axis> {
        self.blocks.iter().map(|b| b.axis).collect()
    }

    /// Same architecture and values in another element type.
    pub fn cast<S: Real>(&self) -> Tante<S> {
        Tante {
            config: self.config.clone(),
            params: self.params.cast(),
            patch: self.patch.clone(),
            pos: self.pos.clone(),
            film: self.film.clone(),
            blocks: self.blocks.clone(),
            groups: self.groups.clone(),
            group_norms: self.group_norms.clone(),
            radius_heads: self.radius_heads.clone(),
            deriv_heads: self.deriv_heads.clone(),
        }
    }

    /// Sets every derivative head parameter to zero, turning the model into
    /// a persistence predictor.
    pub fn zero_derivative_heads(&mut self) {
        for head in &self.deriv_heads {
            for id in head.param_ids() {
                self.params.get_mut(id).data.iter_mut().for_each(|v| *v = R::zero());
            }
        }
    }

    fn check_window(&self, window: &FieldSequence) -> Result<()> {
        let c = &self.config;
        let got = (window.len(), window.height, window.width, window.channels);
        let want = (c.frames, c.height, c.width, c.channels);
        if got != want {
            return Err(Error::Shape(format!("window (T, H, W, D) = {got:?}, model expects {want:?}")));
        }
        Ok(())
    }

    /// Processor latents `z_k`, each `(1, H', W', C)`.
    pub fn latents(&self, p: &Bound<R>, window: &FieldSequence) -> Result<Vec<Tensor<R>>> {
        self.check_window(window)?;
        let c = &self.config;
        let frames = Tensor::from_f64(&window.frames, &[c.frames, c.height, c.width, c.channels]);
        let tokens = self.patch.forward(p, &frames)?;
        let tokens = self.pos.forward(p, &tokens);
        let mut tokens = self.film.forward(p, &tokens, &window.timestamps)?;
        let newest = window.newest_index();
        let mut latents = Vec::with_capacity(self.groups.len());
        for (range, norm) in self.groups.iter().zip(&self.group_norms) {
            for block in &self.blocks[range.clone()] {
                tokens = block.forward(p, &tokens)?;
            }
            latents.push(norm.forward(p, &tokens.slice(0, newest, 1)));
        }
        Ok(latents)
    }

    /// Mean of the bounded token-wise radius outputs over all orders.
    pub fn decode_radius(&self, p: &Bound<R>, latents: &[Tensor<R>]) -> Option<Tensor<R>> {
        if self.radius_heads.is_empty() {
            return None;
        }
        let (lo, hi) = (self.config.r_min, self.config.r_max);
        let mapped: Vec<Tensor<R>> = self
            .radius_heads
            .iter()
            .zip(latents)
            .map(|(mlp, z)| {
                let raw = mlp.forward(p, z);
                let n = raw.numel();
                squash_radius(&raw.reshape(&[n]), lo, hi)
            })
            .collect();
        let r = Tensor::concat(&mapped, 0).mean();
        Some(r.clamp(R::from_f64_lossy(lo), R::from_f64_lossy(hi)))
    }

    pub fn decode_derivatives(&self, p: &Bound<R>, latents: &[Tensor<R>]) -> Vec<Tensor<R>> {
        let c = &self.config;
        self.deriv_heads
            .iter()
            .zip(latents)
            .map(|(head, z)| head.forward(p, z).reshape(&[c.height, c.width, c.channels]))
            .collect()
    }

    /// Full forward pass recorded on the graph of `p`.
    pub fn forward(&self, p: &Bound<R>, window: &FieldSequence) -> Result<JetGraph<R>> {
        let latents = self.latents(p, window)?;
        let c = &self.config;
        Ok(JetGraph {
            base: Tensor::from_f64(window.newest(), &[c.height, c.width, c.channels]),
            derivs: self.decode_derivatives(p, &latents),
            radius: self.decode_radius(p, &latents),
        })
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, window: &FieldSequence) -> Result<TaylorJet> {
        let jet = self.forward(&self.params.bind(false), window)?.to_jet();
        // the base is copied from the input, not round-tripped through R
        Ok(TaylorJet { base: window.newest().to_vec(), ..jet })
    }
}

/// `r_min + (r_max − r_min)·sigmoid(raw)`.
pub fn squash_radius<R: Real>(raw: &Tensor<R>, r_min: f64, r_max: f64) -> Tensor<R> {
    raw.sigmoid()
        .scale(R::from_f64_lossy(r_max - r_min))
        .add_scalar(R::from_f64_lossy(r_min))
}
