//! Layers of the encoder, processor and decoder.
//!
//! Layers hold [`ParamId`]s into a [`ParamStore`] and evaluate against a
//! [`Bound`] snapshot, which keeps parameter storage separate from the
//! per-pass autodiff graph.

mod attention;
mod layers;
mod params;

pub use attention::{
    attention_ops, reset_attention_ops, sweep_score_ops, Axis, AxialBlock, MultiHeadAttention,
};
pub use layers::{Film, LayerNorm, Linear, Mlp, PatchEmbed, PatchExpand, SpatialPE};
pub use params::{Bound, Init, Param, ParamId, ParamStore};

/// Weight std for freshly initialised layers.
pub const INIT_STD: f64 = 0.02;
