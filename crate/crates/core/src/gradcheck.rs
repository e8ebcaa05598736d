//! Finite-difference verification of every layer's parameter gradients and
//! of the full model under the training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::FieldSequence;
use crate::error::Result;
use crate::model::{ModelConfig, Tante};
use crate::nn::{AxialBlock, Axis, Bound, Film, Init, LayerNorm, Linear, Mlp, MultiHeadAttention, ParamStore, PatchEmbed, PatchExpand, SpatialPE};
use crate::tensor::{relative_error, Tensor};
use crate::training::{training_loss, LossSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub h: f64,
    /// Entries checked per parameter tensor; 0 checks all of them.
    pub max_entries: usize,
    /// Noise added to every parameter before checking, so that
    /// zero-initialised projections carry gradient; scaled by `1/√fan_in`.
    pub perturb: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { h: 1e-6, max_entries: 0, perturb: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub layer: String,
    pub param: String,
    pub checked: usize,
    /// Largest entry-wise `|a − n| / max(|a|, 1e-8)`.
    pub max_rel_error: f64,
    /// `‖a − n‖ / max(‖a‖, 1e-8)` over the checked entries.
    pub norm_rel_error: f64,
}

impl GradcheckRow {
    /// Entry-wise errors are dominated by rounding noise (about `1e-10`
    /// absolute at `h = 1e-6`) for entries whose gradient is itself that
    /// small, so the tensor-level error is the pass criterion.
    pub fn passes(&self, tol: f64) -> bool {
        self.norm_rel_error < tol
    }
}

/// Compares backprop against central differences for every parameter in
/// `store`, one row per parameter tensor.
pub fn check_params(
    layer: &str,
    store: &mut ParamStore<f64>,
    loss: impl Fn(&Bound<f64>) -> Result<Tensor<f64>>,
    opts: &GradcheckOptions,
) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED);
    if opts.perturb > 0.0 {
        for p in store.iter_mut() {
            let fan_in = if p.shape.len() >= 2 { p.data.len() / p.shape[p.shape.len() - 1] } else { 1 };
            let noise = Normal::new(0.0, opts.perturb / (fan_in as f64).sqrt()).expect("finite std");
            p.data.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
    }
    let bound = store.bind(true);
    loss(&bound)?.backward()?;
    let grads = bound.grads();
    let mut rows = Vec::with_capacity(grads.len());
    for (idx, grad) in grads.iter().enumerate() {
        let n = grad.len();
        let entries: Vec<usize> = if opts.max_entries == 0 || n <= opts.max_entries {
            (0..n).collect()
        } else {
            (0..opts.max_entries).map(|_| rng.random_range(0..n)).collect()
        };
        let mut worst: f64 = 0.0;
        let (mut diff_sq, mut norm_sq) = (0.0, 0.0);
        for &e in &entries {
            let original = store.iter().nth(idx).expect("index in range").data[e];
            let mut eval = |v: f64| -> Result<f64> {
                store.iter_mut().nth(idx).expect("index in range").data[e] = v;
                Ok(loss(&store.bind(false))?.item())
            };
            let plus = eval(original + opts.h)?;
            let minus = eval(original - opts.h)?;
            store.iter_mut().nth(idx).expect("index in range").data[e] = original;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let err = relative_error(grad[e], numeric);
            diff_sq += (grad[e] - numeric).powi(2);
            norm_sq += grad[e] * grad[e];
            worst = worst.max(err);
        }
        let name = store.iter().nth(idx).expect("index in range").name.clone();
        rows.push(GradcheckRow {
            layer: layer.into(),
            param: name,
            checked: entries.len(),
            max_rel_error: worst,
            norm_rel_error: diff_sq.sqrt() / norm_sq.sqrt().max(1e-8),
        });
    }
    Ok(rows)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape)
}

/// `Σ y ⊙ w` with a fixed random `w`, a generic scalar read-out.
fn project(y: &Tensor<f64>, rng_seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = random_tensor(y.shape(), &mut rng);
    y.mul(&w).sum()
}

/// Every layer type on small random inputs.
pub fn gradcheck_layers(opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::new();
    let tokens = random_tensor(&[3, 2, 2, 8], &mut rng);

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "linear", 8, 5, &mut rng);
    rows.extend(check_params("Linear", &mut store, |p| Ok(project(&lin.forward(p, &tokens), 1)), opts)?);

    let mut store = ParamStore::new();
    let norm = LayerNorm::new(&mut store, "layer_norm", 8, &mut rng);
    rows.extend(check_params("LayerNorm", &mut store, |p| Ok(project(&norm.forward(p, &tokens), 2)), opts)?);

    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", (8, 12, 8), Init::TruncNormal(0.02), &mut rng);
    rows.extend(check_params("Mlp", &mut store, |p| Ok(project(&mlp.forward(p, &tokens), 3)), opts)?);

    let mut store = ParamStore::new();
    let frames = random_tensor(&[2, 4, 4, 2], &mut rng);
    let embed = PatchEmbed::new(&mut store, "patch_embed", 2, 8, 2, 2, &mut rng);
    rows.extend(check_params("PatchEmbed", &mut store, |p| Ok(project(&embed.forward(p, &frames)?, 4)), opts)?);

    let mut store = ParamStore::new();
    let latent = random_tensor(&[1, 2, 2, 8], &mut rng);
    let expand = PatchExpand::new(&mut store, "patch_expand", 8, 2, 2, &mut rng);
    rows.extend(check_params("PatchExpand", &mut store, |p| Ok(project(&expand.forward(p, &latent), 5)), opts)?);

    let mut store = ParamStore::new();
    let pe = SpatialPE::new(&mut store, "spatial_pe", (2, 2), 8, &mut rng);
    rows.extend(check_params("SpatialPE", &mut store, |p| Ok(project(&pe.forward(p, &tokens), 6)), opts)?);

    let mut store = ParamStore::new();
    let film = Film::new(&mut store, "film", 8, &mut rng);
    let stamps = [2.0, 0.5, 0.0];
    rows.extend(check_params("Film", &mut store, |p| Ok(project(&film.forward(p, &tokens, &stamps)?, 7)), opts)?);

    for axis in [Axis::Time, Axis::Height, Axis::Width, Axis::Full] {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "attention", 8, 2, Init::TruncNormal(0.02), &mut rng)?;
        let label = format!("MultiHeadAttention[{axis}]");
        rows.extend(check_params(&label, &mut store, |p| Ok(project(&mha.forward(p, &tokens, axis)?, 8)), opts)?);
    }
    for axis in [Axis::Time, Axis::Height, Axis::Width] {
        let mut store = ParamStore::new();
        let block = AxialBlock::new(&mut store, "axial_block", axis, 8, 16, 2, &mut rng)?;
        let label = format!("AxialBlock[{axis}]");
        rows.extend(check_params(&label, &mut store, |p| Ok(project(&block.forward(p, &tokens)?, 9)), opts)?);
    }
    Ok(rows)
}

/// The reference tiny model: 4 frames of 8×8×1, embed 32, 3 blocks, order 2.
pub fn tiny_gradcheck_config() -> ModelConfig {
    ModelConfig {
        order: 2,
        patch: 4,
        embed_dim: 32,
        mlp_dim: 32,
        heads: 4,
        blocks: 3,
        r_min: 1.0,
        r_max: 8.0,
        eps: 0.5,
        m: 2.0,
        channels: 1,
        height: 8,
        width: 8,
        frames: 4,
    }
}

/// The full model under the gated training loss with four random targets.
pub fn gradcheck_model(config: &ModelConfig, opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    let mut model = Tante::<f64>::new(config.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let frame_len = config.height * config.width * config.channels;
    let frames = (0..config.frames * frame_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let window = FieldSequence::uniform(frames, config.height, config.width, config.channels)?;
    let targets: Vec<Vec<f64>> = (0..4).map(|_| (0..frame_len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    let spec = LossSpec { gate_temperature: 0.25, reg_weight: 1.0, eps: config.eps, m: config.m };
    let arch = model.clone();
    check_params(
        "Tante",
        &mut model.params,
        |p| Ok(training_loss(&arch.forward(p, &window)?, &refs, &spec)?.total),
        opts,
    )
}
