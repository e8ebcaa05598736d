//! WebAssembly bindings for the browser demo. Every export is a plain Rust
//! function, so the same code is exercised by native tests.

use std::cell::Cell;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tante::data::{generate_advection2d, generate_heat2d, AdvectionParams, FieldSequence, HeatParams, SpectralField};
use tante::metrics::{rel_l2, spectral_entropy};
use tante::model::TaylorJet;
use tante::rollout::{adaptive_rollout, Forecaster};
use wasm_bindgen::prelude::*;

/// Largest wavenumber per axis in demo fields.
pub const DEMO_MODES: usize = 4;

fn demo_field(seed: u64) -> SpectralField {
    SpectralField::random(DEMO_MODES, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn decay_rate(kappa: f64, kx: i32, ky: i32) -> f64 {
    kappa * TAU * TAU * f64::from(kx * kx + ky * ky)
}

/// A heat field at time `t` next to the order-`order` Taylor expansion about `t = 0`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct HeatPreview {
    size: usize,
    truth: Vec<f64>,
    taylor: Vec<f64>,
    rel_error: f64,
}

#[wasm_bindgen]
impl HeatPreview {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size × size` exact field.
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    /// Row-major `size × size` Taylor evaluation.
    #[wasm_bindgen(getter)]
    pub fn taylor(&self) -> Vec<f64> {
        self.taylor.clone()
    }

    #[wasm_bindgen(getter, js_name = relError)]
    pub fn rel_error(&self) -> f64 {
        self.rel_error
    }
}

#[wasm_bindgen(js_name = heatPreview)]
pub fn heat_preview(size: usize, kappa: f64, seed: u64, t: f64, order: usize) -> Result<HeatPreview, String> {
    if size == 0 || !(kappa >= 0.0) || !t.is_finite() {
        return Err(format!("need size > 0, kappa >= 0 and finite t (got {size}, {kappa}, {t})"));
    }
    let field = demo_field(seed);
    let truth = field.sample(size, size, (0.0, 0.0), |m| (-decay_rate(kappa, m.kx, m.ky) * t).exp());
    let jet = TaylorJet {
        base: field.sample(size, size, (0.0, 0.0), |_| 1.0),
        derivs: (1..=order)
            .map(|k| field.sample(size, size, (0.0, 0.0), |m| (-decay_rate(kappa, m.kx, m.ky)).powi(k as i32)))
            .collect(),
        radius: None,
    };
    let taylor = jet.evaluate(t);
    let rel_error = rel_l2(&taylor, &truth, 1).map_err(|e| e.to_string())?.value;
    Ok(HeatPreview { size, truth, taylor, rel_error })
}

/// Replays a radius profile through the adaptive scheduler: invocation `i`
/// reports `radii[i]`, the last entry repeating.
struct Profile<'a> {
    radii: &'a [f64],
    calls: Cell<usize>,
}

impl Forecaster for Profile<'_> {
    fn window_len(&self) -> usize {
        1
    }

    fn forecast(&self, window: &FieldSequence) -> tante::Result<TaylorJet> {
        let i = self.calls.get();
        self.calls.set(i + 1);
        let r = self.radii[i.min(self.radii.len() - 1)];
        Ok(TaylorJet { base: window.newest().to_vec(), derivs: vec![vec![1.0]], radius: Some(r) })
    }
}

/// JSON `{"calls", "fixed_calls", "invocations": [{"tau", "radius", "offsets"}]}`.
#[wasm_bindgen(js_name = rolloutSchedule)]
pub fn rollout_schedule(radii: Vec<f64>, steps: usize) -> Result<String, String> {
    if radii.is_empty() {
        return Err("radius profile is empty".into());
    }
    let model = Profile { radii: &radii, calls: Cell::new(0) };
    let window = FieldSequence::uniform(vec![0.0], 1, 1, 1).map_err(|e| e.to_string())?;
    let trace = adaptive_rollout(&model, &window, steps).map_err(|e| e.to_string())?;
    let invocations: Vec<_> = trace
        .invocations
        .iter()
        .map(|inv| json!({ "tau": inv.tau, "radius": inv.radius, "offsets": inv.evaluated }))
        .collect();
    Ok(json!({ "calls": trace.calls(), "fixed_calls": steps, "invocations": invocations }).to_string())
}

/// Spectral entropy of a generated `size × size` trajectory. `generator` is
/// `heat` (parameter: diffusivity) or `advection` (parameter: x-velocity).
#[wasm_bindgen(js_name = spectralEntropy)]
pub fn spectral_entropy_demo(generator: &str, parameter: f64, seed: u64, size: usize, frames: usize, dt: f64) -> Result<f64, String> {
    let traj = match generator {
        "heat" => {
            let p = HeatParams { height: size, width: size, channels: 1, kappa: parameter, modes: DEMO_MODES, frames, dt, seed };
            generate_heat2d(&p, 1).map_err(|e| e.to_string())?.remove(0)
        }
        "advection" => {
            let p = AdvectionParams {
                height: size,
                width: size,
                channels: 1,
                velocity: (parameter, 0.0),
                modes: DEMO_MODES,
                frames,
                dt,
                seed,
            };
            generate_advection2d(&p, 1).remove(0)
        }
        other => return Err(format!("unknown generator `{other}` (heat or advection)")),
    };
    spectral_entropy(&traj.data, frames).map_err(|e| e.to_string())
}
