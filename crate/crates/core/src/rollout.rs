//! Autoregressive rollout. The adaptive scheduler invokes the network once,
//! emits every pending target inside the predicted radius from that single
//! jet, and slides the input window forward in (possibly uneven) time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::FieldSequence;
use crate::error::{Error, Result};
use crate::model::{Tante, TaylorJet};
use crate::tensor::Real;

/// Anything that maps an input window to a Taylor jet.
pub trait Forecaster {
    /// Input window length `T`.
    fn window_len(&self) -> usize;
    fn forecast(&self, window: &FieldSequence) -> Result<TaylorJet>;
}

impl<R: Real> Forecaster for Tante<R> {
    fn window_len(&self) -> usize {
        self.config.frames
    }

    fn forecast(&self, window: &FieldSequence) -> Result<TaylorJet> {
        self.predict(window)
    }
}

/// A frame placed at an absolute time; 0 is the newest frame of the initial window.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedFrame {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    /// Absolute time of the jet's base state.
    pub tau: f64,
    pub radius: Option<f64>,
    /// Offsets from `tau` at which the jet was evaluated.
    pub evaluated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    /// Frames at target offsets `1..=T′`.
    pub emitted: Vec<Vec<f64>>,
    pub invocations: Vec<Invocation>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl RolloutTrace {
    pub fn calls(&self) -> usize {
        self.invocations.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("invocation,tau,radius,evaluated_offsets\n");
        for (i, inv) in self.invocations.iter().enumerate() {
            let radius = inv.radius.map(|r| r.to_string()).unwrap_or_default();
            let offsets: Vec<String> = inv.evaluated.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{i},{},{radius},{}", inv.tau, offsets.join(";"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Emitted frames as little-endian `f32`, `(T′, H, W, D)`.
    pub fn write_frames(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.emitted.iter().map(Vec::len).sum::<usize>() * 4);
        for v in self.emitted.iter().flatten() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(path, bytes)?;
        Ok(())
    }
}

/// The last `t` frames by time, with timestamps as distances to the newest.
pub fn window_update(
    history: &[TimedFrame],
    t: usize,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<FieldSequence> {
    if history.len() < t {
        return Err(Error::Invalid(format!("history holds {} frames, window needs {t}", history.len())));
    }
    let mut order: Vec<&TimedFrame> = history.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));
    let recent = &order[order.len() - t..];
    let newest = recent[t - 1].time;
    let frames = recent.iter().flat_map(|f| f.values.iter().copied()).collect();
    let timestamps = recent.iter().map(|f| newest - f.time).collect();
    FieldSequence::new(frames, timestamps, height, width, channels)
}

fn initial_history(window: &FieldSequence) -> Vec<TimedFrame> {
    let newest = window.timestamps[window.newest_index()];
    (0..window.len())
        .map(|i| TimedFrame { time: newest - window.timestamps[i], values: window.frame(i).to_vec() })
        .collect()
}

/// Greedy adaptive rollout over the unit-spaced targets `1..=steps`.
pub fn adaptive_rollout<F: Forecaster + ?Sized>(model: &F, window: &FieldSequence, steps: usize) -> Result<RolloutTrace> {
    let t_len = model.window_len();
    let (h, w, d) = (window.height, window.width, window.channels);
    let mut history = initial_history(window);
    let mut current = window.clone();
    let mut emitted = Vec::with_capacity(steps);
    let mut invocations = Vec::new();
    let mut tau = 0.0;
    while emitted.len() < steps {
        let jet = model.forecast(&current)?;
        let r = jet.radius.ok_or(Error::NotAdaptive)?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("radius {r} cannot advance the rollout")));
        }
        let mut evaluated = Vec::new();
        let mut next = emitted.len() + 1;
        while next <= steps && next as f64 - tau <= r {
            let offset = next as f64 - tau;
            let values = jet.evaluate(offset);
            history.push(TimedFrame { time: next as f64, values: values.clone() });
            emitted.push(values);
            evaluated.push(offset);
            next += 1;
        }
        let new_tau = if evaluated.is_empty() {
            // the next target lies beyond the radius: step to its edge
            history.push(TimedFrame { time: tau + r, values: jet.evaluate(r) });
            evaluated.push(r);
            tau + r
        } else {
            emitted.len() as f64
        };
        invocations.push(Invocation { tau, radius: Some(r), evaluated });
        tau = new_tau;
        if emitted.len() < steps {
            current = window_update(&history, t_len, h, w, d)?;
        }
    }
    Ok(RolloutTrace { emitted, invocations, height: h, width: w, channels: d })
}

/// One invocation per target, each emitting the jet at offset 1.
pub fn fixed_rollout<F: Forecaster + ?Sized>(model: &F, window: &FieldSequence, steps: usize) -> Result<RolloutTrace> {
    let t_len = model.window_len();
    let (h, w, d) = (window.height, window.width, window.channels);
    let mut history = initial_history(window);
    let mut current = window.clone();
    let mut emitted = Vec::with_capacity(steps);
    let mut invocations = Vec::with_capacity(steps);
    for step in 0..steps {
        let jet = model.forecast(&current)?;
        let values = jet.evaluate(1.0);
        history.push(TimedFrame { time: (step + 1) as f64, values: values.clone() });
        emitted.push(values);
        invocations.push(Invocation { tau: step as f64, radius: jet.radius, evaluated: vec![1.0] });
        if step + 1 < steps {
            current = window_update(&history, t_len, h, w, d)?;
        }
    }
    Ok(RolloutTrace { emitted, invocations, height: h, width: w, channels: d })
}
