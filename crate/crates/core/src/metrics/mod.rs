//! Error metrics over rollouts, spectral entropy, and the rank statistics
//! behind the radius analysis.

mod stats;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use stats::{mann_whitney_u, quartiles, radius_report, significance_stars, GroupSummary, MannWhitney, PairTest, RadiusReport};

use crate::error::{Error, Result};

fn check_shapes(pred: &[f64], truth: &[f64], channels: usize) -> Result<()> {
    if pred.len() != truth.len() || channels == 0 || pred.len() % channels != 0 || pred.is_empty() {
        return Err(Error::Shape(format!(
            "prediction has {} values, truth {}, channels {channels}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Mean over channels of the mean squared difference; data is channel-last.
pub fn mse(pred: &[f64], truth: &[f64], channels: usize) -> Result<f64> {
    check_shapes(pred, truth, channels)?;
    let mut sums = vec![0.0; channels];
    for (p, t) in pred.chunks_exact(channels).zip(truth.chunks_exact(channels)) {
        for c in 0..channels {
            sums[c] += (p[c] - t[c]).powi(2);
        }
    }
    let per = (pred.len() / channels) as f64;
    Ok(sums.iter().map(|s| s / per).sum::<f64>() / channels as f64)
}

/// Relative L² error per channel; channels whose truth is identically zero are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelL2 {
    pub value: f64,
    pub per_channel: Vec<Option<f64>>,
}

pub fn rel_l2(pred: &[f64], truth: &[f64], channels: usize) -> Result<RelL2> {
    check_shapes(pred, truth, channels)?;
    let mut diff = vec![0.0; channels];
    let mut norm = vec![0.0; channels];
    for (p, t) in pred.chunks_exact(channels).zip(truth.chunks_exact(channels)) {
        for c in 0..channels {
            diff[c] += (p[c] - t[c]).powi(2);
            norm[c] += t[c] * t[c];
        }
    }
    let per_channel: Vec<Option<f64>> =
        diff.iter().zip(&norm).map(|(d, n)| (*n > 0.0).then(|| (d / n).sqrt())).collect();
    let valid: Vec<f64> = per_channel.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Invalid("every truth channel is identically zero".into()));
    }
    Ok(RelL2 { value: valid.iter().sum::<f64>() / valid.len() as f64, per_channel })
}

/// Relative L² error of each rollout step on its own.
pub fn error_accumulation(pred: &[Vec<f64>], truth: &[Vec<f64>], channels: usize) -> Result<Vec<f64>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predicted steps for {} targets", pred.len(), truth.len())));
    }
    pred.iter().zip(truth).map(|(p, t)| rel_l2(p, t, channels).map(|r| r.value)).collect()
}

/// Normalized Shannon entropy of the temporal power spectrum, averaged over
/// every spatial location and channel. `u` is `(T, N)` with `N = H·W·D`.
pub fn spectral_entropy(u: &[f64], frames: usize) -> Result<f64> {
    if frames < 2 || u.is_empty() || u.len() % frames != 0 {
        return Err(Error::Shape(format!("spectral entropy needs >= 2 frames; got {} values over {frames}", u.len())));
    }
    let n = u.len() / frames;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frames);
    let log_t = (frames as f64).log2();
    let mut buf = vec![Complex::new(0.0, 0.0); frames];
    let mut total = 0.0;
    for loc in 0..n {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(u[t * n + loc], 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
        let sum: f64 = power.iter().sum();
        if sum > 0.0 {
            let h: f64 = power.iter().filter(|p| **p > 0.0).map(|p| p / sum).map(|q| -q * q.log2()).sum();
            total += (h / log_t).clamp(0.0, 1.0);
        }
    }
    Ok(total / n as f64)
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub steps: usize,
    pub trajectories: usize,
    pub rel_l2: f64,
    pub rel_l2_std: f64,
    pub mse: f64,
    pub mse_std: f64,
    pub per_variable_rel_l2: Vec<f64>,
    pub per_variable_mse: Vec<f64>,
    pub per_step_rel_l2: Vec<f64>,
    pub per_step_rel_l2_std: Vec<f64>,
    pub mean_calls: f64,
}

/// Collects per-trajectory rollout errors into a [`MetricReport`].
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    channels: usize,
    steps: usize,
    rel: Vec<f64>,
    mse: Vec<f64>,
    rel_per_var: Vec<Vec<f64>>,
    mse_per_var: Vec<Vec<f64>>,
    per_step: Vec<Vec<f64>>,
    calls: Vec<f64>,
}

impl MetricAccumulator {
    pub fn new(channels: usize, steps: usize) -> Self {
        MetricAccumulator {
            channels,
            steps,
            rel: Vec::new(),
            mse: Vec::new(),
            rel_per_var: vec![Vec::new(); channels],
            mse_per_var: vec![Vec::new(); channels],
            per_step: vec![Vec::new(); steps],
            calls: Vec::new(),
        }
    }

    pub fn add(&mut self, pred: &[Vec<f64>], truth: &[Vec<f64>], calls: usize) -> Result<()> {
        if pred.len() != self.steps {
            return Err(Error::Shape(format!("expected {} steps, got {}", self.steps, pred.len())));
        }
        let p: Vec<f64> = pred.concat();
        let t: Vec<f64> = truth.concat();
        let d = self.channels;
        let rel = rel_l2(&p, &t, d)?;
        for (c, v) in rel.per_channel.iter().enumerate() {
            if let Some(v) = v {
                self.rel_per_var[c].push(*v);
            }
            let (pc, tc): (Vec<f64>, Vec<f64>) = p.iter().skip(c).step_by(d).zip(t.iter().skip(c).step_by(d)).unzip();
            self.mse_per_var[c].push(mse(&pc, &tc, 1)?);
        }
        self.rel.push(rel.value);
        self.mse.push(mse(&p, &t, d)?);
        for (acc, v) in self.per_step.iter_mut().zip(error_accumulation(pred, truth, d)?) {
            acc.push(v);
        }
        self.calls.push(calls as f64);
        Ok(())
    }

    pub fn finish(&self) -> MetricReport {
        let (rel_l2, rel_l2_std) = mean_std(&self.rel);
        let (mse, mse_std) = mean_std(&self.mse);
        let (per_step_rel_l2, per_step_rel_l2_std) = self.per_step.iter().map(|s| mean_std(s)).unzip();
        MetricReport {
            steps: self.steps,
            trajectories: self.rel.len(),
            rel_l2,
            rel_l2_std,
            mse,
            mse_std,
            per_variable_rel_l2: self.rel_per_var.iter().map(|v| mean_std(v).0).collect(),
            per_variable_mse: self.mse_per_var.iter().map(|v| mean_std(v).0).collect(),
            per_step_rel_l2,
            per_step_rel_l2_std,
            mean_calls: mean_std(&self.calls).0,
        }
    }
}
