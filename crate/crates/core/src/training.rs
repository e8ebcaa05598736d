//! Loss assembly, AdamW, the learning-rate schedule and the training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::parse_value;
use crate::data::Window;
use crate::error::{Error, Result};
use crate::model::{regularization, save_checkpoint, JetGraph, Tante};
use crate::nn::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub decay_rate: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Targets per training sample.
    pub horizon: usize,
    /// Soft-gate temperature; 0 gives a hard mask.
    pub gate_temperature: f64,
    pub reg_weight: f64,
    pub seed: u64,
    /// 0 keeps only the initial and final checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100_000,
            warmup_steps: 5_000,
            peak_lr: 5e-5,
            decay_rate: 0.9,
            decay_every: 5_000,
            weight_decay: 1e-5,
            batch_size: 4,
            horizon: 4,
            gate_temperature: 0.25,
            reg_weight: 1.0,
            seed: 0,
            checkpoint_every: 5_000,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 12] = [
        "iterations",
        "warmup_steps",
        "peak_lr",
        "decay_rate",
        "decay_every",
        "weight_decay",
        "batch_size",
        "horizon",
        "gate_temperature",
        "reg_weight",
        "seed",
        "checkpoint_every",
    ];

    /// Applies one `key = value` setting; `Ok(false)` if the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "iterations" => self.iterations = parse_value(key, value)?,
            "warmup_steps" => self.warmup_steps = parse_value(key, value)?,
            "peak_lr" => self.peak_lr = parse_value(key, value)?,
            "decay_rate" => self.decay_rate = parse_value(key, value)?,
            "decay_every" => self.decay_every = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "gate_temperature" => self.gate_temperature = parse_value(key, value)?,
            "reg_weight" => self.reg_weight = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.iterations.to_string(),
            self.warmup_steps.to_string(),
            self.peak_lr.to_string(),
            self.decay_rate.to_string(),
            self.decay_every.to_string(),
            self.weight_decay.to_string(),
            self.batch_size.to_string(),
            self.horizon.to_string(),
            self.gate_temperature.to_string(),
            self.reg_weight.to_string(),
            self.seed.to_string(),
            self.checkpoint_every.to_string(),
        ];
        Self::KEYS.into_iter().zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.batch_size == 0 || self.horizon == 0 {
            return fail("batch_size and horizon must be positive");
        }
        if self.decay_every == 0 || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return fail("decay_every must be positive and decay_rate in (0, 1]");
        }
        if !(self.peak_lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.reg_weight >= 0.0) {
            return fail("peak_lr, weight_decay and reg_weight must be >= 0");
        }
        if !(self.gate_temperature >= 0.0) {
            return fail("gate_temperature must be >= 0");
        }
        Ok(())
    }

    /// Linear warm-up from 0 to the peak, then a staircase decay that first
    /// applies `decay_every` steps after the knee.
    pub fn lr_schedule(&self, step: usize) -> f64 {
        if step <= self.warmup_steps {
            if self.warmup_steps == 0 {
                return self.peak_lr;
            }
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let decays = (step - self.warmup_steps) / self.decay_every;
        self.peak_lr * self.decay_rate.powi(decays as i32)
    }
}

/// Weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub gate_temperature: f64,
    pub reg_weight: f64,
    pub eps: f64,
    pub m: f64,
}

impl LossSpec {
    pub fn new(train: &TrainConfig, eps: f64, m: f64) -> Self {
        LossSpec { gate_temperature: train.gate_temperature, reg_weight: train.reg_weight, eps, m }
    }
}

pub struct LossParts<R: Real> {
    pub total: Tensor<R>,
    /// Gated mean of the per-target errors.
    pub mse: f64,
    pub reg: f64,
    pub radius: Option<f64>,
}

/// `Σ w_t·MSE_t / Σ w_t + λ·L_r(r)` with `w_t = sigmoid((r − t)/τ)`. A jet
/// without a radius is trained on the first target alone.
pub fn training_loss<R: Real>(jet: &JetGraph<R>, targets: &[&[f64]], spec: &LossSpec) -> Result<LossParts<R>> {
    if targets.is_empty() {
        return Err(Error::Invalid("training loss needs at least one target".into()));
    }
    let shape = jet.base.shape().to_vec();
    let mse_at = |t: usize| -> Result<Tensor<R>> {
        let target = targets[t - 1];
        if target.len() != jet.base.numel() {
            return Err(Error::Shape(format!("target {t} has {} values, prediction {}", target.len(), jet.base.numel())));
        }
        Ok(jet.evaluate(t as f64).sub(&Tensor::from_f64(target, &shape)).square().mean())
    };
    let Some(radius) = &jet.radius else {
        let mse = mse_at(1)?;
        let value = mse.item().as_f64();
        return Ok(LossParts { total: mse, mse: value, reg: 0.0, radius: None });
    };
    let mut weighted = Tensor::scalar(R::zero());
    let mut weight_sum = Tensor::scalar(R::zero());
    for t in 1..=targets.len() {
        let w = if spec.gate_temperature == 0.0 {
            let r = radius.item().as_f64();
            let hard = if r > t as f64 { 1.0 } else if r == t as f64 { 0.5 } else { 0.0 };
            Tensor::scalar(R::from_f64_lossy(hard))
        } else {
            radius.add_scalar(R::from_f64_lossy(-(t as f64))).scale(R::from_f64_lossy(1.0 / spec.gate_temperature)).sigmoid()
        };
        weighted = weighted.add(&w.mul(&mse_at(t)?));
        weight_sum = weight_sum.add(&w);
    }
    let mse = weighted.div(&weight_sum);
    let reg = regularization(radius, spec.eps, spec.m);
    let total = mse.add(&reg.scale(R::from_f64_lossy(spec.reg_weight)));
    Ok(LossParts {
        mse: mse.item().as_f64(),
        reg: reg.item().as_f64(),
        radius: Some(radius.item().as_f64()),
        total,
    })
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<R: Real>(params: &ParamStore<R>) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, steps: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update. Returns `false`, leaving everything untouched,
    /// if any gradient is non-finite.
    pub fn step<R: Real>(&mut self, params: &mut ParamStore<R>, grads: &[Vec<R>], lr: f64, weight_decay: f64) -> bool {
        if grads.iter().flatten().any(|g| !g.as_f64().is_finite()) {
            return false;
        }
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (((param, grad), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, g), m), v) in param.data.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.as_f64();
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
                let x = p.as_f64();
                *p = R::from_f64_lossy(x - lr * weight_decay * x - lr * update);
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub mse: f64,
    pub reg: f64,
    pub lr: f64,
    /// NaN for models without a radius head.
    pub mean_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<LossRecord>,
    /// Steps whose update was skipped for non-finite gradients.
    pub skipped: Vec<usize>,
}

pub fn loss_curve_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("step,loss,mse,reg,lr,mean_radius\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.step, r.loss, r.mse, r.reg, r.lr, r.mean_radius);
    }
    out
}

pub fn checkpoint_stem(run_dir: &Path, step: usize) -> std::path::PathBuf {
    run_dir.join("checkpoints").join(format!("ckpt_{step:07}"))
}

/// Mean loss of one batch, recorded on a fresh graph.
pub fn batch_loss<R: Real>(model: &Tante<R>, p: &crate::nn::Bound<R>, batch: &[&Window], spec: &LossSpec, horizon: usize) -> Result<(Tensor<R>, f64, f64, f64)> {
    let mut total = Tensor::scalar(R::zero());
    let (mut mse, mut reg, mut radius) = (0.0, 0.0, 0.0);
    for window in batch {
        if window.horizon() < horizon {
            return Err(Error::Invalid(format!("window has {} targets, training needs {horizon}", window.horizon())));
        }
        let targets: Vec<&[f64]> = (1..=horizon).map(|t| window.target(t)).collect();
        let jet = model.forward(p, &window.input)?;
        let parts = training_loss(&jet, &targets, spec)?;
        total = total.add(&parts.total);
        mse += parts.mse;
        reg += parts.reg;
        radius += parts.radius.unwrap_or(f64::NAN);
    }
    let n = batch.len() as f64;
    Ok((total.scale(R::from_f64_lossy(1.0 / n)), mse / n, reg / n, radius / n))
}

/// Trains in place. With a run directory, checkpoints go to
/// `checkpoints/ckpt_<step>` (the initial state included) and the loss curve
/// to `metrics/loss.csv`. A non-finite loss aborts the run; checkpoints
/// already written are kept.
pub fn train<R: Real>(
    model: &mut Tante<R>,
    windows: &[Window],
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Invalid("no training windows".into()));
    }
    let spec = LossSpec::new(cfg, model.config.eps, model.config.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(&model.params);
    let mut report = TrainReport { records: Vec::with_capacity(cfg.iterations), skipped: Vec::new() };
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir.join("metrics"))?;
        save_checkpoint(model, 0, &checkpoint_stem(dir, 0))?;
    }
    let write_curve = |records: &[LossRecord]| -> Result<()> {
        if let Some(dir) = run_dir {
            fs::write(dir.join("metrics").join("loss.csv"), loss_curve_csv(records))?;
        }
        Ok(())
    };
    for step in 1..=cfg.iterations {
        let batch: Vec<&Window> = (0..cfg.batch_size).map(|_| &windows[rng.random_range(0..windows.len())]).collect();
        let p = model.params.bind(true);
        let (loss, mse, reg, radius) = batch_loss(model, &p, &batch, &spec, cfg.horizon)?;
        let value = loss.item().as_f64();
        if !value.is_finite() {
            write_curve(&report.records)?;
            return Err(Error::NonFiniteLoss { step });
        }
        loss.backward()?;
        let lr = cfg.lr_schedule(step);
        if !opt.step(&mut model.params, &p.grads(), lr, cfg.weight_decay) {
            report.skipped.push(step);
        }
        let record = LossRecord { step, loss: value, mse, reg, lr, mean_radius: radius };
        progress(&record);
        report.records.push(record);
        if let Some(dir) = run_dir {
            if step == cfg.iterations || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
                save_checkpoint(model, step, &checkpoint_stem(dir, step))?;
                write_curve(&report.records)?;
            }
        }
    }
    write_curve(&report.records)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FieldSequence;
    use crate::model::{load_checkpoint, ModelConfig};
    use crate::nn::Init;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_schedule(0), 0.0);
        assert_eq!(cfg.lr_schedule(5000), 5e-5);
        assert!((cfg.lr_schedule(10_000) - 4.5e-5).abs() < 1e-18);
        assert_eq!(cfg.lr_schedule(9_999), 5e-5);
        assert!((cfg.lr_schedule(2_500) - 2.5e-5).abs() < 1e-18);
    }

    #[test]
    fn schedule_is_continuous_then_non_increasing() {
        let cfg = TrainConfig::default();
        assert!((cfg.lr_schedule(5001) - cfg.lr_schedule(5000)).abs() < 1e-12);
        let after: Vec<f64> = (5000..60_000).step_by(250).map(|s| cfg.lr_schedule(s)).collect();
        assert!(after.windows(2).all(|w| w[1] <= w[0]));
    }

    fn jet(radius: Option<f64>, derivs: &[f64]) -> JetGraph<f64> {
        JetGraph {
            base: Tensor::new(vec![1.0, -1.0], &[2]),
            derivs: derivs.iter().map(|&d| Tensor::new(vec![d, d], &[2])).collect(),
            radius: radius.map(Tensor::scalar),
        }
    }

    fn spec(tau: f64, lambda: f64) -> LossSpec {
        LossSpec { gate_temperature: tau, reg_weight: lambda, eps: 0.5, m: 2.0 }
    }

    #[test]
    fn perfect_jet_has_zero_loss() {
        let j = jet(Some(2.0), &[0.5]);
        let targets: Vec<Vec<f64>> = (1..=4).map(|t| j.to_jet().evaluate(t as f64)).collect();
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        assert_eq!(training_loss(&j, &refs, &spec(0.25, 1.0)).unwrap().total.item(), 0.0);
    }

    #[test]
    fn regulariser_only_loss() {
        let j = jet(Some(0.5), &[0.0]);
        let targets = vec![vec![1.0, -1.0]; 4];
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        assert_eq!(training_loss(&j, &refs, &spec(0.25, 1.0)).unwrap().total.item(), 1.0);
    }

    #[test]
    fn small_temperature_masks_far_targets() {
        // error 1 at t = 1, 2 and a huge error at t = 3, 4
        let j = jet(Some(2.5), &[0.0]);
        let targets = [vec![2.0, 0.0], vec![0.0, -2.0], vec![1e3, 1e3], vec![1e3, 1e3]];
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        let soft = training_loss(&j, &refs, &spec(1e-3, 0.0)).unwrap();
        assert!((soft.mse - 1.0).abs() < 1e-9, "{}", soft.mse);
        let hard = training_loss(&j, &refs, &spec(0.0, 0.0)).unwrap();
        assert_eq!(hard.mse, 1.0);
    }

    #[test]
    fn infinite_temperature_gives_plain_average() {
        let j = jet(Some(1.3), &[0.7, -0.2]);
        let targets = [vec![0.0, 1.0], vec![2.0, -3.0], vec![0.5, 0.5], vec![-1.0, 4.0]];
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        let plain: f64 = (1..=4)
            .map(|t| {
                let p = j.to_jet().evaluate(t as f64);
                p.iter().zip(&targets[t - 1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0
            })
            .sum::<f64>()
            / 4.0;
        let loss = training_loss(&j, &refs, &spec(f64::INFINITY, 0.0)).unwrap().total.item();
        assert!((loss - plain).abs() < 1e-12);
    }

    #[test]
    fn missing_targets_are_rejected() {
        assert!(training_loss(&jet(Some(2.0), &[0.0]), &[], &spec(0.25, 1.0)).is_err());
    }

    #[test]
    fn radius_receives_gradient_through_gate_and_regulariser() {
        let targets = [vec![2.0, 0.0], vec![0.0, -2.0], vec![3.0, 1.0], vec![1.0, 1.0]];
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        let loss_at = |r: f64| {
            let mut j = jet(None, &[0.3]);
            j.radius = Some(Tensor::param(vec![r], &[1]));
            let parts = training_loss(&j, &refs, &spec(0.25, 1.0)).unwrap();
            parts.total.backward().unwrap();
            (parts.total.item(), j.radius.unwrap().grad().unwrap()[0])
        };
        for r in [1.1, 1.4, 2.2, 3.7] {
            let h = 1e-6;
            let fd = (loss_at(r + h).0 - loss_at(r - h).0) / (2.0 * h);
            let (_, analytic) = loss_at(r);
            assert!((fd - analytic).abs() < 1e-6 * (1.0 + analytic.abs()), "r={r}: {fd} vs {analytic}");
        }
    }

    fn adamw_fixture(values: &[f64]) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id = store.add("x", &[values.len()], Init::Zeros, &mut rng);
        store.get_mut(id).data.copy_from_slice(values);
        store
    }

    #[test]
    fn adamw_examples() {
        let mut store = adamw_fixture(&[1.0, -2.0]);
        let mut opt = AdamW::new(&store);
        assert!(opt.step(&mut store, &[vec![0.0, 0.0]], 0.1, 0.0));
        assert_eq!(store.iter().next().unwrap().data, [1.0, -2.0]);
        assert!(opt.step(&mut store, &[vec![0.0, 0.0]], 1.0, 0.1));
        assert_eq!(store.iter().next().unwrap().data, [0.9, -1.8]);
        assert!(!opt.step(&mut store, &[vec![f64::NAN, 0.0]], 1.0, 0.1));
        assert_eq!(store.iter().next().unwrap().data, [0.9, -1.8]);
    }

    #[test]
    fn adamw_minimises_a_quadratic() {
        let mut store = adamw_fixture(&[1.0]);
        let mut opt = AdamW::new(&store);
        for _ in 0..200 {
            let x = store.iter().next().unwrap().data[0];
            opt.step(&mut store, &[vec![2.0 * x]], 0.1, 0.0);
        }
        assert!(store.iter().next().unwrap().data[0].abs() < 1e-2);
    }

    fn tiny_setup() -> (Tante<f64>, Vec<Window>) {
        let config = crate::model::tests::tiny(2);
        let model = Tante::new(config.clone(), 3).unwrap();
        let n = config.height * config.width;
        let frames = |offset: f64| -> Vec<f64> { (0..n).map(|i| (i as f64 * 0.1 + offset).sin()).collect() };
        let windows = (0..3)
            .map(|w| {
                let input: Vec<f64> = (0..4).flat_map(|f| frames((w + f) as f64 * 0.2)).collect();
                Window {
                    input: FieldSequence::uniform(input, config.height, config.width, 1).unwrap(),
                    targets: (4..8).flat_map(|f| frames((w + f) as f64 * 0.2)).collect(),
                    trajectory: 0,
                    start: w,
                }
            })
            .collect();
        (model, windows)
    }

    fn short(iterations: usize) -> TrainConfig {
        TrainConfig { iterations, warmup_steps: 2, peak_lr: 1e-3, batch_size: 2, checkpoint_every: 2, ..Default::default() }
    }

    #[test]
    fn zero_iterations_checkpoint_is_the_initialisation() {
        let (mut model, windows) = tiny_setup();
        let before = model.params.clone();
        let dir = tempfile::tempdir().unwrap();
        train(&mut model, &windows, &short(0), Some(dir.path()), |_| {}).unwrap();
        let (loaded, step) = load_checkpoint::<f64>(&checkpoint_stem(dir.path(), 0)).unwrap();
        assert_eq!(step, 0);
        for (a, b) in loaded.params.iter().zip(before.iter()) {
            let rounded: Vec<f64> = b.data.iter().map(|v| f64::from(*v as f32)).collect();
            assert_eq!(a.data, rounded);
        }
    }

    #[test]
    fn training_is_deterministic_and_writes_artifacts() {
        let run = || {
            let (mut model, windows) = tiny_setup();
            let dir = tempfile::tempdir().unwrap();
            let report = train(&mut model, &windows, &short(4), Some(dir.path()), |_| {}).unwrap();
            let csv = fs::read_to_string(dir.path().join("metrics/loss.csv")).unwrap();
            assert!(checkpoint_stem(dir.path(), 4).with_extension("json").exists());
            assert!(checkpoint_stem(dir.path(), 2).with_extension("bin").exists());
            (report, csv)
        };
        let (a, csv_a) = run();
        let (b, csv_b) = run();
        assert_eq!(a, b);
        assert_eq!(csv_a, csv_b);
        assert_eq!(csv_a.lines().count(), 5);
    }

    #[test]
    fn non_finite_loss_aborts_with_checkpoint_kept() {
        let (mut model, mut windows) = tiny_setup();
        windows.iter_mut().for_each(|w| w.targets[0] = f64::INFINITY);
        let dir = tempfile::tempdir().unwrap();
        let err = train(&mut model, &windows, &short(3), Some(dir.path()), |_| {}).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 1 }));
        assert!(checkpoint_stem(dir.path(), 0).with_extension("json").exists());
    }

    #[test]
    fn config_keys_roundtrip() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.set("peak_lr", "0.001").unwrap());
        assert!(!cfg.set("nonsense", "1").unwrap());
        assert!(cfg.set("batch_size", "x").is_err());
        let mut again = TrainConfig::default();
        for (k, v) in cfg.entries() {
            assert!(again.set(k, &v).unwrap());
        }
        assert_eq!(again, cfg);
        let _ = ModelConfig::small(1, 4, 32, 32, 1);
    }
}
