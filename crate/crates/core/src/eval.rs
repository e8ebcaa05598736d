//! Rollout evaluation over dataset windows.

use std::time::Instant;

use crate::data::{make_windows, ChannelStats, Dataset, Split, Trajectory, Window};
use crate::error::{Error, Result};
use crate::metrics::{rel_l2, MetricAccumulator, MetricReport};
use crate::rollout::{adaptive_rollout, fixed_rollout, Forecaster, RolloutTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Adaptive,
    Fixed,
}

impl std::str::FromStr for RolloutMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(RolloutMode::Adaptive),
            "fixed" => Ok(RolloutMode::Fixed),
            other => Err(Error::Invalid(format!("unknown rollout mode `{other}` (adaptive or fixed)"))),
        }
    }
}

pub fn rollout<F: Forecaster + ?Sized>(model: &F, window: &Window, steps: usize, mode: RolloutMode) -> Result<RolloutTrace> {
    match mode {
        RolloutMode::Adaptive => adaptive_rollout(model, &window.input, steps),
        RolloutMode::Fixed => fixed_rollout(model, &window.input, steps),
    }
}

/// Normalized windows from one split; `Window::trajectory` is the dataset index.
pub fn dataset_windows(ds: &Dataset, split: Split, t: usize, k: usize, stride: usize) -> Result<(Vec<Window>, usize)> {
    let indices = ds.indices(split);
    let normalized: Vec<Trajectory> = indices
        .iter()
        .map(|&i| {
            let mut traj = ds.trajectories[i].clone();
            ds.manifest.stats.normalize(&mut traj.data);
            traj
        })
        .collect();
    let refs: Vec<&Trajectory> = normalized.iter().collect();
    let (mut windows, skipped) = make_windows(&refs, t, k, stride)?;
    for w in &mut windows {
        w.trajectory = indices[w.trajectory];
    }
    Ok((windows, skipped))
}

#[derive(Debug, Clone)]
pub struct EvalSample {
    pub trajectory: usize,
    pub start: usize,
    pub trace: RolloutTrace,
    pub seconds: f64,
    /// Whole-rollout relative L² in physical units.
    pub rel_l2: f64,
}

impl EvalSample {
    /// Radius of the first invocation, predicted from the true input window.
    pub fn initial_radius(&self) -> Option<f64> {
        self.trace.invocations.first().and_then(|i| i.radius)
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub samples: Vec<EvalSample>,
}

/// Rolls out every window for `steps` targets and scores the denormalized
/// predictions against the denormalized targets.
pub fn evaluate_rollouts<F: Forecaster + ?Sized>(
    model: &F,
    windows: &[Window],
    stats: &ChannelStats,
    steps: usize,
    mode: RolloutMode,
) -> Result<Evaluation> {
    let first = windows.first().ok_or_else(|| Error::Invalid("no evaluation windows".into()))?;
    let channels = first.input.channels;
    let mut acc = MetricAccumulator::new(channels, steps);
    let mut samples = Vec::with_capacity(windows.len());
    for w in windows {
        if w.horizon() < steps {
            return Err(Error::Invalid(format!("window has {} targets, rollout needs {steps}", w.horizon())));
        }
        let started = Instant::now();
        let trace = rollout(model, w, steps, mode)?;
        let seconds = started.elapsed().as_secs_f64();
        let mut pred = trace.emitted.clone();
        pred.iter_mut().for_each(|f| stats.denormalize(f));
        let truth: Vec<Vec<f64>> = (1..=steps)
            .map(|t| {
                let mut f = w.target(t).to_vec();
                stats.denormalize(&mut f);
                f
            })
            .collect();
        acc.add(&pred, &truth, trace.calls())?;
        let rel = rel_l2(&pred.concat(), &truth.concat(), channels)?.value;
        samples.push(EvalSample { trajectory: w.trajectory, start: w.start, trace, seconds, rel_l2: rel });
    }
    Ok(Evaluation { report: acc.finish(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FieldSequence;
    use crate::model::TaylorJet;
    use std::collections::BTreeMap;

    struct Persistence;
    impl Forecaster for Persistence {
        fn window_len(&self) -> usize {
            4
        }
        fn forecast(&self, w: &FieldSequence) -> Result<TaylorJet> {
            Ok(TaylorJet { base: w.newest().to_vec(), derivs: vec![vec![0.0; w.frame_len()]], radius: Some(3.0) })
        }
    }

    #[test]
    fn static_data_is_predicted_exactly_by_persistence() {
        let p = crate::data::HeatParams { height: 4, width: 4, channels: 1, kappa: 0.0, modes: 2, frames: 12, dt: 0.1, seed: 0 };
        let trajs = crate::data::generate_heat2d(&p, 20).unwrap();
        let ds = Dataset::new("heat2d", BTreeMap::new(), 0.1, trajs, vec!["static".into(); 20]).unwrap();
        let (windows, skipped) = dataset_windows(&ds, Split::Train, 4, 8, 4).unwrap();
        assert_eq!(skipped, 0);
        assert!(windows.iter().all(|w| ds.manifest.splits[w.trajectory] == Split::Train));
        let eval = evaluate_rollouts(&Persistence, &windows, &ds.manifest.stats, 8, RolloutMode::Adaptive).unwrap();
        assert!(eval.report.rel_l2 < 1e-12);
        assert_eq!(eval.report.mean_calls, 3.0);
        assert_eq!(eval.samples[0].initial_radius(), Some(3.0));
        let fixed = evaluate_rollouts(&Persistence, &windows, &ds.manifest.stats, 4, RolloutMode::Fixed).unwrap();
        assert_eq!(fixed.report.mean_calls, 4.0);
    }
}
