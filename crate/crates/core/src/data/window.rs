use serde::{Deserialize, Serialize};

use super::{FieldSequence, Trajectory};
use crate::error::{Error, Result};

/// `T` input frames (unit-spaced, newest last) and the `K` frames that follow.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: FieldSequence,
    /// `(K, H, W, D)`, offset 1 first.
    pub targets: Vec<f64>,
    pub trajectory: usize,
    pub start: usize,
}

impl Window {
    pub fn horizon(&self) -> usize {
        self.targets.len() / self.input.frame_len()
    }

    pub fn target(&self, offset: usize) -> &[f64] {
        let n = self.input.frame_len();
        &self.targets[(offset - 1) * n..offset * n]
    }
}

/// Sliding windows over each trajectory. Returns the windows and the number of
/// trajectories skipped for being shorter than `T + K`.
pub fn make_windows(trajectories: &[&Trajectory], t: usize, k: usize, stride: usize) -> Result<(Vec<Window>, usize)> {
    if t == 0 || stride == 0 {
        return Err(Error::Invalid(format!("window length {t} and stride {stride} must be positive")));
    }
    let mut windows = Vec::new();
    let mut skipped = 0;
    for (idx, traj) in trajectories.iter().enumerate() {
        if traj.frames < t + k {
            skipped += 1;
            continue;
        }
        for start in (0..=traj.frames - t - k).step_by(stride) {
            let input =
                FieldSequence::uniform(traj.frames_range(start, t).to_vec(), traj.height, traj.width, traj.channels)?;
            windows.push(Window { input, targets: traj.frames_range(start + t, k).to_vec(), trajectory: idx, start });
        }
    }
    Ok((windows, skipped))
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        ChannelStats { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let mut sum = Vec::new();
        let mut sum_sq = Vec::new();
        let mut count = 0usize;
        for traj in trajectories {
            let d = traj.channels;
            if sum.is_empty() {
                sum = vec![0.0; d];
                sum_sq = vec![0.0; d];
            } else if sum.len() != d {
                return Err(Error::Shape(format!("channel count {d} differs from {}", sum.len())));
            }
            for px in traj.data.chunks_exact(d) {
                for c in 0..d {
                    sum[c] += px[c];
                    sum_sq[c] += px[c] * px[c];
                }
            }
            count += traj.data.len() / d;
        }
        if count == 0 {
            return Err(Error::Invalid("no data to compute statistics from".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq.iter().zip(&mean).map(|(s, m)| (s / n - m * m).max(0.0).sqrt()).collect();
        Ok(ChannelStats { mean, std })
    }

    /// Channels that normalization leaves untouched.
    pub fn degenerate_channels(&self) -> Vec<usize> {
        self.std.iter().enumerate().filter(|(_, s)| !(**s > 0.0 && s.is_finite())).map(|(c, _)| c).collect()
    }

    fn usable(&self, c: usize) -> bool {
        self.std[c] > 0.0 && self.std[c].is_finite() && self.mean[c].is_finite()
    }

    /// `(x − mean) / std` on channel-last data.
    pub fn normalize(&self, values: &mut [f64]) {
        let d = self.mean.len();
        for px in values.chunks_exact_mut(d) {
            for (c, v) in px.iter_mut().enumerate() {
                if self.usable(c) {
                    *v = (*v - self.mean[c]) / self.std[c];
                }
            }
        }
    }

    pub fn denormalize(&self, values: &mut [f64]) {
        let d = self.mean.len();
        for px in values.chunks_exact_mut(d) {
            for (c, v) in px.iter_mut().enumerate() {
                if self.usable(c) {
                    *v = *v * self.std[c] + self.mean[c];
                }
            }
        }
    }
}
