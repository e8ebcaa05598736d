use crate::error::{Error, Result};

/// A stack of `(H, W, D)` frames with per-frame time distances to the newest
/// frame. Frames are stored oldest first, row-major `(T, H, W, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSequence {
    pub frames: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FieldSequence {
    pub fn new(frames: Vec<f64>, timestamps: Vec<f64>, height: usize, width: usize, channels: usize) -> Result<Self> {
        let frame_len = height * width * channels;
        if frame_len == 0 || frames.len() != timestamps.len() * frame_len {
            return Err(Error::Shape(format!(
                "{} values for {} frames of {height}x{width}x{channels}",
                frames.len(),
                timestamps.len()
            )));
        }
        if !timestamps.contains(&0.0) {
            return Err(Error::Invalid("no frame at time distance 0".into()));
        }
        if timestamps.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Invalid(format!("time distances must be finite and >= 0: {timestamps:?}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite field value".into()));
        }
        Ok(FieldSequence { frames, timestamps, height, width, channels })
    }

    /// Unit-spaced window: time distances `(T−1, …, 1, 0)`.
    pub fn uniform(frames: Vec<f64>, height: usize, width: usize, channels: usize) -> Result<Self> {
        let t = frames.len() / (height * width * channels).max(1);
        let timestamps = (0..t).rev().map(|i| i as f64).collect();
        Self::new(frames, timestamps, height, width, channels)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frame_len();
        &self.frames[i * n..(i + 1) * n]
    }

    /// Index of the frame at time distance 0 (the last one if several).
    pub fn newest_index(&self) -> usize {
        self.timestamps.iter().rposition(|&t| t == 0.0).expect("validated on construction")
    }

    pub fn newest(&self) -> &[f64] {
        self.frame(self.newest_index())
    }
}

/// One generated trajectory, `(frames, H, W, D)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub data: Vec<f64>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Trajectory {
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Frames `start..start + len` as one contiguous block.
    pub fn frames_range(&self, start: usize, len: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[start * n..(start + len) * n]
    }
}
