use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelStats, Trajectory};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "tante-dataset-v1";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// 80/10/10 assignment from a hash of the trajectory index.
pub fn split_of(index: usize) -> Split {
    match splitmix64(index as u64) % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub generator: String,
    pub generator_params: BTreeMap<String, serde_json::Value>,
    pub trajectories: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Time units per frame. Models work in frame units.
    pub dt: f64,
    pub channel_names: Vec<String>,
    /// Computed on the train split.
    pub stats: ChannelStats,
    pub splits: Vec<Split>,
    /// Free-form label per trajectory, e.g. a diffusivity class.
    pub regimes: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Assembles a dataset, rounding values to `f32` so that the in-memory
    /// copy matches what is stored on disk.
    pub fn new(
        generator: &str,
        generator_params: BTreeMap<String, serde_json::Value>,
        dt: f64,
        mut trajectories: Vec<Trajectory>,
        regimes: Vec<String>,
    ) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::Invalid("dataset has no trajectories".into()))?;
        let (frames, height, width, channels) = (first.frames, first.height, first.width, first.channels);
        if let Some(bad) = trajectories
            .iter()
            .position(|t| (t.frames, t.height, t.width, t.channels) != (frames, height, width, channels))
        {
            return Err(Error::Shape(format!("trajectory {bad} differs in shape from trajectory 0")));
        }
        if regimes.len() != trajectories.len() {
            return Err(Error::Invalid(format!("{} regime labels for {} trajectories", regimes.len(), trajectories.len())));
        }
        for t in &mut trajectories {
            t.data.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        let splits: Vec<Split> = (0..trajectories.len()).map(split_of).collect();
        let stats = ChannelStats::from_trajectories(
            trajectories.iter().zip(&splits).filter(|(_, s)| **s == Split::Train).map(|(t, _)| t),
        )
        .map_err(|_| Error::Invalid("train split is empty; generate more trajectories".into()))?;
        let manifest = DatasetManifest {
            format: DATASET_FORMAT.into(),
            generator: generator.into(),
            generator_params,
            trajectories: trajectories.len(),
            frames,
            height,
            width,
            channels,
            dt,
            channel_names: (0..channels).map(|c| format!("u{c}")).collect(),
            stats,
            splits,
            regimes,
            files: (0..trajectories.len()).map(|i| format!("traj_{i:05}.bin")).collect(),
        };
        Ok(Dataset { manifest, trajectories })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.trajectories.len()).filter(|&i| self.manifest.splits[i] == split).collect()
    }

    pub fn split(&self, split: Split) -> Vec<&Trajectory> {
        self.indices(split).into_iter().map(|i| &self.trajectories[i]).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (traj, file) in self.trajectories.iter().zip(&self.manifest.files) {
            let mut bytes = Vec::with_capacity(traj.data.len() * 4);
            for v in &traj.data {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            fs::write(dir.join(file), bytes)?;
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        let bad = |path: &Path, reason: String| Error::Format { path: path.display().to_string(), reason };
        if manifest.format != DATASET_FORMAT {
            return Err(bad(&manifest_path, format!("unsupported format {}", manifest.format)));
        }
        let n = manifest.trajectories;
        if manifest.files.len() != n || manifest.splits.len() != n || manifest.regimes.len() != n {
            return Err(bad(&manifest_path, "per-trajectory lists disagree with the trajectory count".into()));
        }
        let expected = manifest.frames * manifest.height * manifest.width * manifest.channels * 4;
        let mut trajectories = Vec::with_capacity(n);
        for file in &manifest.files {
            let path = dir.join(file);
            let bytes = fs::read(&path)?;
            if bytes.len() != expected {
                return Err(bad(&path, format!("{} bytes, expected {expected}", bytes.len())));
            }
            let data =
                bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect();
            trajectories.push(Trajectory {
                data,
                frames: manifest.frames,
                height: manifest.height,
                width: manifest.width,
                channels: manifest.channels,
            });
        }
        Ok(Dataset { manifest, trajectories })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_heat2d, HeatParams};

    fn small() -> Dataset {
        let p = HeatParams { height: 4, width: 6, channels: 2, kappa: 0.01, modes: 2, frames: 3, dt: 0.5, seed: 1 };
        let trajs = generate_heat2d(&p, 20).unwrap();
        let regimes = vec!["slow".to_string(); 20];
        Dataset::new("heat2d", BTreeMap::from([("kappa".into(), 0.01.into())]), p.dt, trajs, regimes).unwrap()
    }

    #[test]
    fn split_proportions() {
        let n = 10_000;
        let train = (0..n).filter(|&i| split_of(i) == Split::Train).count();
        let val = (0..n).filter(|&i| split_of(i) == Split::Val).count();
        assert!((7_700..8_300).contains(&train), "{train}");
        assert!((800..1_200).contains(&val), "{val}");
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        let back = Dataset::read(dir.path()).unwrap();
        assert_eq!(back, ds);
        let len = fs::metadata(dir.path().join(&ds.manifest.files[0])).unwrap().len();
        assert_eq!(len as usize, 3 * 4 * 6 * 2 * 4);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        let f = dir.path().join(&ds.manifest.files[3]);
        let bytes = fs::read(&f).unwrap();
        fs::write(&f, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Dataset::read(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn stats_use_only_the_train_split() {
        let mut ds = small();
        let expected = ChannelStats::from_trajectories(ds.split(Split::Train)).unwrap();
        assert_eq!(ds.manifest.stats, expected);
        let held_out = ds.indices(Split::Test).into_iter().chain(ds.indices(Split::Val)).collect::<Vec<_>>();
        assert!(!held_out.is_empty());
        for i in held_out {
            ds.trajectories[i].data.iter_mut().for_each(|v| *v += 100.0);
        }
        let rebuilt = Dataset::new(
            "heat2d",
            ds.manifest.generator_params.clone(),
            ds.manifest.dt,
            ds.trajectories.clone(),
            ds.manifest.regimes.clone(),
        )
        .unwrap();
        assert_eq!(rebuilt.manifest.stats, expected);
    }
}
