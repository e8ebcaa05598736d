//! The resolved `key = value` configuration of a run.

use std::path::PathBuf;

use tante::config::{parse_key_values, parse_value, render_key_values};
use tante::model::ModelConfig;
use tante::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    /// Input frames per window.
    pub window: usize,
    pub order: usize,
    pub patch: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub eps: f64,
    pub m: f64,
    pub model_seed: u64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let small = ModelConfig::small(1, 4, 8, 8, 1);
        RunConfig {
            data_dir: None,
            window: small.frames,
            order: small.order,
            patch: small.patch,
            embed_dim: small.embed_dim,
            mlp_dim: small.mlp_dim,
            heads: small.heads,
            blocks: small.blocks,
            r_min: small.r_min,
            r_max: small.r_max,
            eps: small.eps,
            m: small.m,
            model_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

pub const RUN_KEYS: [&str; 13] = [
    "data_dir", "window", "order", "patch", "embed_dim", "mlp_dim", "heads", "blocks", "r_min", "r_max", "eps", "m", "model_seed",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "window" => self.window = parse_value(key, value)?,
            "order" => self.order = parse_value(key, value)?,
            "patch" => self.patch = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "mlp_dim" => self.mlp_dim = parse_value(key, value)?,
            "heads" => self.heads = parse_value(key, value)?,
            "blocks" => self.blocks = parse_value(key, value)?,
            "r_min" => self.r_min = parse_value(key, value)?,
            "r_max" => self.r_max = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "model_seed" => self.model_seed = parse_value(key, value)?,
            _ => {
                if !self.train.set(key, value)? {
                    return Err(CliError::Usage(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Applies a config file (if any), then `key=value` overrides in order.
    pub fn resolve(file: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(text) = file {
            for (k, v) in parse_key_values(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{item}` is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::resolve(Some(text), &[])
    }

    pub fn render(&self) -> String {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(d) = &self.data_dir {
            pairs.push(("data_dir".into(), d.display().to_string()));
        }
        let model = [
            ("window", self.window.to_string()),
            ("order", self.order.to_string()),
            ("patch", self.patch.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("mlp_dim", self.mlp_dim.to_string()),
            ("heads", self.heads.to_string()),
            ("blocks", self.blocks.to_string()),
            ("r_min", self.r_min.to_string()),
            ("r_max", self.r_max.to_string()),
            ("eps", self.eps.to_string()),
            ("m", self.m.to_string()),
            ("model_seed", self.model_seed.to_string()),
        ];
        pairs.extend(model.into_iter().map(|(k, v)| (k.to_string(), v)));
        pairs.extend(self.train.entries().into_iter().map(|(k, v)| (k.to_string(), v)));
        render_key_values(pairs)
    }

    pub fn model_config(&self, height: usize, width: usize, channels: usize) -> ModelConfig {
        ModelConfig {
            order: self.order,
            patch: self.patch,
            embed_dim: self.embed_dim,
            mlp_dim: self.mlp_dim,
            heads: self.heads,
            blocks: self.blocks,
            r_min: self.r_min,
            r_max: self.r_max,
            eps: self.eps,
            m: self.m,
            channels,
            height,
            width,
            frames: self.window,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_roundtrip() {
        let cfg = RunConfig::resolve(None, &["data_dir=data/x".into(), "eps=1.5".into(), "iterations=7".into()]).unwrap();
        assert_eq!(cfg.eps, 1.5);
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(RunConfig::resolve(Some("nope = 1\n"), &[]), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::resolve(None, &["blocks".into()]), Err(CliError::Usage(_))));
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = RunConfig::resolve(Some("blocks = 3\nseed = 4\n"), &["blocks=5".into()]).unwrap();
        assert_eq!((cfg.blocks, cfg.train.seed), (5, 4));
    }

    #[test]
    fn every_key_is_rendered() {
        let text = RunConfig::resolve(None, &["data_dir=d".into()]).unwrap().render();
        for key in RUN_KEYS.iter().chain(TrainConfig::KEYS.iter()) {
            assert!(text.lines().any(|l| l.starts_with(&format!("{key} ="))), "{key}");
        }
    }
}
