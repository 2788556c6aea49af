//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::data::{DataSet, SplitSpec};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::ModelConfig;
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: &FlatConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    fn read<T: FromStr>(&self, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key) {
            *into = v.parse().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))?;
        }
        Ok(())
    }

    fn read_pair(&self, key: &str, into: &mut [usize; 2]) -> Result<()> {
        if let Some(v) = self.get(key) {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            let bad = || Error::Config(format!("{key} = {v}: expected two comma-separated widths"));
            if parts.len() != 2 {
                return Err(bad());
            }
            into[0] = parts[0].parse().map_err(|_| bad())?;
            into[1] = parts[1].parse().map_err(|_| bad())?;
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn to_flat(&self, out: &mut FlatConfig) {
        out.set("model.hidden_dim", self.hidden_dim);
        out.set("model.embed_dim", self.embed_dim);
        out.set("model.pool_mlp1", format!("{},{}", self.pool_mlp1[0], self.pool_mlp1[1]));
        out.set("model.pool_mlp2", format!("{},{}", self.pool_mlp2[0], self.pool_mlp2[1]));
        out.set("model.latent_dim_per_kind", self.latent_dim_per_kind);
        out.set("model.noise_dim", self.noise_dim);
        out.set("model.lvp_hidden", self.lvp_hidden);
        out.set("model.disc_hidden", self.disc_hidden);
        out.set("model.obs_len", self.obs_len);
        out.set("model.pred_len", self.pred_len);
        out.set("model.dt", self.dt);
        out.set("model.attention", self.attention.name());
        out.set("model.hard_threshold", self.hard_threshold);
        out.set("model.lvp", self.lvp.name());
    }

    pub fn from_flat(flat: &FlatConfig) -> Result<Self> {
        let mut c = ModelConfig::default();
        flat.read("model.hidden_dim", &mut c.hidden_dim)?;
        flat.read("model.embed_dim", &mut c.embed_dim)?;
        flat.read_pair("model.pool_mlp1", &mut c.pool_mlp1)?;
        flat.read_pair("model.pool_mlp2", &mut c.pool_mlp2)?;
        flat.read("model.latent_dim_per_kind", &mut c.latent_dim_per_kind)?;
        flat.read("model.noise_dim", &mut c.noise_dim)?;
        flat.read("model.lvp_hidden", &mut c.lvp_hidden)?;
        flat.read("model.disc_hidden", &mut c.disc_hidden)?;
        flat.read("model.obs_len", &mut c.obs_len)?;
        flat.read("model.pred_len", &mut c.pred_len)?;
        flat.read("model.dt", &mut c.dt)?;
        flat.read("model.attention", &mut c.attention)?;
        flat.read("model.hard_threshold", &mut c.hard_threshold)?;
        flat.read("model.lvp", &mut c.lvp)?;
        c.validate()?;
        Ok(c)
    }
}

/// Optimization schedule and everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Target pedestrians per batch; windows are never split.
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub d_steps_per_g_step: usize,
    pub seed: u64,
    /// Global gradient-norm clip per update.
    pub grad_clip: f64,
    pub loss_weights: LossWeights,
    pub model: ModelConfig,
    pub split: Option<SplitSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 600,
            adam: AdamConfig::default(),
            d_steps_per_g_step: 2,
            seed: 0,
            grad_clip: 10.0,
            loss_weights: LossWeights::default(),
            model: ModelConfig::default(),
            split: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be > 0".into()));
        }
        self.loss_weights.validate()?;
        if let Some(s) = &self.split {
            if s.train_sets.contains(&s.test_set) {
                return Err(Error::Config("test set appears among training sets".into()));
            }
        }
        self.model.validate()
    }

    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::new();
        self.model.to_flat(&mut f);
        f.set("train.batch_size", self.batch_size);
        f.set("train.epochs", self.epochs);
        f.set("train.lr", self.adam.lr);
        f.set("train.beta1", self.adam.beta1);
        f.set("train.beta2", self.adam.beta2);
        f.set("train.eps", self.adam.eps);
        f.set("train.d_steps_per_g_step", self.d_steps_per_g_step);
        f.set("train.seed", self.seed);
        f.set("train.grad_clip", self.grad_clip);
        f.set("loss.alpha", self.loss_weights.alpha);
        f.set("loss.beta", self.loss_weights.beta);
        f.set("loss.variety_m", self.loss_weights.variety_m);
        if let Some(s) = &self.split {
            f.set("split.test_set", s.test_set);
            f.set("split.train_sets", s.train_sets.iter().map(|d| d.name()).collect::<Vec<_>>().join(","));
        }
        f
    }

    pub fn from_flat(flat: &FlatConfig) -> Result<Self> {
        let mut c = TrainConfig {
            model: ModelConfig::from_flat(flat)?,
            ..Default::default()
        };
        flat.read("train.batch_size", &mut c.batch_size)?;
        flat.read("train.epochs", &mut c.epochs)?;
        flat.read("train.lr", &mut c.adam.lr)?;
        flat.read("train.beta1", &mut c.adam.beta1)?;
        flat.read("train.beta2", &mut c.adam.beta2)?;
        flat.read("train.eps", &mut c.adam.eps)?;
        flat.read("train.d_steps_per_g_step", &mut c.d_steps_per_g_step)?;
        flat.read("train.seed", &mut c.seed)?;
        flat.read("train.grad_clip", &mut c.grad_clip)?;
        flat.read("loss.alpha", &mut c.loss_weights.alpha)?;
        flat.read("loss.beta", &mut c.loss_weights.beta)?;
        flat.read("loss.variety_m", &mut c.loss_weights.variety_m)?;
        if let Some(test) = flat.get("split.test_set") {
            let test_set: DataSet = test.parse()?;
            let train_sets = match flat.get("split.train_sets") {
                Some(list) if !list.is_empty() => list.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<_>>>()?,
                _ => Vec::new(),
            };
            c.split = Some(SplitSpec { train_sets, test_set });
        }
        for key in flat.keys() {
            let known_prefix = ["model.", "train.", "loss.", "split."].iter().any(|p| key.starts_with(p));
            if known_prefix && !c.to_flat().keys().any(|k| k == key) {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::leave_one_out_split;
    use crate::kinematics::AttentionKind;
    use crate::model::LvpMode;

    #[test]
    fn defaults_are_reference_schedule() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.epochs, c.adam.lr), (64, 600, 0.001));
        assert_eq!((c.adam.beta1, c.adam.beta2, c.adam.eps), (0.9, 0.999, 1e-8));
        assert_eq!(c.d_steps_per_g_step, 2);
        assert_eq!((c.loss_weights.alpha, c.loss_weights.beta, c.loss_weights.variety_m), (1.0, 10.0, 20));
    }

    #[test]
    fn flat_round_trip() {
        let c = TrainConfig {
            epochs: 7,
            seed: 99,
            adam: AdamConfig { lr: 3.3e-4, ..Default::default() },
            model: ModelConfig {
                attention: AttentionKind::Soft,
                lvp: LvpMode::Single,
                pred_len: 8,
                ..Default::default()
            },
            split: Some(leave_one_out_split("UNIV").unwrap()),
            ..Default::default()
        };
        let text = c.to_flat().to_text();
        let back = TrainConfig::from_flat(&FlatConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(FlatConfig::parse("no equals sign").is_err());
        let f = FlatConfig::parse("train.epochz = 3").unwrap();
        assert!(TrainConfig::from_flat(&f).is_err());
        let f = FlatConfig::parse("train.epochs = three").unwrap();
        assert!(TrainConfig::from_flat(&f).is_err());
        let f = FlatConfig::parse("out_dir = /tmp/x\ntrain.epochs = 3").unwrap();
        assert_eq!(TrainConfig::from_flat(&f).unwrap().epochs, 3);
    }
}
