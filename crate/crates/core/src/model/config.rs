use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kinematics::{AttentionKind, HARD_THRESHOLD};

/// Which kinematic inputs feed the latent variable predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LvpMode {
    /// No predictor; the latent code is pure noise.
    None,
    /// Velocities only.
    Single,
    /// Positions, velocities and accelerations.
    #[default]
    Multi,
}

impl LvpMode {
    pub fn name(self) -> &'static str {
        match self {
            LvpMode::None => "none",
            LvpMode::Single => "single",
            LvpMode::Multi => "multi",
        }
    }

    pub fn kinds(self) -> &'static [FeatureKind] {
        match self {
            LvpMode::None => &[],
            LvpMode::Single => &[FeatureKind::Velocities],
            LvpMode::Multi => &[FeatureKind::Positions, FeatureKind::Velocities, FeatureKind::Accelerations],
        }
    }
}

impl FromStr for LvpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LvpMode::None),
            "single" => Ok(LvpMode::Single),
            "multi" => Ok(LvpMode::Multi),
            _ => Err(Error::InvalidArgument(format!("unknown lvp mode '{s}' (none|single|multi)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Positions,
    Velocities,
    Accelerations,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Positions => "pos",
            FeatureKind::Velocities => "vel",
            FeatureKind::Accelerations => "acc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Hidden and output widths of the relative-position MLP (input is 2).
    pub pool_mlp1: [usize; 2],
    /// Hidden and output widths of the post-concatenation MLP.
    pub pool_mlp2: [usize; 2],
    pub latent_dim_per_kind: usize,
    pub noise_dim: usize,
    pub lvp_hidden: usize,
    pub disc_hidden: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    pub dt: f64,
    pub attention: AttentionKind,
    pub hard_threshold: f64,
    pub lvp: LvpMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            embed_dim: 32,
            pool_mlp1: [32, 32],
            pool_mlp2: [32, 16],
            latent_dim_per_kind: 4,
            noise_dim: 4,
            lvp_hidden: 64,
            disc_hidden: 16,
            obs_len: 8,
            pred_len: 12,
            dt: crate::data::DEFAULT_DT,
            attention: AttentionKind::Hard,
            hard_threshold: HARD_THRESHOLD,
            lvp: LvpMode::Multi,
        }
    }
}

impl ModelConfig {
    /// Width of the latent code. Without a predictor the code is all noise, kept at the
    /// width of the full three-kind code so every ablation shares the decoder shape.
    pub fn z_dim(&self) -> usize {
        match self.lvp {
            LvpMode::None => 3 * self.latent_dim_per_kind + self.noise_dim,
            mode => mode.kinds().len() * self.latent_dim_per_kind + self.noise_dim,
        }
    }

    /// Number of pure-noise entries at the tail of the latent code.
    pub fn noise_width(&self) -> usize {
        match self.lvp {
            LvpMode::None => self.z_dim(),
            _ => self.noise_dim,
        }
    }

    pub fn pool_dim(&self) -> usize {
        self.pool_mlp2[1]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.hidden_dim,
            self.embed_dim,
            self.pool_mlp1[0],
            self.pool_mlp1[1],
            self.pool_mlp2[0],
            self.pool_mlp2[1],
            self.latent_dim_per_kind,
            self.lvp_hidden,
            self.disc_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        if self.obs_len < 2 {
            return Err(Error::Config(format!("obs_len must be >= 2, got {}", self.obs_len)));
        }
        if self.pred_len < 2 {
            return Err(Error::Config(format!("pred_len must be >= 2, got {}", self.pred_len)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(-1.0..=1.0).contains(&self.hard_threshold) {
            return Err(Error::Config("hard_threshold must lie in [-1, 1]".into()));
        }
        if self.z_dim() == 0 {
            return Err(Error::Config("latent code has zero width".into()));
        }
        Ok(())
    }
}
