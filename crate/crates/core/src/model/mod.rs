//! Generator (encoder, social attention pooling, latent variable predictor, decoder) and
//! discriminator.

mod config;
mod discriminator;
mod generator;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::kinematics::AttentionKind;
use crate::nn::{Linear, Lstm, Mlp};

pub use config::{FeatureKind, LvpMode, ModelConfig};
pub use discriminator::discriminator_score;
pub(crate) use discriminator::discriminate;
pub use generator::{
    decode_rollout, encode, generator_forward, latent_graph, lvp_forward, sample_futures, sample_latent, social_pool,
    Branch, LatentSource, Sampling,
};
pub(crate) use generator::{decode_graph, draw_latent_noise, encode_batch, step_displacements, SceneBatch};

/// Mean and standard deviation of a diagonal Gaussian, one row per pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    /// `[n x d]`
    pub mean: Array2<f64>,
    /// `[n x d]`, strictly positive
    pub std: Array2<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Array2<f64>, std: Array2<f64>) -> Result<Self> {
        if mean.dim() != std.dim() {
            return Err(Error::Shape(format!("mean {:?} vs std {:?}", mean.dim(), std.dim())));
        }
        if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("Gaussian std must be finite and > 0".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mean.dim()
    }
}

/// One sampled future for every pedestrian of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSample {
    /// `[n x pred_len x 2]`, per-step displacements
    pub displacements: Array3<f64>,
    /// `[n x pred_len x 2]`, last observed position plus the running sum of displacements
    pub absolute_positions: Array3<f64>,
}

impl PredictionSample {
    pub fn from_displacements(last_position: &Array2<f64>, displacements: Array3<f64>) -> Self {
        let mut absolute_positions = Array3::zeros(displacements.dim());
        let (n, len, _) = displacements.dim();
        for i in 0..n {
            let (mut x, mut y) = (last_position[[i, 0]], last_position[[i, 1]]);
            for t in 0..len {
                x += displacements[[i, t, 0]];
                y += displacements[[i, t, 1]];
                absolute_positions[[i, t, 0]] = x;
                absolute_positions[[i, t, 1]] = y;
            }
        }
        Self {
            displacements,
            absolute_positions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LvpNet {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub embed: Linear,
    pub encoder: Lstm,
    pub pool_mlp1: Mlp,
    pub pool_mlp2: Mlp,
    pub soft: Option<(ParamId, ParamId)>,
    pub lvp_observed: Vec<LvpNet>,
    pub lvp_groundtruth: Vec<LvpNet>,
    pub dec_init: Linear,
    pub decoder: Lstm,
    pub head: Linear,
    pub disc_embed: Linear,
    pub disc_encoder: Lstm,
    pub disc_fc1: Linear,
    pub disc_fc2: Linear,
    pub generator_ids: Vec<ParamId>,
    pub discriminator_ids: Vec<ParamId>,
}

/// Every learnable weight of the generator and discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub(crate) layout: Layout,
}

impl ModelParams {
    /// Fresh weights: fan-in uniform for linear maps, orthogonal recurrent kernels, zero biases.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let r = &mut rng;

        let embed = Linear::new(&mut store, "gen.embed", 2, c.embed_dim, r);
        let encoder = Lstm::new(&mut store, "gen.encoder", c.embed_dim, c.hidden_dim, r);
        let pool_mlp1 = Mlp::new(&mut store, "gen.pool.mlp1", &[2, c.pool_mlp1[0], c.pool_mlp1[1]], r);
        let pool_mlp2 = Mlp::new(
            &mut store,
            "gen.pool.mlp2",
            &[c.hidden_dim + c.pool_mlp1[1], c.pool_mlp2[0], c.pool_mlp2[1]],
            r,
        );
        let soft = (c.attention == AttentionKind::Soft).then(|| {
            let w = store.insert("gen.attn.conv_w", crate::nn::kaiming_uniform(1, 1, r));
            let b = store.insert("gen.attn.conv_b", Array2::zeros((1, 1)));
            (w, b)
        });
        let mut lvp_net = |store: &mut ParamStore, branch: &str, kind: FeatureKind, len: usize| LvpNet {
            hidden: Linear::new(store, &format!("gen.lvp.{branch}.{}.0", kind.name()), 2 * len, c.lvp_hidden, r),
            out: Linear::new(
                store,
                &format!("gen.lvp.{branch}.{}.1", kind.name()),
                c.lvp_hidden,
                2 * c.latent_dim_per_kind,
                r,
            ),
        };
        let lvp_observed = c
            .lvp
            .kinds()
            .iter()
            .map(|k| lvp_net(&mut store, "obs", *k, c.obs_len))
            .collect();
        let lvp_groundtruth = c
            .lvp
            .kinds()
            .iter()
            .map(|k| lvp_net(&mut store, "gt", *k, c.pred_len))
            .collect();
        let dec_init = Linear::new(&mut store, "gen.dec_init", c.hidden_dim + c.pool_dim() + c.z_dim(), c.hidden_dim, r);
        let decoder = Lstm::new(&mut store, "gen.decoder", c.embed_dim, c.hidden_dim, r);
        let head = Linear::new(&mut store, "gen.head", c.hidden_dim, 2, r);
        let n_gen = store.len();

        let disc_embed = Linear::new(&mut store, "disc.embed", 2, c.embed_dim, r);
        let disc_encoder = Lstm::new(&mut store, "disc.encoder", c.embed_dim, c.hidden_dim, r);
        let disc_fc1 = Linear::new(&mut store, "disc.fc1", c.hidden_dim, c.disc_hidden, r);
        let disc_fc2 = Linear::new(&mut store, "disc.fc2", c.disc_hidden, 1, r);

        let ids: Vec<ParamId> = store.ids().collect();
        let layout = Layout {
            embed,
            encoder,
            pool_mlp1,
            pool_mlp2,
            soft,
            lvp_observed,
            lvp_groundtruth,
            dec_init,
            decoder,
            head,
            disc_embed,
            disc_encoder,
            disc_fc1,
            disc_fc2,
            generator_ids: ids[..n_gen].to_vec(),
            discriminator_ids: ids[n_gen..].to_vec(),
        };
        Ok(Self {
            config: config.clone(),
            store,
            layout,
        })
    }

    /// Rebuilds parameters for `config` from named arrays, checking names and shapes.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let mut params = Self::new(config, 0)?;
        let expected = params.store.len();
        if named.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} parameter arrays for this configuration, found {}",
                named.len()
            )));
        }
        for (name, value) in named {
            let id = params
                .store
                .find(&name)
                .ok_or_else(|| Error::Shape(format!("unexpected parameter '{name}'")))?;
            let want = params.store.get(id).dim();
            if value.dim() != want {
                return Err(Error::Shape(format!("parameter '{name}': expected {want:?}, found {:?}", value.dim())));
            }
            *params.store.get_mut(id) = value;
        }
        Ok(params)
    }

    pub fn generator_ids(&self) -> &[ParamId] {
        &self.layout.generator_ids
    }

    pub fn discriminator_ids(&self) -> &[ParamId] {
        &self.layout.discriminator_ids
    }

    /// Current soft-attention `(weight, bias)`, when the config uses soft attention.
    pub fn soft_attention_params(&self) -> Option<(f64, f64)> {
        self.layout
            .soft
            .map(|(w, b)| (self.store.get(w)[[0, 0]], self.store.get(b)[[0, 0]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_sets_partition_the_store() {
        for lvp in [LvpMode::None, LvpMode::Single, LvpMode::Multi] {
            for attention in [AttentionKind::None, AttentionKind::Hard, AttentionKind::Soft] {
                let cfg = ModelConfig { lvp, attention, ..Default::default() };
                let p = ModelParams::new(&cfg, 1).unwrap();
                assert_eq!(p.generator_ids().len() + p.discriminator_ids().len(), p.store.len());
                assert_eq!(p.soft_attention_params().is_some(), attention == AttentionKind::Soft);
                assert!(p.store.all_finite());
            }
        }
    }

    #[test]
    fn from_named_checks_shapes() {
        let cfg = ModelConfig::default();
        let p = ModelParams::new(&cfg, 3).unwrap();
        let named: Vec<_> = p.store.iter().map(|(_, n, v)| (n.to_string(), v.clone())).collect();
        let q = ModelParams::from_named(&cfg, named.clone()).unwrap();
        assert_eq!(p.store, q.store);

        let other = ModelConfig { pred_len: 8, ..cfg };
        assert!(ModelParams::from_named(&other, named).is_err());
    }

    #[test]
    fn cumulative_positions() {
        let last = ndarray::array![[1.0, 2.0]];
        let d = Array3::from_shape_vec((1, 3, 2), vec![0.5, 0.0, 0.5, 0.1, 0.0, -0.1]).unwrap();
        let s = PredictionSample::from_displacements(&last, d);
        assert_eq!(s.absolute_positions[[0, 0, 0]], 1.5);
        assert_eq!(s.absolute_positions[[0, 2, 0]], 2.0);
        assert!((s.absolute_positions[[0, 2, 1]] - 2.0).abs() < 1e-12);
    }
}
