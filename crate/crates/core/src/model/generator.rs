use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiagonalGaussian, FeatureKind, LvpMode, LvpNet, ModelParams, PredictionSample};
use crate::autodiff::{Graph, Var};
use crate::data::ObservationWindow;
use crate::error::{Error, Result};
use crate::kinematics::{bearing_cosines, kinematic_features, AttentionKind, AttentionWeights, KinematicFeatures};

/// Log-variance clamp of the latent predictor heads.
pub const LOGVAR_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Prior network over the observed segment.
    Observed,
    /// Posterior network over the future segment.
    GroundTruth,
}

/// Where the latent distribution comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentSource {
    Observed,
    GroundTruth,
    /// Standard-normal code of full width, ignoring the predictor.
    NoiseOnly,
}

/// `Random` draws `eps` and noise; `Mean` sets both to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Random,
    Mean,
}

/// Pedestrians of several windows stacked row-wise. Pooling never crosses a segment.
#[derive(Debug, Clone)]
pub(crate) struct SceneBatch {
    pub segments: Vec<Range<usize>>,
    /// `[N x obs_len x 2]`
    pub observed: Array3<f64>,
    /// `[N x pred_len x 2]`
    pub future: Option<Array3<f64>>,
}

impl SceneBatch {
    pub fn from_windows(windows: &[&ObservationWindow], params: &ModelParams, with_future: bool) -> Result<Self> {
        let cfg = &params.config;
        let mut segments = Vec::with_capacity(windows.len());
        let mut start = 0;
        for w in windows {
            if w.obs_len != cfg.obs_len || w.observed.dim() != (w.num_peds(), cfg.obs_len, 2) {
                return Err(Error::Shape(format!(
                    "window {}@{}: observed segment must be [n x {} x 2]",
                    w.scene_id, w.start_frame, cfg.obs_len
                )));
            }
            if w.num_peds() == 0 {
                return Err(Error::InvalidArgument("window without pedestrians".into()));
            }
            if with_future && (w.pred_len != cfg.pred_len || !w.has_future()) {
                return Err(Error::Shape(format!(
                    "window {}@{}: future segment must be [n x {} x 2]",
                    w.scene_id, w.start_frame, cfg.pred_len
                )));
            }
            segments.push(start..start + w.num_peds());
            start += w.num_peds();
        }
        let obs: Vec<_> = windows.iter().map(|w| w.observed.view()).collect();
        let observed = ndarray::concatenate(Axis(0), &obs).map_err(|e| Error::Shape(e.to_string()))?;
        if observed.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("observed positions".into()));
        }
        let future = if with_future {
            let fut: Vec<_> = windows.iter().map(|w| w.future.view()).collect();
            let f = ndarray::concatenate(Axis(0), &fut).map_err(|e| Error::Shape(e.to_string()))?;
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("future positions".into()));
            }
            Some(f)
        } else {
            None
        };
        Ok(Self {
            segments,
            observed,
            future,
        })
    }

    pub fn len(&self) -> usize {
        self.observed.dim().0
    }

    pub fn last_positions(&self) -> Array2<f64> {
        self.observed.slice(s![.., -1, ..]).to_owned()
    }

    pub fn last_displacement(&self) -> Array2<f64> {
        &self.observed.slice(s![.., -1, ..]) - &self.observed.slice(s![.., -2, ..])
    }
}

/// Per-step displacement matrices `[n x 2]`; step 0 is zero.
pub(crate) fn step_displacements(positions: ArrayView3<f64>) -> Vec<Array2<f64>> {
    let (n, len, _) = positions.dim();
    (0..len)
        .map(|t| {
            if t == 0 {
                Array2::zeros((n, 2))
            } else {
                &positions.slice(s![.., t, ..]) - &positions.slice(s![.., t - 1, ..])
            }
        })
        .collect()
}

pub(crate) fn encode_graph(g: &mut Graph, params: &ModelParams, steps: &[Array2<f64>]) -> Var {
    let (l, store) = (&params.layout, &params.store);
    let n = steps[0].nrows();
    let hd = params.config.hidden_dim;
    let mut h = g.constant(Array2::zeros((n, hd)));
    let mut c = g.constant(Array2::zeros((n, hd)));
    for d in steps {
        let x = g.constant(d.clone());
        let e = l.embed.forward_relu(g, store, x);
        (h, c) = l.encoder.step(g, store, e, h, c);
    }
    h
}

/// Ordered neighbour pairs `(i, j)`, `j != i`, within each segment, grouped by `i`.
fn neighbour_pairs(segments: &[Range<usize>], n: usize) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let mut pairs = Vec::new();
    let mut groups = vec![Vec::new(); n];
    for seg in segments {
        for i in seg.clone() {
            for j in seg.clone() {
                if i != j {
                    groups[i].push(pairs.len());
                    pairs.push((i, j));
                }
            }
        }
    }
    (pairs, groups)
}

/// Attention applied to the pooled pair features. Matrices are `[n x n]` over the
/// stacked pedestrians; only within-segment entries are read.
enum PairAttention {
    None,
    Fixed(Array2<f64>),
    SoftFromCosines(Array2<f64>),
}

fn pool_graph(
    g: &mut Graph,
    params: &ModelParams,
    hidden: Var,
    last_positions: &Array2<f64>,
    segments: &[Range<usize>],
    attention: PairAttention,
) -> Var {
    let (l, store) = (&params.layout, &params.store);
    let n = last_positions.nrows();
    let (pairs, groups) = neighbour_pairs(segments, n);
    if pairs.is_empty() {
        return g.constant(Array2::zeros((n, params.config.pool_dim())));
    }
    let mut rel = Array2::zeros((pairs.len(), 2));
    for (k, &(i, j)) in pairs.iter().enumerate() {
        rel[[k, 0]] = last_positions[[j, 0]] - last_positions[[i, 0]];
        rel[[k, 1]] = last_positions[[j, 1]] - last_positions[[i, 1]];
    }
    let per_pair = |m: &Array2<f64>| Array2::from_shape_fn((pairs.len(), 1), |(k, _)| m[[pairs[k].0, pairs[k].1]]);

    let rel = g.constant(rel);
    let rel_emb = l.pool_mlp1.forward(g, store, rel);
    let js: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let h_j = g.gather_rows(hidden, &js);
    let cat = g.concat_cols(&[rel_emb, h_j]);
    let out = l.pool_mlp2.forward(g, store, cat);
    let weighted = match attention {
        PairAttention::None => out,
        PairAttention::Fixed(w) => {
            let w = g.constant(per_pair(&w));
            g.mul(out, w)
        }
        PairAttention::SoftFromCosines(cos) => {
            let (cw, cb) = l.soft.expect("soft attention parameters");
            let cw = g.param(store, cw);
            let cb = g.param(store, cb);
            let cos = g.constant(per_pair(&cos));
            let a = g.mul(cos, cw);
            let a = g.add(a, cb);
            let a = g.sigmoid(a);
            g.mul(out, a)
        }
    };
    g.segment_max(weighted, &groups)
}

/// Pooling with attention derived from the batch's own last observed step.
fn pool_from_batch(g: &mut Graph, params: &ModelParams, hidden: Var, batch: &SceneBatch) -> Var {
    let cfg = &params.config;
    let last = batch.last_positions();
    let vel = batch.last_displacement() / cfg.dt;
    let n = batch.len();
    let mut cos = Array2::ones((n, n));
    for seg in &batch.segments {
        let b = bearing_cosines(last.slice(s![seg.clone(), ..]), vel.slice(s![seg.clone(), ..]));
        cos.slice_mut(s![seg.clone(), seg.clone()]).assign(&b.cosines);
    }
    let attention = match cfg.attention {
        AttentionKind::None => PairAttention::None,
        AttentionKind::Hard => {
            let thr = cfg.hard_threshold;
            PairAttention::Fixed(cos.mapv(|c| if c > thr { 1.0 } else { 0.0 }))
        }
        AttentionKind::Soft => PairAttention::SoftFromCosines(cos),
    };
    pool_graph(g, params, hidden, &last, &batch.segments, attention)
}

fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (n, l, d) = x.dim();
    x.to_shape((n, l * d)).expect("contiguous").to_owned()
}

fn lvp_graph(g: &mut Graph, params: &ModelParams, features: &KinematicFeatures, branch: Branch) -> Vec<(Var, Var)> {
    let (l, store) = (&params.layout, &params.store);
    let nets: &[LvpNet] = match branch {
        Branch::Observed => &l.lvp_observed,
        Branch::GroundTruth => &l.lvp_groundtruth,
    };
    let ld = params.config.latent_dim_per_kind;
    params
        .config
        .lvp
        .kinds()
        .iter()
        .zip(nets)
        .map(|(kind, net)| {
            let input = match kind {
                FeatureKind::Positions => flatten(&features.positions),
                FeatureKind::Velocities => flatten(&features.velocities),
                FeatureKind::Accelerations => flatten(&features.accelerations),
            };
            let x = g.constant(input);
            let h = net.hidden.forward_relu(g, store, x);
            let out = net.out.forward(g, store, h);
            let mean = g.slice_cols(out, 0, ld);
            let logvar = g.slice_cols(out, ld, ld);
            let logvar = g.clamp(logvar, LOGVAR_RANGE.0, LOGVAR_RANGE.1);
            let half = g.scale(logvar, 0.5);
            let std = g.exp(half);
            (mean, std)
        })
        .collect()
}

/// Kinematic inputs of one branch, with positions taken relative to the last observed
/// position so the predictor is translation invariant.
pub(crate) fn branch_features(batch: &SceneBatch, branch: Branch, dt: f64) -> Result<KinematicFeatures> {
    let last = batch.last_positions().insert_axis(Axis(1));
    let segment = match branch {
        Branch::Observed => &batch.observed,
        Branch::GroundTruth => batch
            .future
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("ground-truth latent source needs the future segment".into()))?,
    };
    let rel = segment - &last;
    kinematic_features(rel.view(), dt)
}

/// Graph nodes shared by every sample of a batch.
pub(crate) struct Encoded {
    pub hidden: Var,
    pub pooled: Var,
    pub observed: Vec<(Var, Var)>,
    pub groundtruth: Vec<(Var, Var)>,
    pub last_positions: Array2<f64>,
    pub last_displacement: Array2<f64>,
}

pub(crate) fn encode_batch(
    g: &mut Graph,
    params: &ModelParams,
    batch: &SceneBatch,
    branches: &[Branch],
) -> Result<Encoded> {
    let steps = step_displacements(batch.observed.view());
    let hidden = encode_graph(g, params, &steps);
    let pooled = pool_from_batch(g, params, hidden, batch);
    let mut observed = Vec::new();
    let mut groundtruth = Vec::new();
    if params.config.lvp != LvpMode::None {
        for &b in branches {
            let feats = branch_features(batch, b, params.config.dt)?;
            let gs = lvp_graph(g, params, &feats, b);
            match b {
                Branch::Observed => observed = gs,
                Branch::GroundTruth => groundtruth = gs,
            }
        }
    }
    Ok(Encoded {
        hidden,
        pooled,
        observed,
        groundtruth,
        last_positions: batch.last_positions(),
        last_displacement: batch.last_displacement(),
    })
}

/// `concat_k(mean_k + std_k * eps_k) ++ noise`.
pub fn latent_graph(g: &mut Graph, gaussians: &[(Var, Var)], eps: &[Array2<f64>], noise: Array2<f64>) -> Var {
    let mut parts = Vec::with_capacity(gaussians.len() + 1);
    for (&(mean, std), e) in gaussians.iter().zip(eps) {
        let e = g.constant(e.clone());
        let se = g.mul(std, e);
        parts.push(g.add(mean, se));
    }
    parts.push(g.constant(noise));
    g.concat_cols(&parts)
}

/// Draws `eps` for each Gaussian block then the noise tail, in that order.
pub(crate) fn draw_latent_noise(
    rng: &mut impl Rng,
    n: usize,
    block_widths: &[usize],
    z_dim: usize,
    sampling: Sampling,
) -> (Vec<Array2<f64>>, Array2<f64>) {
    let noise_w = z_dim - block_widths.iter().sum::<usize>();
    let mut draw = |w: usize| match sampling {
        Sampling::Random => Array2::from_shape_simple_fn((n, w), || StandardNormal.sample(rng)),
        Sampling::Mean => Array2::zeros((n, w)),
    };
    let eps = block_widths.iter().map(|&w| draw(w)).collect();
    let noise = draw(noise_w);
    (eps, noise)
}

/// Decoder rollout; returns per-step displacement nodes `[rows x 2]`.
pub(crate) fn decode_graph(
    g: &mut Graph,
    params: &ModelParams,
    hidden: Var,
    pooled: Var,
    z: Var,
    last_displacement: &Array2<f64>,
) -> Vec<Var> {
    let (l, store) = (&params.layout, &params.store);
    let cfg = &params.config;
    let ctx = g.concat_cols(&[hidden, pooled, z]);
    let mut h = l.dec_init.forward(g, store, ctx);
    let rows = last_displacement.nrows();
    let mut c = g.constant(Array2::zeros((rows, cfg.hidden_dim)));
    let mut prev = g.constant(last_displacement.clone());
    let mut out = Vec::with_capacity(cfg.pred_len);
    for _ in 0..cfg.pred_len {
        let e = l.embed.forward_relu(g, store, prev);
        (h, c) = l.decoder.step(g, store, e, h, c);
        let d = l.head.forward(g, store, h);
        out.push(d);
        prev = d;
    }
    out
}

fn stack_steps(g: &Graph, steps: &[Var]) -> Array3<f64> {
    let n = g.value(steps[0]).nrows();
    let mut out = Array3::zeros((n, steps.len(), 2));
    for (t, v) in steps.iter().enumerate() {
        out.slice_mut(s![.., t, ..]).assign(g.value(*v));
    }
    out
}

fn check_finite(x: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if x.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Final encoder hidden state per pedestrian, `[n x hidden_dim]`. Step 0's displacement
/// is zero by construction and is ignored if supplied non-zero.
pub fn encode(displacements: ArrayView3<f64>, params: &ModelParams) -> Result<Array2<f64>> {
    let (n, len, d) = displacements.dim();
    if d != 2 || len < 2 || n == 0 {
        return Err(Error::Shape(format!("displacements must be [n x L>=2 x 2], got {:?}", displacements.dim())));
    }
    check_finite(displacements.iter().copied(), "displacements")?;
    let steps: Vec<Array2<f64>> = (0..len)
        .map(|t| {
            if t == 0 {
                Array2::zeros((n, 2))
            } else {
                displacements.slice(s![.., t, ..]).to_owned()
            }
        })
        .collect();
    let mut g = Graph::new();
    let h = encode_graph(&mut g, params, &steps);
    Ok(g.value(h).clone())
}

/// Attention-weighted max pooling over the neighbours of each pedestrian, `[n x pool_dim]`.
/// A pedestrian without neighbours pools to zero.
pub fn social_pool(
    hidden: ArrayView2<f64>,
    last_positions: ArrayView2<f64>,
    attn: &AttentionWeights,
    params: &ModelParams,
) -> Result<Array2<f64>> {
    let n = hidden.nrows();
    if n == 0 || last_positions.dim() != (n, 2) || attn.weights.dim() != (n, n) || hidden.ncols() != params.config.hidden_dim {
        return Err(Error::Shape("social_pool: hidden [n x H], positions [n x 2], weights [n x n]".into()));
    }
    let mut g = Graph::new();
    let h = g.constant(hidden.to_owned());
    let attention = match attn.kind {
        AttentionKind::None => PairAttention::None,
        _ => PairAttention::Fixed(attn.weights.clone()),
    };
    let v = pool_graph(&mut g, params, h, &last_positions.to_owned(), &[0..n], attention);
    Ok(g.value(v).clone())
}

/// One diagonal Gaussian per configured input kind.
pub fn lvp_forward(features: &KinematicFeatures, branch: Branch, params: &ModelParams) -> Result<Vec<DiagonalGaussian>> {
    let cfg = &params.config;
    if cfg.lvp == LvpMode::None {
        return Err(Error::LvpDisabled);
    }
    let want = match branch {
        Branch::Observed => cfg.obs_len,
        Branch::GroundTruth => cfg.pred_len,
    };
    if features.len() != want {
        return Err(Error::Shape(format!("{branch:?} branch expects {want} steps, got {}", features.len())));
    }
    let mut g = Graph::new();
    lvp_graph(&mut g, params, features, branch)
        .into_iter()
        .map(|(m, s)| DiagonalGaussian::new(g.value(m).clone(), g.value(s).clone()))
        .collect()
}

/// Reparameterized latent code `[n x z_dim]`: each Gaussian contributes `mean + std * eps`,
/// then standard-normal noise fills the remaining width.
pub fn sample_latent(
    gaussians: &[DiagonalGaussian],
    n: usize,
    rng: &mut impl Rng,
    params: &ModelParams,
    sampling: Sampling,
) -> Result<Array2<f64>> {
    let z_dim = params.config.z_dim();
    let widths: Vec<usize> = gaussians.iter().map(|d| d.dim().1).collect();
    if widths.iter().sum::<usize>() > z_dim {
        return Err(Error::Shape("Gaussian widths exceed z_dim".into()));
    }
    if gaussians.iter().any(|d| d.dim().0 != n) {
        return Err(Error::Shape(format!("every Gaussian must have {n} rows")));
    }
    let (eps, noise) = draw_latent_noise(rng, n, &widths, z_dim, sampling);
    let mut parts: Vec<Array2<f64>> = gaussians
        .iter()
        .zip(&eps)
        .map(|(d, e)| &d.mean + &(&d.std * e))
        .collect();
    parts.push(noise);
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("equal rows"))
}

pub fn decode_rollout(
    hidden: ArrayView2<f64>,
    pooled: ArrayView2<f64>,
    z: ArrayView2<f64>,
    last_obs_position: ArrayView2<f64>,
    last_obs_displacement: ArrayView2<f64>,
    params: &ModelParams,
) -> Result<PredictionSample> {
    let cfg = &params.config;
    let n = hidden.nrows();
    let ok = hidden.dim() == (n, cfg.hidden_dim)
        && pooled.dim() == (n, cfg.pool_dim())
        && z.dim() == (n, cfg.z_dim())
        && last_obs_position.dim() == (n, 2)
        && last_obs_displacement.dim() == (n, 2);
    if !ok {
        return Err(Error::Shape("decode_rollout: inconsistent input shapes".into()));
    }
    let mut g = Graph::new();
    let h = g.constant(hidden.to_owned());
    let p = g.constant(pooled.to_owned());
    let zv = g.constant(z.to_owned());
    let steps = decode_graph(&mut g, params, h, p, zv, &last_obs_displacement.to_owned());
    let disp = stack_steps(&g, &steps);
    Ok(PredictionSample::from_displacements(&last_obs_position.to_owned(), disp))
}

/// Draws one future per rng. The encoder, pooling and latent distribution are computed
/// once; sample `s` depends only on `rngs[s]`.
pub fn sample_futures<R: Rng>(
    window: &ObservationWindow,
    params: &ModelParams,
    source: LatentSource,
    sampling: Sampling,
    rngs: &mut [R],
) -> Result<Vec<PredictionSample>> {
    let with_future = source == LatentSource::GroundTruth;
    let batch = SceneBatch::from_windows(&[window], params, with_future)?;
    let branch = match source {
        LatentSource::Observed => vec![Branch::Observed],
        LatentSource::GroundTruth => vec![Branch::GroundTruth],
        LatentSource::NoiseOnly => vec![],
    };
    let mut g = Graph::new();
    let enc = encode_batch(&mut g, params, &batch, &branch)?;
    let gs = match source {
        LatentSource::Observed => &enc.observed,
        LatentSource::GroundTruth => &enc.groundtruth,
        LatentSource::NoiseOnly => &Vec::new(),
    };
    let gaussians: Vec<DiagonalGaussian> = gs
        .iter()
        .map(|&(m, s)| DiagonalGaussian::new(g.value(m).clone(), g.value(s).clone()))
        .collect::<Result<_>>()?;
    let hidden = g.value(enc.hidden);
    let pooled = g.value(enc.pooled);
    let n = batch.len();
    rngs.iter_mut()
        .map(|rng| {
            let z = sample_latent(&gaussians, n, rng, params, sampling)?;
            decode_rollout(
                hidden.view(),
                pooled.view(),
                z.view(),
                enc.last_positions.view(),
                enc.last_displacement.view(),
                params,
            )
        })
        .collect()
}

/// One future for every pedestrian of `window`.
pub fn generator_forward(
    window: &ObservationWindow,
    params: &ModelParams,
    rng: &mut impl Rng,
    source: LatentSource,
) -> Result<PredictionSample> {
    let mut one = [rng];
    Ok(sample_futures(window, params, source, Sampling::Random, &mut one)?.remove(0))
}
