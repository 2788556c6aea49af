//! Finite-difference kinematics, bearing-angle cosines and the attention weights built on them.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

/// Speeds below this are treated as stationary when computing bearings.
pub const MIN_SPEED: f64 = 1e-6;

/// Default field-of-view cutoff on the bearing cosine.
pub const HARD_THRESHOLD: f64 = -0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicFeatures {
    /// `[n x L x 2]`, meters
    pub positions: Array3<f64>,
    /// `[n x L x 2]`, m/s
    pub velocities: Array3<f64>,
    /// `[n x L x 2]`, m/s^2
    pub accelerations: Array3<f64>,
}

impl KinematicFeatures {
    pub fn len(&self) -> usize {
        self.positions.dim().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_peds(&self) -> usize {
        self.positions.dim().0
    }

    pub fn last_positions(&self) -> Array2<f64> {
        self.positions.slice(s![.., -1, ..]).to_owned()
    }

    pub fn last_velocities(&self) -> Array2<f64> {
        self.velocities.slice(s![.., -1, ..]).to_owned()
    }
}

/// Backward difference along the time axis; step 0 copies step 1.
fn time_derivative(x: &Array3<f64>, dt: f64) -> Array3<f64> {
    let (_, len, _) = x.dim();
    let mut d = Array3::zeros(x.dim());
    for t in 1..len {
        let diff = (&x.slice(s![.., t, ..]) - &x.slice(s![.., t - 1, ..])) / dt;
        d.slice_mut(s![.., t, ..]).assign(&diff);
    }
    let first = d.slice(s![.., 1, ..]).to_owned();
    d.slice_mut(s![.., 0, ..]).assign(&first);
    d
}

pub fn kinematic_features(positions: ArrayView3<f64>, dt: f64) -> Result<KinematicFeatures> {
    let (_, len, dims) = positions.dim();
    if dims != 2 {
        return Err(Error::Shape(format!("positions must be [n x L x 2], got last dim {dims}")));
    }
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 steps for a velocity, got {len}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("positions".into()));
    }
    let positions = positions.to_owned();
    let velocities = time_derivative(&positions, dt);
    let accelerations = time_derivative(&velocities, dt);
    Ok(KinematicFeatures {
        positions,
        velocities,
        accelerations,
    })
}

/// Cosines of the bearing angle of every pedestrian `j` seen from pedestrian `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingMatrix {
    /// `[n x n]`; entry `[i][j]` is the cosine between `v_i` and `p_j - p_i`.
    pub cosines: Array2<f64>,
}

impl BearingMatrix {
    pub fn len(&self) -> usize {
        self.cosines.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Degenerate entries (stationary `i`, co-located pair, diagonal) are 1.0.
pub fn bearing_cosines(last_positions: ArrayView2<f64>, last_velocities: ArrayView2<f64>) -> BearingMatrix {
    let n = last_positions.nrows();
    assert_eq!(last_velocities.nrows(), n, "positions/velocities row mismatch");
    let mut cosines = Array2::ones((n, n));
    for i in 0..n {
        let (vx, vy) = (last_velocities[[i, 0]], last_velocities[[i, 1]]);
        let speed = vx.hypot(vy);
        if speed < MIN_SPEED {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = last_positions[[j, 0]] - last_positions[[i, 0]];
            let dy = last_positions[[j, 1]] - last_positions[[i, 1]];
            let dist = dx.hypot(dy);
            if dist == 0.0 {
                continue;
            }
            cosines[[i, j]] = ((vx * dx + vy * dy) / (speed * dist)).clamp(-1.0, 1.0);
        }
    }
    BearingMatrix { cosines }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionKind {
    #[default]
    None,
    Hard,
    Soft,
}

impl AttentionKind {
    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::None => "none",
            AttentionKind::Hard => "hard",
            AttentionKind::Soft => "soft",
        }
    }
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttentionKind::None),
            "hard" => Ok(AttentionKind::Hard),
            "soft" => Ok(AttentionKind::Soft),
            _ => Err(Error::InvalidArgument(format!("unknown attention '{s}' (none|hard|soft)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `[n x n]` in `[0, 1]`; row `i` weighs the neighbours of `i`.
    pub weights: Array2<f64>,
    pub kind: AttentionKind,
}

pub fn no_attention(n: usize) -> AttentionWeights {
    AttentionWeights {
        weights: Array2::ones((n, n)),
        kind: AttentionKind::None,
    }
}

/// 1 where the cosine is strictly above `threshold`, else 0.
pub fn hard_attention(b: &BearingMatrix, threshold: f64) -> Result<AttentionWeights> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold must lie in [-1, 1], got {threshold}")));
    }
    Ok(AttentionWeights {
        weights: b.cosines.mapv(|c| if c > threshold { 1.0 } else { 0.0 }),
        kind: AttentionKind::Hard,
    })
}

/// `sigmoid(conv_weight * cos + conv_bias)`, a 1x1 convolution over the cosine field.
pub fn soft_attention(b: &BearingMatrix, conv_weight: f64, conv_bias: f64) -> AttentionWeights {
    AttentionWeights {
        weights: b.cosines.mapv(|c| sigmoid(conv_weight * c + conv_bias)),
        kind: AttentionKind::Soft,
    }
}
