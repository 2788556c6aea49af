use ndarray::{Array1, Array2, ArrayView3};

use super::generator::step_displacements;
use super::ModelParams;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Per-pedestrian realness in (0, 1) from a sequence of displacement nodes `[n x 2]`.
/// Pedestrians are scored independently.
pub(crate) fn discriminate(g: &mut Graph, params: &ModelParams, steps: &[Var]) -> Var {
    let (l, store) = (&params.layout, &params.store);
    let n = g.shape(steps[0]).0;
    let hd = params.config.hidden_dim;
    let mut h = g.constant(Array2::zeros((n, hd)));
    let mut c = g.constant(Array2::zeros((n, hd)));
    for &d in steps {
        let e = l.disc_embed.forward_relu(g, store, d);
        (h, c) = l.disc_encoder.step(g, store, e, h, c);
    }
    let f = l.disc_fc1.forward_relu(g, store, h);
    let logit = l.disc_fc2.forward(g, store, f);
    g.sigmoid(logit)
}

/// Scores full trajectories `[n x T x 2]` of absolute positions.
pub fn discriminator_score(full_trajectory: ArrayView3<f64>, params: &ModelParams) -> Result<Array1<f64>> {
    let (n, len, d) = full_trajectory.dim();
    if n == 0 || len < 2 || d != 2 {
        return Err(Error::Shape(format!("trajectory must be [n x T>=2 x 2], got {:?}", full_trajectory.dim())));
    }
    if full_trajectory.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("trajectory".into()));
    }
    let mut g = Graph::new();
    let steps: Vec<Var> = step_displacements(full_trajectory)
        .into_iter()
        .map(|s| g.constant(s))
        .collect();
    let scores = discriminate(&mut g, params, &steps);
    Ok(g.value(scores).column(0).to_owned())
}
