//! Adversarial, variety, latent-distribution (KL) and total objectives.
//!
//! Each objective has a graph form used during training and a plain form over arrays.

use ndarray::{Array2, ArrayView3};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::DiagonalGaussian;

/// Scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the variety term.
    pub alpha: f64,
    /// Weight of the KL term.
    pub beta: f64,
    /// Samples drawn per window for the variety term.
    pub variety_m: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 10.0,
            variety_m: 20,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || self.variety_m == 0 {
            return Err(Error::Config("need alpha, beta >= 0 and variety_m >= 1".into()));
        }
        Ok(())
    }
}

fn log_clamped(g: &mut Graph, x: Var) -> Var {
    let c = g.clamp(x, SCORE_EPS, 1.0 - SCORE_EPS);
    g.ln(c)
}

/// `-mean(log D(real)) - mean(log(1 - D(fake)))`
pub fn discriminator_loss_graph(g: &mut Graph, real: Var, fake: Var) -> Var {
    let lr = log_clamped(g, real);
    let lr = g.mean(lr);
    let one_minus = g.scale(fake, -1.0);
    let one_minus = g.add_scalar(one_minus, 1.0);
    let lf = log_clamped(g, one_minus);
    let lf = g.mean(lf);
    let s = g.add(lr, lf);
    g.scale(s, -1.0)
}

/// Non-saturating generator objective `-mean(log D(fake))`.
pub fn generator_adv_loss_graph(g: &mut Graph, fake: Var) -> Var {
    let l = log_clamped(g, fake);
    let l = g.mean(l);
    g.scale(l, -1.0)
}

/// Mean over pedestrians of the smallest per-sample L2 error, from squared errors `[n x m]`.
pub fn variety_from_sq_errors(g: &mut Graph, sq_errors: Var) -> Var {
    let norms = g.sqrt(sq_errors);
    let best = g.row_min(norms);
    g.mean(best)
}

/// Variety loss with ground truth and samples flattened to `[n x 2T]`.
pub fn variety_graph(g: &mut Graph, ground_truth: Var, samples: &[Var]) -> Var {
    let cols: Vec<Var> = samples
        .iter()
        .map(|&s| {
            let d = g.sub(s, ground_truth);
            let d = g.square(d);
            g.sum_cols(d)
        })
        .collect();
    let sq = g.concat_cols(&cols);
    variety_from_sq_errors(g, sq)
}

/// `sum_k KL(N(mean_k, std_k) || N(mean_hat_k, std_hat_k))` averaged over pedestrians.
pub fn kl_graph(g: &mut Graph, observed: &[(Var, Var)], groundtruth: &[(Var, Var)]) -> Var {
    let n = g.shape(observed[0].0).0 as f64;
    let mut terms = Vec::with_capacity(observed.len());
    for (&(mu, sigma), &(mu_hat, sigma_hat)) in observed.iter().zip(groundtruth) {
        let log_ratio = {
            let a = g.ln(sigma_hat);
            let b = g.ln(sigma);
            g.sub(a, b)
        };
        let var = g.square(sigma);
        let diff = g.sub(mu, mu_hat);
        let diff2 = g.square(diff);
        let num = g.add(var, diff2);
        let den = g.square(sigma_hat);
        let den = g.scale(den, 2.0);
        let frac = g.div(num, den);
        let t = g.add(log_ratio, frac);
        let t = g.add_scalar(t, -0.5);
        terms.push(g.sum(t));
    }
    let total = terms
        .into_iter()
        .reduce(|a, b| g.add(a, b))
        .expect("at least one Gaussian");
    g.scale(total, 1.0 / n)
}

pub fn total_loss_graph(g: &mut Graph, adv: Var, variety: Var, kl: Option<Var>, w: &LossWeights) -> Var {
    let v = g.scale(variety, w.alpha);
    let t = g.add(adv, v);
    match kl {
        Some(kl) => {
            let k = g.scale(kl, w.beta);
            g.add(t, k)
        }
        None => t,
    }
}

fn check_scores(s: &[f64], what: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} scores are empty")));
    }
    if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument(format!("{what} scores must lie in [0, 1]")));
    }
    Ok(())
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column")
}

/// Returns `(d_loss, g_loss)`.
pub fn adversarial_losses(scores_real: &[f64], scores_fake: &[f64]) -> Result<(f64, f64)> {
    check_scores(scores_real, "real")?;
    check_scores(scores_fake, "fake")?;
    let mut g = Graph::new();
    let r = g.constant(column(scores_real));
    let f = g.constant(column(scores_fake));
    let d = discriminator_loss_graph(&mut g, r, f);
    let gl = generator_adv_loss_graph(&mut g, f);
    Ok((g.scalar(d), g.scalar(gl)))
}

fn flat(x: ArrayView3<f64>) -> Array2<f64> {
    let (n, t, d) = x.dim();
    x.to_owned().into_shape_with_order((n, t * d)).expect("contiguous")
}

pub fn variety_loss(ground_truth: ArrayView3<f64>, samples: &[ndarray::Array3<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("variety loss needs at least one sample".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.dim() != ground_truth.dim()) {
        return Err(Error::Shape(format!("sample {:?} vs ground truth {:?}", s.dim(), ground_truth.dim())));
    }
    let mut g = Graph::new();
    let gt = g.constant(flat(ground_truth));
    let vs: Vec<Var> = samples.iter().map(|s| g.constant(flat(s.view()))).collect();
    let v = variety_graph(&mut g, gt, &vs);
    Ok(g.scalar(v))
}

pub fn kl_loss(observed: &[DiagonalGaussian], groundtruth: &[DiagonalGaussian]) -> Result<f64> {
    if observed.len() != groundtruth.len() || observed.is_empty() {
        return Err(Error::Shape(format!(
            "need equally many (>= 1) Gaussians, got {} and {}",
            observed.len(),
            groundtruth.len()
        )));
    }
    for (a, b) in observed.iter().zip(groundtruth) {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!("Gaussian dims {:?} vs {:?}", a.dim(), b.dim())));
        }
        if a.std.iter().chain(b.std.iter()).any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("standard deviations must be > 0".into()));
        }
    }
    let mut g = Graph::new();
    let mut bind = |d: &DiagonalGaussian| (g.constant(d.mean.clone()), g.constant(d.std.clone()));
    let o: Vec<_> = observed.iter().map(&mut bind).collect();
    let t: Vec<_> = groundtruth.iter().map(&mut bind).collect();
    let kl = kl_graph(&mut g, &o, &t);
    Ok(g.scalar(kl))
}

pub fn total_loss(adv_g: f64, variety: f64, kl: f64, weights: &LossWeights) -> f64 {
    adv_g + weights.alpha * variety + weights.beta * kl
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};
    use proptest::prelude::*;

    fn gauss(mean: f64, std: f64, d: usize) -> DiagonalGaussian {
        DiagonalGaussian::new(Array2::from_elem((1, d), mean), Array2::from_elem((1, d), std)).unwrap()
    }

    #[test]
    fn adversarial_closed_forms() {
        let (d, g) = adversarial_losses(&[0.5, 0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(d, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(g, 2f64.ln(), epsilon = 1e-12);

        let (d, _) = adversarial_losses(&[1.0 - 1e-7], &[1e-7]).unwrap();
        assert!(d < 1e-6);
        let (d, g) = adversarial_losses(&[1.0], &[0.0]).unwrap();
        assert!(d.is_finite() && g.is_finite());
        let (_, g) = adversarial_losses(&[0.5], &[1.0]).unwrap();
        assert!(g < 1e-6);
        assert!(adversarial_losses(&[1.5], &[0.5]).is_err());
    }

    #[test]
    fn variety_takes_per_pedestrian_min() {
        // One pedestrian, T = 1: errors 0.5, 0.2, 0.9 along x.
        let gt = Array3::zeros((1, 1, 2));
        let samples: Vec<Array3<f64>> = [0.5, 0.2, 0.9]
            .iter()
            .map(|e| Array3::from_shape_vec((1, 1, 2), vec![*e, 0.0]).unwrap())
            .collect();
        assert_abs_diff_eq!(variety_loss(gt.view(), &samples).unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(variety_loss(gt.view(), &[gt.clone()]).unwrap(), 0.0);

        let single = Array3::from_shape_vec((1, 2, 2), vec![0.3, 0.4, 0.0, 0.0]).unwrap();
        let gt2 = Array3::zeros((1, 2, 2));
        assert_abs_diff_eq!(variety_loss(gt2.view(), &[single]).unwrap(), 0.5, epsilon = 1e-12);
        assert!(variety_loss(gt2.view(), &[gt]).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_loss(&[gauss(0.3, 1.7, 4)], &[gauss(0.3, 1.7, 4)]).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_loss(&[gauss(0.0, 1.0, 1)], &[gauss(1.0, 1.0, 1)]).unwrap(), 0.5, epsilon = 1e-12);
        let want = 0.5f64.ln() + 4.0 / 2.0 - 0.5;
        assert_abs_diff_eq!(kl_loss(&[gauss(0.0, 2.0, 1)], &[gauss(0.0, 1.0, 1)]).unwrap(), want, epsilon = 1e-12);
        assert_abs_diff_eq!(want, 0.8069, epsilon = 1e-4);
    }

    #[test]
    fn kl_rejects_bad_std() {
        let bad = DiagonalGaussian {
            mean: array![[0.0]],
            std: array![[0.0]],
        };
        assert!(kl_loss(&[bad], &[gauss(0.0, 1.0, 1)]).is_err());
        assert!(kl_loss(&[], &[]).is_err());
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_abs_diff_eq!(total_loss(0.69, 0.2, 0.01, &w), 0.99, epsilon = 1e-12);
        let w0 = LossWeights { beta: 0.0, ..w };
        assert_abs_diff_eq!(total_loss(0.69, 0.2, 5.0, &w0), 0.89, epsilon = 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
    }

    proptest! {
        #[test]
        fn kl_non_negative(
            m in prop::collection::vec(-3.0..3.0f64, 8),
            s in prop::collection::vec(0.05..4.0f64, 8),
        ) {
            let a = DiagonalGaussian::new(Array2::from_shape_vec((1, 4), m[..4].to_vec()).unwrap(),
                                          Array2::from_shape_vec((1, 4), s[..4].to_vec()).unwrap()).unwrap();
            let b = DiagonalGaussian::new(Array2::from_shape_vec((1, 4), m[4..].to_vec()).unwrap(),
                                          Array2::from_shape_vec((1, 4), s[4..].to_vec()).unwrap()).unwrap();
            prop_assert!(kl_loss(&[a.clone()], &[b]).unwrap() >= 0.0);
            prop_assert!(kl_loss(&[a.clone()], &[a]).unwrap().abs() < 1e-9);
        }

        #[test]
        fn extra_sample_never_hurts(
            gt in prop::collection::vec(-2.0..2.0f64, 12),
            s in prop::collection::vec(-2.0..2.0f64, 36),
        ) {
            let gt = Array3::from_shape_vec((2, 3, 2), gt).unwrap();
            let all: Vec<Array3<f64>> = s.chunks(12).map(|c| Array3::from_shape_vec((2, 3, 2), c.to_vec()).unwrap()).collect();
            let fewer = variety_loss(gt.view(), &all[..2]).unwrap();
            let more = variety_loss(gt.view(), &all).unwrap();
            prop_assert!(more <= fewer);
        }
    }
}
