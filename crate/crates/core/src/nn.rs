//! Linear and LSTM layers on top of the autodiff graph.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};

/// Fan-in scaled uniform init, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn kaiming_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / rows as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Square orthogonal matrix from Gram-Schmidt on a Gaussian draw.
pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    loop {
        let mut m: Array2<f64> = Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(rng));
        let mut ok = true;
        for c in 0..n {
            for p in 0..c {
                let proj = m.column(c).dot(&m.column(p));
                let prev = m.column(p).to_owned();
                m.column_mut(c).scaled_add(-proj, &prev);
            }
            let norm = m.column(c).dot(&m.column(c)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            m.column_mut(c).mapv_inplace(|x| x / norm);
        }
        if ok {
            return m;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let w = store.insert(format!("{name}.w"), kaiming_uniform(in_dim, out_dim, rng));
        let b = store.insert(format!("{name}.b"), Array2::zeros((1, out_dim)));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        g.add(y, b)
    }

    pub fn forward_relu(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let y = self.forward(g, store, x);
        g.relu(y)
    }
}

/// Stack of linear layers with ReLU after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        self.layers.iter().fold(x, |h, l| l.forward_relu(g, store, h))
    }
}

/// Single-layer LSTM cell, gate order input, forget, cell, output.
///
/// The kernel is `[(in + hidden) x 4 hidden]` applied to `[x, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut w = Array2::zeros((in_dim + hidden, 4 * hidden));
        w.slice_mut(s![..in_dim, ..]).assign(&kaiming_uniform(in_dim, 4 * hidden, rng));
        for gate in 0..4 {
            let block = orthogonal(hidden, rng);
            w.slice_mut(s![in_dim.., gate * hidden..(gate + 1) * hidden]).assign(&block);
        }
        let w = store.insert(format!("{name}.w"), w);
        let b = store.insert(format!("{name}.b"), Array2::zeros((1, 4 * hidden)));
        Self { w, b, in_dim, hidden }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var, c: Var) -> (Var, Var) {
        let hd = self.hidden;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xh = g.concat_cols(&[x, h]);
        let z = g.matmul(xh, w);
        let z = g.add(z, b);
        let i = g.slice_cols(z, 0, hd);
        let f = g.slice_cols(z, hd, hd);
        let u = g.slice_cols(z, 2 * hd, hd);
        let o = g.slice_cols(z, 3 * hd, hd);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let u = g.tanh(u);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c);
        let iu = g.mul(i, u);
        let c_next = g.add(fc, iu);
        let tc = g.tanh(c_next);
        let h_next = g.mul(o, tc);
        (h_next, c_next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = orthogonal(16, &mut rng);
        let qtq = q.t().dot(&q);
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kaiming_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = kaiming_uniform(24, 10, &mut rng);
        let bound = (6.0f64 / 24.0).sqrt();
        assert!(w.iter().all(|x| x.abs() <= bound));
    }
}
