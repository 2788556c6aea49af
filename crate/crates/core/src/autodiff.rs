//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value in a [`Graph`] is a 2-D array. Binary elementwise ops
//! broadcast a dimension of length 1 against the other operand, and the
//! backward pass sums gradients back over the broadcast axes. Learnable
//! weights live in a [`ParamStore`]; each parameter is bound at most once
//! per graph so its gradient is accumulated in a single leaf.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of weight matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array2<f64>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    SegmentMax(Var, Vec<Option<usize>>),
    RowMin(Var, Vec<usize>),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    Reshape(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize), op: &str) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("{op}: cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn reduce_to(grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = grad;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "scalar() on non-scalar node");
        val[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked, for differentiating with respect to inputs.
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(va.dim(), vb.dim(), name);
        let va = va.broadcast(shape).expect("broadcast");
        let vb = vb.broadcast(shape).expect("broadcast");
        Zip::from(&va).and(&vb).map_collect(|&x, &y| f(x, y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, "add", |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, "sub", |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, "mul", |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, "div", |x, y| x / y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Div(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).mapv(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), f64::ln)
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: col mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    /// Row gather: `out[k] = a[indices[k]]`.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), indices);
        let rg = self.rg(a);
        self.push(value, Op::Gather(a, indices.to_vec()), rg)
    }

    /// Column-wise max over each group of rows. Empty groups produce a zero row.
    pub fn segment_max(&mut self, a: Var, segments: &[Vec<usize>]) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let mut value = Array2::zeros((segments.len(), cols));
        let mut argmax = vec![None; segments.len() * cols];
        for (s, rows) in segments.iter().enumerate() {
            for c in 0..cols {
                let mut best: Option<(usize, f64)> = None;
                for &r in rows {
                    let x = src[[r, c]];
                    if best.is_none_or(|(_, b)| x > b) {
                        best = Some((r, x));
                    }
                }
                if let Some((r, x)) = best {
                    value[[s, c]] = x;
                    argmax[s * cols + c] = Some(r);
                }
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SegmentMax(a, argmax), rg)
    }

    /// Minimum of each row, as an `[r x 1]` column.
    pub fn row_min(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = Array2::zeros((src.nrows(), 1));
        let mut argmin = Vec::with_capacity(src.nrows());
        for (r, row) in src.outer_iter().enumerate() {
            let (idx, &m) = row
                .iter()
                .enumerate()
                .fold((0, &f64::INFINITY), |acc, (i, x)| if *x < *acc.1 { (i, x) } else { acc });
            value[[r, 0]] = m;
            argmin.push(idx);
        }
        let rg = self.rg(a);
        self.push(value, Op::RowMin(a, argmin), rg)
    }

    /// Row sums, as an `[r x 1]` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Array2::from_elem((1, 1), v.sum() / v.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a);
        let flat: Vec<f64> = v.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), flat).expect("reshape: size mismatch");
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward() needs a scalar root");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        self.acc(&mut grads, *b, reduce_to(g.clone(), self.shape(*b)));
                    }
                    self.acc(&mut grads, *a, reduce_to(g, self.shape(*a)));
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        self.acc(&mut grads, *b, reduce_to(-&g, self.shape(*b)));
                    }
                    self.acc(&mut grads, *a, reduce_to(g, self.shape(*a)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        self.acc(&mut grads, *a, reduce_to(&g * vb, va.dim()));
                    }
                    if self.rg(*b) {
                        self.acc(&mut grads, *b, reduce_to(&g * va, vb.dim()));
                    }
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        self.acc(&mut grads, *a, reduce_to(&g / vb, va.dim()));
                    }
                    if self.rg(*b) {
                        // d(a/b)/db = -y / b
                        let gb = -(&g * y) / vb;
                        self.acc(&mut grads, *b, reduce_to(gb, vb.dim()));
                    }
                }
                Op::Scale(a, c) => self.acc(&mut grads, *a, g * *c),
                Op::AddScalar(a) => self.acc(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let ga = Zip::from(&g).and(y).map_collect(|&g, &y| g * y * (1.0 - y));
                    self.acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = Zip::from(&g).and(y).map_collect(|&g, &y| g * (1.0 - y * y));
                    self.acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = Zip::from(&g).and(x).map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 });
                    self.acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => self.acc(&mut grads, *a, g * y),
                Op::Ln(a) => {
                    let ga = g / self.value(*a);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = Zip::from(&g)
                        .and(y)
                        .map_collect(|&g, &y| if y > 0.0 { 0.5 * g / y } else { 0.0 });
                    self.acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g * self.value(*a) * 2.0;
                    self.acc(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    let ga = Zip::from(&g)
                        .and(x)
                        .map_collect(|&g, &x| if x >= *lo && x <= *hi { g } else { 0.0 });
                    self.acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        if self.rg(p) {
                            self.acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        if self.rg(p) {
                            self.acc(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        }
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (k, &r) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(r);
                        row += &g.row(k);
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::SegmentMax(a, argmax) => {
                    let cols = g.ncols();
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (k, r) in argmax.iter().enumerate() {
                        if let Some(r) = r {
                            let (s, c) = (k / cols, k % cols);
                            ga[[*r, c]] += g[[s, c]];
                        }
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::RowMin(a, argmin) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (r, &c) in argmin.iter().enumerate() {
                        ga[[r, c]] = g[[r, 0]];
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let ga = g.broadcast(self.shape(*a)).expect("broadcast").to_owned();
                    self.acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let shape = self.shape(*a);
                    let ga = Array2::from_elem(shape, g[[0, 0]] / (shape.0 * shape.1) as f64);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => self.acc(&mut grads, *a, g.t().to_owned()),
                Op::Reshape(a) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let ga = Array2::from_shape_vec(self.shape(*a), flat).expect("reshape");
                    self.acc(&mut grads, *a, ga);
                }
            }
        }

        Gradients {
            grads,
            bound: self.bound.clone(),
        }
    }

    fn acc(&self, grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    bound: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of a tracked leaf. `None` when the root does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.bound.get(&id).and_then(|v| self.wrt(*v))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of d(root)/d(input) for a graph builder.
    fn check_grad(x0: Array2<f64>, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let x = g.input(x0.clone());
        let y = build(&mut g, x);
        let grads = g.backward(y);
        let analytic = grads.wrt(x).cloned().unwrap_or_else(|| Array2::zeros(x0.dim()));

        let h = 1e-6;
        for idx in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                *xp.iter_mut().nth(idx).unwrap() += delta;
                let mut g = Graph::new();
                let x = g.constant(xp);
                let y = build(&mut g, x);
                g.scalar(y)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = *analytic.iter().nth(idx).unwrap();
            let scale = fd.abs().max(an.abs()).max(1e-3);
            assert!((fd - an).abs() / scale < 1e-5, "entry {idx}: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn elementwise_ops() {
        let x0 = array![[0.3, -0.7, 1.2], [0.9, 0.4, -0.2]];
        check_grad(x0.clone(), |g, x| {
            let a = g.sigmoid(x);
            let b = g.tanh(x);
            let c = g.mul(a, b);
            let d = g.exp(c);
            let e = g.square(d);
            g.sum(e)
        });
        check_grad(x0.mapv(f64::abs), |g, x| {
            let a = g.ln(x);
            let b = g.sqrt(x);
            let c = g.div(a, b);
            g.mean(c)
        });
    }

    #[test]
    fn broadcasting_ops() {
        let x0 = array![[0.3, -0.7, 1.2], [0.9, 0.4, -0.2]];
        check_grad(array![[0.5, -1.5, 2.0]], |g, b| {
            let x = g.constant(x0.clone());
            let y = g.add(x, b);
            let z = g.mul(y, b);
            let w = g.div(z, b);
            g.sum(w)
        });
        check_grad(array![[0.8]], |g, s| {
            let x = g.constant(x0.clone());
            let y = g.mul(x, s);
            let z = g.sub(y, s);
            let z = g.sigmoid(z);
            g.sum(z)
        });
        check_grad(array![[0.8], [1.3]], |g, col| {
            let x = g.constant(x0.clone());
            let y = g.mul(x, col);
            let y = g.tanh(y);
            g.sum(y)
        });
    }

    #[test]
    fn structural_ops() {
        let w0 = array![[0.1, 0.2], [-0.3, 0.5], [0.7, -0.4]];
        check_grad(w0, |g, w| {
            let x = g.constant(array![[1.0, 2.0, -1.0], [0.5, -0.5, 0.25]]);
            let y = g.matmul(x, w);
            let y2 = g.gather_rows(y, &[1, 0, 1]);
            let c = g.concat_cols(&[y2, y2]);
            let sl = g.slice_cols(c, 1, 2);
            let r = g.concat_rows(&[sl, sl]);
            let t = g.transpose(r);
            let rs = g.reshape(t, 3, 4);
            let m = g.segment_max(rs, &[vec![0, 2], vec![1], vec![]]);
            let mn = g.row_min(m);
            let sc = g.sum_cols(m);
            let a = g.sum(mn);
            let b = g.mean(sc);
            let tot = g.add(a, b);
            g.scale(tot, 1.5)
        });
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new();
        let id = store.insert("w", array![[2.0]]);
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let y = g.mul(a, b);
        let grads = g.backward(y);
        assert_eq!(grads.param(id).unwrap()[[0, 0]], 4.0);
    }

    #[test]
    fn empty_segment_is_zero() {
        let mut g = Graph::new();
        let x = g.input(array![[-3.0, -1.0]]);
        let m = g.segment_max(x, &[vec![]]);
        assert_eq!(g.value(m), &array![[0.0, 0.0]]);
        let s = g.sum(m);
        let grads = g.backward(s);
        assert!(grads.wrt(x).is_none_or(|d| d.iter().all(|v| *v == 0.0)));
    }
}
