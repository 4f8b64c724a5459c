//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Parameters live in a [`ParamStore`]; a [`Graph`] records operations for
//! one forward pass and [`Graph::backward`] returns gradients keyed by
//! [`ParamId`]. Every value is a 2-D matrix; vectors are `1 x n` rows.

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradients indexed by parameter; `None` for parameters the loss does not
/// touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Matrix {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0].get_or_insert_with(|| Matrix::zeros(shape))
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                *self.slot(ParamId(i), g.dim()) += g;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }
}

const LN_EPS: f64 = 1e-6;
/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

enum Op {
    Leaf,
    Param(ParamId),
    Gather { param: ParamId, rows: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Matrix, inv_std: Array1<f64> },
    Gelu(NodeId),
    Softmax(NodeId),
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SelectRows { x: NodeId, rows: Vec<usize> },
    SumRows(NodeId),
    Sigmoid(NodeId),
    BceSum { p: NodeId, labels: Vec<f64> },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Operation tape for a single forward pass.
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.store.get(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Rows of a parameter table. Gradients scatter back into the table.
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> NodeId {
        let table = self.store.get(id);
        let value = table.select(Axis(0), rows);
        self.push(
            value,
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let value = self.value(x) + self.value(row);
        self.push(value, Op::AddRow(x, row))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x) * factor;
        self.push(value, Op::Scale(x, factor))
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
        let value = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(gelu);
        self.push(value, Op::Gelu(x))
    }

    /// Row-wise softmax. Columns with `allowed[j] == false` get probability 0.
    pub fn softmax_rows(&mut self, x: NodeId, allowed: Option<&[bool]>) -> NodeId {
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let max = row
                .iter()
                .enumerate()
                .filter(|(j, _)| allowed.is_none_or(|m| m[*j]))
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if allowed.is_none_or(|m| m[j]) {
                    *v = (*v - max).exp();
                    total += *v;
                } else {
                    *v = 0.0;
                }
            }
            if total > 0.0 {
                row.mapv_inplace(|v| v / total);
            }
        }
        self.push(value, Op::Softmax(x))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat_cols row counts");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(0), &views).expect("concat_rows column counts");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn select_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let value = self.value(x).select(Axis(0), rows);
        self.push(
            value,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        )
    }

    /// Column sums as a `1 x n` row.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::SumRows(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Summed binary cross-entropy of an `n x 1` probability column against
    /// labels, as a `1 x 1` node.
    pub fn bce_sum(&mut self, p: NodeId, labels: &[f64]) -> NodeId {
        let pv = self.value(p);
        assert_eq!(pv.len(), labels.len(), "bce_sum length mismatch");
        let total: f64 = pv.iter().zip(labels).map(|(&q, &y)| bce_term(q, y)).sum();
        self.push(
            Matrix::from_elem((1, 1), total),
            Op::BceSum {
                p,
                labels: labels.to_vec(),
            },
        )
    }

    /// Back-propagates from a `1 x 1` node.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::ones((1, 1)));
        let mut out = Gradients::zeros_like(self.store);

        fn acc(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut grads[id.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    *out.slot(*id, g.dim()) += &g;
                }
                Op::Gather { param, rows } => {
                    let slot = out.slot(*param, self.store.get(*param).dim());
                    for (r, &row) in rows.iter().enumerate() {
                        let mut dst = slot.row_mut(row);
                        dst += &g.row(r);
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulNT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(x, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, grow);
                    acc(&mut grads, *x, g);
                }
                Op::Scale(x, f) => acc(&mut grads, *x, g * *f),
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gv;
                    let n = xhat.ncols() as f64;
                    let mean_d = dxhat.sum_axis(Axis(1)) / n;
                    let mean_dx = (&dxhat * xhat).sum_axis(Axis(1)) / n;
                    let mut dx = dxhat;
                    Zip::from(dx.rows_mut())
                        .and(xhat.rows())
                        .and(&mean_d)
                        .and(&mean_dx)
                        .and(inv_std)
                        .for_each(|mut row, xh, &md, &mdx, &is| {
                            Zip::from(&mut row).and(&xh).for_each(|d, &h| {
                                *d = is * (*d - md - h * mdx);
                            });
                        });
                    acc(&mut grads, *beta, gbeta);
                    acc(&mut grads, *gamma, ggamma);
                    acc(&mut grads, *x, dx);
                }
                Op::Gelu(x) => {
                    let mut d = self.value(*x).mapv(gelu_grad);
                    d *= &g;
                    acc(&mut grads, *x, d);
                }
                Op::Softmax(x) => {
                    let p = &node.value;
                    let dot = (&g * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let dx = p * &(&g - &dot);
                    acc(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let mut dx = Matrix::zeros(self.value(*x).dim());
                    dx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., at..at + w]).to_owned());
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![at..at + h, ..]).to_owned());
                        at += h;
                    }
                }
                Op::SelectRows { x, rows } => {
                    let mut dx = Matrix::zeros(self.value(*x).dim());
                    for (r, &row) in rows.iter().enumerate() {
                        let mut dst = dx.row_mut(row);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SumRows(x) => {
                    let rows = self.value(*x).nrows();
                    let dx = g.broadcast((rows, g.ncols())).expect("row broadcast").to_owned();
                    acc(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = y.mapv(|v| v * (1.0 - v)) * &g;
                    acc(&mut grads, *x, dx);
                }
                Op::BceSum { p, labels } => {
                    let up = g[[0, 0]];
                    let pv = self.value(*p);
                    let mut dp = Matrix::zeros(pv.dim());
                    for ((d, &q), &y) in dp.iter_mut().zip(pv.iter()).zip(labels) {
                        *d = up * bce_term_grad(q, y);
                    }
                    acc(&mut grads, *p, dp);
                }
            }
        }
        out
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

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Per-sentence binary cross-entropy with the probability clamped.
pub fn bce_term(p: f64, y: f64) -> f64 {
    let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}

fn bce_term_grad(p: f64, y: f64) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}
