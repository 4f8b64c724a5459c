//! Pre-norm Transformer encoder layer shared by the token encoder and the
//! inter-sentence stack.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::posenc::init_normal_table;

/// Layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

#[derive(Debug, Clone)]
pub struct TransformerLayer {
    dims: LayerDims,
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

pub(crate) fn ones_row(n: usize) -> Array2<f64> {
    Array2::ones((1, n))
}

pub(crate) fn zeros_row(n: usize) -> Array2<f64> {
    Array2::zeros((1, n))
}

impl TransformerLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, dims: LayerDims, std: f64, rng: &mut R) -> Self {
        assert!(dims.n_heads > 0 && dims.d_model.is_multiple_of(dims.n_heads), "d_model must divide into heads");
        let d = dims.d_model;
        let mut w = |name: &str, r: usize, c: usize, rng: &mut R| store_add(store, prefix, name, init_normal_table(r, c, std, rng));
        let wq = w("wq", d, d, rng);
        let wk = w("wk", d, d, rng);
        let wv = w("wv", d, d, rng);
        let wo = w("wo", d, d, rng);
        let w1 = w("w1", d, dims.d_ff, rng);
        let w2 = w("w2", dims.d_ff, d, rng);
        TransformerLayer {
            dims,
            ln1_g: store_add(store, prefix, "ln1_g", ones_row(d)),
            ln1_b: store_add(store, prefix, "ln1_b", zeros_row(d)),
            wq,
            bq: store_add(store, prefix, "bq", zeros_row(d)),
            wk,
            bk: store_add(store, prefix, "bk", zeros_row(d)),
            wv,
            bv: store_add(store, prefix, "bv", zeros_row(d)),
            wo,
            bo: store_add(store, prefix, "bo", zeros_row(d)),
            ln2_g: store_add(store, prefix, "ln2_g", ones_row(d)),
            ln2_b: store_add(store, prefix, "ln2_b", zeros_row(d)),
            w1,
            b1: store_add(store, prefix, "b1", zeros_row(dims.d_ff)),
            w2,
            b2: store_add(store, prefix, "b2", zeros_row(d)),
        }
    }

    pub fn params(&self) -> [ParamId; 16] {
        [
            self.ln1_g, self.ln1_b, self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo, self.ln2_g,
            self.ln2_b, self.w1, self.b1, self.w2, self.b2,
        ]
    }

    /// `x + MHA(LN(x))`, then `x + FF(LN(x))`. Keys with `allowed[j] ==
    /// false` are masked out of attention.
    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId, allowed: Option<&[bool]>) -> NodeId {
        let d = self.dims.d_model;
        let heads = self.dims.n_heads;
        let dh = d / heads;

        let g1 = g.param(self.ln1_g);
        let b1 = g.param(self.ln1_b);
        let h = g.layer_norm(x, g1, b1);
        let q = linear(g, h, self.wq, self.bq);
        let k = linear(g, h, self.wk, self.bk);
        let v = linear(g, h, self.wv, self.bv);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for head in 0..heads {
            let qh = g.slice_cols(q, head * dh, dh);
            let kh = g.slice_cols(k, head * dh, dh);
            let vh = g.slice_cols(v, head * dh, dh);
            let scores = g.matmul_nt(qh, kh);
            let scores = g.scale(scores, scale);
            let p = g.softmax_rows(scores, allowed);
            outs.push(g.matmul(p, vh));
        }
        let att = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
        let att = linear(g, att, self.wo, self.bo);
        let x = g.add(x, att);

        let g2 = g.param(self.ln2_g);
        let b2 = g.param(self.ln2_b);
        let h = g.layer_norm(x, g2, b2);
        let f = linear(g, h, self.w1, self.b1);
        let f = g.gelu(f);
        let f = linear(g, f, self.w2, self.b2);
        g.add(x, f)
    }
}

fn store_add(store: &mut ParamStore, prefix: &str, name: &str, value: Array2<f64>) -> ParamId {
    store.add(format!("{prefix}.{name}"), value)
}

/// `x W + b`.
pub fn linear(g: &mut Graph<'_>, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
    let wn = g.param(w);
    let bn = g.param(b);
    let y = g.matmul(x, wn);
    g.add_row(y, bn)
}
