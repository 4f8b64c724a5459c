use std::collections::BTreeMap;

use crate::autodiff::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::model::{param_group, DocumentInput, HiStructModel};
use crate::summarizer::check_labels;

fn loss_with(model: &HiStructModel, store: &ParamStore, input: &DocumentInput, labels: &[f64]) -> Result<f64> {
    let mut g = Graph::new(store);
    let out = model.forward(&mut g, input)?;
    let loss = g.bce_sum(out.probs, labels);
    Ok(g.value(loss)[[0, 0]] / labels.len() as f64)
}

/// Compares analytic gradients of the mean BCE loss with central finite
/// differences. For every tensor the `per_tensor` entries with the largest
/// analytic gradient are probed. Returns, per parameter group, the relative
/// error `|a - n| / max(|a|, |n|)` over the probed entries (Euclidean norms).
pub fn gradient_check(
    model: &HiStructModel,
    input: &DocumentInput,
    labels: &[f64],
    step: f64,
    per_tensor: usize,
) -> Result<BTreeMap<String, f64>> {
    if labels.len() != input.sentence_count() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: input.sentence_count(),
            found: labels.len(),
        });
    }
    check_labels(labels)?;
    let store = model.store();
    let mut g = Graph::new(store);
    let out = model.forward(&mut g, input)?;
    let sum = g.bce_sum(out.probs, labels);
    let loss = g.scale(sum, 1.0 / labels.len() as f64);
    let grads = g.backward(loss);

    let mut diff: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut probe = store.clone();
    for (id, name, value) in store.iter() {
        let Some(analytic) = grads.get(id) else { continue };
        let mut order: Vec<usize> = (0..value.len()).collect();
        let flat: Vec<f64> = analytic.iter().copied().collect();
        order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
        let cols = value.ncols();
        for &k in order.iter().take(per_tensor) {
            let (r, c) = (k / cols, k % cols);
            let orig = value[[r, c]];
            probe.get_mut(id)[[r, c]] = orig + step;
            let up = loss_with(model, &probe, input, labels)?;
            probe.get_mut(id)[[r, c]] = orig - step;
            let down = loss_with(model, &probe, input, labels)?;
            probe.get_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * step);
            let e = diff.entry(param_group(name).to_string()).or_insert((0.0, 0.0));
            e.0 += (flat[k] - numeric).powi(2);
            e.1 += flat[k].powi(2).max(numeric.powi(2));
        }
    }
    Ok(diff
        .into_iter()
        .map(|(k, (d, s))| (k, if s == 0.0 { 0.0 } else { (d / s).sqrt() }))
        .collect())
}
