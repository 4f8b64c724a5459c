//! Structure injection into sentence representations, the inter-sentence
//! Transformer and classifier, the training loss, and sentence selection.

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{bce_term, Graph, NodeId, ParamId, ParamStore};
use crate::corpus::{content_tokens, Document, Ssv};
use crate::error::{Error, Result};
use crate::nn::{linear, ones_row, zeros_row, LayerDims, TransformerLayer};
use crate::posenc::{self, init_normal_table, EncodingConfig, PeMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizerConfig {
    /// Inter-sentence Transformer layers.
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    #[serde(default = "default_std")]
    pub init_std: f64,
}

fn default_layers() -> usize {
    2
}

fn default_std() -> f64 {
    0.02
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            init_std: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Summarizer {
    d_model: usize,
    spe: Option<ParamId>,
    she_tables: Vec<ParamId>,
    layers: Vec<TransformerLayer>,
    ln_g: ParamId,
    ln_b: ParamId,
    cls_w: ParamId,
    cls_b: ParamId,
}

/// Scores and contextual sentence embeddings for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceScorePrediction {
    pub y_hat: Vec<f64>,
    pub hidden: Array2<f64>,
}

impl Summarizer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &SummarizerConfig,
        encoding: &EncodingConfig,
        rng: &mut R,
    ) -> Result<Self> {
        encoding.validate()?;
        let d = encoding.d_model;
        if cfg.n_layers == 0 {
            return Err(Error::Config("the summarizer needs at least one inter-sentence layer".into()));
        }
        if cfg.n_heads == 0 || !d.is_multiple_of(cfg.n_heads) {
            return Err(Error::Dimension(format!("d_model {d} not divisible by {} heads", cfg.n_heads)));
        }
        let dims = LayerDims {
            d_model: d,
            n_heads: cfg.n_heads,
            d_ff: cfg.d_ff,
        };
        let layers: Vec<TransformerLayer> = (0..cfg.n_layers)
            .map(|i| TransformerLayer::new(store, &format!("summarizer.layer{i}"), dims, cfg.init_std, rng))
            .collect();
        let ln_g = store.add("summarizer.ln_g", ones_row(d));
        let ln_b = store.add("summarizer.ln_b", zeros_row(d));
        let cls_w = store.add("summarizer.cls_w", init_normal_table(d, 1, cfg.init_std, rng));
        let cls_b = store.add("summarizer.cls_b", Array2::zeros((1, 1)));
        // Injection tables are drawn after the shared weights.
        let spe = encoding.inject_spe.then(|| {
            store.add(
                "summarizer.spe",
                init_normal_table(encoding.max_positions, d, encoding.la_init_std, rng),
            )
        });
        let mut she_tables = Vec::new();
        if encoding.inject_she && encoding.method() == PeMethod::La {
            let width = posenc::component_dim(d, encoding.mode(), 2)?;
            for level in ["section", "sentence"] {
                she_tables.push(store.add(
                    format!("summarizer.she.{level}"),
                    init_normal_table(encoding.max_positions, width, encoding.la_init_std, rng),
                ));
            }
        }
        Ok(Summarizer {
            d_model: d,
            spe,
            she_tables,
            layers,
            ln_g,
            ln_b,
            cls_w,
            cls_b,
        })
    }

    pub fn spe_table(&self) -> Option<ParamId> {
        self.spe
    }

    pub fn she_tables(&self) -> &[ParamId] {
        &self.she_tables
    }

    pub fn classifier(&self) -> (ParamId, ParamId) {
        (self.cls_w, self.cls_b)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.spe.into_iter().collect();
        p.extend(&self.she_tables);
        for l in &self.layers {
            p.extend(l.params());
        }
        p.extend([self.ln_g, self.ln_b, self.cls_w, self.cls_b]);
        p
    }

    /// `S + sPE + sHE + STE`, each term present only when its flag is set.
    pub fn inject_node(
        &self,
        g: &mut Graph<'_>,
        sentence_reps: NodeId,
        ssvs: &[Ssv],
        ste: Option<NodeId>,
        encoding: &EncodingConfig,
    ) -> Result<NodeId> {
        let (n, d) = g.value(sentence_reps).dim();
        if d != self.d_model {
            return Err(Error::Dimension(format!("sentence width {d} != d_model {}", self.d_model)));
        }
        if ssvs.len() != n {
            return Err(Error::LengthMismatch {
                what: "sentence structure vectors",
                expected: n,
                found: ssvs.len(),
            });
        }
        let mut x = sentence_reps;
        if encoding.inject_spe {
            let table = self.spe.ok_or_else(|| Error::Config("model has no sPE table".into()))?;
            let rows = g.store().get(table).nrows();
            if n > rows {
                return Err(Error::OutOfRange {
                    what: "sentence position",
                    index: n - 1,
                    len: rows,
                });
            }
            let idx: Vec<usize> = (0..n).collect();
            let spe = g.gather(table, &idx);
            x = g.add(x, spe);
        }
        if encoding.inject_she {
            let comps = vec![
                ssvs.iter().map(|s| s.section).collect(),
                ssvs.iter().map(|s| s.sentence).collect(),
            ];
            let she = posenc::hierarchical_node(g, &comps, encoding.setting, self.d_model, &self.she_tables)?;
            x = g.add(x, she);
        }
        if encoding.inject_ste {
            let ste = ste.ok_or_else(|| Error::Config("STE injection enabled but no title embeddings given".into()))?;
            if g.value(ste).dim() != (n, d) {
                return Err(Error::LengthMismatch {
                    what: "section title embeddings",
                    expected: n,
                    found: g.value(ste).nrows(),
                });
            }
            x = g.add(x, ste);
        }
        Ok(x)
    }

    /// Returns `(contextual embeddings, probabilities)`; probabilities are an
    /// `n x 1` column.
    pub fn score_node(&self, g: &mut Graph<'_>, injected: NodeId) -> (NodeId, NodeId) {
        let mut x = injected;
        for layer in &self.layers {
            x = layer.forward(g, x, None);
        }
        let lg = g.param(self.ln_g);
        let lb = g.param(self.ln_b);
        let hidden = g.layer_norm(x, lg, lb);
        let logits = linear(g, hidden, self.cls_w, self.cls_b);
        (hidden, g.sigmoid(logits))
    }

    pub fn inject(
        &self,
        store: &ParamStore,
        sentence_reps: &Array2<f64>,
        ssvs: &[Ssv],
        stes: Option<&Array2<f64>>,
        encoding: &EncodingConfig,
    ) -> Result<Array2<f64>> {
        let mut g = Graph::new(store);
        let s = g.constant(sentence_reps.clone());
        let ste = stes.map(|t| g.constant(t.clone()));
        let out = self.inject_node(&mut g, s, ssvs, ste, encoding)?;
        Ok(g.value(out).clone())
    }

    pub fn score(&self, store: &ParamStore, injected: &Array2<f64>) -> Result<SentenceScorePrediction> {
        if injected.nrows() == 0 {
            return Err(Error::EmptyInput("no sentences to score"));
        }
        let mut g = Graph::new(store);
        let x = g.constant(injected.clone());
        let (h, p) = self.score_node(&mut g, x);
        let y_hat: Vec<f64> = g.value(p).iter().copied().collect();
        if !y_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sentence scores".into()));
        }
        Ok(SentenceScorePrediction {
            y_hat,
            hidden: g.value(h).clone(),
        })
    }
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().position(|&y| y != 0.0 && y != 1.0) {
        Some(i) => Err(Error::InvalidLabel { index: i, value: labels[i] }),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy, probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: y_hat.len(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("no sentences"));
    }
    check_labels(y)?;
    Ok(y_hat.iter().zip(y).map(|(&p, &t)| bce_term(p, t)).sum::<f64>() / y.len() as f64)
}

/// Sentences picked for a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Sentence indices in increasing order.
    pub chosen: Vec<usize>,
    /// Chosen sentence texts in document order.
    pub summary: Vec<String>,
    /// Number of sentences that were available for selection.
    pub candidate_count: usize,
}

fn trigrams(text: &str) -> HashSet<[String; 3]> {
    content_tokens(text)
        .windows(3)
        .map(|w| [w[0].clone(), w[1].clone(), w[2].clone()])
        .collect()
}

/// Picks up to `n` sentences by descending score (ties to the lower index).
/// With blocking, a candidate sharing any lowercase word trigram with an
/// already chosen sentence is skipped.
pub fn select<S: AsRef<str>>(scores: &[f64], sentences: &[S], n: usize, trigram_blocking: bool) -> SelectionResult {
    let count = scores.len().min(sentences.len());
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut seen: HashSet<[String; 3]> = HashSet::new();
    for i in order {
        if chosen.len() >= n {
            break;
        }
        if trigram_blocking {
            let tri = trigrams(sentences[i].as_ref());
            if tri.iter().any(|t| seen.contains(t)) {
                continue;
            }
            seen.extend(tri);
        }
        chosen.push(i);
    }
    chosen.sort_unstable();
    SelectionResult {
        summary: chosen.iter().map(|&i| sentences[i].as_ref().to_string()).collect(),
        chosen,
        candidate_count: count,
    }
}

/// The first `min(n, N)` sentences.
pub fn lead_n(doc: &Document, n: usize) -> SelectionResult {
    let texts = doc.sentence_texts();
    let k = n.min(texts.len());
    SelectionResult {
        chosen: (0..k).collect(),
        summary: texts[..k].to_vec(),
        candidate_count: texts.len(),
    }
}

/// Share of summaries that contain each linear sentence index, among the
/// documents long enough to have that index. Entry `max_index` aggregates
/// every index at or beyond it.
pub fn position_distribution(selections: &[SelectionResult], max_index: usize) -> Result<Vec<f64>> {
    if selections.is_empty() {
        return Err(Error::EmptyInput("no selections"));
    }
    let mut hits = vec![0usize; max_index + 1];
    let mut avail = vec![0usize; max_index + 1];
    for sel in selections {
        for k in 0..sel.candidate_count {
            avail[k.min(max_index)] += 1;
        }
        for &k in &sel.chosen {
            hits[k.min(max_index)] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&avail)
        .map(|(&h, &a)| if a == 0 { 0.0 } else { h as f64 / a as f64 })
        .collect())
}

/// Total-variation distance between two position distributions, each
/// normalized to unit mass first.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let len = a.len().max(b.len());
    let at = |v: &[f64], s: f64, i: usize| if s > 0.0 { v.get(i).copied().unwrap_or(0.0) / s } else { 0.0 };
    0.5 * (0..len).map(|i| (at(a, sa, i) - at(b, sb, i)).abs()).sum::<f64>()
}

pub fn distribution_csv(dist: &[f64]) -> String {
    let mut s = String::from("index,proportion\n");
    for (i, p) in dist.iter().enumerate() {
        s.push_str(&format!("{i},{p:.6}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posenc::{she, EncodingSetting};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(encoding: &EncodingConfig, seed: u64) -> (ParamStore, Summarizer) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SummarizerConfig {
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            init_std: 0.3,
        };
        let s = Summarizer::new(&mut store, &cfg, encoding, &mut rng).unwrap();
        (store, s)
    }

    fn enc(setting: &str, she: bool, spe: bool, ste: bool) -> EncodingConfig {
        EncodingConfig {
            setting: setting.parse::<EncodingSetting>().unwrap(),
            d_model: 8,
            max_positions: 16,
            inject_she: she,
            inject_spe: spe,
            inject_ste: ste,
            classified_ste: false,
            inject_the: false,
            la_init_std: 0.5,
        }
    }

    fn reps(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin())
    }

    #[test]
    fn inject_identity_when_disabled() {
        let e = enc("la-sum", false, false, false);
        let (store, s) = build(&e, 1);
        let ssvs = [Ssv::new(0, 0), Ssv::new(0, 1)];
        assert_eq!(s.inject(&store, &reps(2), &ssvs, None, &e).unwrap(), reps(2));
    }

    #[test]
    fn inject_she_is_additive() {
        let ssvs = [Ssv::new(0, 0), Ssv::new(1, 3), Ssv::new(2, 1)];
        let e = enc("sin-sum", true, false, false);
        let (store, s) = build(&e, 1);
        let out = s.inject(&store, &reps(3), &ssvs, None, &e).unwrap() - reps(3);
        for (r, ssv) in ssvs.iter().enumerate() {
            let expected = she(*ssv, &e, &[]).unwrap();
            for (a, b) in out.row(r).iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // learned tables: gather route agrees with the lookup route
        let e = enc("la-concat", true, false, false);
        let (store, s) = build(&e, 2);
        let out = s.inject(&store, &reps(3), &ssvs, None, &e).unwrap() - reps(3);
        let tables: Vec<_> = s.she_tables().iter().map(|&t| store.get(t).view()).collect();
        for (r, ssv) in ssvs.iter().enumerate() {
            let expected = she(*ssv, &e, &tables).unwrap();
            for (a, b) in out.row(r).iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_section_shares_concat_half() {
        let e = enc("sin-concat", true, false, false);
        let (store, s) = build(&e, 1);
        let ssvs = [Ssv::new(3, 0), Ssv::new(3, 4)];
        let out = s.inject(&store, &reps(2), &ssvs, None, &e).unwrap() - reps(2);
        for c in 0..4 {
            assert!((out[[0, c]] - out[[1, c]]).abs() < 1e-12);
        }
        assert!((0..8).any(|c| (out[[0, c]] - out[[1, c]]).abs() > 1e-6));
    }

    #[test]
    fn inject_errors() {
        let e = enc("la-sum", true, false, true);
        let (store, s) = build(&e, 1);
        let ssvs = [Ssv::new(0, 0)];
        assert!(s.inject(&store, &reps(2), &ssvs, None, &e).is_err());
        assert!(s.inject(&store, &reps(1), &ssvs, None, &e).is_err());
        let ste = Array2::zeros((1, 8));
        assert!(s.inject(&store, &reps(1), &ssvs, Some(&ste), &e).is_ok());
        assert!(matches!(
            s.inject(&store, &reps(1), &[Ssv::new(16, 0)], Some(&ste), &e),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn score_shapes_and_zero_classifier() {
        let e = enc("la-sum", true, true, false);
        let (mut store, s) = build(&e, 3);
        let one = s.score(&store, &reps(1)).unwrap();
        assert_eq!(one.y_hat.len(), 1);
        assert!(one.y_hat[0] > 0.0 && one.y_hat[0] < 1.0);
        let again = s.score(&store, &reps(1)).unwrap();
        assert_eq!(one, again);
        let (w, b) = s.classifier();
        store.get_mut(w).fill(0.0);
        store.get_mut(b).fill(0.0);
        let p = s.score(&store, &reps(4)).unwrap();
        assert!(p.y_hat.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        // mean of -ln 0.9 and -ln(1 - 0.1)
        assert!((bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(matches!(bce_loss(&[0.5], &[2.0]), Err(Error::InvalidLabel { .. })));
        assert!(bce_loss(&[0.5, 0.5], &[1.0]).is_err());
        assert!(bce_loss(&[0.0], &[1.0]).unwrap().is_finite());
    }

    #[test]
    fn select_examples() {
        let s = ["a b c d", "x b c d y", "p q r"];
        assert_eq!(select(&[0.9, 0.8, 0.7], &s, 2, false).chosen, vec![0, 1]);
        let r = select(&[0.9, 0.8, 0.7], &s, 2, true);
        assert_eq!(r.chosen, vec![0, 2]);
        assert_eq!(r.summary, vec!["a b c d", "p q r"]);
        let short = ["a b", "a b", "a b"];
        assert_eq!(select(&[0.3, 0.2, 0.1], &short, 3, true).chosen, vec![0, 1, 2]);
        assert_eq!(select(&[0.5, 0.5, 0.9], &s, 2, false).chosen, vec![0, 2]);
        // blocking is case and punctuation insensitive
        let cased = ["The cat sat down.", "the CAT, sat up"];
        assert_eq!(select(&[0.9, 0.8], &cased, 2, true).chosen, vec![0]);
    }

    #[test]
    fn lead_examples() {
        let d = Document::from_parts("d", vec![(None, vec!["a.", "b.", "c.", "d.", "e."])], vec![]).unwrap();
        assert_eq!(lead_n(&d, 3).chosen, vec![0, 1, 2]);
        let d = Document::from_parts("d", vec![(None, vec!["a.", "b."])], vec![]).unwrap();
        assert_eq!(lead_n(&d, 7).chosen, vec![0, 1]);
    }

    #[test]
    fn distribution_examples() {
        let sel = |chosen: Vec<usize>, n: usize| SelectionResult {
            summary: vec![],
            chosen,
            candidate_count: n,
        };
        let d = position_distribution(&[sel(vec![0, 2], 6), sel(vec![0], 6)], 8).unwrap();
        assert_eq!(d[0], 1.0);
        assert_eq!(d[5], 0.0);
        let d = position_distribution(&[sel(vec![0], 1), sel(vec![1], 2)], 4).unwrap();
        assert_eq!(d[1], 1.0);
        assert_eq!(d[0], 0.5);
        let d = position_distribution(&[sel(vec![5, 9], 10)], 4).unwrap();
        assert_eq!(d[4], 2.0 / 6.0);
        assert!(position_distribution(&[], 4).is_err());
    }

    #[test]
    fn tv_distance() {
        assert_eq!(total_variation(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 2.0]), 1.0);
    }

    proptest! {
        #[test]
        fn select_scale_invariant(scores in proptest::collection::vec(-5.0f64..5.0, 1..12), n in 1usize..5) {
            let sents: Vec<String> = (0..scores.len()).map(|i| format!("w{} w{} w{} w{}", i % 3, i % 2, i % 4, i)).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            for block in [false, true] {
                prop_assert_eq!(select(&scores, &sents, n, block).chosen, select(&mapped, &sents, n, block).chosen);
            }
        }
    }
}
