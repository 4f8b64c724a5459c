//! The full extractive model: token encoder, structure injection and the
//! inter-sentence scorer, with checkpoint persistence.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::corpus::{tokenize, Document, Ssv, TitleClassDictionary};
use crate::encoder::{prepare_input, title_ids, Encoder, EncoderConfig, PreparedInput, Vocabulary};
use crate::error::{Error, Result};
use crate::posenc::EncodingConfig;
use crate::summarizer::{select, SelectionResult, Summarizer, SummarizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct ModelConfig {
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub summarizer: SummarizerConfig,
}


impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        if self.encoding.inject_the && self.encoding.max_positions < self.encoder.max_len {
            // token-in-sentence indices can reach max_len - 1
            return Err(Error::Config(format!(
                "tHE needs max_positions >= encoder max_len ({} < {})",
                self.encoding.max_positions, self.encoder.max_len
            )));
        }
        Ok(())
    }
}

/// Everything the encoder needs for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentInput {
    pub prepared: PreparedInput,
    /// Structure vectors of the kept sentences.
    pub ssvs: Vec<Ssv>,
    /// Title token ids per section up to the last kept one; `None` for
    /// untitled sections.
    pub section_titles: Vec<Option<Vec<u32>>>,
}

impl DocumentInput {
    pub fn sentence_count(&self) -> usize {
        self.ssvs.len()
    }
}

/// Encoder outputs for a frozen encoder: sentence representations and
/// per-sentence title embeddings, both `n x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentFeatures {
    pub sentence_reps: Array2<f64>,
    pub stes: Option<Array2<f64>>,
    pub ssvs: Vec<Ssv>,
}

/// Scores and selection for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub scores: Vec<f64>,
    pub chosen: Vec<usize>,
    pub summary: Vec<String>,
}

/// Output nodes of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub hidden: NodeId,
    pub probs: NodeId,
}

#[derive(Debug, Clone)]
pub struct HiStructModel {
    config: ModelConfig,
    vocab: Vocabulary,
    titles: TitleClassDictionary,
    store: ParamStore,
    encoder: Encoder,
    summarizer: Summarizer,
}

impl HiStructModel {
    /// Builds a freshly initialized model. Class-name tokens of `titles`
    /// are added to the vocabulary when classified STE is enabled. The
    /// encoder and summarizer draw from separate random streams.
    pub fn new(config: ModelConfig, mut vocab: Vocabulary, titles: TitleClassDictionary, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.encoding.inject_ste && config.encoding.classified_ste {
            let names: Vec<String> = titles.class_names().flat_map(tokenize).collect();
            vocab.extend(names);
        }
        let mut store = ParamStore::new();
        let mut enc_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum_rng = ChaCha8Rng::seed_from_u64(seed);
        sum_rng.set_stream(1);
        let encoder = Encoder::new(&mut store, vocab.len(), &config.encoder, &config.encoding, &mut enc_rng)?;
        let summarizer = Summarizer::new(&mut store, &config.summarizer, &config.encoding, &mut sum_rng)?;
        Ok(HiStructModel {
            config,
            vocab,
            titles,
            store,
            encoder,
            summarizer,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.config.encoding
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn titles(&self) -> &TitleClassDictionary {
        &self.titles
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Copy of the model with the given parameter values (same layout).
    pub fn with_params(&self, store: ParamStore) -> Self {
        assert_eq!(store.len(), self.store.len(), "parameter layout mismatch");
        HiStructModel {
            store,
            ..self.clone()
        }
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn summarizer(&self) -> &Summarizer {
        &self.summarizer
    }

    pub fn prepare(&self, doc: &Document) -> Result<DocumentInput> {
        let prepared = prepare_input(doc, &self.vocab, self.encoder.max_len())?;
        let ssvs: Vec<Ssv> = doc.ssvs().into_iter().take(prepared.sentence_count).collect();
        let last_section = ssvs.last().map_or(0, |s| s.section);
        let dict = self.config.encoding.classified_ste.then_some(&self.titles);
        let section_titles = doc.sections()[..=last_section]
            .iter()
            .map(|s| {
                s.title()
                    .map(|t| title_ids(t, dict, &self.vocab).0)
                    .filter(|ids| !ids.is_empty())
            })
            .collect();
        Ok(DocumentInput {
            prepared,
            ssvs,
            section_titles,
        })
    }

    /// Per-sentence title embeddings `[n x d]`; untitled sections give a
    /// zero row.
    fn ste_rows(&self, g: &mut Graph<'_>, input: &DocumentInput) -> Result<NodeId> {
        let d = self.encoder.d_model();
        let mut rows = Vec::with_capacity(input.section_titles.len());
        for title in &input.section_titles {
            rows.push(match title {
                Some(ids) => self.encoder.ste_node(g, ids, &self.config.encoding)?,
                None => g.constant(Array2::zeros((1, d))),
            });
        }
        let table = g.concat_rows(&rows);
        let idx: Vec<usize> = input.ssvs.iter().map(|s| s.section).collect();
        Ok(g.select_rows(table, &idx))
    }

    /// Forward pass through encoder and summarizer.
    pub fn forward(&self, g: &mut Graph<'_>, input: &DocumentInput) -> Result<ForwardNodes> {
        let enc = &self.config.encoding;
        let p = &input.prepared;
        let reps = self.encoder.sentence_reps(g, &p.ids, Some(&p.tsvs), enc)?;
        let ste = if enc.inject_ste { Some(self.ste_rows(g, input)?) } else { None };
        self.head(g, reps, &input.ssvs, ste)
    }

    /// Runs the encoder once and returns its outputs as plain arrays.
    pub fn features(&self, input: &DocumentInput) -> Result<DocumentFeatures> {
        let enc = &self.config.encoding;
        let mut g = Graph::new(&self.store);
        let p = &input.prepared;
        let reps = self.encoder.sentence_reps(&mut g, &p.ids, Some(&p.tsvs), enc)?;
        let stes = if enc.inject_ste {
            let n = self.ste_rows(&mut g, input)?;
            Some(g.value(n).clone())
        } else {
            None
        };
        let sentence_reps = g.value(reps).clone();
        if !sentence_reps.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("encoder activations".into()));
        }
        Ok(DocumentFeatures {
            sentence_reps,
            stes,
            ssvs: input.ssvs.clone(),
        })
    }

    /// Forward pass from cached encoder outputs; only summarizer
    /// parameters receive gradients.
    pub fn forward_features(&self, g: &mut Graph<'_>, features: &DocumentFeatures) -> Result<ForwardNodes> {
        let reps = g.constant(features.sentence_reps.clone());
        let ste = features.stes.as_ref().map(|s| g.constant(s.clone()));
        self.head(g, reps, &features.ssvs, ste)
    }

    fn head(&self, g: &mut Graph<'_>, reps: NodeId, ssvs: &[Ssv], ste: Option<NodeId>) -> Result<ForwardNodes> {
        let x = self.summarizer.inject_node(g, reps, ssvs, ste, &self.config.encoding)?;
        let (hidden, probs) = self.summarizer.score_node(g, x);
        Ok(ForwardNodes { hidden, probs })
    }

    /// Sentence scores for the sentences that fit the encoder window.
    pub fn scores(&self, doc: &Document) -> Result<Vec<f64>> {
        let input = self.prepare(doc)?;
        let mut g = Graph::new(&self.store);
        let out = self.forward(&mut g, &input)?;
        collect_scores(&g, out.probs)
    }

    pub fn scores_from_features(&self, features: &DocumentFeatures) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let out = self.forward_features(&mut g, features)?;
        collect_scores(&g, out.probs)
    }

    pub fn predict(&self, doc: &Document, n: usize, trigram_blocking: bool) -> Result<Prediction> {
        let scores = self.scores(doc)?;
        Ok(prediction(doc, scores, n, trigram_blocking))
    }

    /// Scalar parameter counts by group.
    pub fn parameter_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (_, name, value) in self.store.iter() {
            *out.entry(param_group(name).to_string()).or_insert(0) += value.len();
        }
        out
    }

    /// Parameters that only exist because an injection is enabled.
    pub fn injection_params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.summarizer.spe_table().into_iter().collect();
        p.extend(self.summarizer.she_tables());
        p.extend(self.encoder.the_tables());
        p
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoder.params()
    }

    pub fn summarizer_params(&self) -> Vec<ParamId> {
        self.summarizer.params()
    }

    /// True when `other` produces the same encoder features: equal
    /// configuration, vocabulary, titles and non-summarizer parameters.
    pub fn shares_encoder_with(&self, other: &HiStructModel) -> bool {
        if self.config != other.config
            || self.vocab != other.vocab
            || self.titles != other.titles
            || self.store.len() != other.store.len()
        {
            return false;
        }
        let head: HashSet<ParamId> = self.summarizer_params().into_iter().collect();
        self.store
            .iter()
            .zip(other.store.iter())
            .all(|((id, _, a), (_, _, b))| head.contains(&id) || a == b)
    }

    /// Writes a checkpoint atomically (temporary file, then rename).
    pub fn save(&self, path: impl AsRef<Path>, step: usize, validation_loss: f64) -> Result<()> {
        let path = path.as_ref();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            step,
            validation_loss,
            config: self.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            titles: self.titles.clone(),
            tensors: self
                .store
                .iter()
                .map(|(_, name, v)| Tensor {
                    name: name.to_string(),
                    shape: [v.nrows(), v.ncols()],
                    data: v.iter().copied().collect(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&file)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let reserved = 3;
        let vocab = Vocabulary::from_tokens(file.vocab.iter().skip(reserved).cloned());
        if vocab.tokens() != file.vocab.as_slice() {
            return Err(Error::Config("checkpoint vocabulary is malformed".into()));
        }
        let mut model = HiStructModel::new(file.config, vocab, file.titles, 0)?;
        if model.vocab.len() != file.vocab.len() {
            return Err(Error::Config("checkpoint vocabulary does not match its title classes".into()));
        }
        if file.tensors.len() != model.store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, model expects {}",
                file.tensors.len(),
                model.store.len()
            )));
        }
        for t in file.tensors {
            let id = model
                .store
                .find(&t.name)
                .ok_or_else(|| Error::Config(format!("unknown tensor {:?} in checkpoint", t.name)))?;
            let target = model.store.get_mut(id);
            if target.dim() != (t.shape[0], t.shape[1]) || t.data.len() != t.shape[0] * t.shape[1] {
                return Err(Error::Dimension(format!(
                    "tensor {:?}: checkpoint shape {:?}, model shape {:?}",
                    t.name,
                    t.shape,
                    target.dim()
                )));
            }
            *target = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data).expect("checked shape");
        }
        if !model.store.all_finite() {
            return Err(Error::NonFinite(format!("parameters in {}", path.display())));
        }
        let meta = CheckpointMeta {
            step: file.step,
            validation_loss: file.validation_loss,
        };
        Ok((model, meta))
    }
}

fn collect_scores(g: &Graph<'_>, probs: NodeId) -> Result<Vec<f64>> {
    let scores: Vec<f64> = g.value(probs).iter().copied().collect();
    if scores.iter().all(|v| v.is_finite()) {
        Ok(scores)
    } else {
        Err(Error::NonFinite("sentence scores".into()))
    }
}

/// Selects from the scored prefix of `doc`.
pub fn prediction(doc: &Document, scores: Vec<f64>, n: usize, trigram_blocking: bool) -> Prediction {
    let texts = doc.sentence_texts();
    let SelectionResult { chosen, summary, .. } = select(&scores, &texts[..scores.len()], n, trigram_blocking);
    Prediction {
        id: doc.id().to_string(),
        scores,
        chosen,
        summary,
    }
}

/// Parameter group of a tensor name.
pub fn param_group(name: &str) -> &'static str {
    match name {
        "encoder.tok_emb" => "token_embedding",
        "encoder.tok_pos" => "token_position",
        "summarizer.spe" => "sentence_position",
        "summarizer.cls_w" | "summarizer.cls_b" => "classifier",
        n if n.starts_with("encoder.the.") => "token_hierarchical",
        n if n.starts_with("summarizer.she.") => "sentence_hierarchical",
        n if n.starts_with("encoder.") => "encoder_layers",
        _ => "summarizer_layers",
    }
}

const CHECKPOINT_FORMAT: &str = "histruct-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub step: usize,
    pub validation_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    step: usize,
    validation_loss: f64,
    config: ModelConfig,
    vocab: Vec<String>,
    titles: TitleClassDictionary,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::encoder::build_vocab;
    use crate::posenc::EncodingSetting;

    pub(crate) fn tiny_config(setting: &str, full: bool) -> ModelConfig {
        let mut encoding = EncodingConfig::baseline(8, 16);
        encoding.setting = setting.parse::<EncodingSetting>().unwrap();
        if full {
            encoding.inject_she = true;
            encoding.inject_ste = true;
            encoding.classified_ste = true;
        }
        ModelConfig {
            encoding,
            encoder: EncoderConfig {
                n_heads: 2,
                n_layers: 1,
                d_ff: 16,
                max_len: 48,
                init_std: 0.3,
                ..Default::default()
            },
            summarizer: SummarizerConfig {
                n_layers: 1,
                n_heads: 2,
                d_ff: 16,
                init_std: 0.3,
            },
        }
    }

    fn doc() -> Document {
        Document::from_parts(
            "d1",
            vec![
                (Some("Introduction"), vec!["We study cats.", "Cats sleep a lot."]),
                (None, vec!["Dogs bark."]),
                (Some("Concluding Remarks"), vec!["Cats win.", "The end."]),
            ],
            vec!["cats win".to_string()],
        )
        .unwrap()
    }

    fn model(full: bool) -> HiStructModel {
        let d = doc();
        let vocab = build_vocab(std::slice::from_ref(&d), 1).unwrap();
        HiStructModel::new(tiny_config("la-sum", full), vocab, TitleClassDictionary::scientific(), 3).unwrap()
    }

    #[test]
    fn features_match_full_forward() {
        let m = model(true);
        let input = m.prepare(&doc()).unwrap();
        assert_eq!(input.section_titles.len(), 3);
        assert!(input.section_titles[1].is_none());
        let direct = m.scores(&doc()).unwrap();
        let cached = m.scores_from_features(&m.features(&input).unwrap()).unwrap();
        assert_eq!(direct.len(), 5);
        for (a, b) in direct.iter().zip(&cached) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classified_names_enter_vocab() {
        let m = model(true);
        assert!(m.vocab().contains("conclusions"));
        assert!(m.vocab().contains("introduction"));
    }

    #[test]
    fn baseline_differs_only_by_injection_params() {
        let base = model(false);
        let full = model(true);
        let bc = base.parameter_counts();
        let fc = full.parameter_counts();
        let extra: usize = full.injection_params().iter().map(|&p| full.store().get(p).len()).sum();
        assert_eq!(fc.get("sentence_hierarchical"), Some(&extra));
        assert!(!bc.contains_key("sentence_hierarchical"));
        // vocabulary grows by the class-name tokens only
        let vocab_growth = (full.vocab().len() - base.vocab().len()) * 8;
        assert_eq!(
            full.store().scalar_count(),
            base.store().scalar_count() + extra + vocab_growth
        );
        for (k, v) in &bc {
            if k != "token_embedding" {
                assert_eq!(fc.get(k), Some(v), "{k}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        m.save(&path, 12, 0.25).unwrap();
        let (back, meta) = HiStructModel::load(&path).unwrap();
        assert_eq!(meta, CheckpointMeta { step: 12, validation_loss: 0.25 });
        assert_eq!(back.config(), m.config());
        assert_eq!(back.vocab(), m.vocab());
        for (id, name, v) in m.store().iter() {
            assert_eq!(back.store().name(id), name);
            assert_eq!(back.store().get(id), v);
        }
        assert_eq!(back.scores(&doc()).unwrap(), m.scores(&doc()).unwrap());
    }

    #[test]
    fn prediction_respects_n() {
        let m = model(false);
        let p = m.predict(&doc(), 2, true).unwrap();
        assert_eq!(p.chosen.len(), 2);
        assert!(p.chosen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.scores.len(), 5);
    }
}
