//! Word vocabulary and the token-level Transformer encoder that produces
//! sentence representations (hidden states at BOS positions) and section
//! title embeddings.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::corpus::{tokenize, Document, TitleClassDictionary, Tsv};
use crate::error::{Error, Result};
use crate::nn::{ones_row, zeros_row, LayerDims, TransformerLayer};
use crate::posenc::{self, extend_positions_by_copy, init_normal_table, EncodingConfig};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const UNK: u32 = 2;
const RESERVED: [&str; 3] = ["[PAD]", "[BOS]", "[UNK]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Reserved entries followed by `tokens` in order; duplicates are
    /// skipped.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    /// Appends tokens not yet present.
    pub fn extend<S: Into<String>>(&mut self, tokens: impl IntoIterator<Item = S>) {
        for t in tokens {
            self.push(t.into());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// `token<TAB>id` per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(f, "{t}\t{i}").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let schema = |message: String| Error::Schema { line: i + 1, message };
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| schema("expected token<TAB>id".into()))?;
            let id: usize = id.parse().map_err(|_| schema(format!("bad id {id:?}")))?;
            if id != i {
                return Err(schema(format!("ids must be dense and ordered, found {id} at row {i}")));
            }
            if i < RESERVED.len() && tok != RESERVED[i] {
                return Err(schema(format!("reserved id {i} must be {}", RESERVED[i])));
            }
            tokens.push(tok.to_string());
        }
        Ok(Self::from_tokens(tokens.into_iter().skip(RESERVED.len())))
    }
}

/// Counts sentence and title tokens; tokens seen at least `min_freq` times
/// get ids in order of decreasing frequency, ties broken lexicographically.
pub fn build_vocab(docs: &[Document], min_freq: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for s in doc.sentences() {
            for t in s.tokens() {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
        for t in doc.sections().iter().filter_map(|s| s.title()) {
            for tok in tokenize(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// Encoder input for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    /// `[BOS, tokens...]` for every kept sentence.
    pub ids: Vec<u32>,
    pub bos_positions: Vec<usize>,
    /// Hierarchical position of every input position. A BOS marker takes
    /// token index 0 and the sentence's tokens follow from 1.
    pub tsvs: Vec<Tsv>,
    /// Sentences kept after truncation.
    pub sentence_count: usize,
}

/// Builds `[BOS, ids...]` per sentence, dropping whole trailing sentences
/// that would exceed `max_len`.
pub fn prepare_input(doc: &Document, vocab: &Vocabulary, max_len: usize) -> Result<PreparedInput> {
    if max_len < 2 {
        return Err(Error::Config(format!("max_len must be at least 2, got {max_len}")));
    }
    let mut out = PreparedInput {
        ids: Vec::new(),
        bos_positions: Vec::new(),
        tsvs: Vec::new(),
        sentence_count: 0,
    };
    'outer: for (a, sec) in doc.sections().iter().enumerate() {
        for (b, sent) in sec.sentences().iter().enumerate() {
            let need = 1 + sent.tokens().len();
            if out.ids.len() + need > max_len {
                if out.sentence_count == 0 {
                    return Err(Error::TooLong(format!(
                        "first sentence of {:?} needs {need} positions, max_len is {max_len}",
                        doc.id()
                    )));
                }
                break 'outer;
            }
            out.bos_positions.push(out.ids.len());
            out.ids.push(BOS);
            out.tsvs.push(Tsv::new(a, b, 0));
            for (c, t) in sent.tokens().iter().enumerate() {
                out.ids.push(vocab.id(t));
                out.tsvs.push(Tsv::new(a, b, c + 1));
            }
            out.sentence_count += 1;
        }
    }
    Ok(out)
}

/// How extra token position rows beyond the base length are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionInit {
    Copy,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Token positions covered by the position table.
    pub max_len: usize,
    /// Length of the original position table; rows beyond it are added by
    /// `extra_positions`. Defaults to `max_len`.
    #[serde(default)]
    pub base_positions: Option<usize>,
    #[serde(default = "default_position_init")]
    pub extra_positions: PositionInit,
    #[serde(default = "default_std")]
    pub init_std: f64,
}

fn default_position_init() -> PositionInit {
    PositionInit::Copy
}

fn default_std() -> f64 {
    0.02
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_len: 512,
            base_positions: None,
            extra_positions: PositionInit::Copy,
            init_std: 0.02,
        }
    }
}

/// Token encoder parameters (ids into a shared [`ParamStore`]).
#[derive(Debug, Clone)]
pub struct Encoder {
    d_model: usize,
    max_len: usize,
    tok_emb: ParamId,
    tok_pos: ParamId,
    the_tables: Vec<ParamId>,
    layers: Vec<TransformerLayer>,
    lnf_g: ParamId,
    lnf_b: ParamId,
}

/// Final hidden states at BOS positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument {
    pub sentence_reps: Array2<f64>,
    pub token_count: usize,
    pub sentence_count: usize,
}

/// Section title embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SteVector {
    pub title: String,
    pub embedding: Array1<f64>,
    pub classified: bool,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        vocab_size: usize,
        cfg: &EncoderConfig,
        encoding: &EncodingConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = encoding.d_model;
        if cfg.n_heads == 0 || !d.is_multiple_of(cfg.n_heads) {
            return Err(Error::Dimension(format!("d_model {d} not divisible by {} heads", cfg.n_heads)));
        }
        if cfg.max_len < 2 {
            return Err(Error::Config("encoder max_len must be at least 2".into()));
        }
        let base = cfg.base_positions.unwrap_or(cfg.max_len);
        if base == 0 || base > cfg.max_len {
            return Err(Error::Config(format!("base_positions {base} must be in 1..={}", cfg.max_len)));
        }
        let tok_emb = store.add("encoder.tok_emb", init_normal_table(vocab_size, d, cfg.init_std, rng));
        let base_table = init_normal_table(base, d, cfg.init_std, rng);
        let pos_table = match cfg.extra_positions {
            PositionInit::Copy => extend_positions_by_copy(base_table.view(), cfg.max_len)?,
            PositionInit::Random => {
                let extra = init_normal_table(cfg.max_len - base, d, cfg.init_std, rng);
                ndarray::concatenate(ndarray::Axis(0), &[base_table.view(), extra.view()])
                    .expect("same width")
            }
        };
        let tok_pos = store.add("encoder.tok_pos", pos_table);
        let dims = LayerDims {
            d_model: d,
            n_heads: cfg.n_heads,
            d_ff: cfg.d_ff,
        };
        let layers: Vec<TransformerLayer> = (0..cfg.n_layers)
            .map(|i| TransformerLayer::new(store, &format!("encoder.layer{i}"), dims, cfg.init_std, rng))
            .collect();
        let lnf_g = store.add("encoder.lnf_g", ones_row(d));
        let lnf_b = store.add("encoder.lnf_b", zeros_row(d));
        let mut the_tables = Vec::new();
        if encoding.inject_the && encoding.method() == posenc::PeMethod::La {
            let width = posenc::component_dim(d, encoding.mode(), 3)?;
            for level in ["section", "sentence", "token"] {
                the_tables.push(store.add(
                    format!("encoder.the.{level}"),
                    init_normal_table(encoding.max_positions, width, encoding.la_init_std, rng),
                ));
            }
        }
        Ok(Encoder {
            d_model: d,
            max_len: cfg.max_len,
            tok_emb,
            tok_pos,
            the_tables,
            layers,
            lnf_g,
            lnf_b,
        })
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn token_embedding(&self) -> ParamId {
        self.tok_emb
    }

    pub fn position_table(&self) -> ParamId {
        self.tok_pos
    }

    pub fn the_tables(&self) -> &[ParamId] {
        &self.the_tables
    }

    /// Every parameter owned by the encoder.
    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.tok_emb, self.tok_pos];
        p.extend(&self.the_tables);
        for l in &self.layers {
            p.extend(l.params());
        }
        p.push(self.lnf_g);
        p.push(self.lnf_b);
        p
    }

    /// Final hidden states `[len x d_model]`. PAD positions are masked out
    /// as attention keys.
    pub fn hidden(
        &self,
        g: &mut Graph<'_>,
        ids: &[u32],
        tsvs: Option<&[Tsv]>,
        encoding: &EncodingConfig,
    ) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("encoder input"));
        }
        if ids.len() > self.max_len {
            return Err(Error::TooLong(format!("{} positions exceed max_len {}", ids.len(), self.max_len)));
        }
        let vocab_size = g.store().get(self.tok_emb).nrows();
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= vocab_size) {
            return Err(Error::OutOfRange {
                what: "token id",
                index: bad as usize,
                len: vocab_size,
            });
        }
        let rows: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = g.gather(self.tok_emb, &rows);
        let pos = g.gather(self.tok_pos, &positions);
        let mut x = g.add(tok, pos);
        if encoding.inject_the {
            let tsvs = tsvs.ok_or_else(|| Error::Config("tHE injection needs token structure vectors".into()))?;
            if tsvs.len() != ids.len() {
                return Err(Error::LengthMismatch {
                    what: "token structure vectors",
                    expected: ids.len(),
                    found: tsvs.len(),
                });
            }
            let comps = vec![
                tsvs.iter().map(|t| t.section).collect(),
                tsvs.iter().map(|t| t.sentence).collect(),
                tsvs.iter().map(|t| t.token).collect(),
            ];
            let the = posenc::hierarchical_node(g, &comps, encoding.setting, self.d_model, &self.the_tables)?;
            x = g.add(x, the);
        }
        let allowed: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
        let mask = if allowed.iter().all(|&a| a) { None } else { Some(allowed.as_slice()) };
        for layer in &self.layers {
            x = layer.forward(g, x, mask);
        }
        let lg = g.param(self.lnf_g);
        let lb = g.param(self.lnf_b);
        Ok(g.layer_norm(x, lg, lb))
    }

    /// Sentence representations: hidden states at every BOS position.
    pub fn sentence_reps(
        &self,
        g: &mut Graph<'_>,
        ids: &[u32],
        tsvs: Option<&[Tsv]>,
        encoding: &EncodingConfig,
    ) -> Result<NodeId> {
        let bos: Vec<usize> = ids.iter().enumerate().filter(|(_, &t)| t == BOS).map(|(i, _)| i).collect();
        if bos.is_empty() {
            return Err(Error::EmptyInput("encoder input has no BOS marker"));
        }
        let h = self.hidden(g, ids, tsvs, encoding)?;
        Ok(g.select_rows(h, &bos))
    }

    /// Encodes a document input outside of training.
    pub fn encode(
        &self,
        store: &ParamStore,
        ids: &[u32],
        tsvs: Option<&[Tsv]>,
        encoding: &EncodingConfig,
    ) -> Result<EncodedDocument> {
        let mut g = Graph::new(store);
        let reps = self.sentence_reps(&mut g, ids, tsvs, encoding)?;
        let value = g.value(reps).clone();
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("encoder activations".into()));
        }
        Ok(EncodedDocument {
            sentence_count: value.nrows(),
            token_count: ids.len(),
            sentence_reps: value,
        })
    }

    /// Title embedding node `[1 x d_model]`: the title is encoded alone
    /// behind one BOS marker and the final hidden states of the title
    /// tokens (BOS excluded) are summed.
    pub fn ste_node(&self, g: &mut Graph<'_>, title_ids: &[u32], encoding: &EncodingConfig) -> Result<NodeId> {
        if title_ids.is_empty() {
            return Err(Error::EmptyInput("section title has no tokens"));
        }
        let take = title_ids.len().min(self.max_len - 1);
        let mut ids = Vec::with_capacity(take + 1);
        ids.push(BOS);
        ids.extend_from_slice(&title_ids[..take]);
        let plain = EncodingConfig {
            inject_the: false,
            ..encoding.clone()
        };
        let h = self.hidden(g, &ids, None, &plain)?;
        let rows: Vec<usize> = (1..ids.len()).collect();
        let tokens = g.select_rows(h, &rows);
        Ok(g.sum_rows(tokens))
    }

    pub fn ste(&self, store: &ParamStore, title_ids: &[u32], encoding: &EncodingConfig) -> Result<Array1<f64>> {
        let mut g = Graph::new(store);
        let n = self.ste_node(&mut g, title_ids, encoding)?;
        Ok(g.value(n).row(0).to_owned())
    }
}

/// Token ids used to embed a section title: the title's class name when the
/// dictionary classifies it, the title itself otherwise. The flag reports
/// whether the class name was used.
pub fn title_ids(title: &str, dict: Option<&TitleClassDictionary>, vocab: &Vocabulary) -> (Vec<u32>, bool) {
    match dict.and_then(|d| d.classify(title)) {
        Some(class) => (vocab.ids(&tokenize(class)), true),
        None => (vocab.ids(&tokenize(title)), false),
    }
}

/// STE of a title, replaced by the embedding of its class name when the
/// title belongs to exactly one class.
pub fn classified_ste(
    title: &str,
    dict: &TitleClassDictionary,
    encoder: &Encoder,
    store: &ParamStore,
    vocab: &Vocabulary,
    encoding: &EncodingConfig,
) -> Result<SteVector> {
    let (ids, classified) = title_ids(title, Some(dict), vocab);
    Ok(SteVector {
        title: title.to_string(),
        embedding: encoder.ste(store, &ids, encoding)?,
        classified,
    })
}
