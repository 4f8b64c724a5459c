//! Document model, corpus IO, rule-based segmentation, hierarchical
//! positions of sentences and tokens, and corpus structure statistics.

mod tokenize;
mod titles;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tokenize::{content_tokens, detokenize, is_punctuation_token, tokenize};
pub use titles::{classify_title, normalize_title, TitleClassDictionary};

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    text: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            return Err(Error::EmptyInput("sentence has no tokens"));
        }
        Ok(Sentence { text, tokens })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    title: Option<String>,
    sentences: Vec<Sentence>,
}

impl Section {
    pub fn new(title: Option<String>, sentences: Vec<Sentence>) -> Result<Self> {
        if let Some(t) = &title {
            if t.trim().is_empty() {
                return Err(Error::EmptyInput("section title is blank"));
            }
        }
        if sentences.is_empty() {
            return Err(Error::EmptyInput("section has no sentences"));
        }
        Ok(Section { title, sentences })
    }

    pub fn title(&self) -> Option<&str> {
        self.title.as_deref()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }
}

/// Sentence structure vector: section index and sentence-in-section index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ssv {
    pub section: usize,
    pub sentence: usize,
}

/// Token structure vector: section, sentence-in-section and
/// token-in-sentence indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tsv {
    pub section: usize,
    pub sentence: usize,
    pub token: usize,
}

impl Ssv {
    pub fn new(section: usize, sentence: usize) -> Self {
        Ssv { section, sentence }
    }
}

impl Tsv {
    pub fn new(section: usize, sentence: usize, token: usize) -> Self {
        Tsv {
            section,
            sentence,
            token,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    id: String,
    sections: Vec<Section>,
    gold_summary: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, sections: Vec<Section>, gold_summary: Vec<String>) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::EmptyInput("document has no sections"));
        }
        Ok(Document {
            id: id.into(),
            sections,
            gold_summary,
        })
    }

    /// Convenience constructor from titles and raw sentence strings.
    pub fn from_parts<S: AsRef<str>>(
        id: impl Into<String>,
        sections: Vec<(Option<&str>, Vec<S>)>,
        gold_summary: Vec<String>,
    ) -> Result<Self> {
        let sections = sections
            .into_iter()
            .map(|(title, sents)| {
                let sents = sents
                    .iter()
                    .map(|s| Sentence::new(s.as_ref()))
                    .collect::<Result<Vec<_>>>()?;
                Section::new(title.map(str::to_string), sents)
            })
            .collect::<Result<Vec<_>>>()?;
        Document::new(id, sections, gold_summary)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn gold_summary(&self) -> &[String] {
        &self.gold_summary
    }

    pub fn with_gold_summary(mut self, summary: Vec<String>) -> Self {
        self.gold_summary = summary;
        self
    }

    pub fn sentence_count(&self) -> usize {
        self.sections.iter().map(|s| s.sentences.len()).sum()
    }

    pub fn token_count(&self) -> usize {
        self.sentences().map(|s| s.tokens.len()).sum()
    }

    /// Sentences in document order.
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections.iter().flat_map(|s| s.sentences.iter())
    }

    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        self.sentences().nth(index)
    }

    pub fn sentence_texts(&self) -> Vec<String> {
        self.sentences().map(|s| s.text.clone()).collect()
    }

    /// Structure vector of every sentence, in document order.
    pub fn ssvs(&self) -> Vec<Ssv> {
        self.sections
            .iter()
            .enumerate()
            .flat_map(|(a, sec)| (0..sec.sentences.len()).map(move |b| Ssv::new(a, b)))
            .collect()
    }

    /// Structure vector of every token, in document order.
    pub fn tsvs(&self) -> Vec<Tsv> {
        let mut out = Vec::with_capacity(self.token_count());
        for (a, sec) in self.sections.iter().enumerate() {
            for (b, sent) in sec.sentences.iter().enumerate() {
                out.extend((0..sent.tokens.len()).map(|c| Tsv::new(a, b, c)));
            }
        }
        out
    }

    pub fn ssv_of(&self, s: usize) -> Result<Ssv> {
        let mut rest = s;
        for (a, sec) in self.sections.iter().enumerate() {
            if rest < sec.sentences.len() {
                return Ok(Ssv::new(a, rest));
            }
            rest -= sec.sentences.len();
        }
        Err(Error::OutOfRange {
            what: "sentence",
            index: s,
            len: self.sentence_count(),
        })
    }

    pub fn tsv_of(&self, t: usize) -> Result<Tsv> {
        let mut rest = t;
        for (a, sec) in self.sections.iter().enumerate() {
            for (b, sent) in sec.sentences.iter().enumerate() {
                if rest < sent.tokens.len() {
                    return Ok(Tsv::new(a, b, rest));
                }
                rest -= sent.tokens.len();
            }
        }
        Err(Error::OutOfRange {
            what: "token",
            index: t,
            len: self.token_count(),
        })
    }

    /// Section title of every sentence, in document order.
    pub fn sentence_titles(&self) -> Vec<Option<&str>> {
        self.sections
            .iter()
            .flat_map(|sec| std::iter::repeat_n(sec.title(), sec.sentences.len()))
            .collect()
    }
}

/// Splits plain text into a document: blank-line separated paragraphs become
/// untitled sections, sentences end at `.`, `!` or `?` followed by
/// whitespace or end of text.
pub fn segment_plain_text(id: &str, text: &str) -> Result<Document> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("plain text is empty"));
    }
    let mut sections = Vec::new();
    for paragraph in split_paragraphs(text) {
        let sentences = split_sentences(&paragraph)
            .into_iter()
            .filter_map(|s| Sentence::new(s).ok())
            .collect::<Vec<_>>();
        if !sentences.is_empty() {
            sections.push(Section::new(None, sentences)?);
        }
    }
    if sections.is_empty() {
        return Err(Error::EmptyInput("plain text has no tokens"));
    }
    Document::new(id, sections, Vec::new())
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join(" "));
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join(" "));
    }
    paragraphs
}

fn split_sentences(paragraph: &str) -> Vec<String> {
    const TERMINAL: &[char] = &['.', '!', '?'];
    const TRAILING: &[char] = &['"', '\'', ')', ']'];
    let chars: Vec<char> = paragraph.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if TERMINAL.contains(&chars[i]) {
            let mut end = i + 1;
            while end < chars.len() && (TERMINAL.contains(&chars[end]) || TRAILING.contains(&chars[end])) {
                end += 1;
            }
            if end == chars.len() || chars[end].is_whitespace() {
                let s: String = chars[start..end].iter().collect();
                if !s.trim().is_empty() {
                    out.push(s.trim().to_string());
                }
                start = end;
            }
            i = end;
        } else {
            i += 1;
        }
    }
    let tail: String = chars[start..].iter().collect();
    if !tail.trim().is_empty() {
        out.push(tail.trim().to_string());
    }
    out
}

// ---------------------------------------------------------------------------
// JSON-lines IO

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawSection {
    pub title: Option<String>,
    pub sentences: Vec<String>,
}

/// One corpus line. Extra keys written by the oracle stage are optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawDocument {
    pub id: String,
    pub sections: Vec<RawSection>,
    #[serde(default)]
    pub summary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_rouge: Option<crate::labeling::RougeScore>,
}

impl RawDocument {
    pub(crate) fn from_document(doc: &Document) -> Self {
        RawDocument {
            id: doc.id.clone(),
            sections: doc
                .sections
                .iter()
                .map(|s| RawSection {
                    title: s.title.clone(),
                    sentences: s.sentences.iter().map(|x| x.text.clone()).collect(),
                })
                .collect(),
            summary: doc.gold_summary.clone(),
            labels: None,
            oracle_rouge: None,
        }
    }

    pub(crate) fn to_document(&self, line: usize) -> Result<Document> {
        let schema = |message: String| Error::Schema { line, message };
        if self.sections.is_empty() {
            return Err(schema(format!("document {:?} has no sections", self.id)));
        }
        let mut sections = Vec::with_capacity(self.sections.len());
        for (k, raw) in self.sections.iter().enumerate() {
            if raw.sentences.is_empty() {
                return Err(schema(format!("section {k} has no sentences")));
            }
            let sentences = raw
                .sentences
                .iter()
                .enumerate()
                .map(|(j, s)| Sentence::new(s.as_str()).map_err(|_| schema(format!("section {k} sentence {j} is empty"))))
                .collect::<Result<Vec<_>>>()?;
            let section = Section::new(raw.title.clone(), sentences).map_err(|e| schema(format!("section {k}: {e}")))?;
            sections.push(section);
        }
        Document::new(self.id.clone(), sections, self.summary.clone())
    }
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a corpus file: one JSON document per line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_jsonl::<RawDocument>(path.as_ref())?
        .iter()
        .map(|(line, raw)| raw.to_document(*line))
        .collect()
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_jsonl(path.as_ref(), docs.iter().map(RawDocument::from_document))
}

/// A document plus the extraction labels and oracle score written by the
/// oracle stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub document: Document,
    pub labels: Option<Vec<u8>>,
    pub oracle_rouge: Option<crate::labeling::RougeScore>,
}

impl LabeledDocument {
    pub fn unlabeled(document: Document) -> Self {
        LabeledDocument {
            document,
            labels: None,
            oracle_rouge: None,
        }
    }

    /// Labels as floats, or an error when the document has none.
    pub fn label_values(&self) -> Result<Vec<f64>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|&v| f64::from(v)).collect())
            .ok_or_else(|| Error::Config(format!("document {:?} has no labels; run the oracle stage", self.document.id)))
    }
}

/// Reads a corpus keeping labels when present. Label vectors must have one
/// 0/1 entry per sentence.
pub fn load_labeled_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledDocument>> {
    read_jsonl::<RawDocument>(path.as_ref())?
        .into_iter()
        .map(|(line, raw)| {
            let document = raw.to_document(line)?;
            if let Some(labels) = &raw.labels {
                if labels.len() != document.sentence_count() {
                    return Err(Error::Schema {
                        line,
                        message: format!(
                            "{} labels for {} sentences",
                            labels.len(),
                            document.sentence_count()
                        ),
                    });
                }
                if labels.iter().any(|&v| v > 1) {
                    return Err(Error::Schema {
                        line,
                        message: "labels must be 0 or 1".into(),
                    });
                }
            }
            Ok(LabeledDocument {
                document,
                labels: raw.labels,
                oracle_rouge: raw.oracle_rouge,
            })
        })
        .collect()
}

pub fn write_labeled_corpus(path: impl AsRef<Path>, docs: &[LabeledDocument]) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        docs.iter().map(|d| RawDocument {
            labels: d.labels.clone(),
            oracle_rouge: d.oracle_rouge,
            ..RawDocument::from_document(&d.document)
        }),
    )
}

// ---------------------------------------------------------------------------
// Statistics

/// Which unit counts as the highest hierarchy level. Both are stored as
/// sections; the choice fixes the declared hierarchy depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hierarchy {
    /// Titled sections.
    Sections,
    /// Untitled paragraphs stand in for sections.
    Paragraphs,
}

impl Hierarchy {
    pub fn hi_depth(self) -> usize {
        match self {
            Hierarchy::Sections => 4,
            Hierarchy::Paragraphs => 3,
        }
    }

    /// Titled sections if any section in the corpus carries a title.
    pub fn detect(docs: &[Document]) -> Self {
        if docs.iter().flat_map(|d| d.sections.iter()).any(|s| s.title.is_some()) {
            Hierarchy::Sections
        } else {
            Hierarchy::Paragraphs
        }
    }
}

impl std::str::FromStr for Hierarchy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sections" => Ok(Hierarchy::Sections),
            "paragraphs" => Ok(Hierarchy::Paragraphs),
            other => Err(Error::Config(format!("unknown hierarchy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub avg_sentences: f64,
    pub avg_sections: f64,
    pub hi_depth: usize,
    pub avg_hi_width: f64,
    /// Sentences per document.
    pub sentence_counts: Vec<usize>,
    /// Highest-hierarchy units per document.
    pub unit_counts: Vec<usize>,
}

impl CorpusStats {
    pub const CSV_HEADER: &'static str = "n_docs,avg_sentences,avg_sections,hi_depth,avg_hi_width";

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", Self::CSV_HEADER).unwrap();
        writeln!(
            s,
            "{},{:.4},{:.4},{},{:.4}",
            self.n_docs, self.avg_sentences, self.avg_sections, self.hi_depth, self.avg_hi_width
        )
        .unwrap();
        s
    }
}

pub fn corpus_stats(docs: &[Document], hierarchy: Hierarchy) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("corpus is empty"));
    }
    let n = docs.len() as f64;
    let sentence_counts: Vec<usize> = docs.iter().map(Document::sentence_count).collect();
    let unit_counts: Vec<usize> = docs.iter().map(|d| d.sections.len()).collect();
    let avg_hi_width = sentence_counts
        .iter()
        .zip(&unit_counts)
        .map(|(&s, &u)| s as f64 / u as f64)
        .sum::<f64>()
        / n;
    Ok(CorpusStats {
        n_docs: docs.len(),
        avg_sentences: sentence_counts.iter().sum::<usize>() as f64 / n,
        avg_sections: unit_counts.iter().sum::<usize>() as f64 / n,
        hi_depth: hierarchy.hi_depth(),
        avg_hi_width,
        sentence_counts,
        unit_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sized(sizes: &[usize]) -> Document {
        let sections = sizes
            .iter()
            .map(|&n| (None, (0..n).map(|i| format!("w{i} x.")).collect::<Vec<_>>()))
            .collect();
        Document::from_parts("d", sections, vec![]).unwrap()
    }

    #[test]
    fn segment_paragraphs_and_sentences() {
        let d = segment_plain_text("p", "A b. C d.\n\nE f.").unwrap();
        assert_eq!(d.sections().len(), 2);
        assert_eq!(d.sections()[0].sentences().len(), 2);
        assert_eq!(d.sections()[1].sentences().len(), 1);
        assert!(d.sections().iter().all(|s| s.title().is_none()));
    }

    #[test]
    fn segment_single_sentence() {
        let d = segment_plain_text("p", "Hello.").unwrap();
        assert_eq!(d.sentence_count(), 1);
        assert_eq!(d.sentence(0).unwrap().tokens(), ["hello", "."]);
    }

    #[test]
    fn segment_rejects_empty() {
        assert!(segment_plain_text("p", "").is_err());
        assert!(segment_plain_text("p", "  \n\n ").is_err());
    }

    #[test]
    fn segment_keeps_decimal_points() {
        let d = segment_plain_text("p", "It was 3.5 m long. Then \"it stopped.\" End").unwrap();
        let texts = d.sentence_texts();
        assert_eq!(texts, vec!["It was 3.5 m long.", "Then \"it stopped.\"", "End"]);
    }

    #[test]
    fn ssv_examples() {
        let d = sized(&[2, 3]);
        assert_eq!(d.ssv_of(0).unwrap(), Ssv::new(0, 0));
        assert_eq!(d.ssv_of(3).unwrap(), Ssv::new(1, 1));
        assert!(matches!(d.ssv_of(5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn tsv_examples() {
        let d = Document::from_parts("d", vec![(None, vec!["a b", "c"])], vec![]).unwrap();
        assert_eq!(d.tsv_of(2).unwrap(), Tsv::new(0, 1, 0));
        assert_eq!(d.tsv_of(0).unwrap(), Tsv::new(0, 0, 0));
        assert!(d.tsv_of(3).is_err());
        assert_eq!(d.tsvs(), vec![Tsv::new(0, 0, 0), Tsv::new(0, 0, 1), Tsv::new(0, 1, 0)]);
    }

    #[test]
    fn stats_examples() {
        let st = corpus_stats(&[sized(&[4, 5, 6])], Hierarchy::Sections).unwrap();
        assert_eq!(st.avg_hi_width, 5.0);
        assert_eq!(st.hi_depth, 4);
        let st = corpus_stats(&[sized(&[1])], Hierarchy::Paragraphs).unwrap();
        assert_eq!(st.avg_hi_width, 1.0);
        assert_eq!(st.hi_depth, 3);
        assert!(corpus_stats(&[], Hierarchy::Sections).is_err());
    }

    #[test]
    fn stats_csv_header() {
        let st = corpus_stats(&[sized(&[2, 2])], Hierarchy::Sections).unwrap();
        let csv = st.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CorpusStats::CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,4.0000,2.0000,4,2.0000");
    }

    #[test]
    fn load_minimal_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(
            &p,
            r#"{"id":"d1","sections":[{"title":"intro","sentences":["a b ."]}],"summary":["a b ."]}"#,
        )
        .unwrap();
        let docs = load_corpus(&p).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].sections().len(), 1);
        assert_eq!(docs[0].sentence_count(), 1);
    }

    #[test]
    fn load_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn load_reports_schema_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, r#"{"id":"d1","sections":[],"summary":[]}"#).unwrap();
        match load_corpus(&p) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected schema error, got {other:?}"),
        }
        std::fs::write(
            &p,
            "{\"id\":\"ok\",\"sections\":[{\"title\":null,\"sentences\":[\"x\"]}]}\n{\"id\":\"d2\",\"sections\":[{\"title\":null,\"sentences\":[\" \"]}]}",
        )
        .unwrap();
        match load_corpus(&p) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    fn arb_doc() -> impl Strategy<Value = Document> {
        let sentence = "[A-Za-z]{1,6}( [a-z]{1,5}){0,4}[.!?]?";
        let section = (
            proptest::option::of("[A-Z][a-z]{1,8}( [a-z]{1,6})?"),
            proptest::collection::vec(sentence, 1..4),
        );
        (
            "[a-z0-9]{1,6}",
            proptest::collection::vec(section, 1..4),
            proptest::collection::vec("[a-z ]{1,12}", 0..3),
        )
            .prop_map(|(id, secs, summary)| {
                let sections = secs
                    .iter()
                    .map(|(t, s)| (t.as_deref(), s.clone()))
                    .collect::<Vec<_>>();
                Document::from_parts(id, sections, summary).unwrap()
            })
    }

    proptest! {
        #[test]
        fn write_load_round_trip(docs in proptest::collection::vec(arb_doc(), 0..4)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c.jsonl");
            write_corpus(&p, &docs).unwrap();
            prop_assert_eq!(load_corpus(&p).unwrap(), docs);
        }

        #[test]
        fn ssv_sections_and_order(sizes in proptest::collection::vec(1usize..6, 1..6)) {
            let d = sized(&sizes);
            let ssvs = d.ssvs();
            let mut s = 0;
            for (k, &n) in sizes.iter().enumerate() {
                for b in 0..n {
                    prop_assert_eq!(ssvs[s], Ssv::new(k, b));
                    prop_assert_eq!(d.ssv_of(s).unwrap(), Ssv::new(k, b));
                    s += 1;
                }
            }
        }

        #[test]
        fn stats_of_repeated_doc(sizes in proptest::collection::vec(1usize..6, 1..6), copies in 1usize..5) {
            let d = sized(&sizes);
            let one = corpus_stats(std::slice::from_ref(&d), Hierarchy::Sections).unwrap();
            let many = corpus_stats(&vec![d; copies], Hierarchy::Sections).unwrap();
            prop_assert!((one.avg_hi_width - many.avg_hi_width).abs() < 1e-12);
            prop_assert!((one.avg_sentences - many.avg_sentences).abs() < 1e-12);
            prop_assert!((one.avg_sections - many.avg_sections).abs() < 1e-12);
        }
    }
}
