//! Python bindings. Build with `--features extension-module` and import the
//! resulting shared library as `histruct`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use histruct::corpus::{self, LabeledDocument, TitleClassDictionary};
use histruct::labeling;
use histruct::pipeline::{self, EvalMode, ExperimentConfig, SelectionConfig, SyntheticSpec};
use histruct::{posenc, summarizer, HiStructModel};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: histruct::Error) -> PyErr {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(&e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    match e {
        histruct::Error::Io { .. } => PyOSError::new_err(msg),
        e if e.is_numeric() => PyArithmeticError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// A document of sections, sentences and a gold summary.
#[pyclass(name = "Document", module = "histruct", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDocument {
    inner: corpus::Document,
}

#[pymethods]
impl PyDocument {
    /// `sections` is a list of `(title or None, [sentence, ...])`.
    #[new]
    #[pyo3(signature = (id, sections, summary = Vec::new()))]
    fn new(id: &str, sections: Vec<(Option<String>, Vec<String>)>, summary: Vec<String>) -> PyResult<Self> {
        let parts = sections
            .iter()
            .map(|(t, s)| (t.as_deref(), s.iter().map(String::as_str).collect()))
            .collect();
        let inner = corpus::Document::from_parts(id, parts, summary).map_err(to_py)?;
        Ok(PyDocument { inner })
    }

    /// Segments plain text; blank lines separate paragraphs.
    #[staticmethod]
    #[pyo3(signature = (id, text, summary = Vec::new()))]
    fn from_text(id: &str, text: &str, summary: Vec<String>) -> PyResult<Self> {
        let inner = corpus::segment_plain_text(id, text).map_err(to_py)?.with_gold_summary(summary);
        Ok(PyDocument { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn sentences(&self) -> Vec<String> {
        self.inner.sentence_texts()
    }

    #[getter]
    fn summary(&self) -> Vec<String> {
        self.inner.gold_summary().to_vec()
    }

    #[getter]
    fn titles(&self) -> Vec<Option<String>> {
        self.inner.sections().iter().map(|s| s.title().map(str::to_string)).collect()
    }

    /// `(section, sentence)` of every sentence.
    fn ssvs(&self) -> Vec<(usize, usize)> {
        self.inner.ssvs().iter().map(|v| (v.section, v.sentence)).collect()
    }

    /// `(section, sentence, token)` of every token.
    fn tsvs(&self) -> Vec<(usize, usize, usize)> {
        self.inner.tsvs().iter().map(|v| (v.section, v.sentence, v.token)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.sentence_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Document(id={:?}, sections={}, sentences={})",
            self.inner.id(),
            self.inner.sections().len(),
            self.inner.sentence_count()
        )
    }
}

/// A trained extractive summarizer loaded from a checkpoint.
#[pyclass(name = "Model", module = "histruct", frozen)]
struct PyModel {
    inner: HiStructModel,
    step: usize,
    validation_loss: f64,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, meta) = HiStructModel::load(path).map_err(to_py)?;
        Ok(PyModel {
            inner,
            step: meta.step,
            validation_loss: meta.validation_loss,
        })
    }

    #[getter]
    fn step(&self) -> usize {
        self.step
    }

    #[getter]
    fn validation_loss(&self) -> f64 {
        self.validation_loss
    }

    /// Encoding setting, e.g. `"la-sum"`.
    #[getter]
    fn setting(&self) -> String {
        self.inner.encoding().setting.to_string()
    }

    fn parameter_counts(&self) -> BTreeMap<String, usize> {
        self.inner.parameter_counts()
    }

    /// Per-sentence probabilities of belonging to the summary.
    fn scores(&self, doc: &PyDocument) -> PyResult<Vec<f64>> {
        self.inner.scores(&doc.inner).map_err(to_py)
    }

    /// Returns `(chosen indices, summary sentences)`.
    #[pyo3(signature = (doc, n = 7, trigram_blocking = false))]
    fn predict(&self, doc: &PyDocument, n: usize, trigram_blocking: bool) -> PyResult<(Vec<usize>, Vec<String>)> {
        let p = self.inner.predict(&doc.inner, n, trigram_blocking).map_err(to_py)?;
        Ok((p.chosen, p.summary))
    }
}

/// ROUGE-1/2/L F1 of a candidate summary against a reference.
#[pyfunction]
fn rouge(candidate: Vec<String>, reference: Vec<String>) -> (f64, f64, f64) {
    let r = labeling::rouge_summary(&candidate, &reference);
    (r.r1(), r.r2(), r.rl())
}

/// Greedy oracle: 0/1 labels with at most `max_sentences` positives.
#[pyfunction]
#[pyo3(signature = (doc, max_sentences = 3))]
fn oracle_labels(doc: &PyDocument, max_sentences: usize) -> PyResult<Vec<u32>> {
    let o = labeling::oracle_labels(&doc.inner, max_sentences).map_err(to_py)?;
    Ok(o.labels.into_iter().map(u32::from).collect())
}

/// Sinusoidal encoding of `pos` in `d` dimensions.
#[pyfunction]
fn sinusoid(pos: usize, d: usize) -> Vec<f64> {
    posenc::sinusoid(pos, d).to_vec()
}

/// Learning rate at `step` of the warmup / inverse square root schedule.
#[pyfunction]
fn lr_at(step: usize, warmup: usize, factor: f64) -> PyResult<f64> {
    pipeline::lr_at(step, warmup, factor).map_err(to_py)
}

/// Indices of the `n` highest-scoring sentences in document order.
#[pyfunction]
#[pyo3(signature = (scores, sentences, n, trigram_blocking = false))]
fn select(scores: Vec<f64>, sentences: Vec<String>, n: usize, trigram_blocking: bool) -> Vec<usize> {
    summarizer::select(&scores, &sentences, n, trigram_blocking).chosen
}

#[pyfunction]
fn total_variation(a: Vec<f64>, b: Vec<f64>) -> f64 {
    summarizer::total_variation(&a, &b)
}

/// Title class of a section heading, if any.
#[pyfunction]
fn classify_title(title: &str) -> Option<String> {
    corpus::classify_title(title, &TitleClassDictionary::scientific()).map(str::to_string)
}

#[pyfunction]
fn load_corpus(path: PathBuf) -> PyResult<Vec<PyDocument>> {
    Ok(corpus::load_corpus(path)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyDocument { inner })
        .collect())
}

#[pyfunction]
fn write_corpus(path: PathBuf, docs: Vec<PyRef<'_, PyDocument>>) -> PyResult<()> {
    let docs: Vec<corpus::Document> = docs.iter().map(|d| d.inner.clone()).collect();
    corpus::write_corpus(path, &docs).map_err(to_py)
}

/// Synthetic corpus as `(train, valid, test)`; `spec` is TOML text.
#[pyfunction]
#[pyo3(signature = (spec = None, seed = None))]
fn generate_synthetic(
    spec: Option<&str>,
    seed: Option<u64>,
) -> PyResult<(Vec<PyDocument>, Vec<PyDocument>, Vec<PyDocument>)> {
    let mut spec: SyntheticSpec = match spec {
        Some(text) => toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let c = pipeline::generate_synthetic(&spec, &TitleClassDictionary::scientific()).map_err(to_py)?;
    let wrap = |v: Vec<corpus::Document>| v.into_iter().map(|inner| PyDocument { inner }).collect();
    Ok((wrap(c.train), wrap(c.valid), wrap(c.test)))
}

/// Adds oracle labels to a corpus file.
#[pyfunction]
#[pyo3(signature = (input, output, max_sentences = 7))]
fn label_corpus(input: PathBuf, output: PathBuf, max_sentences: usize) -> PyResult<()> {
    let docs = corpus::load_corpus(input).map_err(to_py)?;
    let labeled = pipeline::label_corpus(&docs, max_sentences).map_err(to_py)?;
    corpus::write_labeled_corpus(output, &labeled).map_err(to_py)
}

/// Trains from an experiment file; returns `(path, step, validation loss)`
/// of the kept checkpoints, best first.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed = None))]
fn train(py: Python<'_>, config: PathBuf, out_dir: PathBuf, seed: Option<u64>) -> PyResult<Vec<(String, usize, f64)>> {
    let cfg = ExperimentConfig::load(&config).map_err(to_py)?;
    let (Some(train_path), Some(valid_path)) = (&cfg.corpus.train, &cfg.corpus.valid) else {
        return Err(PyValueError::new_err("the configuration needs corpus.train and corpus.valid"));
    };
    let train_docs = corpus::load_labeled_corpus(train_path).map_err(to_py)?;
    let valid_docs = corpus::load_labeled_corpus(valid_path).map_err(to_py)?;
    let titles = match &cfg.corpus.titles {
        Some(p) => TitleClassDictionary::load(p).map_err(to_py)?,
        None => TitleClassDictionary::scientific(),
    };
    let plain: Vec<_> = train_docs.iter().map(|d| d.document.clone()).collect();
    let vocab = histruct::encoder::build_vocab(&plain, cfg.corpus.min_freq).map_err(to_py)?;
    let mut tc = cfg.train.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    let model = HiStructModel::new(cfg.model_config(), vocab, titles, tc.seed).map_err(to_py)?;
    let outcome = py
        .detach(|| pipeline::train(model, &train_docs, &valid_docs, &tc, Some(&out_dir)))
        .map_err(to_py)?;
    Ok(outcome
        .checkpoints
        .iter()
        .map(|c| {
            let path = c.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            (path, c.step, c.validation_loss)
        })
        .collect())
}

/// ROUGE report for checkpoints (averaged), or for `mode="oracle"` /
/// `mode="lead"`. Returns `(rows, average, distribution)`.
#[pyfunction]
#[pyo3(signature = (corpus_path, checkpoints = Vec::new(), mode = "model", n = 7, trigram_blocking = false, lead_n = 3, max_index = 50))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn evaluate(
    py: Python<'_>,
    corpus_path: PathBuf,
    checkpoints: Vec<PathBuf>,
    mode: &str,
    n: usize,
    trigram_blocking: bool,
    lead_n: usize,
    max_index: usize,
) -> PyResult<(Vec<(String, f64, f64, f64)>, (f64, f64, f64), Vec<f64>)> {
    let docs: Vec<LabeledDocument> = corpus::load_labeled_corpus(corpus_path).map_err(to_py)?;
    let sel = SelectionConfig {
        n,
        trigram_blocking,
        max_index,
    };
    let report = match mode {
        "oracle" => pipeline::evaluate_baseline(EvalMode::Oracle, &docs, &sel),
        "lead" => pipeline::evaluate_baseline(EvalMode::Lead(lead_n), &docs, &sel),
        "model" => {
            let mut models = Vec::with_capacity(checkpoints.len());
            for p in &checkpoints {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                models.push((name, HiStructModel::load(p).map_err(to_py)?.0));
            }
            let named: Vec<(String, &HiStructModel)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
            py.detach(|| pipeline::evaluate_models(&named, &docs, &sel))
        }
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    }
    .map_err(to_py)?;
    let rows = report
        .rows
        .iter()
        .map(|r| (r.name.clone(), r.rouge.r1, r.rouge.r2, r.rouge.rl))
        .collect();
    let avg = (report.average.r1, report.average.r2, report.average.rl);
    Ok((rows, avg, report.distribution))
}

#[pymodule]
#[pyo3(name = "histruct")]
fn histruct_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDocument>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(rouge, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_labels, m)?)?;
    m.add_function(wrap_pyfunction!(sinusoid, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(total_variation, m)?)?;
    m.add_function(wrap_pyfunction!(classify_title, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(write_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(label_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
