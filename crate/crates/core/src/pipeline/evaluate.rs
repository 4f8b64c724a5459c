use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabeledDocument};
use crate::error::{Error, Result};
use crate::labeling::{oracle_labels, rouge_summary};
use crate::model::{prediction, HiStructModel};
use crate::summarizer::{lead_n, position_distribution, select, SelectionResult};

use super::config::SelectionConfig;

/// Corpus-level ROUGE F1 (mean of per-document F1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeF1 {
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

impl RougeF1 {
    pub fn total(&self) -> f64 {
        self.r1 + self.r2 + self.rl
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub rouge: RougeF1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    /// Mean over the rows.
    pub average: RougeF1,
    /// Mean position distribution over the rows.
    pub distribution: Vec<f64>,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "model,r1,r2,rl";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        let line = |name: &str, r: &RougeF1| format!("{name},{:.6},{:.6},{:.6}\n", r.r1, r.r2, r.rl);
        for row in &self.rows {
            s.push_str(&line(&row.name, &row.rouge));
        }
        s.push_str(&line("average", &self.average));
        s
    }
}

/// How summaries are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Oracle labels from the corpus, or a greedy oracle capped at the
    /// selection size when a document has none.
    Oracle,
    /// The first `n` sentences.
    Lead(usize),
}

/// Mean per-document ROUGE of selected summaries against gold summaries.
pub fn score_selections(docs: &[LabeledDocument], selections: &[SelectionResult]) -> Result<RougeF1> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("evaluation corpus"));
    }
    if docs.len() != selections.len() {
        return Err(Error::LengthMismatch {
            what: "selections",
            expected: docs.len(),
            found: selections.len(),
        });
    }
    let mut acc = RougeF1::default();
    for (d, sel) in docs.iter().zip(selections) {
        let gold = d.document.gold_summary();
        if gold.is_empty() {
            return Err(Error::EmptyInput("document without a gold summary"));
        }
        let r = rouge_summary(&sel.summary, gold);
        acc.r1 += r.r1();
        acc.r2 += r.r2();
        acc.rl += r.rl();
    }
    let n = docs.len() as f64;
    Ok(RougeF1 {
        r1: acc.r1 / n,
        r2: acc.r2 / n,
        rl: acc.rl / n,
    })
}

pub fn model_selections(
    model: &HiStructModel,
    docs: &[LabeledDocument],
    selection: &SelectionConfig,
) -> Result<Vec<SelectionResult>> {
    docs.iter()
        .map(|d| Ok(selection_of(&d.document, model.scores(&d.document)?, selection)))
        .collect()
}

fn selection_of(doc: &Document, scores: Vec<f64>, selection: &SelectionConfig) -> SelectionResult {
    let candidate_count = scores.len();
    let p = prediction(doc, scores, selection.n, selection.trigram_blocking);
    SelectionResult {
        chosen: p.chosen,
        summary: p.summary,
        candidate_count,
    }
}

pub fn baseline_selections(
    mode: EvalMode,
    docs: &[LabeledDocument],
    selection: &SelectionConfig,
) -> Result<Vec<SelectionResult>> {
    docs.iter()
        .map(|d| {
            let doc = &d.document;
            Ok(match mode {
                EvalMode::Lead(n) => lead_n(doc, n),
                EvalMode::Oracle => {
                    let labels = match &d.labels {
                        Some(l) => l.clone(),
                        None => oracle_labels(doc, selection.n)?.labels,
                    };
                    let scores: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
                    let k = labels.iter().filter(|&&l| l == 1).count();
                    select(&scores, &doc.sentence_texts(), k, false)
                }
            })
        })
        .collect()
}

/// Scores every checkpoint and averages the rows.
pub fn evaluate_models(
    models: &[(String, &HiStructModel)],
    docs: &[LabeledDocument],
    selection: &SelectionConfig,
) -> Result<EvaluationReport> {
    if models.is_empty() {
        return Err(Error::EmptyInput("no checkpoints to evaluate"));
    }
    let first = models[0].1;
    let mut parts = Vec::with_capacity(models.len());
    if models.iter().all(|(_, m)| first.shares_encoder_with(m)) {
        // Checkpoints of a frozen-encoder run: encode each document once.
        let features = docs
            .iter()
            .map(|d| first.features(&first.prepare(&d.document)?))
            .collect::<Result<Vec<_>>>()?;
        for (name, m) in models {
            let sel = docs
                .iter()
                .zip(&features)
                .map(|(d, f)| Ok(selection_of(&d.document, m.scores_from_features(f)?, selection)))
                .collect::<Result<Vec<_>>>()?;
            parts.push((name.clone(), sel));
        }
    } else {
        for (name, m) in models {
            parts.push((name.clone(), model_selections(m, docs, selection)?));
        }
    }
    report(parts, docs, selection.max_index)
}

pub fn evaluate_baseline(
    mode: EvalMode,
    docs: &[LabeledDocument],
    selection: &SelectionConfig,
) -> Result<EvaluationReport> {
    let name = match mode {
        EvalMode::Oracle => "oracle".to_string(),
        EvalMode::Lead(n) => format!("lead-{n}"),
    };
    let sel = baseline_selections(mode, docs, selection)?;
    report(vec![(name, sel)], docs, selection.max_index)
}

fn report(
    parts: Vec<(String, Vec<SelectionResult>)>,
    docs: &[LabeledDocument],
    max_index: usize,
) -> Result<EvaluationReport> {
    let mut rows = Vec::with_capacity(parts.len());
    let mut distribution = vec![0.0; max_index + 1];
    for (name, sel) in &parts {
        rows.push(ReportRow {
            name: name.clone(),
            rouge: score_selections(docs, sel)?,
        });
        for (acc, v) in distribution.iter_mut().zip(position_distribution(sel, max_index)?) {
            *acc += v;
        }
    }
    let k = parts.len() as f64;
    distribution.iter_mut().for_each(|v| *v /= k);
    let average = RougeF1 {
        r1: rows.iter().map(|r| r.rouge.r1).sum::<f64>() / k,
        r2: rows.iter().map(|r| r.rouge.r2).sum::<f64>() / k,
        rl: rows.iter().map(|r| r.rouge.rl).sum::<f64>() / k,
    };
    Ok(EvaluationReport {
        rows,
        average,
        distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<LabeledDocument> {
        let d = Document::from_parts(
            "a",
            vec![(None, vec!["the cat sat.", "a dog ran.", "birds fly high."])],
            vec!["the cat sat.".to_string()],
        )
        .unwrap();
        vec![LabeledDocument::unlabeled(d)]
    }

    #[test]
    fn lead_and_oracle_rows() {
        let sel = SelectionConfig {
            n: 1,
            trigram_blocking: false,
            max_index: 4,
        };
        let lead = evaluate_baseline(EvalMode::Lead(1), &docs(), &sel).unwrap();
        assert_eq!(lead.rows.len(), 1);
        assert_eq!(lead.average, lead.rows[0].rouge);
        assert!((lead.average.r1 - 1.0).abs() < 1e-12);
        let oracle = evaluate_baseline(EvalMode::Oracle, &docs(), &sel).unwrap();
        assert!((oracle.average.total() - 3.0).abs() < 1e-12);
        assert_eq!(oracle.distribution[0], 1.0);
        let csv = oracle.to_csv();
        assert!(csv.starts_with("model,r1,r2,rl\noracle,1.000000,"));
        assert!(csv.ends_with("average,1.000000,1.000000,1.000000\n"));
    }

    #[test]
    fn shared_features_match_per_model_scoring() {
        use crate::corpus::TitleClassDictionary;
        use crate::encoder::build_vocab;
        use crate::model::tests::tiny_config;

        let d = Document::from_parts(
            "b",
            vec![
                (Some("Introduction"), vec!["we study cats.", "cats sit on mats."]),
                (Some("Conclusions"), vec!["cats are calm.", "dogs run fast.", "birds sing."]),
            ],
            vec!["cats are calm.".to_string()],
        )
        .unwrap();
        let vocab = build_vocab(std::slice::from_ref(&d), 1).unwrap();
        let a = HiStructModel::new(tiny_config("la-sum", true), vocab, TitleClassDictionary::scientific(), 1).unwrap();
        let mut store = a.store().clone();
        let w = a.summarizer().classifier().0;
        store.get_mut(w).mapv_inplace(|v| -v);
        let b = a.with_params(store);
        assert!(a.shares_encoder_with(&b));
        let docs = vec![LabeledDocument::unlabeled(d)];
        let sel = SelectionConfig {
            n: 2,
            trigram_blocking: false,
            max_index: 6,
        };
        let shared = evaluate_models(&[("a".into(), &a), ("b".into(), &b)], &docs, &sel).unwrap();
        let separate = report(
            vec![
                ("a".into(), model_selections(&a, &docs, &sel).unwrap()),
                ("b".into(), model_selections(&b, &docs, &sel).unwrap()),
            ],
            &docs,
            sel.max_index,
        )
        .unwrap();
        assert_eq!(shared, separate);
        assert_ne!(shared.rows[0].rouge, shared.rows[1].rouge);
    }

    #[test]
    fn mismatched_inputs() {
        assert!(score_selections(&docs(), &[]).is_err());
        assert!(score_selections(&[], &[]).is_err());
    }
}
