//! Training, evaluation, synthetic corpora and experiment configuration.

mod config;
mod evaluate;
mod gradcheck;
mod optim;
mod synth;
mod train;

pub use config::{CorpusConfig, ExperimentConfig, SelectionConfig, TrainConfig};
pub use evaluate::{
    baseline_selections, evaluate_baseline, evaluate_models, model_selections, score_selections, EvalMode,
    EvaluationReport, ReportRow, RougeF1,
};
pub use gradcheck::gradient_check;
pub use optim::{lr_at, Adam};
pub use synth::{generate_synthetic, SyntheticCorpus, SyntheticSpec};
pub use train::{train, validation_loss, Checkpoint, EvalRecord, TrainOutcome};

use crate::corpus::{Document, LabeledDocument};
use crate::error::Result;
use crate::labeling::oracle_labels;

/// Adds greedy oracle labels (at most `max_sentences` positives) to every
/// document.
pub fn label_corpus(docs: &[Document], max_sentences: usize) -> Result<Vec<LabeledDocument>> {
    docs.iter()
        .map(|d| {
            let o = oracle_labels(d, max_sentences)?;
            Ok(LabeledDocument {
                document: d.clone(),
                labels: Some(o.labels),
                oracle_rouge: Some(o.score),
            })
        })
        .collect()
}
