use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Graph, ParamStore};
use crate::corpus::LabeledDocument;
use crate::error::{Error, Result};
use crate::model::{DocumentFeatures, DocumentInput, HiStructModel};
use crate::summarizer::check_labels;

use super::config::TrainConfig;
use super::optim::Adam;

/// Parameters kept after a validation pass.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    pub validation_loss: f64,
    pub params: ParamStore,
    /// Where the checkpoint was written, when an output directory was given.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model after the last update.
    pub model: HiStructModel,
    /// Best checkpoints, lowest validation loss first.
    pub checkpoints: Vec<Checkpoint>,
    pub evals: Vec<EvalRecord>,
    /// Mean training loss of every update.
    pub train_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn checkpoint_models(&self) -> Vec<HiStructModel> {
        self.checkpoints
            .iter()
            .map(|c| self.model.with_params(c.params.clone()))
            .collect()
    }
}

/// A training or validation example in whichever form the encoder mode
/// needs.
enum Example {
    Full(DocumentInput),
    Cached(DocumentFeatures),
}

struct Item {
    example: Example,
    labels: Vec<f64>,
}

fn build_items(model: &HiStructModel, docs: &[LabeledDocument], cache: bool) -> Result<Vec<Item>> {
    docs.iter()
        .map(|d| {
            let input = model.prepare(&d.document)?;
            let mut labels = d.label_values()?;
            labels.truncate(input.sentence_count());
            check_labels(&labels)?;
            let example = if cache {
                Example::Cached(model.features(&input)?)
            } else {
                Example::Full(input)
            };
            Ok(Item { example, labels })
        })
        .collect()
}

/// Summed BCE and its gradients for one document.
fn doc_loss(model: &HiStructModel, item: &Item, with_grads: bool) -> Result<(f64, Option<Gradients>)> {
    let mut g = Graph::new(model.store());
    let out = match &item.example {
        Example::Full(input) => model.forward(&mut g, input)?,
        Example::Cached(f) => model.forward_features(&mut g, f)?,
    };
    let loss = g.bce_sum(out.probs, &item.labels);
    let value = g.value(loss)[[0, 0]];
    let grads = with_grads.then(|| g.backward(loss));
    Ok((value, grads))
}

/// Mean BCE over every sentence of the set.
fn mean_loss(model: &HiStructModel, items: &[Item]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for item in items {
        total += doc_loss(model, item, false)?.0;
        count += item.labels.len();
    }
    if count == 0 {
        return Err(Error::EmptyInput("validation set has no sentences"));
    }
    Ok(total / count as f64)
}

/// Validation loss of `model` on labeled documents.
pub fn validation_loss(model: &HiStructModel, docs: &[LabeledDocument]) -> Result<f64> {
    mean_loss(model, &build_items(model, docs, false)?)
}

/// Endless stream of document indices, reshuffled every epoch.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Sampler { order, pos: 0, rng }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Trains `model`; checkpoints are written to `out_dir` when given.
///
/// The gradient of each update is the summed per-sentence loss gradient over
/// all `batch_size * accumulation_count` documents divided by their total
/// sentence count.
pub fn train(
    mut model: HiStructModel,
    train_docs: &[LabeledDocument],
    valid_docs: &[LabeledDocument],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    if valid_docs.is_empty() {
        return Err(Error::EmptyInput("validation corpus"));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cache = !cfg.fine_tune_encoder;
    let train_items = build_items(&model, train_docs, cache)?;
    let valid_items = build_items(&model, valid_docs, cache)?;
    let trainable = if cfg.fine_tune_encoder {
        model.store().ids().collect()
    } else {
        model.summarizer_params()
    };
    let mut adam = Adam::new(trainable, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut sampler = Sampler::new(train_items.len(), cfg.seed);
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    let mut evals = Vec::new();
    let mut train_losses = Vec::with_capacity(cfg.total_steps);

    for step in 1..=cfg.total_steps {
        let mut grads = Gradients::zeros_like(model.store());
        let mut loss_sum = 0.0;
        let mut sentences = 0usize;
        for _ in 0..cfg.batch_size * cfg.accumulation_count {
            let item = &train_items[sampler.next()];
            let (loss, g) = doc_loss(&model, item, true)?;
            grads.accumulate(&g.expect("gradients requested"));
            loss_sum += loss;
            sentences += item.labels.len();
        }
        let mean = loss_sum / sentences as f64;
        if !mean.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step} is {mean}")));
        }
        grads.scale(1.0 / sentences as f64);
        adam.step(model.store_mut(), &grads, cfg.lr_at(step)?);
        if !model.store().all_finite() {
            return Err(Error::NonFinite(format!("parameters after step {step}")));
        }
        train_losses.push(mean);

        if step % cfg.eval_every == 0 || step == cfg.total_steps {
            let validation_loss = mean_loss(&model, &valid_items)?;
            if !validation_loss.is_finite() {
                return Err(Error::NonFinite(format!("validation loss at step {step}")));
            }
            log::info!("step {step} train_loss {mean:.6} valid_loss {validation_loss:.6}");
            evals.push(EvalRecord { step, validation_loss });
            keep_checkpoint(&model, &mut checkpoints, step, validation_loss, cfg.keep_top_k, out_dir)?;
        }
    }
    Ok(TrainOutcome {
        model,
        checkpoints,
        evals,
        train_losses,
    })
}

/// Inserts the current parameters when they rank among the `k` lowest
/// validation losses; ties keep the earlier checkpoint.
fn keep_checkpoint(
    model: &HiStructModel,
    kept: &mut Vec<Checkpoint>,
    step: usize,
    validation_loss: f64,
    k: usize,
    out_dir: Option<&Path>,
) -> Result<()> {
    let pos = kept.partition_point(|c| c.validation_loss <= validation_loss);
    if pos >= k {
        return Ok(());
    }
    let path = match out_dir {
        Some(dir) => {
            let p = dir.join(format!("checkpoint-{step:06}.json"));
            model.save(&p, step, validation_loss)?;
            Some(p)
        }
        None => None,
    };
    kept.insert(
        pos,
        Checkpoint {
            step,
            validation_loss,
            params: model.store().clone(),
            path,
        },
    );
    if kept.len() > k {
        if let Some(p) = kept.pop().and_then(|c| c.path) {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, TitleClassDictionary};
    use crate::encoder::{build_vocab, EncoderConfig};
    use crate::model::ModelConfig;
    use crate::posenc::EncodingConfig;
    use crate::summarizer::SummarizerConfig;

    fn corpus(n: usize) -> Vec<LabeledDocument> {
        (0..n)
            .map(|i| {
                let doc = Document::from_parts(
                    format!("d{i}"),
                    vec![
                        (Some("Introduction"), vec!["alpha beta gamma.", "delta epsilon."]),
                        (Some("Conclusion"), vec!["zeta eta theta.", "iota kappa lambda mu."]),
                    ],
                    vec!["iota kappa".to_string()],
                )
                .unwrap();
                let labels = if i % 2 == 0 { vec![0, 0, 0, 1] } else { vec![1, 0, 0, 1] };
                LabeledDocument {
                    document: doc,
                    labels: Some(labels),
                    oracle_rouge: None,
                }
            })
            .collect()
    }

    fn model(docs: &[LabeledDocument]) -> HiStructModel {
        let plain: Vec<Document> = docs.iter().map(|d| d.document.clone()).collect();
        let encoding = EncodingConfig {
            d_model: 8,
            max_positions: 16,
            inject_ste: true,
            ..Default::default()
        };
        let cfg = ModelConfig {
            encoding,
            encoder: EncoderConfig {
                n_heads: 2,
                n_layers: 1,
                d_ff: 16,
                max_len: 32,
                init_std: 0.1,
                ..Default::default()
            },
            summarizer: SummarizerConfig {
                n_layers: 1,
                n_heads: 2,
                d_ff: 16,
                init_std: 0.1,
            },
        };
        HiStructModel::new(cfg, build_vocab(&plain, 1).unwrap(), TitleClassDictionary::scientific(), 5).unwrap()
    }

    fn cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            total_steps: steps,
            warmup_steps: 2,
            peak_lr_factor: 0.05,
            batch_size: 2,
            accumulation_count: 1,
            eval_every: 1,
            keep_top_k: 3,
            seed: 9,
            fine_tune_encoder: true,
            ..Default::default()
        }
    }

    #[test]
    fn accumulation_matches_large_batch() {
        let docs = corpus(6);
        let a = train(model(&docs), &docs, &docs[..2], &TrainConfig { batch_size: 1, accumulation_count: 4, ..cfg(4) }, None).unwrap();
        let b = train(model(&docs), &docs, &docs[..2], &TrainConfig { batch_size: 4, accumulation_count: 1, ..cfg(4) }, None).unwrap();
        for ((_, _, x), (_, _, y)) in a.model.store().iter().zip(b.model.store().iter()) {
            for (p, q) in x.iter().zip(y.iter()) {
                assert!((p - q).abs() < 1e-5);
            }
        }
        let (la, lb) = (a.evals.last().unwrap().validation_loss, b.evals.last().unwrap().validation_loss);
        assert!((la - lb).abs() < 1e-5);
    }

    #[test]
    fn frozen_encoder_is_bitwise_unchanged() {
        let docs = corpus(4);
        let m = model(&docs);
        let before: Vec<_> = m.encoder_params().iter().map(|&p| m.store().get(p).clone()).collect();
        let (w, _) = m.summarizer().classifier();
        let w0 = m.store().get(w).clone();
        let out = train(m, &docs, &docs, &TrainConfig { fine_tune_encoder: false, ..cfg(5) }, None).unwrap();
        for (p, b) in out.model.encoder_params().iter().zip(&before) {
            assert_eq!(out.model.store().get(*p), b);
        }
        assert_ne!(out.model.store().get(w), &w0);
    }

    #[test]
    fn keeps_lowest_validation_losses() {
        let docs = corpus(4);
        let dir = tempfile::tempdir().unwrap();
        let out = train(model(&docs), &docs, &docs, &cfg(10), Some(dir.path())).unwrap();
        assert_eq!(out.evals.len(), 10);
        let mut losses: Vec<f64> = out.evals.iter().map(|e| e.validation_loss).collect();
        losses.sort_by(f64::total_cmp);
        let kept: Vec<f64> = out.checkpoints.iter().map(|c| c.validation_loss).collect();
        assert_eq!(kept, losses[..3]);
        let files = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 3);
        for c in &out.checkpoints {
            let (m, meta) = HiStructModel::load(c.path.as_ref().unwrap()).unwrap();
            assert_eq!(meta.step, c.step);
            let again = validation_loss(&m, &docs).unwrap();
            assert!((again - c.validation_loss).abs() < 1e-6);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let docs = corpus(6);
        let a = train(model(&docs), &docs, &docs, &cfg(30), None).unwrap();
        let b = train(model(&docs), &docs, &docs, &cfg(30), None).unwrap();
        assert_eq!(a.evals, b.evals);
        assert!(a.evals.last().unwrap().validation_loss < a.evals[0].validation_loss);
    }

    #[test]
    fn rejects_missing_labels_and_nan() {
        let mut docs = corpus(2);
        docs[1].labels = None;
        assert!(train(model(&docs), &docs, &docs, &cfg(2), None).is_err());
        let docs = corpus(2);
        let mut m = model(&docs);
        let (w, _) = m.summarizer().classifier();
        m.store_mut().get_mut(w)[[0, 0]] = f64::NAN;
        assert!(matches!(train(m, &docs, &docs, &cfg(2), None), Err(Error::NonFinite(_))));
    }
}
