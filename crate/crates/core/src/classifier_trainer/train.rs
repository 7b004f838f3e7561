use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, classify, cross_entropy, predict, AdamState, ClassifierParams};
use crate::attention_pool::{pool_backward, pool_forward, AttentionHeadParams};
use crate::embeddings::{EmbeddedDocument, EmbeddingCorpus};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DenseVector, Seed, SplitMix64};

const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Pooling head plus classifier: every trainable tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub head: AttentionHeadParams,
    pub classifier: ClassifierParams,
}

impl Model {
    pub fn new(head: AttentionHeadParams, classifier: ClassifierParams) -> Result<Self> {
        if head.dimension() != classifier.dimension() {
            return Err(Error::Shape(format!(
                "head dimension {} but classifier expects {}",
                head.dimension(),
                classifier.dimension()
            )));
        }
        Ok(Self { head, classifier })
    }

    pub fn init(d: usize, label_count: usize, seed: Seed) -> Result<Self> {
        Ok(Self {
            head: AttentionHeadParams::init(d, seed)?,
            classifier: ClassifierParams::init(label_count, d, seed.derive(3))?,
        })
    }

    pub fn dimension(&self) -> usize {
        self.head.dimension()
    }

    pub fn label_count(&self) -> usize {
        self.classifier.label_count()
    }

    /// Predicted label and logits for one document.
    pub fn predict(&self, sentences: &[DenseVector]) -> Result<(usize, DenseVector)> {
        let pooled = pool_forward(&self.head, sentences)?;
        let logits = classify(&self.classifier, &pooled.v)?;
        Ok((predict(&logits), logits))
    }

    /// Named mutable views of all parameter tensors, in a fixed order.
    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 5] {
        [
            ("W_s", self.head.w_s.as_mut_slice()),
            ("b_s", self.head.b_s.as_mut_slice()),
            ("u_s", self.head.u_s.as_mut_slice()),
            ("W_c", self.classifier.w_c.as_mut_slice()),
            ("b_c", self.classifier.b_c.as_mut_slice()),
        ]
    }

    /// All parameters flattened in the order of [`Model::tensors_mut`].
    pub fn flatten(&self) -> Vec<f64> {
        [
            self.head.w_s.as_slice(),
            self.head.b_s.as_slice(),
            self.head.u_s.as_slice(),
            self.classifier.w_c.as_slice(),
            self.classifier.b_c.as_slice(),
        ]
        .concat()
    }
}

/// Gradients for every tensor of a [`Model`], same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub w_s: DenseMatrix,
    pub b_s: Vec<f64>,
    pub u_s: Vec<f64>,
    pub w_c: DenseMatrix,
    pub b_c: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros(d: usize, label_count: usize) -> Self {
        Self {
            w_s: DenseMatrix::zeros(d, d),
            b_s: vec![0.0; d],
            u_s: vec![0.0; d],
            w_c: DenseMatrix::zeros(label_count, d),
            b_c: vec![0.0; label_count],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("W_s", self.w_s.as_slice()),
            ("b_s", &self.b_s),
            ("u_s", &self.u_s),
            ("W_c", self.w_c.as_slice()),
            ("b_c", &self.b_c),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_s.as_mut_slice(),
            &mut self.b_s,
            &mut self.u_s,
            self.w_c.as_mut_slice(),
            &mut self.b_c,
        ]
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t {
                *x *= factor;
            }
        }
    }
}

/// Loss, prediction and gradients for one document.
#[derive(Debug, Clone)]
pub struct DocumentGradients {
    pub loss: f64,
    pub predicted: usize,
    pub grads: ModelGrads,
    /// Gradient with respect to each input sentence vector.
    pub input_grads: Vec<DenseVector>,
}

/// Forward and backward pass of `cross_entropy(classify(pool(s)), label)`.
pub fn document_gradients(
    model: &Model,
    sentences: &[DenseVector],
    label: usize,
) -> Result<DocumentGradients> {
    let pooled = pool_forward(&model.head, sentences)?;
    let logits = classify(&model.classifier, &pooled.v)?;
    let (loss, grad_logits) = cross_entropy(&logits, label)?;

    let mut w_c = DenseMatrix::zeros(model.label_count(), model.dimension());
    w_c.add_outer(1.0, grad_logits.as_slice(), pooled.v.as_slice());
    let grad_v = model
        .classifier
        .w_c
        .transpose_matvec(grad_logits.as_slice())?;
    let head = pool_backward(&model.head, sentences, &pooled, &grad_v)?;

    Ok(DocumentGradients {
        loss,
        predicted: predict(&logits),
        grads: ModelGrads {
            w_s: head.d_w_s,
            b_s: head.d_b_s.into_vec(),
            u_s: head.d_u_s.into_vec(),
            w_c,
            b_c: grad_logits.into_vec(),
        },
        input_grads: head.d_sentences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Sentence vectors are fixed inputs; only the head and classifier learn.
    Frozen,
    /// Same updates, and the gradient with respect to the sentence vectors
    /// is kept and its mean norm reported per epoch.
    HeadWithInputGrads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub epochs: usize,
    pub seed: Seed,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 16,
            accumulation_steps: 1,
            epochs: 50,
            seed: Seed(0),
            mode: TrainMode::Frozen,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch size, accumulation steps and epochs must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Documents per optimizer step.
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.accumulation_steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_input_grad_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
}

fn check_corpus(corpus: &EmbeddingCorpus, model: &Model) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if corpus.label_count() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, corpus has {}",
            corpus.label_count()
        )));
    }
    if corpus.dimension() != model.dimension() || corpus.label_count() != model.label_count() {
        return Err(Error::Shape(format!(
            "model is d={} K={}, corpus is d={} K={}",
            model.dimension(),
            model.label_count(),
            corpus.dimension(),
            corpus.label_count()
        )));
    }
    Ok(())
}

/// Trains from the seeded initialization.
pub fn train(corpus: &EmbeddingCorpus, cfg: &TrainConfig) -> Result<TrainOutput> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let model = Model::init(corpus.dimension(), corpus.label_count(), cfg.seed)?;
    train_from(model, corpus, cfg)
}

/// Trains starting from `model`.
///
/// Each epoch shuffles the documents with a generator seeded from the run
/// seed and epoch index, then walks them in effective batches of
/// `batch_size × accumulation_steps`. Micro-batches of `batch_size` are
/// evaluated in parallel; per-document gradients are summed in document
/// order and divided by the effective batch length before one Adam step, so
/// any factorization of the same effective batch gives the same update.
pub fn train_from(
    mut model: Model,
    corpus: &EmbeddingCorpus,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_corpus(corpus, &model)?;
    let docs: &[EmbeddedDocument] = corpus.documents();
    let (d, k) = (model.dimension(), model.label_count());
    let keep_input_grads = cfg.mode == TrainMode::HeadWithInputGrads;

    let mut state = AdamState::new(&model);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = SplitMix64::new(
            Seed(cfg.seed.0.wrapping_add(epoch as u64))
                .derive(SHUFFLE_STREAM)
                .0,
        );
        order.sort_unstable();
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut input_norm_sum = 0.0;
        for step in order.chunks(cfg.effective_batch()) {
            let mut total = ModelGrads::zeros(d, k);
            for micro in step.chunks(cfg.batch_size) {
                let results = micro
                    .par_iter()
                    .map(|&i| document_gradients(&model, &docs[i].sentences, docs[i].label))
                    .collect::<Result<Vec<_>>>()?;
                for (r, &i) in results.iter().zip(micro) {
                    total.add_assign(&r.grads);
                    loss_sum += r.loss;
                    correct += usize::from(r.predicted == docs[i].label);
                    if keep_input_grads {
                        let sq: f64 = r
                            .input_grads
                            .iter()
                            .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
                            .sum();
                        input_norm_sum += sq.sqrt();
                    }
                }
            }
            total.scale(1.0 / step.len() as f64);
            adam_step(&mut model, &total, &mut state, cfg.learning_rate)?;
        }

        let n = docs.len() as f64;
        metrics.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            seconds: started.elapsed().as_secs_f64(),
            mean_input_grad_norm: keep_input_grads.then(|| input_norm_sum / n),
        });
    }
    Ok(TrainOutput { model, metrics })
}
