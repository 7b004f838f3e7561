//! Linear classifier on the pooled document vector, cross-entropy loss,
//! Adam and the training loop for the frozen-encoder setting.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::Checkpoint;
pub use train::{
    document_gradients, train, train_from, DocumentGradients, EpochMetrics, Model, ModelGrads,
    TrainConfig, TrainMode, TrainOutput,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    init_params, log_sum_exp, matvec, softmax_slice, DenseMatrix, DenseVector, Seed,
};

/// `logits = W_c v + b_c` with `W_c` of shape `K × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub w_c: DenseMatrix,
    pub b_c: DenseVector,
}

impl ClassifierParams {
    pub fn new(w_c: DenseMatrix, b_c: DenseVector) -> Result<Self> {
        if b_c.len() != w_c.rows() {
            return Err(Error::Shape(format!(
                "classifier: W_c is {}x{}, b_c has {}",
                w_c.rows(),
                w_c.cols(),
                b_c.len()
            )));
        }
        Ok(Self { w_c, b_c })
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init(label_count: usize, d: usize, seed: Seed) -> Result<Self> {
        Ok(Self {
            w_c: init_params(label_count, d, seed)?,
            b_c: DenseVector::zeros(label_count),
        })
    }

    pub fn zeros(label_count: usize, d: usize) -> Self {
        Self {
            w_c: DenseMatrix::zeros(label_count, d),
            b_c: DenseVector::zeros(label_count),
        }
    }

    pub fn label_count(&self) -> usize {
        self.w_c.rows()
    }

    pub fn dimension(&self) -> usize {
        self.w_c.cols()
    }
}

pub fn classify(params: &ClassifierParams, v: &DenseVector) -> Result<DenseVector> {
    let mut logits = matvec(&params.w_c, v)?;
    for (z, b) in logits.as_mut_slice().iter_mut().zip(params.b_c.as_slice()) {
        *z += b;
    }
    Ok(logits)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(logits: &DenseVector) -> usize {
    let mut best = 0;
    for (i, &z) in logits.as_slice().iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

/// Loss `−log softmax(z)[label]` and its gradient `softmax(z) − onehot(label)`.
pub fn cross_entropy(logits: &DenseVector, label: usize) -> Result<(f64, DenseVector)> {
    let z = logits.as_slice();
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            label_count: z.len(),
        });
    }
    let loss = log_sum_exp(z)? - z[label];
    let mut grad = softmax_slice(z)?;
    grad[label] -= 1.0;
    Ok((loss.max(0.0), DenseVector::from_vec_unchecked(grad)))
}
