//! Attention pooling over sentence embeddings.
//!
//! For sentence vectors `s_1..s_t` the head computes
//!
//! ```text
//! u_i = tanh(W_s s_i + b_s)
//! α   = softmax(u_1·u_s, ..., u_t·u_s)
//! v   = Σ α_i s_i
//! ```
//!
//! Each sentence is scored independently against the context vector `u_s`,
//! so the cost is linear in `t`. [`pool_backward`] propagates an upstream
//! gradient on `v` to every parameter and to the input vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, init_params, matvec, softmax_slice, DenseMatrix, DenseVector, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeadParams {
    pub w_s: DenseMatrix,
    pub b_s: DenseVector,
    /// Trainable context vector.
    pub u_s: DenseVector,
}

impl AttentionHeadParams {
    pub fn new(w_s: DenseMatrix, b_s: DenseVector, u_s: DenseVector) -> Result<Self> {
        let d = w_s.rows();
        if w_s.cols() != d || b_s.len() != d || u_s.len() != d {
            return Err(Error::Shape(format!(
                "attention head: W_s is {}x{}, b_s has {}, u_s has {}",
                w_s.rows(),
                w_s.cols(),
                b_s.len(),
                u_s.len()
            )));
        }
        Ok(Self { w_s, b_s, u_s })
    }

    /// Xavier-uniform `W_s` and `u_s`, zero `b_s`.
    pub fn init(d: usize, seed: Seed) -> Result<Self> {
        let w_s = init_params(d, d, seed.derive(1))?;
        let u_s = init_params(d, 1, seed.derive(2))?;
        Ok(Self {
            w_s,
            b_s: DenseVector::zeros(d),
            u_s: DenseVector::from_vec_unchecked(u_s.as_slice().to_vec()),
        })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            w_s: DenseMatrix::zeros(d, d),
            b_s: DenseVector::zeros(d),
            u_s: DenseVector::zeros(d),
        }
    }

    pub fn dimension(&self) -> usize {
        self.w_s.rows()
    }
}

/// Output of [`pool_forward`], also the cache consumed by [`pool_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    /// Document representation.
    pub v: DenseVector,
    /// Attention weights, one per sentence.
    pub alphas: DenseVector,
    /// Scores `u_i · u_s` before the softmax.
    pub logits: DenseVector,
    /// `u_i = tanh(W_s s_i + b_s)` for each sentence.
    pub u: Vec<DenseVector>,
    fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHeadGrads {
    pub d_w_s: DenseMatrix,
    pub d_b_s: DenseVector,
    pub d_u_s: DenseVector,
    /// Gradient with respect to each input sentence vector.
    pub d_sentences: Vec<DenseVector>,
}

fn fingerprint(params: &AttentionHeadParams, sentences: &[DenseVector]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |xs: &[f64]| {
        for x in xs {
            h = (h ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01B3);
        }
        h = (h ^ xs.len() as u64).wrapping_mul(0x0000_0100_0000_01B3);
    };
    feed(params.w_s.as_slice());
    feed(params.b_s.as_slice());
    feed(params.u_s.as_slice());
    for s in sentences {
        feed(s.as_slice());
    }
    h
}

fn check_inputs(params: &AttentionHeadParams, sentences: &[DenseVector]) -> Result<()> {
    if sentences.is_empty() {
        return Err(Error::Empty("sentence list"));
    }
    let d = params.dimension();
    if let Some((i, s)) = sentences.iter().enumerate().find(|(_, s)| s.len() != d) {
        return Err(Error::Shape(format!(
            "sentence {i} has dimension {}, head expects {d}",
            s.len()
        )));
    }
    Ok(())
}

pub fn pool_forward(params: &AttentionHeadParams, sentences: &[DenseVector]) -> Result<PoolResult> {
    check_inputs(params, sentences)?;
    let d = params.dimension();
    let u: Vec<DenseVector> = sentences
        .iter()
        .map(|s| {
            let mut h = matvec(&params.w_s, s)?.into_vec();
            for (x, b) in h.iter_mut().zip(params.b_s.as_slice()) {
                *x = (*x + b).tanh();
            }
            Ok(DenseVector::from_vec_unchecked(h))
        })
        .collect::<Result<_>>()?;
    let logits: Vec<f64> = u
        .iter()
        .map(|ui| dot(ui.as_slice(), params.u_s.as_slice()))
        .collect();
    let alphas = softmax_slice(&logits)?;
    let mut v = vec![0.0; d];
    for (a, s) in alphas.iter().zip(sentences) {
        for (vk, sk) in v.iter_mut().zip(s.as_slice()) {
            *vk += a * sk;
        }
    }
    Ok(PoolResult {
        v: DenseVector::from_vec_unchecked(v),
        alphas: DenseVector::from_vec_unchecked(alphas),
        logits: DenseVector::from_vec_unchecked(logits),
        u,
        fingerprint: fingerprint(params, sentences),
    })
}

/// Gradients of a scalar loss given `grad_v = ∂L/∂v`.
///
/// `cache` must come from [`pool_forward`] on the same parameters and
/// sentences; anything else is rejected as stale.
pub fn pool_backward(
    params: &AttentionHeadParams,
    sentences: &[DenseVector],
    cache: &PoolResult,
    grad_v: &DenseVector,
) -> Result<AttentionHeadGrads> {
    check_inputs(params, sentences)?;
    let d = params.dimension();
    if grad_v.len() != d {
        return Err(Error::Shape(format!(
            "upstream gradient has length {}, head dimension is {d}",
            grad_v.len()
        )));
    }
    if cache.alphas.len() != sentences.len()
        || cache.u.len() != sentences.len()
        || cache.fingerprint != fingerprint(params, sentences)
    {
        return Err(Error::StaleCache);
    }

    let g = grad_v.as_slice();
    let alphas = cache.alphas.as_slice();
    // ∂L/∂α_i = g · s_i, then through the softmax Jacobian diag(α) − ααᵀ.
    let d_alpha: Vec<f64> = sentences.iter().map(|s| dot(g, s.as_slice())).collect();
    let mean = dot(alphas, &d_alpha);

    let mut d_w_s = DenseMatrix::zeros(d, d);
    let mut d_b_s = vec![0.0; d];
    let mut d_u_s = vec![0.0; d];
    let mut d_sentences = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let d_logit = alphas[i] * (d_alpha[i] - mean);
        let u_i = cache.u[i].as_slice();
        for (acc, &uk) in d_u_s.iter_mut().zip(u_i) {
            *acc += d_logit * uk;
        }
        // ∂L/∂(W_s s_i + b_s) = d_logit · u_s ⊙ (1 − u_i²)
        let d_pre: Vec<f64> = params
            .u_s
            .as_slice()
            .iter()
            .zip(u_i)
            .map(|(us, uk)| d_logit * us * (1.0 - uk * uk))
            .collect();
        d_w_s.add_outer(1.0, &d_pre, s.as_slice());
        for (acc, dp) in d_b_s.iter_mut().zip(&d_pre) {
            *acc += dp;
        }
        let mut d_s = params.w_s.transpose_matvec(&d_pre)?.into_vec();
        for (x, gk) in d_s.iter_mut().zip(g) {
            *x += alphas[i] * gk;
        }
        d_sentences.push(DenseVector::from_vec_unchecked(d_s));
    }

    Ok(AttentionHeadGrads {
        d_w_s,
        d_b_s: DenseVector::from_vec_unchecked(d_b_s),
        d_u_s: DenseVector::from_vec_unchecked(d_u_s),
        d_sentences,
    })
}

/// Trainable parameter counts of the pooling head plus a `K`-way linear
/// classifier on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub w_s: u64,
    pub b_s: u64,
    pub u_s: u64,
    pub classifier: u64,
    pub total: u64,
}

pub fn count_head_params(d: u64, label_count: u64) -> Result<ParamCount> {
    if d == 0 || label_count < 2 {
        return Err(Error::Config(format!(
            "need d >= 1 and at least 2 classes, got d={d}, K={label_count}"
        )));
    }
    let w_s = d * d;
    let classifier = label_count * d + label_count;
    Ok(ParamCount {
        w_s,
        b_s: d,
        u_s: d,
        classifier,
        total: w_s + 2 * d + classifier,
    })
}
