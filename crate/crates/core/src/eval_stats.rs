//! Length-stratified accuracy and dataset statistics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier_trainer::Model;
use crate::embeddings::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::segmenter::{strip_html, RawDocument, TokenCounter};

/// Documents longer than this many tokens count as long.
pub const DEFAULT_LENGTH_THRESHOLD: usize = 512;

/// Correct / total for one stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    /// `None` for an empty stratum.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalReport {
    pub threshold: usize,
    pub all: Tally,
    /// Documents with at most `threshold` tokens.
    pub short: Tally,
    /// Documents with more than `threshold` tokens.
    pub long: Tally,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Serialize)]
struct ReportJson {
    threshold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_all: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_short: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_long: Option<f64>,
    n_all: usize,
    n_short: usize,
    n_long: usize,
    correct_all: usize,
    correct_short: usize,
    correct_long: usize,
}

impl EvalReport {
    pub fn acc_all(&self) -> Option<f64> {
        self.all.accuracy()
    }

    pub fn acc_short(&self) -> Option<f64> {
        self.short.accuracy()
    }

    pub fn acc_long(&self) -> Option<f64> {
        self.long.accuracy()
    }

    /// Single JSON object; accuracies rounded to 4 decimals, empty strata
    /// omitted.
    pub fn to_json(&self) -> String {
        let json = ReportJson {
            threshold: self.threshold,
            acc_all: self.acc_all().map(round4),
            acc_short: self.acc_short().map(round4),
            acc_long: self.acc_long().map(round4),
            n_all: self.all.total,
            n_short: self.short.total,
            n_long: self.long.total,
            correct_all: self.all.correct,
            correct_short: self.short.correct,
            correct_long: self.long.correct,
        };
        serde_json::to_string(&json).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let rows = [
            ("all".to_string(), self.all),
            (format!("<={}", self.threshold), self.short),
            (format!(">{}", self.threshold), self.long),
        ];
        let mut out = format!(
            "{:<8} {:>8} {:>8} {:>8}\n",
            "stratum", "acc", "correct", "docs"
        );
        for (name, tally) in rows {
            let acc = tally
                .accuracy()
                .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{name:<8} {acc:>8} {:>8} {:>8}",
                tally.correct, tally.total
            );
        }
        out
    }
}

/// Accuracy over the corpus, split at `threshold` tokens of the stored
/// (pre-truncation) document length.
pub fn evaluate(model: &Model, corpus: &EmbeddingCorpus, threshold: usize) -> Result<EvalReport> {
    if corpus.dimension() != model.dimension() {
        return Err(Error::Shape(format!(
            "model dimension {} does not match corpus dimension {}",
            model.dimension(),
            corpus.dimension()
        )));
    }
    if corpus.label_count() > model.label_count() {
        return Err(Error::Shape(format!(
            "corpus has {} classes, model predicts {}",
            corpus.label_count(),
            model.label_count()
        )));
    }
    let outcomes = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let (predicted, _) = model.predict(&doc.sentences)?;
            Ok((doc.total_token_count > threshold, predicted == doc.label))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = EvalReport {
        threshold,
        all: Tally::default(),
        short: Tally::default(),
        long: Tally::default(),
    };
    for (is_long, hit) in outcomes {
        let stratum = if is_long {
            &mut report.long
        } else {
            &mut report.short
        };
        for tally in [&mut report.all, stratum] {
            tally.total += 1;
            tally.correct += usize::from(hit);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub doc_count: usize,
    /// Documents with more than `threshold` tokens.
    pub long_doc_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_tokens: Option<f64>,
    pub max_tokens: usize,
    /// Number of distinct labels.
    pub label_count: usize,
    pub threshold: usize,
}

/// Statistics of the cleaned (markup-stripped) documents.
pub fn dataset_stats(
    docs: &[RawDocument],
    counter: &dyn TokenCounter,
    threshold: usize,
) -> DatasetStats {
    let counts: Vec<usize> = docs
        .par_iter()
        .map(|d| counter.count(&strip_html(&d.text)))
        .collect();
    let mut labels: Vec<usize> = docs.iter().map(|d| d.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let total: usize = counts.iter().sum();
    DatasetStats {
        doc_count: docs.len(),
        long_doc_count: counts.iter().filter(|&&n| n > threshold).count(),
        mean_tokens: (!docs.is_empty()).then(|| total as f64 / docs.len() as f64),
        max_tokens: counts.iter().copied().max().unwrap_or(0),
        label_count: labels.len(),
        threshold,
    }
}
