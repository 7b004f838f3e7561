//! Sentence-embedding corpus: in-memory types, the JSONL file format and a
//! deterministic toy encoder.
//!
//! File layout, one JSON object per line:
//!
//! ```text
//! {"dimension":384,"label_count":2}
//! {"id":"doc-1","label":0,"token_count":913,"vectors":[[...384 floats...],...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! corpus gives back the same bits.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, DenseVector, Seed, SplitMix64};
use crate::segmenter::SentenceRecord;

/// Vectors whose norm is further than this from 1 are re-normalized on load.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDocument {
    pub doc_id: String,
    pub label: usize,
    /// Length of the full document in tokens, before any truncation.
    pub total_token_count: usize,
    pub sentences: Vec<DenseVector>,
}

impl EmbeddedDocument {
    pub fn dimension(&self) -> usize {
        self.sentences.first().map_or(0, DenseVector::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    dimension: usize,
    label_count: usize,
    documents: Vec<EmbeddedDocument>,
}

impl EmbeddingCorpus {
    /// Validates shapes and labels; vectors are taken as given.
    pub fn new(
        dimension: usize,
        label_count: usize,
        documents: Vec<EmbeddedDocument>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        for doc in &documents {
            validate_document(doc, dimension, label_count)?;
        }
        Ok(Self {
            dimension,
            label_count,
            documents,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn documents(&self) -> &[EmbeddedDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Corpus restricted to the given document positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            dimension: self.dimension,
            label_count: self.label_count,
            documents: positions
                .iter()
                .map(|&i| self.documents[i].clone())
                .collect(),
        }
    }
}

fn validate_document(doc: &EmbeddedDocument, dimension: usize, label_count: usize) -> Result<()> {
    if doc.sentences.is_empty() {
        return Err(Error::Invalid(format!(
            "document {:?} has no sentences",
            doc.doc_id
        )));
    }
    if let Some(v) = doc.sentences.iter().find(|v| v.len() != dimension) {
        return Err(Error::Shape(format!(
            "document {:?} has a vector of length {}, corpus dimension is {dimension}",
            doc.doc_id,
            v.len()
        )));
    }
    if doc.label >= label_count {
        return Err(Error::LabelOutOfRange {
            label: doc.label,
            label_count,
        });
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Deterministic stand-in encoder: hashes `(text, seed)` into a generator,
/// draws `d` standard-normal values and normalizes them.
pub fn toy_encode(text: &str, d: usize, seed: Seed) -> Result<DenseVector> {
    if d < 2 {
        return Err(Error::Config(format!(
            "toy encoder needs dimension >= 2, got {d}"
        )));
    }
    let mut rng = SplitMix64::new(seed.derive(fnv1a(text.as_bytes())).0);
    loop {
        let raw = DenseVector::from_vec_unchecked((0..d).map(|_| rng.next_gaussian()).collect());
        match l2_normalize(&raw) {
            Ok(v) => return Ok(v),
            Err(Error::ZeroNorm) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Encodes grouped sentence records (see [`crate::segmenter::group_records`])
/// with the toy encoder. `label_count` defaults to one past the largest label
/// (at least 2).
pub fn encode_records(
    docs: &[Vec<SentenceRecord>],
    d: usize,
    seed: Seed,
    label_count: Option<usize>,
) -> Result<EmbeddingCorpus> {
    let documents = docs
        .iter()
        .map(|sentences| {
            let head = &sentences[0];
            let vectors = sentences
                .iter()
                .map(|s| toy_encode(&s.text, d, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddedDocument {
                doc_id: head.id.clone(),
                label: head.label,
                total_token_count: head
                    .doc_token_count
                    .unwrap_or_else(|| sentences.iter().map(|s| s.token_count).sum()),
                sentences: vectors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label_count = label_count.unwrap_or_else(|| {
        documents
            .iter()
            .map(|d| d.label + 1)
            .max()
            .unwrap_or(0)
            .max(2)
    });
    EmbeddingCorpus::new(d, label_count, documents)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dimension: usize,
    label_count: usize,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    label: usize,
    token_count: usize,
    vectors: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    label: usize,
    token_count: usize,
    vectors: Vec<Vec<f64>>,
}

pub fn write_corpus(corpus: &EmbeddingCorpus, mut writer: impl Write) -> Result<()> {
    serde_json::to_writer(
        &mut writer,
        &Header {
            dimension: corpus.dimension,
            label_count: corpus.label_count,
        },
    )?;
    writer.write_all(b"\n")?;
    for doc in &corpus.documents {
        let record = RecordOut {
            id: &doc.doc_id,
            label: doc.label,
            token_count: doc.total_token_count,
            vectors: doc.sentences.iter().map(DenseVector::as_slice).collect(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// What happened while loading a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Vectors that were not unit-norm and got re-normalized.
    pub renormalized: usize,
}

pub fn read_corpus(reader: impl BufRead) -> Result<(EmbeddingCorpus, IngestReport)> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing corpus header"))?;
    let header: Header = serde_json::from_str(&header?)
        .map_err(|e| Error::parse(line_no, format!("bad header: {e}")))?;
    if header.dimension == 0 {
        return Err(Error::parse(line_no, "dimension must be positive"));
    }

    let mut report = IngestReport::default();
    let mut documents = Vec::new();
    for (line_no, line) in lines {
        let record: RecordIn =
            serde_json::from_str(&line?).map_err(|e| Error::parse(line_no, e.to_string()))?;
        if record.vectors.is_empty() {
            return Err(Error::parse(
                line_no,
                format!("document {:?} has no vectors", record.id),
            ));
        }
        if record.label >= header.label_count {
            return Err(Error::parse(
                line_no,
                format!(
                    "label {} out of range for {} classes",
                    record.label, header.label_count
                ),
            ));
        }
        let mut sentences = Vec::with_capacity(record.vectors.len());
        for (k, values) in record.vectors.into_iter().enumerate() {
            if values.len() != header.dimension {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "vector {k} has length {}, expected dimension {}",
                        values.len(),
                        header.dimension
                    ),
                ));
            }
            let v = DenseVector::new(values).map_err(|e| Error::parse(line_no, e.to_string()))?;
            if (v.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                let v = l2_normalize(&v)
                    .map_err(|e| Error::parse(line_no, format!("vector {k}: {e}")))?;
                report.renormalized += 1;
                sentences.push(v);
            } else {
                sentences.push(v);
            }
        }
        documents.push(EmbeddedDocument {
            doc_id: record.id,
            label: record.label,
            total_token_count: record.token_count,
            sentences,
        });
    }
    let corpus = EmbeddingCorpus {
        dimension: header.dimension,
        label_count: header.label_count,
        documents,
    };
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingCorpus {
        let seed = Seed(5);
        let doc = |id: &str, label, n: usize| EmbeddedDocument {
            doc_id: id.into(),
            label,
            total_token_count: 40 * n,
            sentences: (0..n)
                .map(|i| toy_encode(&format!("{id} {i}"), 6, seed).unwrap())
                .collect(),
        };
        EmbeddingCorpus::new(6, 3, vec![doc("a", 0, 2), doc("b", 2, 3)]).unwrap()
    }

    fn round_trip(c: &EmbeddingCorpus) -> (EmbeddingCorpus, IngestReport) {
        let mut buf = Vec::new();
        write_corpus(c, &mut buf).unwrap();
        read_corpus(buf.as_slice()).unwrap()
    }

    #[test]
    fn toy_encoder_is_deterministic_unit_norm() {
        let a = toy_encode("hello", 16, Seed(1)).unwrap();
        assert_eq!(a, toy_encode("hello", 16, Seed(1)).unwrap());
        assert_ne!(a, toy_encode("hello", 16, Seed(2)).unwrap());
        assert_ne!(a, toy_encode("hellp", 16, Seed(1)).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(toy_encode("x", 1, Seed(1)).is_err());
    }

    #[test]
    fn distinct_texts_are_nearly_orthogonal() {
        let seed = Seed(42);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let a = toy_encode(&format!("sentence number {i}"), 384, seed).unwrap();
            let b = toy_encode(&format!("another sentence {i}"), 384, seed).unwrap();
            worst = worst.max(a.dot(&b).unwrap().abs());
        }
        // cosine of independent directions in 384 dims has sd ≈ 0.051
        assert!(worst < 0.3, "worst |cos| = {worst}");
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let (back, report) = round_trip(&c);
        assert_eq!(back, c);
        assert_eq!(report.renormalized, 0);

        let empty = EmbeddingCorpus::new(4, 2, vec![]).unwrap();
        assert_eq!(round_trip(&empty).0, empty);
    }

    #[test]
    fn mismatched_vector_length_names_line() {
        let input = "{\"dimension\":2,\"label_count\":2}\n\
                     {\"id\":\"a\",\"label\":0,\"token_count\":3,\"vectors\":[[1,0]]}\n\
                     {\"id\":\"b\",\"label\":1,\"token_count\":3,\"vectors\":[[1,0],[0,1,0]]}\n";
        match read_corpus(input.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("length 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_and_garbage_rejected() {
        let bad_label = "{\"dimension\":2,\"label_count\":2}\n\
                         {\"id\":\"a\",\"label\":2,\"token_count\":3,\"vectors\":[[1,0]]}\n";
        assert!(matches!(
            read_corpus(bad_label.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let garbage = "{\"dimension\":2,\"label_count\":2}\nnot json\n";
        assert!(matches!(
            read_corpus(garbage.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_corpus("".as_bytes()).is_err());
        let zero = "{\"dimension\":2,\"label_count\":2}\n\
                    {\"id\":\"a\",\"label\":0,\"token_count\":3,\"vectors\":[[0,0]]}\n";
        assert!(read_corpus(zero.as_bytes()).is_err());
    }

    #[test]
    fn near_unit_vectors_are_kept_far_ones_renormalized() {
        let input = "{\"dimension\":2,\"label_count\":2}\n\
                     {\"id\":\"a\",\"label\":1,\"token_count\":3,\"vectors\":[[0.6000001,0.8],[3,4]]}\n";
        let (c, report) = read_corpus(input.as_bytes()).unwrap();
        assert_eq!(report.renormalized, 1);
        let doc = &c.documents()[0];
        assert_eq!(doc.sentences[0].as_slice(), &[0.6000001, 0.8]);
        assert_eq!(doc.sentences[1].as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn corpus_validation() {
        let v = toy_encode("x", 3, Seed(0)).unwrap();
        let doc = |label, sentences| EmbeddedDocument {
            doc_id: "d".into(),
            label,
            total_token_count: 1,
            sentences,
        };
        assert!(EmbeddingCorpus::new(3, 2, vec![doc(0, vec![])]).is_err());
        assert!(EmbeddingCorpus::new(2, 2, vec![doc(0, vec![v.clone()])]).is_err());
        assert!(EmbeddingCorpus::new(3, 2, vec![doc(2, vec![v.clone()])]).is_err());
        assert!(EmbeddingCorpus::new(3, 2, vec![doc(1, vec![v])]).is_ok());
    }
}
