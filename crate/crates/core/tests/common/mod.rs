#![allow(dead_code)]

use aose::embeddings::{toy_encode, EmbeddedDocument, EmbeddingCorpus};
use aose::numerics::{l2_normalize, DenseVector, Seed, SplitMix64};
use aose::segmenter::RawDocument;

pub fn random_unit(rng: &mut SplitMix64, d: usize) -> DenseVector {
    let raw = DenseVector::new((0..d).map(|_| rng.next_gaussian()).collect()).unwrap();
    l2_normalize(&raw).unwrap()
}

/// Two-class corpus whose sentence vectors scatter around one anchor per
/// class: `normalize(anchor + noise · toy_encode(text))`.
pub fn separable_corpus(n_docs: usize, d: usize, seed: u64) -> EmbeddingCorpus {
    let anchors = [
        toy_encode("anchor: negative", d, Seed(seed)).unwrap(),
        toy_encode("anchor: positive", d, Seed(seed)).unwrap(),
    ];
    let mut rng = SplitMix64::new(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let label = i % 2;
            let t = 1 + rng.next_below(8) as usize;
            let sentences = (0..t)
                .map(|j| {
                    let noise =
                        toy_encode(&format!("doc {i} sentence {j}"), d, Seed(seed)).unwrap();
                    let mixed: Vec<f64> = anchors[label]
                        .as_slice()
                        .iter()
                        .zip(noise.as_slice())
                        .map(|(a, n)| a + 0.8 * n)
                        .collect();
                    l2_normalize(&DenseVector::new(mixed).unwrap()).unwrap()
                })
                .collect();
            EmbeddedDocument {
                doc_id: format!("syn-{i}"),
                label,
                total_token_count: 40 + rng.next_below(1200) as usize,
                sentences,
            }
        })
        .collect();
    EmbeddingCorpus::new(d, 2, docs).unwrap()
}

/// Corpus of random unit vectors with random labels.
pub fn random_corpus(n_docs: usize, d: usize, label_count: usize, seed: u64) -> EmbeddingCorpus {
    let mut rng = SplitMix64::new(seed);
    let docs = (0..n_docs)
        .map(|i| EmbeddedDocument {
            doc_id: format!("r{i}"),
            label: rng.next_below(label_count as u64) as usize,
            total_token_count: 1 + rng.next_below(1500) as usize,
            sentences: (0..1 + rng.next_below(6))
                .map(|_| random_unit(&mut rng, d))
                .collect(),
        })
        .collect();
    EmbeddingCorpus::new(d, label_count, docs).unwrap()
}

const WORDS: [&str; 16] = [
    "the",
    "movie",
    "was",
    "quite",
    "long",
    "3.14",
    "e.g",
    "don't",
    "(aside)",
    "x-ray",
    "«quoted»",
    "naïve",
    "end...",
    "Mr.",
    "okay",
    "—",
];
const SEPARATORS: [&str; 8] = [". ", "! ", "? ", "\n", "\n\n", "... ", ".", " "];

/// Random document text: words, separators, occasional markup and entities,
/// and occasional long separator-free runs.
pub fn fuzz_text(rng: &mut SplitMix64) -> String {
    let mut text = String::new();
    let target = match rng.next_below(10) {
        0 => 1 + rng.next_below(6),
        1 => 9000 + rng.next_below(4000),
        _ => 20 + rng.next_below(1500),
    };
    let mut words = 0;
    while words < target {
        match rng.next_below(40) {
            0 => text.push_str("<br/>"),
            1 => text.push_str(" &amp; "),
            2 => {
                // long run without separators
                for _ in 0..200 + rng.next_below(500) {
                    text.push_str("word ");
                    words += 1;
                }
            }
            _ => {}
        }
        text.push_str(WORDS[rng.next_below(WORDS.len() as u64) as usize]);
        words += 1;
        if rng.next_below(6) == 0 {
            text.push_str(SEPARATORS[rng.next_below(SEPARATORS.len() as u64) as usize]);
        } else {
            text.push(' ');
        }
    }
    text
}

pub fn fuzz_documents(n: usize, seed: u64) -> Vec<RawDocument> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| RawDocument {
            doc_id: format!("fuzz-{i}"),
            text: fuzz_text(&mut rng),
            label: i % 3,
        })
        .collect()
}
