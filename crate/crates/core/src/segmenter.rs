//! Rule-based sentence segmentation with token bounds.
//!
//! Text is cut after every separator character, short pieces are merged
//! forward until they reach `min_tokens`, over-long groups are hard-split at
//! token boundaries, and whole sentences are dropped from the tail once the
//! document exceeds `doc_token_cap`.

use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One record of the input dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub token_count: usize,
    pub index: usize,
}

/// A segmented document. `total_tokens` counts the whole cleaned text,
/// before the document cap is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub label: usize,
    pub total_tokens: usize,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub doc_token_cap: usize,
    pub separators: Vec<char>,
}

pub const DEFAULT_SEPARATORS: [char; 4] = ['.', '!', '?', '\n'];

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            min_tokens: 5,
            max_tokens: 250,
            doc_token_cap: 8192,
            separators: DEFAULT_SEPARATORS.to_vec(),
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        let SegmentConfig {
            min_tokens: min,
            max_tokens: max,
            doc_token_cap: cap,
            ..
        } = *self;
        if !(1 <= min && min < max && max <= cap) {
            return Err(Error::Config(format!(
                "need 1 <= min_tokens < max_tokens <= doc_token_cap, got {min}, {max}, {cap}"
            )));
        }
        if self.separators.is_empty() {
            return Err(Error::Config("separator set is empty".into()));
        }
        Ok(())
    }
}

/// Token counting strategy. Implementations report byte spans so the
/// segmenter can cut text at token boundaries.
pub trait TokenCounter: Sync {
    /// Byte ranges of the tokens of `text`, in order and non-overlapping.
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Default counter: whitespace-separated words, with leading and trailing
/// punctuation characters split off as one token each. Punctuation inside a
/// word (`one-two`, `3.14`) stays part of the word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctCounter;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '–' | '—' | '¿' | '¡' | '·'
        )
}

impl TokenCounter for WordPunctCounter {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut word_start = None;
        for (i, c) in text
            .char_indices()
            .chain(std::iter::once((text.len(), ' ')))
        {
            match (c.is_whitespace(), word_start) {
                (true, Some(start)) => {
                    push_word_tokens(text, start..i, &mut spans);
                    word_start = None;
                }
                (false, None) => word_start = Some(i),
                _ => {}
            }
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace()
            .map(|w| {
                let chars = w.chars().count();
                let lead = w.chars().take_while(|&c| is_punct(c)).count();
                if lead == chars {
                    return chars;
                }
                let trail = w.chars().rev().take_while(|&c| is_punct(c)).count();
                lead + trail + 1
            })
            .sum()
    }
}

fn push_word_tokens(text: &str, word: Range<usize>, spans: &mut Vec<Range<usize>>) {
    let w = &text[word.clone()];
    let mut core_start = word.start;
    for (i, c) in w.char_indices() {
        if !is_punct(c) {
            break;
        }
        let at = word.start + i;
        spans.push(at..at + c.len_utf8());
        core_start = at + c.len_utf8();
    }
    if core_start == word.end {
        return;
    }
    let mut trailing = Vec::new();
    let mut core_end = word.end;
    for (i, c) in text[core_start..word.end].char_indices().rev() {
        if !is_punct(c) {
            break;
        }
        let at = core_start + i;
        trailing.push(at..at + c.len_utf8());
        core_end = at;
    }
    spans.push(core_start..core_end);
    spans.extend(trailing.into_iter().rev());
}

/// Token count with the default counter.
pub fn count_tokens(text: &str) -> usize {
    WordPunctCounter.count(text)
}

/// Removes markup tags and decodes the basic character entities.
///
/// A tag is `<` followed by a letter, `/`, `!` or `?`, up to the next `>`;
/// an unclosed `<` is kept. The single-pass rewrite is repeated until the
/// text stops changing, so the result is a fixed point and stripping it again
/// is a no-op.
pub fn strip_html(text: &str) -> String {
    let mut current = strip_html_once(text);
    loop {
        let next = strip_html_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn strip_html_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find(['<', '&']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix('<') {
            let opens_tag = after
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || matches!(c, '/' | '!' | '?'));
            match tail.find('>') {
                Some(close) if opens_tag => rest = &tail[close + 1..],
                _ => {
                    out.push('<');
                    rest = &tail[1..];
                }
            }
        } else {
            match decode_entity(tail) {
                Some((c, used)) => {
                    out.push(c);
                    rest = &tail[used..];
                }
                None => {
                    out.push('&');
                    rest = &tail[1..];
                }
            }
        }
    }
    out.push_str(rest);
    out
}

/// Decodes an entity at the start of `s` (which begins with `&`).
fn decode_entity(s: &str) -> Option<(char, usize)> {
    const NAMED: [(&str, char); 5] = [
        ("&amp;", '&'),
        ("&lt;", '<'),
        ("&gt;", '>'),
        ("&quot;", '"'),
        ("&apos;", '\''),
    ];
    if let Some(&(name, c)) = NAMED.iter().find(|(name, _)| s.starts_with(name)) {
        return Some((c, name.len()));
    }
    let body = s.strip_prefix("&#")?;
    let end = body.find(';').filter(|&e| e > 0 && e <= 8)?;
    let digits = &body[..end];
    let code = match digits.strip_prefix(['x', 'X']) {
        Some(hex) => u32::from_str_radix(hex, 16).ok()?,
        None => digits.parse::<u32>().ok()?,
    };
    let c = char::from_u32(code).filter(|&c| c != '\0')?;
    Some((c, 2 + end + 1))
}

/// Byte ranges of the pieces of `text` cut after each separator.
fn split_pieces(text: &str, separators: &[char]) -> Vec<Range<usize>> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if separators.contains(&c) {
            let end = i + c.len_utf8();
            pieces.push(start..end);
            start = end;
        }
    }
    if start < text.len() {
        pieces.push(start..text.len());
    }
    pieces
}

fn trim_range(text: &str, r: Range<usize>) -> Range<usize> {
    let s = &text[r.clone()];
    let lead = s.len() - s.trim_start().len();
    let trail = s.len() - s.trim_end().len();
    if lead == s.len() {
        return r.start..r.start;
    }
    r.start + lead..r.end - trail
}

/// Token sizes for hard-splitting `n > max` tokens. All chunks are full
/// except the last two, which are rebalanced when the remainder would fall
/// below `min`.
fn plan_chunks(n: usize, min: usize, max: usize) -> Vec<usize> {
    let full = n / max;
    let rem = n % max;
    let mut sizes = vec![max; full];
    if rem == 0 {
        return sizes;
    }
    if rem >= min {
        sizes.push(rem);
        return sizes;
    }
    let borrow = min - rem;
    let last = sizes.last_mut().expect("n > max implies one full chunk");
    if *last - borrow >= min {
        *last -= borrow;
        sizes.push(min);
    } else {
        // Only reachable when max < 2 * min - rem: no split can satisfy both
        // bounds, so the remainder rides on the previous chunk.
        *last += rem;
    }
    sizes
}

/// Segments with the default token counter.
pub fn segment(doc: &RawDocument, cfg: &SegmentConfig) -> Result<Vec<Sentence>> {
    Ok(segment_document(doc, cfg, &WordPunctCounter)?.sentences)
}

pub fn segment_document(
    doc: &RawDocument,
    cfg: &SegmentConfig,
    counter: &dyn TokenCounter,
) -> Result<SegmentedDocument> {
    cfg.validate()?;
    let cleaned = strip_html(&doc.text);
    let total_tokens = counter.count(&cleaned);
    if total_tokens == 0 {
        return Err(Error::Invalid(format!(
            "document {:?}: text is empty after cleaning",
            doc.doc_id
        )));
    }
    let text = cleaned.as_str();

    // Merge pieces forward until each group reaches min_tokens.
    let mut groups: Vec<Range<usize>> = Vec::new();
    let mut open: Option<usize> = None;
    let mut pending_end = 0;
    for piece in split_pieces(text, &cfg.separators) {
        let start = match open {
            Some(s) => s,
            None if text[piece.clone()].trim().is_empty() => continue,
            None => piece.start,
        };
        pending_end = piece.end;
        if counter.count(&text[start..piece.end]) >= cfg.min_tokens {
            groups.push(start..piece.end);
            open = None;
        } else {
            open = Some(start);
        }
    }
    if let Some(start) = open {
        groups.push(start..pending_end);
        // A short tail joins the previous group. Joining can fuse tokens
        // across the cut (`3.` + `14`), so keep merging until the last group
        // is long enough or it is the only one.
        while groups.len() > 1
            && counter.count(&text[groups[groups.len() - 1].clone()]) < cfg.min_tokens
        {
            let tail = groups.pop().expect("len > 1");
            groups.last_mut().expect("len > 1").end = tail.end;
        }
    }

    let mut sentences = Vec::new();
    for group in groups {
        // A whitespace separator (newline) is trimmed like other whitespace
        // but kept as the sentence terminator, so the boundary survives
        // reconstruction.
        let terminator = text[group.clone()]
            .chars()
            .next_back()
            .filter(|c| c.is_whitespace() && cfg.separators.contains(c));
        let range = trim_range(text, group);
        let slice = &text[range.clone()];
        let spans = counter.token_spans(slice);
        let sizes = if spans.len() <= cfg.max_tokens {
            vec![spans.len()]
        } else {
            plan_chunks(spans.len(), cfg.min_tokens, cfg.max_tokens)
        };
        let mut first = 0;
        for size in sizes {
            let mut chunk = slice[spans[first].start..spans[first + size - 1].end].to_string();
            first += size;
            if first == spans.len() {
                chunk.extend(terminator);
            }
            sentences.push((chunk, size));
        }
    }

    let mut used = 0;
    let sentences = sentences
        .into_iter()
        .take_while(|(_, n)| {
            used += n;
            used <= cfg.doc_token_cap
        })
        .enumerate()
        .map(|(index, (text, token_count))| Sentence {
            text,
            token_count,
            index,
        })
        .collect();

    Ok(SegmentedDocument {
        doc_id: doc.doc_id.clone(),
        label: doc.label,
        total_tokens,
        sentences,
    })
}

/// Joins sentence texts back into one string, one space between sentences.
pub fn reconstruct(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line of the sentences file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    pub label: usize,
    /// Token count of the whole cleaned document, before the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_token_count: Option<usize>,
}

impl SegmentedDocument {
    pub fn records(&self) -> impl Iterator<Item = SentenceRecord> + '_ {
        self.sentences.iter().map(|s| SentenceRecord {
            id: self.doc_id.clone(),
            index: s.index,
            text: s.text.clone(),
            token_count: s.token_count,
            label: self.label,
            doc_token_count: Some(self.total_tokens),
        })
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

/// Reads the dataset format: one `{"id", "text", "label"}` object per line.
pub fn read_documents(reader: impl BufRead) -> Result<Vec<RawDocument>> {
    let docs: Vec<RawDocument> = read_jsonl(reader)?;
    if let Some(i) = docs.iter().position(|d| d.doc_id.is_empty()) {
        return Err(Error::Invalid(format!(
            "document #{} has an empty id",
            i + 1
        )));
    }
    Ok(docs)
}

pub fn read_sentence_records(reader: impl BufRead) -> Result<Vec<SentenceRecord>> {
    read_jsonl(reader)
}

pub fn write_sentence_records<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a SentenceRecord>,
) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups consecutive sentence records by document id, checking that the
/// indices of each document run 0, 1, 2, ...
pub fn group_records(records: Vec<SentenceRecord>) -> Result<Vec<Vec<SentenceRecord>>> {
    let mut docs: Vec<Vec<SentenceRecord>> = Vec::new();
    for (i, r) in records.into_iter().enumerate() {
        let continues = docs.last().is_some_and(|d| d[0].id == r.id && r.index != 0);
        if continues {
            let doc = docs.last_mut().expect("checked above");
            if r.index != doc.len() || r.label != doc[0].label {
                return Err(Error::parse(
                    i + 1,
                    format!(
                        "sentence {} of {:?} is out of order or relabelled",
                        r.index, r.id
                    ),
                ));
            }
            doc.push(r);
        } else {
            if r.index != 0 {
                return Err(Error::parse(
                    i + 1,
                    format!("document {:?} does not start at sentence 0", r.id),
                ));
            }
            docs.push(vec![r]);
        }
    }
    Ok(docs)
}
