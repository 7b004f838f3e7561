//! Attention cost formulas for long-document architectures, evaluated
//! exactly with unit constant factors.
//!
//! | model      | cost                          |
//! |------------|-------------------------------|
//! | roberta    | t²·l²                         |
//! | smith      | t·l² + t²                     |
//! | longformer | g·t·l + (t·l − g)·w           |
//! | xlnet      | t·l·c                         |
//! | aose       | t·l² + t                      |
//!
//! `t` sentences per document, `l` tokens per sentence, `g` global-attention
//! tokens, `w` local window, `c` recurrence segment length. Results are
//! abstract attention-weight counts, not time.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,l,g,w,c,roberta,smith,longformer,xlnet,aose";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostQuery {
    pub t: u64,
    pub l: u64,
    pub g: u64,
    pub w: u64,
    pub c: u64,
}

impl CostQuery {
    pub fn validate(&self) -> Result<()> {
        let CostQuery { t, l, g, w, c } = *self;
        if [t, l, g, w, c].contains(&0) {
            return Err(Error::Config(format!(
                "cost query fields must be positive: t={t} l={l} g={g} w={w} c={c}"
            )));
        }
        if u128::from(g) > u128::from(t) * u128::from(l) {
            return Err(Error::Config(format!(
                "g={g} global tokens exceed the t·l={} document tokens",
                u128::from(t) * u128::from(l)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub roberta: u128,
    pub smith: u128,
    pub longformer: u128,
    pub xlnet: u128,
    pub aose: u128,
}

fn overflow() -> Error {
    Error::Invalid("cost exceeds 128-bit range".into())
}

pub fn costs(q: &CostQuery) -> Result<CostReport> {
    q.validate()?;
    let [t, l, g, w, c] = [q.t, q.l, q.g, q.w, q.c].map(u128::from);
    let mul = |a: u128, b: u128| a.checked_mul(b).ok_or_else(overflow);
    let add = |a: u128, b: u128| a.checked_add(b).ok_or_else(overflow);

    let n = t * l; // both < 2^64
    let tt = t * t;
    let ll = l * l;
    let tl2 = mul(t, ll)?;
    Ok(CostReport {
        roberta: mul(tt, ll)?,
        smith: add(tl2, tt)?,
        longformer: add(mul(g, n)?, mul(n - g, w)?)?,
        xlnet: mul(n, c)?,
        aose: add(tl2, t)?,
    })
}

/// Writes the CSV table (header plus one row per query, input order).
pub fn write_sweep(mut out: impl Write, queries: &[CostQuery]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::Empty("query list"));
    }
    writeln!(out, "{CSV_HEADER}")?;
    for q in queries {
        let r = costs(q)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            q.t, q.l, q.g, q.w, q.c, r.roberta, r.smith, r.longformer, r.xlnet, r.aose
        )?;
    }
    Ok(())
}

pub fn sweep(queries: &[CostQuery]) -> Result<String> {
    let mut buf = Vec::new();
    write_sweep(&mut buf, queries)?;
    Ok(String::from_utf8(buf).expect("ascii csv"))
}

/// Inclusive value range `start..=end` with a positive step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    start: u64,
    end: u64,
    step: u64,
}

impl Span {
    fn values(self) -> impl Iterator<Item = u64> {
        (self.start..=self.end).step_by(self.step as usize)
    }
}

impl FromStr for Span {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad range {s:?}; expected N, A..B or A..B:STEP"));
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| bad());
        let (range, step) = match s.split_once(':') {
            Some((r, st)) => (r, num(st)?),
            None => (s, 1),
        };
        let (start, end) = match range.split_once("..") {
            Some((a, b)) => (num(a)?, num(b)?),
            None => {
                let v = num(range)?;
                (v, v)
            }
        };
        if step == 0 || start > end {
            return Err(bad());
        }
        Ok(Span { start, end, step })
    }
}

/// Grid of queries described like `t=1..100,l=20,g=2,w=4,c=512`.
///
/// Every field must appear once. Ranges are inclusive and may carry a step
/// (`1..100:10`). Queries are produced with `t` varying slowest, then `l`,
/// `g`, `w`, `c`. Points with `g > t·l` are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    spans: [Span; 5],
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const NAMES: [&str; 5] = ["t", "l", "g", "w", "c"];
        let mut spans: [Option<Span>; 5] = [None; 5];
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("sweep item {item:?} needs key=value")))?;
            let slot = NAMES
                .iter()
                .position(|n| *n == key.trim())
                .ok_or_else(|| Error::Config(format!("unknown sweep field {key:?}")))?;
            if spans[slot].replace(value.parse()?).is_some() {
                return Err(Error::Config(format!("sweep field {key:?} given twice")));
            }
        }
        let mut out = [Span {
            start: 0,
            end: 0,
            step: 1,
        }; 5];
        for (i, span) in spans.into_iter().enumerate() {
            out[i] =
                span.ok_or_else(|| Error::Config(format!("sweep is missing {:?}", NAMES[i])))?;
        }
        Ok(SweepSpec { spans: out })
    }
}

impl SweepSpec {
    pub fn queries(&self) -> Vec<CostQuery> {
        let [ts, ls, gs, ws, cs] = self.spans;
        let mut out = Vec::new();
        for t in ts.values() {
            for l in ls.values() {
                for g in gs.values() {
                    if u128::from(g) > u128::from(t) * u128::from(l) {
                        continue;
                    }
                    for w in ws.values() {
                        for c in cs.values() {
                            out.push(CostQuery { t, l, g, w, c });
                        }
                    }
                }
            }
        }
        out
    }
}
