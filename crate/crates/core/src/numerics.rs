//! Dense vector/matrix arithmetic, stable nonlinearities and seeded
//! initialization shared by the rest of the crate.
//!
//! Everything here works in `f64`. Vectors and matrices are plain owned
//! buffers; there is no broadcasting and no views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl DenseVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("vector"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Wraps values without validation. Callers guarantee the invariants.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix"));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {r} has {} columns, expected {cols}",
                rows[r].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `selfᵀ · x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<DenseVector> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!(
                "transpose matvec: matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &xr) in self.values.chunks(self.cols).zip(x) {
            if xr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * xr;
            }
        }
        Ok(DenseVector(out))
    }

    /// Adds `scale · a ⊗ b` in place.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (row, &ar) in self.values.chunks_mut(self.cols).zip(a) {
            let s = scale * ar;
            if s == 0.0 {
                continue;
            }
            for (m, &bc) in row.iter_mut().zip(b) {
                *m += s * bc;
            }
        }
    }
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.rows, raw.cols, raw.values)
    }
}

pub(crate) fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "length {a} does not match length {b}"
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m · x`.
pub fn matvec(m: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    if m.cols != x.len() {
        return Err(Error::Shape(format!(
            "matvec: matrix is {}x{}, vector has length {}",
            m.rows,
            m.cols,
            x.len()
        )));
    }
    Ok(DenseVector(
        m.values.chunks(m.cols).map(|row| dot(row, &x.0)).collect(),
    ))
}

pub fn tanh_vec(x: &DenseVector) -> DenseVector {
    DenseVector(x.0.iter().map(|v| v.tanh()).collect())
}

/// Softmax with max subtraction, so any finite logits are safe.
pub fn stable_softmax(logits: &DenseVector) -> Result<DenseVector> {
    Ok(DenseVector(softmax_slice(&logits.0)?))
}

pub(crate) fn softmax_slice(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `log Σ exp(z)` via the max trick.
pub fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("log-sum-exp input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    Ok(max + total.ln())
}

pub fn l2_normalize(x: &DenseVector) -> Result<DenseVector> {
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(DenseVector(x.0.iter().map(|v| v / norm).collect()))
}

/// Run seed. Parameter tensors and shuffles derive independent streams from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives a child seed for a named purpose (tensor, epoch, ...).
    pub fn derive(self, stream: u64) -> Seed {
        let mut rng = SplitMix64::new(self.0 ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
        rng.next_u64();
        Seed(rng.next_u64())
    }
}

/// SplitMix64: a counter-based generator with a fixed, portable output
/// sequence for each seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(-bound, bound)`; the endpoints are never produced.
    pub fn uniform_symmetric(&mut self, bound: f64) -> f64 {
        loop {
            let x = (2.0 * self.next_f64() - 1.0) * bound;
            if x.abs() < bound {
                return x;
            }
        }
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `[0, n)`, unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Xavier-uniform `rows × cols` matrix; a pure function of its arguments.
pub fn init_params(rows: usize, cols: usize, seed: Seed) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("parameter shape"));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = SplitMix64::new(seed.0);
    let values = (0..rows * cols)
        .map(|_| rng.uniform_symmetric(bound))
        .collect();
    Ok(DenseMatrix { rows, cols, values })
}
