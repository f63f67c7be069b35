//! Batched log-probability tensors and the log-domain utilities behind every loss.
//!
//! All probability arithmetic stays in the log domain; products of token
//! probabilities become sums of log probabilities.

use crate::error::{Error, Result};
use crate::vocab::TokenSeq;

/// Smallest probability carried through the pipeline. Log-probabilities are
/// clamped to `ln(PROB_FLOOR)` so negated costs stay finite for the solver.
pub const PROB_FLOOR: f64 = 1e-30;

/// `ln(PROB_FLOOR)`.
pub fn log_prob_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Dense rank-3 array of f64, row-major over (d0, d1, d2).
#[derive(Debug, Clone, PartialEq)]
pub struct Array3 {
    data: Vec<f64>,
    dims: (usize, usize, usize),
}

impl Array3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self { data: vec![0.0; d0 * d1 * d2], dims: (d0, d1, d2) }
    }

    pub fn from_vec(data: Vec<f64>, dims: (usize, usize, usize)) -> Result<Self> {
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} values cannot be viewed as {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { data, dims })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] += value;
    }

    /// Contiguous innermost row at (i, j).
    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j, 0);
        &self.data[o..o + self.dims.2]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j, 0);
        let d2 = self.dims.2;
        &mut self.data[o..o + d2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-position log probability distributions over the vocabulary for a batch
/// of sentences, plus the valid length of each sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbBatch {
    values: Array3,
    lengths: Vec<usize>,
}

impl LogProbBatch {
    /// Wraps an already-normalized tensor. Callers outside tests should go
    /// through [`log_softmax`].
    pub fn from_parts(values: Array3, lengths: Vec<usize>) -> Result<Self> {
        let (b, t, _) = values.dims();
        if lengths.len() != b {
            return Err(Error::ShapeMismatch(format!(
                "{} lengths for batch of {b}",
                lengths.len()
            )));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l > t) {
            return Err(Error::ShapeMismatch(format!(
                "sentence length {bad} exceeds {t} positions"
            )));
        }
        Ok(Self { values, lengths })
    }

    pub fn batch(&self) -> usize {
        self.values.dims().0
    }

    pub fn positions(&self) -> usize {
        self.values.dims().1
    }

    pub fn vocab(&self) -> usize {
        self.values.dims().2
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn len_of(&self, b: usize) -> usize {
        self.lengths[b]
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, v: usize) -> f64 {
        self.values.get(b, t, v)
    }

    pub fn row(&self, b: usize, t: usize) -> &[f64] {
        self.values.row(b, t)
    }

    pub fn values(&self) -> &Array3 {
        &self.values
    }
}

/// Normalizes raw logits into log probabilities, row by row, using
/// max-subtraction. Every row is normalized, valid or padded; entries are
/// clamped to the probability floor afterwards.
pub fn log_softmax(logits: &Array3, lengths: &[usize]) -> Result<LogProbBatch> {
    let (b, t, v) = logits.dims();
    if lengths.len() != b {
        return Err(Error::ShapeMismatch(format!("{} lengths for batch of {b}", lengths.len())));
    }
    if v == 0 {
        return Err(Error::ShapeMismatch("zero-width vocabulary".into()));
    }
    for (bi, &len) in lengths.iter().enumerate() {
        if len > t {
            return Err(Error::ShapeMismatch(format!(
                "sentence {bi} has length {len} but only {t} positions"
            )));
        }
    }

    let mut out = Array3::zeros(b, t, v);
    let floor = log_prob_floor();
    for bi in 0..b {
        for ti in 0..t {
            let row = logits.row(bi, ti);
            if let Some(_bad) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFiniteLogit { batch: bi, position: ti });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            let out_row = out.row_mut(bi, ti);
            for (o, &x) in out_row.iter_mut().zip(row) {
                *o = (x - log_z).max(floor);
            }
        }
    }
    LogProbBatch::from_parts(out, lengths.to_vec())
}

/// Projects the log-prob tensor onto the target tokens of each sentence:
/// `out[b][t][i] = lp[b][t][y_i]`. Entries at masked coordinates
/// (`t >= len_b` or `i >= len_b`) are set to the probability floor.
pub fn gather_target_logprobs(lp: &LogProbBatch, targets: &[TokenSeq]) -> Result<Array3> {
    if targets.len() != lp.batch() {
        return Err(Error::ShapeMismatch(format!(
            "{} target sentences for batch of {}",
            targets.len(),
            lp.batch()
        )));
    }
    let max_len = targets.iter().map(TokenSeq::len).max().unwrap_or(0);
    for (b, y) in targets.iter().enumerate() {
        if y.len() != lp.len_of(b) {
            return Err(Error::ShapeMismatch(format!(
                "sentence {b}: target length {} != log-prob length {}",
                y.len(),
                lp.len_of(b)
            )));
        }
        if let Some(&id) = y.tokens().iter().find(|&&id| id as usize >= lp.vocab()) {
            return Err(Error::TokenOutOfRange { id, vocab: lp.vocab() });
        }
    }

    let floor = log_prob_floor();
    let mut out = Array3::zeros(lp.batch(), lp.positions(), max_len);
    for (b, y) in targets.iter().enumerate() {
        let len = y.len();
        for t in 0..lp.positions() {
            for (i, &id) in y.tokens().iter().enumerate() {
                let val = if t < len && i < len { lp.get(b, t, id as usize) } else { floor };
                out.set(b, t, i, val);
            }
            for i in len..max_len {
                out.set(b, t, i, floor);
            }
        }
    }
    Ok(out)
}

/// log(sum(exp(row))) with max-subtraction.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
