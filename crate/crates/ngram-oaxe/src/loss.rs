//! Position-aligned, order-agnostic, and ngram order-agnostic cross entropy.
//!
//! The ngram loss is computed per sentence in four steps: gather the target
//! token log-probs into a square cost matrix, lift it to ngram granularity by
//! summing N diagonal-shifted slices, find the minimum-cost matching of
//! position windows to target ngrams, and drop matched ngrams whose
//! probability falls below the truncation margin. Gradients treat the chosen
//! matching and mask as constants.

use crate::assignment::{hungarian_solve, CostMatrix};
use crate::error::{Error, Result};
use crate::logprob::{Array3, LogProbBatch};
use crate::parallel::par_map;
use crate::vocab::TokenSeq;

/// Fixed ngram size N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramSpec {
    n: usize,
}

impl NgramSpec {
    pub const MAX_N: usize = 8;

    pub fn new(n: usize) -> Result<Self> {
        if !(1..=Self::MAX_N).contains(&n) {
            return Err(Error::InvalidNgramSize { n, max: Self::MAX_N });
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sentences shorter than N degrade to N = length, so Eq-style window
    /// counts stay positive instead of dropping the sentence.
    pub fn effective_for(&self, sentence_len: usize) -> usize {
        self.n.min(sentence_len.max(1))
    }
}

/// Loss-truncation margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    margin: f64,
    enabled: bool,
}

impl TruncationConfig {
    pub fn new(margin: f64, enabled: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&margin) || margin.is_nan() {
            return Err(Error::InvalidMargin(margin));
        }
        Ok(Self { margin, enabled })
    }

    pub fn with_margin(margin: f64) -> Result<Self> {
        Self::new(margin, true)
    }

    pub fn disabled() -> Self {
        Self { margin: 0.0, enabled: false }
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }
}

/// One matched (position window, target ngram) edge and its cost, i.e. the
/// negated log probability of that ngram at that window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub window: usize,
    pub ngram: usize,
    pub cost: f64,
}

/// Scalar loss with its supporting evidence: the per-sentence matches, the
/// truncation survivors, and the gradient with respect to the log-prob batch.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub matched_pairs: Vec<Vec<MatchedPair>>,
    pub kept_mask: Vec<Vec<bool>>,
    pub grad: Array3,
}

fn check_batch_shapes(lp: &LogProbBatch, targets: &[TokenSeq]) -> Result<()> {
    if targets.len() != lp.batch() {
        return Err(Error::ShapeMismatch(format!(
            "{} target sentences for batch of {}",
            targets.len(),
            lp.batch()
        )));
    }
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
    Ok(())
}

/// Position-aligned cross entropy: `-sum_b sum_{i<I_b} log P(y_i | pos i)`.
pub fn xe_loss(lp: &LogProbBatch, targets: &[TokenSeq]) -> Result<LossOutput> {
    check_batch_shapes(lp, targets)?;
    let mut value = 0.0;
    let mut matched_pairs = Vec::with_capacity(targets.len());
    let mut kept_mask = Vec::with_capacity(targets.len());
    let mut grad = Array3::zeros(lp.batch(), lp.positions(), lp.vocab());

    for (b, y) in targets.iter().enumerate() {
        let mut pairs = Vec::with_capacity(y.len());
        for (i, &id) in y.tokens().iter().enumerate() {
            let cost = -lp.get(b, i, id as usize);
            value += cost;
            pairs.push(MatchedPair { window: i, ngram: i, cost });
            grad.add(b, i, id as usize, -1.0);
        }
        kept_mask.push(vec![true; pairs.len()]);
        matched_pairs.push(pairs);
    }
    Ok(LossOutput { value, matched_pairs, kept_mask, grad })
}

/// Token-level cost matrix for sentence `b`: `cost[i][j] = -log P(y_j | pos i)`.
pub fn build_token_cost(lp: &LogProbBatch, y: &TokenSeq, b: usize) -> Result<CostMatrix> {
    if b >= lp.batch() {
        return Err(Error::ShapeMismatch(format!("sentence index {b} for batch of {}", lp.batch())));
    }
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
    let len = y.len();
    let mut entries = Vec::with_capacity(len * len);
    for i in 0..len {
        for &id in y.tokens() {
            entries.push(-lp.get(b, i, id as usize));
        }
    }
    CostMatrix::new(len, entries)
}

/// Lifts a token-level cost matrix to ngram granularity by summing N
/// diagonal-shifted slices: `out[i][j] = sum_k c[i+k][j+k]`. In the log
/// domain this sum is exactly the negated log of the ngram probability
/// product.
pub fn lift_to_ngram_cost(c: &CostMatrix, spec: NgramSpec) -> Result<CostMatrix> {
    let len = c.n();
    let n = spec.n();
    if len < n {
        return Err(Error::SentenceShorterThanNgram { len, n });
    }
    let m = len - n + 1;
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut sum = 0.0;
            for k in 0..n {
                sum += c.get(i + k, j + k);
            }
            entries.push(sum);
        }
    }
    CostMatrix::new(m, entries)
}

/// Geometric-mean per-token probability of a matched ngram term.
pub fn pair_geo_mean_prob(pair: &MatchedPair, n: usize) -> f64 {
    (-pair.cost / n as f64).exp()
}

/// Applies loss truncation to one sentence's matches: a pair is dropped when
/// its per-token geometric-mean probability falls below the margin. The
/// highest-probability pair always survives so no sentence loses every term.
pub fn truncate_matches(pairs: &[MatchedPair], spec: NgramSpec, tc: &TruncationConfig) -> Vec<bool> {
    if pairs.is_empty() {
        return Vec::new();
    }
    if !tc.enabled() || tc.margin() == 0.0 {
        return vec![true; pairs.len()];
    }
    let n = spec.n();
    let mut kept: Vec<bool> =
        pairs.iter().map(|p| pair_geo_mean_prob(p, n) >= tc.margin()).collect();
    if kept.iter().all(|&k| !k) {
        let best = pairs
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.cost.partial_cmp(&b.cost).expect("finite costs"))
            .map(|(i, _)| i)
            .expect("non-empty pairs");
        kept[best] = true;
    }
    kept
}

struct SentenceMatch {
    pairs: Vec<MatchedPair>,
    kept: Vec<bool>,
}

fn match_sentence(
    lp: &LogProbBatch,
    y: &TokenSeq,
    b: usize,
    spec: NgramSpec,
    tc: &TruncationConfig,
) -> Result<SentenceMatch> {
    if y.is_empty() {
        return Ok(SentenceMatch { pairs: Vec::new(), kept: Vec::new() });
    }
    let n_eff = NgramSpec::new(spec.effective_for(y.len()))?;
    let token_cost = build_token_cost(lp, y, b)?;
    let lifted = lift_to_ngram_cost(&token_cost, n_eff)?;
    let assignment = hungarian_solve(&lifted);
    let pairs: Vec<MatchedPair> = assignment
        .perm
        .iter()
        .enumerate()
        .map(|(window, &ngram)| MatchedPair { window, ngram, cost: lifted.get(window, ngram) })
        .collect();
    let kept = truncate_matches(&pairs, n_eff, tc);
    Ok(SentenceMatch { pairs, kept })
}

/// The ngram order-agnostic loss: per sentence, the minimum over window-to-
/// ngram orderings of the summed ngram cross entropies, after truncation.
/// Sentences are matched independently; the batch value is their sum.
pub fn ngram_oaxe_loss(
    lp: &LogProbBatch,
    targets: &[TokenSeq],
    spec: NgramSpec,
    tc: &TruncationConfig,
) -> Result<LossOutput> {
    check_batch_shapes(lp, targets)?;

    let matches: Vec<Result<SentenceMatch>> =
        par_map(targets.len(), |b| match_sentence(lp, &targets[b], b, spec, tc));

    let mut value = 0.0;
    let mut matched_pairs = Vec::with_capacity(targets.len());
    let mut kept_mask = Vec::with_capacity(targets.len());
    for m in matches {
        let m = m?;
        for (pair, &keep) in m.pairs.iter().zip(&m.kept) {
            if keep {
                value += pair.cost;
            }
        }
        matched_pairs.push(m.pairs);
        kept_mask.push(m.kept);
    }
    let grad = loss_gradient(lp, targets, spec, &matched_pairs, &kept_mask)?;
    Ok(LossOutput { value, matched_pairs, kept_mask, grad })
}

/// Order-agnostic cross entropy: the N = 1 case of the ngram loss.
pub fn oaxe_loss(lp: &LogProbBatch, targets: &[TokenSeq], tc: &TruncationConfig) -> Result<LossOutput> {
    ngram_oaxe_loss(lp, targets, NgramSpec::new(1)?, tc)
}

/// Envelope gradient of the ngram loss with the matching and mask held
/// fixed: each kept term contributes -1 at every (position, token)
/// coordinate it covers, so interior tokens of overlapping ngrams are
/// counted up to N times.
pub fn loss_gradient(
    lp: &LogProbBatch,
    targets: &[TokenSeq],
    spec: NgramSpec,
    matched_pairs: &[Vec<MatchedPair>],
    kept_mask: &[Vec<bool>],
) -> Result<Array3> {
    check_batch_shapes(lp, targets)?;
    if matched_pairs.len() != targets.len() || kept_mask.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} pair lists / {} masks for batch of {}",
            matched_pairs.len(),
            kept_mask.len(),
            targets.len()
        )));
    }

    let mut grad = Array3::zeros(lp.batch(), lp.positions(), lp.vocab());
    for (b, y) in targets.iter().enumerate() {
        let pairs = &matched_pairs[b];
        let kept = &kept_mask[b];
        if kept.len() != pairs.len() {
            return Err(Error::ShapeMismatch(format!(
                "sentence {b}: {} mask bits for {} pairs",
                kept.len(),
                pairs.len()
            )));
        }
        if y.is_empty() {
            if !pairs.is_empty() {
                return Err(Error::ShapeMismatch(format!(
                    "sentence {b}: {} pairs for empty target",
                    pairs.len()
                )));
            }
            continue;
        }
        let n_eff = spec.effective_for(y.len());
        let windows = y.len() - n_eff + 1;
        if !pairs.is_empty() && pairs.len() != windows {
            return Err(Error::ShapeMismatch(format!(
                "sentence {b}: {} pairs for {windows} windows",
                pairs.len()
            )));
        }
        for (pair, &keep) in pairs.iter().zip(kept) {
            if pair.window >= windows || pair.ngram >= windows {
                return Err(Error::ShapeMismatch(format!(
                    "sentence {b}: pair ({}, {}) outside {windows} windows",
                    pair.window, pair.ngram
                )));
            }
            if !keep {
                continue;
            }
            for k in 0..n_eff {
                let token = y.tokens()[pair.ngram + k] as usize;
                grad.add(b, pair.window + k, token, -1.0);
            }
        }
    }
    Ok(grad)
}
