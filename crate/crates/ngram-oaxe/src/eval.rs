//! Output metrics: repeated-token rate, clipped ngram precision against
//! multiple references, and exact mode-match rate.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collapses runs of identical adjacent tokens to a single token.
pub fn dedup_adjacent(seq: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(seq.len());
    for &tok in seq {
        if out.last() != Some(&tok) {
            out.push(tok);
        }
    }
    out
}

/// Fraction of tokens equal to their immediate predecessor, over all non-pad
/// tokens in the batch. Outputs are expected before de-duplication.
pub fn repetition_rate(outputs: &[Vec<u32>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut repeats = 0usize;
    let mut total = 0usize;
    for out in outputs {
        let toks: Vec<u32> = out.iter().copied().filter(|&t| t != 0).collect();
        total += toks.len();
        repeats += toks.windows(2).filter(|w| w[0] == w[1]).count();
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(repeats as f64 / total as f64)
}

fn ngram_counts(seq: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for g in seq.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level clipped ngram precision: each output ngram counts as correct
/// up to the maximum number of times it appears in any single reference.
pub fn ngram_precision(outputs: &[Vec<u32>], refs: &[Vec<Vec<u32>>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("ngram order must be at least 1".into()));
    }
    if outputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if outputs.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} outputs for {} reference sets",
            outputs.len(),
            refs.len()
        )));
    }

    let mut matched = 0usize;
    let mut total = 0usize;
    for (out, ref_set) in outputs.iter().zip(refs) {
        let out_counts = ngram_counts(out, n);
        if out_counts.is_empty() {
            continue;
        }
        let ref_counts: Vec<HashMap<&[u32], usize>> =
            ref_set.iter().map(|r| ngram_counts(r, n)).collect();
        for (g, &count) in &out_counts {
            let best_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matched += count.min(best_ref);
            total += count;
        }
    }
    if total == 0 {
        return Err(Error::NgramLongerThanOutputs { n });
    }
    Ok(matched as f64 / total as f64)
}

/// Fraction of outputs exactly equal, after de-duplication, to any reference.
pub fn mode_match_rate(outputs: &[Vec<u32>], refs: &[Vec<Vec<u32>>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if outputs.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} outputs for {} reference sets",
            outputs.len(),
            refs.len()
        )));
    }
    let hits = outputs
        .iter()
        .zip(refs)
        .filter(|(out, ref_set)| {
            let cleaned = dedup_adjacent(out);
            ref_set.iter().any(|r| r == &cleaned)
        })
        .count();
    Ok(hits as f64 / outputs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub label: String,
    pub examples: usize,
    pub bigram_precision: Option<f64>,
}

/// Summary of a decoded batch against its multi-reference eval set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub repetition_rate: f64,
    pub ngram_precision: BTreeMap<usize, f64>,
    pub mode_match_rate: f64,
    pub per_length_buckets: Vec<LengthBucket>,
    pub n_examples: usize,
}

const BUCKETS: [(usize, usize, &str); 4] =
    [(1, 4, "1-4"), (5, 8, "5-8"), (9, 12, "9-12"), (13, usize::MAX, "13+")];

/// Computes the full report. With `dedup`, outputs are de-duplicated before
/// every metric (so the repetition rate becomes zero by construction).
pub fn evaluate(outputs: &[Vec<u32>], refs: &[Vec<Vec<u32>>], dedup: bool) -> Result<EvalReport> {
    if outputs.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} outputs for {} reference sets",
            outputs.len(),
            refs.len()
        )));
    }
    let used: Vec<Vec<u32>> =
        if dedup { outputs.iter().map(|o| dedup_adjacent(o)).collect() } else { outputs.to_vec() };

    let mut precisions = BTreeMap::new();
    for n in 1..=4 {
        if let Ok(p) = ngram_precision(&used, refs, n) {
            precisions.insert(n, p);
        }
    }

    let mut per_length_buckets = Vec::with_capacity(BUCKETS.len());
    for (lo, hi, label) in BUCKETS {
        let idx: Vec<usize> = refs
            .iter()
            .enumerate()
            .filter(|(_, rs)| {
                let len = rs.first().map(Vec::len).unwrap_or(0);
                len >= lo && len <= hi
            })
            .map(|(i, _)| i)
            .collect();
        let bucket_out: Vec<Vec<u32>> = idx.iter().map(|&i| used[i].clone()).collect();
        let bucket_refs: Vec<Vec<Vec<u32>>> = idx.iter().map(|&i| refs[i].clone()).collect();
        let bigram_precision = if bucket_out.is_empty() {
            None
        } else {
            ngram_precision(&bucket_out, &bucket_refs, 2).ok()
        };
        per_length_buckets.push(LengthBucket { label: label.into(), examples: idx.len(), bigram_precision });
    }

    Ok(EvalReport {
        repetition_rate: repetition_rate(&used)?,
        ngram_precision: precisions,
        mode_match_rate: mode_match_rate(&used, refs)?,
        per_length_buckets,
        n_examples: outputs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_of_distinct_tokens_is_zero() {
        assert_eq!(repetition_rate(&[vec![2, 3, 4]]).unwrap(), 0.0);
    }

    #[test]
    fn repetition_counts_predecessor_equal_tokens() {
        // a a b b: positions 2 and 4 repeat their predecessor.
        assert_eq!(repetition_rate(&[vec![2, 2, 3, 3]]).unwrap(), 0.5);
    }

    #[test]
    fn repetition_matches_reference_loop() {
        let outputs = vec![vec![2, 2, 2, 5], vec![7, 8, 8], vec![4]];
        let mut repeats = 0;
        let mut total = 0;
        for o in &outputs {
            total += o.len();
            for w in o.windows(2) {
                if w[0] == w[1] {
                    repeats += 1;
                }
            }
        }
        let expect = repeats as f64 / total as f64;
        assert_eq!(repetition_rate(&outputs).unwrap(), expect);
    }

    #[test]
    fn repetition_rejects_empty_batch() {
        assert!(matches!(repetition_rate(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn exact_match_scores_one_at_every_order() {
        let out = vec![vec![2, 3, 4, 5]];
        let refs = vec![vec![vec![2, 3, 4, 5], vec![9, 9, 9, 9]]];
        for n in 1..=4 {
            assert_eq!(ngram_precision(&out, &refs, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        let out = vec![vec![2, 3, 4]];
        let refs = vec![vec![vec![7, 8, 9]]];
        assert_eq!(ngram_precision(&out, &refs, 1).unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_three_sentence_fixture() {
        // Sentence 1: both bigrams match (2/2). Sentence 2: "a a" is never in
        // the reference, "a b" is (1/2). Sentence 3: "c a" appears in the
        // second reference (1/1). Total 4/5.
        let (a, b, c) = (2u32, 3u32, 4u32);
        let out = vec![vec![a, b, c], vec![a, a, b], vec![c, a]];
        let refs = vec![
            vec![vec![a, b, c]],
            vec![vec![a, b, a]],
            vec![vec![a, c], vec![c, a]],
        ];
        let p = ngram_precision(&out, &refs, 2).unwrap();
        assert!((p - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeated_output_ngrams() {
        // Output repeats "a" three times; the best reference has it once.
        let out = vec![vec![2, 2, 2]];
        let refs = vec![vec![vec![2, 3, 4]]];
        let p = ngram_precision(&out, &refs, 1).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn permuted_unigrams_score_one() {
        let out = vec![vec![5, 2, 4, 3]];
        let refs = vec![vec![vec![2, 3, 4, 5]]];
        assert_eq!(ngram_precision(&out, &refs, 1).unwrap(), 1.0);
    }

    #[test]
    fn order_too_large_for_every_output_is_rejected() {
        let out = vec![vec![2, 3]];
        let refs = vec![vec![vec![2, 3]]];
        assert!(matches!(
            ngram_precision(&out, &refs, 3),
            Err(Error::NgramLongerThanOutputs { n: 3 })
        ));
    }

    #[test]
    fn adding_a_reference_never_hurts() {
        let out = vec![vec![2, 3, 4], vec![4, 3, 2]];
        let base = vec![vec![vec![2, 3, 4]], vec![vec![2, 3, 4]]];
        let mut extended = base.clone();
        for rs in &mut extended {
            rs.push(vec![4, 3, 2]);
        }
        for n in 1..=2 {
            let before = ngram_precision(&out, &base, n).unwrap();
            let after = ngram_precision(&out, &extended, n).unwrap();
            assert!(after >= before);
        }
        assert!(mode_match_rate(&out, &extended).unwrap() >= mode_match_rate(&out, &base).unwrap());
    }

    #[test]
    fn mode_match_counts_exact_reference_hits() {
        let refs = vec![
            vec![vec![2, 3], vec![3, 2]],
            vec![vec![2, 3], vec![3, 2]],
            vec![vec![4, 5], vec![5, 4]],
        ];
        // First matches the second mode, second mixes modes, third matches
        // after de-duplication.
        let out = vec![vec![3, 2], vec![2, 2], vec![4, 4, 5]];
        let rate = mode_match_rate(&out, &refs).unwrap();
        assert!((rate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mode_mixing_matches_nothing() {
        let refs = vec![vec![vec![2, 3, 4, 5], vec![4, 5, 2, 3]]];
        let out = vec![vec![2, 3, 2, 3]];
        assert_eq!(mode_match_rate(&out, &refs).unwrap(), 0.0);
    }

    #[test]
    fn deduped_outputs_have_zero_repetition() {
        let outputs = [vec![2, 2, 3], vec![4, 4, 4, 5]];
        let deduped: Vec<Vec<u32>> = outputs.iter().map(|o| dedup_adjacent(o)).collect();
        assert_eq!(repetition_rate(&deduped).unwrap(), 0.0);
    }

    #[test]
    fn report_shape_and_dedup_behavior() {
        let refs = vec![vec![vec![2, 3, 4, 5]], vec![vec![5, 4, 3, 2]]];
        let out = vec![vec![2, 2, 3, 4], vec![5, 4, 3, 2]];
        let raw = evaluate(&out, &refs, false).unwrap();
        let cleaned = evaluate(&out, &refs, true).unwrap();
        assert!(raw.repetition_rate > 0.0);
        assert_eq!(cleaned.repetition_rate, 0.0);
        assert!(raw.ngram_precision.contains_key(&1));
        assert_eq!(raw.n_examples, 2);
        let total_bucketed: usize = raw.per_length_buckets.iter().map(|b| b.examples).sum();
        assert_eq!(total_bucketed, 2);
    }
}
