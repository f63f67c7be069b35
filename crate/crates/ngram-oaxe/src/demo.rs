//! A worked five-token example for the bigram loss.
//!
//! The model distribution below prefers the target phrases in a shuffled
//! arrangement: "this afternoon" early, "I ate pizza" late. The bigram loss
//! matches each position window to its best target bigram, forgiving the
//! phrase reordering, and the one leftover match ("pizza this") is so
//! unlikely that loss truncation drops it at the default margin of 0.15.

use crate::error::Result;
use crate::logprob::{log_softmax, Array3, LogProbBatch};
use crate::loss::{ngram_oaxe_loss, LossOutput, NgramSpec, TruncationConfig};
use crate::vocab::{TokenSeq, Vocab};

const WORDS: [&str; 5] = ["I", "ate", "pizza", "this", "afternoon"];

/// Per-position probabilities over [pad, unk, I, ate, pizza, this, afternoon].
/// Every row sums to one.
const TABLE: [[f64; 7]; 5] = [
    [0.050, 0.050, 0.20, 0.05, 0.10, 0.50, 0.05],
    [0.025, 0.025, 0.05, 0.10, 0.20, 0.10, 0.50],
    [0.050, 0.050, 0.50, 0.10, 0.10, 0.10, 0.10],
    [0.050, 0.050, 0.15, 0.40, 0.20, 0.10, 0.05],
    [0.050, 0.050, 0.10, 0.15, 0.45, 0.05, 0.15],
];

/// One matched window in human-readable form. Positions are 1-based.
#[derive(Debug, Clone)]
pub struct WalkthroughPair {
    pub window_start: usize,
    pub ngram_text: String,
    pub probability: f64,
    pub kept: bool,
}

/// The full worked example: inputs, raw loss output, and a readable summary.
#[derive(Debug, Clone)]
pub struct Walkthrough {
    pub vocab: Vocab,
    pub target: TokenSeq,
    pub logprobs: LogProbBatch,
    pub margin: f64,
    pub loss: LossOutput,
    pub pairs: Vec<WalkthroughPair>,
}

impl Walkthrough {
    /// Probability the toy model assigns to `token` at 1-based `position`.
    pub fn token_probability(&self, position: usize, token: &str) -> f64 {
        let id = self.vocab.id_of(token).expect("token in demo vocab") as usize;
        self.logprobs.get(0, position - 1, id).exp()
    }

    /// Probability of a bigram starting at 1-based `position`.
    pub fn bigram_probability(&self, position: usize, first: &str, second: &str) -> f64 {
        self.token_probability(position, first) * self.token_probability(position + 1, second)
    }
}

/// Runs the bigram loss (N = 2, margin 0.15) on the worked example.
pub fn bigram_walkthrough() -> Result<Walkthrough> {
    let vocab = Vocab::new(WORDS)?;
    let ids: Vec<u32> = WORDS.iter().map(|w| vocab.id_of(w).unwrap()).collect();
    let target = TokenSeq::new(ids, vocab.size())?;

    let mut logits = Array3::zeros(1, 5, 7);
    for (pos, row) in TABLE.iter().enumerate() {
        for (tok, &p) in row.iter().enumerate() {
            logits.set(0, pos, tok, p.ln());
        }
    }
    let logprobs = log_softmax(&logits, &[5])?;

    let margin = 0.15;
    let spec = NgramSpec::new(2)?;
    let tc = TruncationConfig::with_margin(margin)?;
    let loss = ngram_oaxe_loss(&logprobs, std::slice::from_ref(&target), spec, &tc)?;

    let pairs = loss.matched_pairs[0]
        .iter()
        .zip(&loss.kept_mask[0])
        .map(|(pair, &kept)| {
            let first = vocab.token(target.tokens()[pair.ngram]).unwrap();
            let second = vocab.token(target.tokens()[pair.ngram + 1]).unwrap();
            WalkthroughPair {
                window_start: pair.window + 1,
                ngram_text: format!("{first} {second}"),
                probability: (-pair.cost).exp(),
                kept,
            }
        })
        .collect();

    Ok(Walkthrough { vocab, target, logprobs, margin, loss, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_token_probabilities_survive_normalization() {
        let w = bigram_walkthrough().unwrap();
        assert!((w.token_probability(1, "I") - 0.2).abs() < 1e-9);
        assert!((w.token_probability(2, "ate") - 0.1).abs() < 1e-9);
        assert!((w.token_probability(4, "ate") - 0.4).abs() < 1e-9);
    }

    #[test]
    fn bigram_probability_is_the_token_product() {
        let w = bigram_walkthrough().unwrap();
        assert!((w.bigram_probability(1, "I", "ate") - 0.02).abs() < 1e-9);
    }

    #[test]
    fn selected_bigrams_and_truncation() {
        let w = bigram_walkthrough().unwrap();
        let by_window: Vec<(&str, bool)> =
            w.pairs.iter().map(|p| (p.ngram_text.as_str(), p.kept)).collect();
        assert_eq!(
            by_window,
            vec![
                ("this afternoon", true),
                ("pizza this", false),
                ("I ate", true),
                ("ate pizza", true),
            ]
        );
    }

    #[test]
    fn kept_loss_matches_the_three_surviving_bigrams() {
        let w = bigram_walkthrough().unwrap();
        let expect = -(0.25f64.ln()) - (0.2f64.ln()) - (0.18f64.ln());
        assert!((w.loss.value - expect).abs() < 1e-6, "{} vs {expect}", w.loss.value);
    }
}
