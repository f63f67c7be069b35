//! Training losses for non-autoregressive sequence generation that forgive
//! reordering between ngram phrases while requiring exact word order inside
//! each phrase, plus a desk-scale harness (toy parallel-prediction model,
//! synthetic multimodal corpus, metrics) for studying their behavior.
//!
//! The pipeline: per-position log probabilities ([`logprob`]) are projected
//! onto the target tokens, lifted to ngram costs, matched optimally against
//! position windows with an exact Hungarian solver ([`assignment`]), and
//! low-probability matches are truncated ([`loss`]). The [`model`],
//! [`datagen`], and [`eval`] modules form the experiment harness driven by
//! the `ngram-oaxe` binary.

use std::path::Path;

pub mod assignment;
pub mod bench;
pub mod datagen;
pub mod demo;
pub mod error;
pub mod eval;
pub mod logprob;
pub mod loss;
pub mod model;
pub mod parallel;
pub mod seeding;
pub mod verify;
pub mod vocab;

pub use error::{Error, Result};

/// Writes a file via a temporary sibling plus rename, so readers never see a
/// half-written artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
