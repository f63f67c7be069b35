//! Token alphabets and padded token sequences.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Id of the padding token in every vocabulary.
pub const PAD_ID: u32 = 0;
/// Id of the unknown token in every vocabulary.
pub const UNK_ID: u32 = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// A fixed alphabet of distinct symbols with reserved pad and unk slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from the non-reserved symbols. Pad and unk are
    /// prepended automatically at ids 0 and 1.
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(symbols.into_iter().map(Into::into));

        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate symbol {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Non-reserved symbols in id order.
    pub fn symbols(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn all_tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A sequence of vocabulary ids where padding may only appear as a suffix.
///
/// `len()` counts the non-pad prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<u32>,
    len: usize,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>, vocab_size: usize) -> Result<Self> {
        let mut len = ids.len();
        let mut in_pad = false;
        for (pos, &id) in ids.iter().enumerate() {
            if id as usize >= vocab_size {
                return Err(Error::TokenOutOfRange { id, vocab: vocab_size });
            }
            if id == PAD_ID {
                if !in_pad {
                    in_pad = true;
                    len = pos;
                }
            } else if in_pad {
                return Err(Error::PadNotSuffix { position: pos });
            }
        }
        Ok(Self { ids, len })
    }

    /// All ids including the pad suffix.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// The non-pad prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.len]
    }

    /// Count of non-pad tokens.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total slots including padding.
    pub fn padded_len(&self) -> usize {
        self.ids.len()
    }
}
