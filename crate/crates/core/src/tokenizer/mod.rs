//! Pluggable tokenizers and the character-to-token ratio rule for attribute pruning.

mod bpe;
mod ratio;

use std::path::Path;

use thiserror::Error;

pub use bpe::{byte_to_char, split_words, BpeTokenizer, MISSING_ID};
pub use ratio::{
    analyze_pruning, char_token_ratio, prune_attributes_by_ratio, ratio_prune_with, RatioReport,
    Wordlist,
};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot read tokenizer file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed tokenizer file, section `{section}`: {message}")]
    Malformed { section: String, message: String },
    #[error("character-to-token ratio of an empty string is undefined")]
    EmptyInput,
    #[error("tokenizer produced no tokens for a non-empty string")]
    NoTokens,
    #[error("analysis needs at least one document")]
    EmptyCorpus,
    #[error("analysis needs a non-empty wordlist")]
    EmptyWordlist,
}

/// A deterministic text-to-token-id mapping. `encode("")` is empty.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn encode(&self, text: &str) -> Vec<u32>;

    fn count_tokens(&self, text: &str) -> usize {
        self.encode(text).len()
    }
}

/// Splits on runs of whitespace; each piece is one token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(fnv1a).collect()
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// One token per Unicode scalar value.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl Tokenizer for CharTokenizer {
    fn name(&self) -> &str {
        "char"
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().map(u32::from).collect()
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.chars().count()
    }
}

fn fnv1a(s: &str) -> u32 {
    s.bytes()
        .fold(0x811c_9dc5u32, |h, b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

/// Resolves `whitespace`, `char`, or a path to a `tokenizer.json` file.
pub fn load_tokenizer(spec: &str) -> Result<Box<dyn Tokenizer>, TokenizerError> {
    match spec {
        "whitespace" => Ok(Box::new(WhitespaceTokenizer)),
        "char" => Ok(Box::new(CharTokenizer)),
        path => Ok(Box::new(load_bpe(Path::new(path))?)),
    }
}

pub fn load_bpe(path: &Path) -> Result<BpeTokenizer, TokenizerError> {
    BpeTokenizer::from_file(path)
}
