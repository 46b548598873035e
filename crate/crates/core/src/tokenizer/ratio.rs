use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{Tokenizer, TokenizerError};
use crate::dom::{DomTree, PruneConfig};

/// `len(s) / len(encode(s))`, with length counted in Unicode scalar values.
pub fn char_token_ratio(tok: &dyn Tokenizer, s: &str) -> Result<f64, TokenizerError> {
    if s.is_empty() {
        return Err(TokenizerError::EmptyInput);
    }
    let tokens = tok.count_tokens(s);
    if tokens == 0 {
        return Err(TokenizerError::NoTokens);
    }
    Ok(s.chars().count() as f64 / tokens as f64)
}

/// Drops attribute values longer than `config.ratio_min_len` characters whose
/// ratio is below `config.ratio_threshold`. Elements are never removed and the
/// `node` attribute is never touched.
pub fn prune_attributes_by_ratio(
    tree: &DomTree,
    tok: &dyn Tokenizer,
    config: &PruneConfig,
) -> DomTree {
    ratio_prune_with(tree, tok, config.ratio_threshold, config.ratio_min_len, |_, _, _| {})
}

/// Like [`prune_attributes_by_ratio`], reporting each removed `(tag, attr, value)`.
pub fn ratio_prune_with(
    tree: &DomTree,
    tok: &dyn Tokenizer,
    threshold: f64,
    min_len: usize,
    mut on_prune: impl FnMut(&str, &str, &str),
) -> DomTree {
    let mut out = tree.clone();
    out.for_each_element_mut(&mut |e| {
        let tag = e.tag.clone();
        e.attrs.retain(|(name, value)| {
            if name == "node" || value.chars().count() <= min_len {
                return true;
            }
            let keep = char_token_ratio(tok, value).map_or(true, |r| r >= threshold);
            if !keep {
                on_prune(&tag, name, value);
            }
            keep
        });
    });
    out
}

/// Lowercase dictionary used to flag pruned values that contain real words.
#[derive(Debug, Clone, Default)]
pub struct Wordlist {
    words: HashSet<String>,
}

impl Wordlist {
    pub const MIN_WORD_LEN: usize = 3;

    /// The 10k-word English list shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_text(include_str!("../../data/words-10k.txt"))
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Wordlist { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    /// True if splitting `value` on non-alphabetic characters yields a listed word
    /// of at least three letters.
    pub fn has_word_in(&self, value: &str) -> bool {
        value
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| w.chars().count() >= Self::MIN_WORD_LEN)
            .any(|w| self.contains(w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub threshold: f64,
    /// `(tag, attr, count)`, most frequently pruned first.
    pub pruned_pairs: Vec<(String, String, usize)>,
    pub pruned_values: usize,
    pub false_positives: usize,
    pub false_positive_rate: f64,
    pub chars_before: usize,
    pub tokens_before: usize,
    pub chars_after: usize,
    pub tokens_after: usize,
}

impl RatioReport {
    pub fn tokens_saved(&self) -> usize {
        self.tokens_before.saturating_sub(self.tokens_after)
    }
}

struct DocStats {
    chars: usize,
    tokens: usize,
    per_threshold: Vec<ThresholdStats>,
}

#[derive(Default)]
struct ThresholdStats {
    chars: usize,
    tokens: usize,
    pairs: BTreeMap<(String, String), usize>,
    pruned: usize,
    false_positives: usize,
}

/// Sweeps ratio thresholds over already whitelist-pruned documents and reports
/// size reduction, false positives and the most-pruned `(tag, attr)` pairs.
pub fn analyze_pruning(
    corpus: &[DomTree],
    tok: &dyn Tokenizer,
    thresholds: &[f64],
    wordlist: &Wordlist,
    min_len: usize,
) -> Result<Vec<RatioReport>, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if wordlist.is_empty() {
        return Err(TokenizerError::EmptyWordlist);
    }
    let docs: Vec<DocStats> = corpus
        .par_iter()
        .map(|tree| {
            let html = tree.to_html();
            let per_threshold = thresholds
                .iter()
                .map(|&threshold| {
                    let mut stats = ThresholdStats::default();
                    let pruned = ratio_prune_with(tree, tok, threshold, min_len, |tag, attr, value| {
                        *stats.pairs.entry((tag.to_string(), attr.to_string())).or_default() += 1;
                        stats.pruned += 1;
                        if wordlist.has_word_in(value) {
                            stats.false_positives += 1;
                        }
                    });
                    let after = pruned.to_html();
                    stats.chars = after.chars().count();
                    stats.tokens = tok.count_tokens(&after);
                    stats
                })
                .collect();
            DocStats {
                chars: html.chars().count(),
                tokens: tok.count_tokens(&html),
                per_threshold,
            }
        })
        .collect();

    let chars_before = docs.iter().map(|d| d.chars).sum();
    let tokens_before = docs.iter().map(|d| d.tokens).sum();
    let reports = thresholds
        .iter()
        .enumerate()
        .map(|(i, &threshold)| {
            let mut pairs: BTreeMap<(String, String), usize> = BTreeMap::new();
            let (mut pruned, mut fp, mut chars, mut tokens) = (0, 0, 0, 0);
            for d in &docs {
                let s = &d.per_threshold[i];
                for (k, v) in &s.pairs {
                    *pairs.entry(k.clone()).or_default() += v;
                }
                pruned += s.pruned;
                fp += s.false_positives;
                chars += s.chars;
                tokens += s.tokens;
            }
            let mut pruned_pairs: Vec<(String, String, usize)> =
                pairs.into_iter().map(|((t, a), n)| (t, a, n)).collect();
            pruned_pairs.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));
            RatioReport {
                threshold,
                pruned_pairs,
                pruned_values: pruned,
                false_positives: fp,
                false_positive_rate: if pruned == 0 { 0.0 } else { fp as f64 / pruned as f64 },
                chars_before,
                tokens_before,
                chars_after: chars,
                tokens_after: tokens,
            }
        })
        .collect();
    Ok(reports)
}
