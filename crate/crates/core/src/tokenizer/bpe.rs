//! Byte-level BPE over the common `tokenizer.json` layout.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use serde_json::Value;

use super::{Tokenizer, TokenizerError};

/// Id emitted for a byte symbol missing from the vocabulary when no unk token exists.
pub const MISSING_ID: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    name: String,
    vocab: HashMap<String, u32>,
    /// (left id, right id) -> (rank, merged id)
    merges: HashMap<(u32, u32), (u32, u32)>,
    byte_ids: [u32; 256],
    split_words: bool,
}

/// The GPT-2 reversible byte-to-character table.
pub fn byte_to_char() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            extra += 1;
            char::from_u32(255 + extra).expect("valid scalar")
        };
    }
    table
}

impl BpeTokenizer {
    pub fn from_file(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bpe".to_string());
        Self::from_json(&name, &text)
    }

    pub fn from_json(name: &str, text: &str) -> Result<Self, TokenizerError> {
        let malformed = |section: &str, message: String| TokenizerError::Malformed {
            section: section.to_string(),
            message,
        };
        let root: Value =
            serde_json::from_str(text).map_err(|e| malformed("<root>", e.to_string()))?;
        let model = root
            .get("model")
            .ok_or_else(|| malformed("model", "missing".into()))?;
        let vocab_json = model
            .get("vocab")
            .and_then(Value::as_object)
            .ok_or_else(|| malformed("model.vocab", "missing or not an object".into()))?;
        let mut vocab = HashMap::with_capacity(vocab_json.len());
        for (token, id) in vocab_json {
            let id = id
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| malformed("model.vocab", format!("bad id for token {token:?}")))?;
            vocab.insert(token.clone(), id);
        }
        let merges_json = model
            .get("merges")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("model.merges", "missing or not an array".into()))?;

        let mut merges = HashMap::with_capacity(merges_json.len());
        for (rank, entry) in merges_json.iter().enumerate() {
            let (left, right) = match entry {
                Value::String(s) => s.split_once(' ').map(|(a, b)| (a.to_string(), b.to_string())),
                Value::Array(pair) if pair.len() == 2 => match (&pair[0], &pair[1]) {
                    (Value::String(a), Value::String(b)) => Some((a.clone(), b.clone())),
                    _ => None,
                },
                _ => None,
            }
            .ok_or_else(|| malformed("model.merges", format!("entry {rank} is not a pair")))?;
            let lookup = |tok: &str| {
                vocab.get(tok).copied().ok_or_else(|| {
                    malformed("model.merges", format!("entry {rank}: {tok:?} not in vocab"))
                })
            };
            let l = lookup(&left)?;
            let r = lookup(&right)?;
            let merged = lookup(&format!("{left}{right}"))?;
            merges.entry((l, r)).or_insert((rank as u32, merged));
        }

        let unk = model
            .get("unk_token")
            .and_then(Value::as_str)
            .and_then(|t| vocab.get(t).copied())
            .unwrap_or(MISSING_ID);
        let table = byte_to_char();
        let mut byte_ids = [unk; 256];
        for (b, c) in table.iter().enumerate() {
            if let Some(&id) = vocab.get(&c.to_string()) {
                byte_ids[b] = id;
            }
        }

        let split_words = root
            .get("pre_tokenizer")
            .map(pre_tokenizer_splits)
            .unwrap_or(false);

        Ok(BpeTokenizer {
            name: name.to_string(),
            vocab,
            merges,
            byte_ids,
            split_words,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    /// Whether input is split into GPT-2 style words before merging.
    pub fn splits_words(&self) -> bool {
        self.split_words
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        #[derive(Clone, Copy)]
        struct Sym {
            id: u32,
            prev: usize,
            next: usize,
            alive: bool,
        }
        const NONE: usize = usize::MAX;
        let bytes = word.as_bytes();
        let mut syms: Vec<Sym> = bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| Sym {
                id: self.byte_ids[b as usize],
                prev: if i == 0 { NONE } else { i - 1 },
                next: if i + 1 == bytes.len() { NONE } else { i + 1 },
                alive: true,
            })
            .collect();

        // (rank, left position); smaller positions win ties.
        let mut heap: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
        for i in 0..syms.len().saturating_sub(1) {
            if let Some(&(rank, _)) = self.merges.get(&(syms[i].id, syms[i + 1].id)) {
                heap.push(Reverse((rank, i)));
            }
        }
        while let Some(Reverse((rank, pos))) = heap.pop() {
            let left = syms[pos];
            if !left.alive || left.next == NONE {
                continue;
            }
            let right_pos = left.next;
            let Some(&(cur_rank, merged)) = self.merges.get(&(left.id, syms[right_pos].id)) else {
                continue;
            };
            if cur_rank != rank {
                continue;
            }
            let right_next = syms[right_pos].next;
            syms[pos].id = merged;
            syms[pos].next = right_next;
            syms[right_pos].alive = false;
            if right_next != NONE {
                syms[right_next].prev = pos;
                if let Some(&(r, _)) = self.merges.get(&(merged, syms[right_next].id)) {
                    heap.push(Reverse((r, pos)));
                }
            }
            if left.prev != NONE {
                if let Some(&(r, _)) = self.merges.get(&(syms[left.prev].id, merged)) {
                    heap.push(Reverse((r, left.prev)));
                }
            }
        }
        let mut i = if syms.is_empty() { NONE } else { 0 };
        while i != NONE {
            out.push(syms[i].id);
            i = syms[i].next;
        }
    }
}

fn pre_tokenizer_splits(v: &Value) -> bool {
    match v.get("type").and_then(Value::as_str) {
        Some("ByteLevel") => v.get("use_regex").and_then(Value::as_bool).unwrap_or(true),
        Some("Split") => true,
        Some("Sequence") => v
            .get("pretokenizers")
            .and_then(Value::as_array)
            .is_some_and(|items| items.iter().any(pre_tokenizer_splits)),
        _ => false,
    }
}

impl Tokenizer for BpeTokenizer {
    fn name(&self) -> &str {
        &self.name
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len() / 3 + 1);
        if self.split_words {
            for word in split_words(text) {
                self.encode_word(word, &mut out);
            }
        } else if !text.is_empty() {
            self.encode_word(text, &mut out);
        }
        out
    }
}

/// GPT-2 pre-tokenization: contractions, optionally space-prefixed runs of letters,
/// digits or other symbols, and whitespace runs (a run followed by a word leaves its
/// final space to that word).
pub fn split_words(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_at = |i: usize| if i < n { chars[i].0 } else { text.len() };
    let class = |c: char| {
        if c.is_alphabetic() {
            1
        } else if c.is_numeric() {
            2
        } else if c.is_whitespace() {
            0
        } else {
            3
        }
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c == '\'' {
            let rest = &text[chars[i].0 + 1..];
            let len = ["re", "ve", "ll", "s", "t", "m", "d"]
                .iter()
                .find(|s| rest.starts_with(*s))
                .map(|s| s.len());
            if let Some(len) = len {
                let start = chars[i].0;
                out.push(&text[start..start + 1 + len]);
                i += 1 + len;
                continue;
            }
        }
        let (start, first) = if c == ' ' && i + 1 < n && class(chars[i + 1].1) != 0 {
            (i, i + 1)
        } else {
            (i, i)
        };
        let cls = class(chars[first].1);
        if cls != 0 {
            let mut j = first + 1;
            while j < n && class(chars[j].1) == cls {
                j += 1;
            }
            out.push(&text[byte_at(start)..byte_at(j)]);
            i = j;
            continue;
        }
        let mut j = i;
        while j < n && class(chars[j].1) == 0 {
            j += 1;
        }
        if j == n || j - i == 1 {
            out.push(&text[byte_at(i)..byte_at(j)]);
            i = j;
        } else {
            out.push(&text[byte_at(i)..byte_at(j - 1)]);
            i = j - 1;
        }
    }
    out
}
