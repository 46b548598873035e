//! Token-budgeted sequential chunking of a serialized DOM.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("chunk budget must be at least 1 token")]
    ZeroBudget,
    #[error("{what} at byte {offset} needs {tokens} tokens, over the budget of {budget}")]
    Oversized {
        /// `node N` for an element's opening tag, otherwise a short description.
        what: String,
        node: Option<u32>,
        offset: usize,
        tokens: usize,
        budget: usize,
    },
    #[error("node {0} is in no chunk")]
    NotFound(u32),
    #[error("no chunks to choose from")]
    NoChunks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    /// Ids of elements whose opening tag lies in this chunk.
    pub node_ids: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegmentKind {
    OpenTag(Option<u32>),
    Other,
    Text,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: usize,
    end: usize,
    kind: SegmentKind,
}

/// Splits `html` into tags (quote-aware) and the text runs between them.
fn segments(html: &str) -> Vec<Segment> {
    let bytes = html.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let opens_tag = bytes[i] == b'<'
            && bytes
                .get(i + 1)
                .is_some_and(|b| b.is_ascii_alphabetic() || matches!(b, b'/' | b'!' | b'?'));
        if opens_tag {
            let end = tag_end(bytes, i);
            let tag = &html[i..end];
            let kind = if bytes[i + 1].is_ascii_alphabetic() {
                SegmentKind::OpenTag(node_attr(tag))
            } else {
                SegmentKind::Other
            };
            out.push(Segment { start: i, end, kind });
            i = end;
        } else {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != b'<' {
                j += 1;
            }
            // A lone `<` that does not open a tag stays part of the text run.
            match out.last_mut() {
                Some(last) if last.kind == SegmentKind::Text && last.end == i => last.end = j,
                _ => out.push(Segment { start: i, end: j, kind: SegmentKind::Text }),
            }
            i = j;
        }
    }
    out
}

fn tag_end(bytes: &[u8], start: usize) -> usize {
    if bytes[start..].starts_with(b"<!--") {
        return find(bytes, start + 4, b"-->").map_or(bytes.len(), |p| p + 3);
    }
    let mut quote = None;
    for (k, &b) in bytes.iter().enumerate().skip(start + 1) {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'>' => return k + 1,
            None => {}
        }
    }
    bytes.len()
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    hay.get(from..)?
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

/// Value of a `node` attribute in an opening tag, if it is a number.
fn node_attr(tag: &str) -> Option<u32> {
    let bytes = tag.as_bytes();
    let mut i = 1;
    while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>' && bytes[i] != b'/' {
        i += 1;
    }
    loop {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'/') {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] == b'>' {
            return None;
        }
        let name_start = i;
        while i < bytes.len() && !matches!(bytes[i], b'=' | b'>' | b'/') && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let name = &tag[name_start..i];
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = None;
        if i < bytes.len() && bytes[i] == b'=' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let (vs, ve, next) = match bytes.get(i) {
                Some(&q @ (b'"' | b'\'')) => {
                    let close = find(bytes, i + 1, &[q]).unwrap_or(bytes.len());
                    (i + 1, close, close + 1)
                }
                _ => {
                    let mut j = i;
                    while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>' {
                        j += 1;
                    }
                    (i, j, j)
                }
            };
            value = Some(&tag[vs..ve.min(tag.len())]);
            i = next;
        }
        if name.eq_ignore_ascii_case("node") {
            return value.and_then(|v| v.parse().ok());
        }
    }
}

/// Greedily packs tag and text segments into chunks of at most `budget` tokens.
///
/// Token counts are exact for the concatenated chunk text, so tokenizers that
/// merge across segment boundaries are handled. An input of only markup that
/// fits yields one chunk; empty input yields one empty chunk.
pub fn chunk_dom(html: &str, tok: &dyn Tokenizer, budget: usize) -> Result<Vec<Chunk>, ChunkError> {
    if budget == 0 {
        return Err(ChunkError::ZeroBudget);
    }
    let segs = segments(html);
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let first = segs[i];
        let alone = tok.count_tokens(&html[first.start..first.end]);
        if alone > budget {
            let (what, node) = match first.kind {
                SegmentKind::OpenTag(Some(id)) => (format!("node {id}"), Some(id)),
                SegmentKind::OpenTag(None) | SegmentKind::Other => ("tag".to_string(), None),
                SegmentKind::Text => ("text run".to_string(), None),
            };
            return Err(ChunkError::Oversized {
                what,
                node,
                offset: first.start,
                tokens: alone,
                budget,
            });
        }
        // Extend while the running estimate fits, confirming with an exact count
        // whenever the estimate says it would not.
        let mut j = i + 1;
        let mut estimate = alone;
        let mut unchecked = false;
        while j < segs.len() {
            let seg_tokens = tok.count_tokens(&html[segs[j].start..segs[j].end]);
            if estimate + seg_tokens <= budget {
                estimate += seg_tokens;
                unchecked = true;
                j += 1;
                continue;
            }
            let with = tok.count_tokens(&html[first.start..segs[j].end]);
            if with > budget {
                break;
            }
            estimate = with;
            unchecked = false;
            j += 1;
        }
        let mut end = j;
        let mut count = if unchecked {
            tok.count_tokens(&html[first.start..segs[end - 1].end])
        } else {
            estimate
        };
        while count > budget && end > i + 1 {
            end -= 1;
            count = tok.count_tokens(&html[first.start..segs[end - 1].end]);
        }
        let node_ids = segs[i..end]
            .iter()
            .filter_map(|s| match s.kind {
                SegmentKind::OpenTag(id) => id,
                _ => None,
            })
            .collect();
        chunks.push(Chunk {
            index: chunks.len(),
            text: html[first.start..segs[end - 1].end].to_string(),
            token_count: count,
            node_ids,
        });
        i = end;
    }
    if chunks.is_empty() {
        chunks.push(Chunk {
            index: 0,
            text: String::new(),
            token_count: 0,
            node_ids: BTreeSet::new(),
        });
    }
    Ok(chunks)
}

/// The earliest chunk containing `target`.
pub fn select_training_chunk(chunks: &[Chunk], target: u32) -> Result<&Chunk, ChunkError> {
    if chunks.is_empty() {
        return Err(ChunkError::NoChunks);
    }
    chunks
        .iter()
        .find(|c| c.node_ids.contains(&target))
        .ok_or(ChunkError::NotFound(target))
}

/// The last chunk; the target location is unknown at inference time.
pub fn select_inference_chunk(chunks: &[Chunk]) -> Result<&Chunk, ChunkError> {
    chunks.last().ok_or(ChunkError::NoChunks)
}

/// Whether the inference chunk contains `target`.
pub fn is_solvable(chunks: &[Chunk], target: u32) -> bool {
    select_inference_chunk(chunks).is_ok_and(|c| c.node_ids.contains(&target))
}
