//! Slow, obviously-correct reference implementations used by the tests.

use std::collections::HashMap;

use domstep::dom::{DomTree, Element, NodePath};
use domstep::selector::{Combinator, Selector};
use domstep::tokenizer::{byte_to_char, Tokenizer};

/// Textbook BPE: repeatedly find the lowest-ranked adjacent pair and merge every
/// non-overlapping occurrence left to right.
pub struct NaiveBpe {
    vocab: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
}

impl NaiveBpe {
    pub fn from_json(text: &str) -> Self {
        let root: serde_json::Value = serde_json::from_str(text).unwrap();
        let vocab = root["model"]["vocab"]
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_u64().unwrap() as u32))
            .collect();
        let ranks = root["model"]["merges"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let s = m.as_str().unwrap();
                let (a, b) = s.split_once(' ').unwrap();
                ((a.to_string(), b.to_string()), i)
            })
            .collect();
        NaiveBpe { vocab, ranks }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let table = byte_to_char();
        let mut parts: Vec<String> = text.bytes().map(|b| table[b as usize].to_string()).collect();
        loop {
            let best = parts
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((a, b)) = best else { break };
            let mut next = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && parts[i] == a && parts[i + 1] == b {
                    next.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    next.push(parts[i].clone());
                    i += 1;
                }
            }
            parts = next;
        }
        parts.iter().map(|p| self.vocab[p]).collect()
    }
}

/// Every `(element pre-order index, attr name)` that the ratio rule should remove.
pub fn ratio_pruned_set(
    tree: &DomTree,
    tok: &dyn Tokenizer,
    threshold: f64,
    min_len: usize,
) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (i, (_, e)) in tree.elements().into_iter().enumerate() {
        for (name, value) in &e.attrs {
            let chars = value.chars().count();
            if name == "node" || chars <= min_len {
                continue;
            }
            let tokens = tok.encode(value).len();
            if (chars as f64) < threshold * tokens as f64 {
                out.push((i, name.clone()));
            }
        }
    }
    out
}

/// The `(element index, attr name)` pairs present in `before` but missing in `after`.
pub fn removed_attrs(before: &DomTree, after: &DomTree) -> Vec<(usize, String)> {
    let a = before.elements();
    let b = after.elements();
    assert_eq!(a.len(), b.len(), "element structure changed");
    let mut out = Vec::new();
    for (i, ((pa, ea), (pb, eb))) in a.iter().zip(&b).enumerate() {
        assert_eq!(pa, pb);
        assert_eq!(ea.tag, eb.tag);
        for (name, _) in &ea.attrs {
            if eb.attr(name).is_none() {
                out.push((i, name.clone()));
            }
        }
    }
    out
}

/// Brute-force selector matching: for every element, try every way of assigning
/// the earlier compounds to ancestors, right to left.
pub fn brute_force_resolve(sel: &Selector, dom: &DomTree) -> Vec<NodePath> {
    dom.elements()
        .into_iter()
        .filter(|(path, _)| {
            let chain: Vec<&Element> = (1..=path.len()).map(|k| dom.get(&path[..k]).unwrap()).collect();
            matches_at(sel, sel.steps.len() - 1, &chain)
        })
        .map(|(p, _)| p)
        .collect()
}

/// Whether `steps[..=k]` matches with `steps[k]` on the last element of `chain`.
fn matches_at(sel: &Selector, k: usize, chain: &[&Element]) -> bool {
    let (last, above) = chain.split_last().unwrap();
    if !sel.steps[k].matches(last) {
        return false;
    }
    if k == 0 {
        return true;
    }
    match sel.combinators[k - 1] {
        Combinator::Child => !above.is_empty() && matches_at(sel, k - 1, above),
        Combinator::Descendant => (1..=above.len()).any(|j| matches_at(sel, k - 1, &above[..j])),
    }
}
