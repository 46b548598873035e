use std::collections::{BTreeMap, BTreeSet};

use super::tree::{collapse_whitespace, is_html_space, DomTree, Element, Node};
use crate::error::ConfigError;

/// The whitelist shipped with the crate.
pub const DEFAULT_WHITELIST: &str = include_str!("../../data/whitelist.txt");

/// Pruning settings: which tags and attributes survive, which subtrees are dropped,
/// and the character-to-token ratio rule applied to long attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    pub tag_whitelist: BTreeSet<String>,
    /// Attributes kept on every whitelisted tag.
    pub global_attrs: BTreeSet<String>,
    /// Attributes kept on one tag only.
    pub tag_attrs: BTreeMap<String, BTreeSet<String>>,
    pub drop_tags: BTreeSet<String>,
    /// Attribute names in serialization order; unlisted names sort last.
    pub attr_order: Vec<String>,
    pub ratio_threshold: f64,
    pub ratio_min_len: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig::from_whitelist(DEFAULT_WHITELIST).expect("bundled whitelist parses")
    }
}

impl PruneConfig {
    pub const DEFAULT_RATIO_THRESHOLD: f64 = 2.0;
    pub const DEFAULT_RATIO_MIN_LEN: usize = 32;

    /// Parses the line-oriented whitelist format (`tag`, `tag.attr`, `*.attr`,
    /// `!tag`, `#` comments).
    pub fn from_whitelist(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PruneConfig {
            tag_whitelist: BTreeSet::new(),
            global_attrs: BTreeSet::new(),
            tag_attrs: BTreeMap::new(),
            drop_tags: BTreeSet::new(),
            attr_order: Vec::new(),
            ratio_threshold: Self::DEFAULT_RATIO_THRESHOLD,
            ratio_min_len: Self::DEFAULT_RATIO_MIN_LEN,
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| ConfigError::Whitelist {
                line: lineno + 1,
                message: format!("{msg}: {line:?}"),
            };
            if line.chars().any(is_html_space) {
                return Err(bad("entries cannot contain whitespace"));
            }
            let line = line.to_ascii_lowercase();
            if let Some(tag) = line.strip_prefix('!') {
                if tag.is_empty() || tag.contains('.') {
                    return Err(bad("expected a tag name after '!'"));
                }
                cfg.drop_tags.insert(tag.to_string());
            } else if let Some((tag, attr)) = line.split_once('.') {
                if tag.is_empty() || attr.is_empty() {
                    return Err(bad("expected tag.attr"));
                }
                if tag == "*" {
                    cfg.global_attrs.insert(attr.to_string());
                } else {
                    cfg.tag_attrs
                        .entry(tag.to_string())
                        .or_default()
                        .insert(attr.to_string());
                }
                if !cfg.attr_order.iter().any(|a| a == attr) {
                    cfg.attr_order.push(attr.to_string());
                }
            } else {
                cfg.tag_whitelist.insert(line);
            }
        }
        if let Some(both) = cfg.tag_whitelist.intersection(&cfg.drop_tags).next() {
            return Err(ConfigError::Whitelist {
                line: 0,
                message: format!("tag {both:?} is both kept and dropped"),
            });
        }
        Ok(cfg)
    }

    pub fn with_ratio(mut self, threshold: f64, min_len: usize) -> Result<Self, ConfigError> {
        self.ratio_threshold = threshold;
        self.ratio_min_len = min_len;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ratio_threshold >= 1.0) || !self.ratio_threshold.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "ratio threshold must be a finite value >= 1.0, got {}",
                self.ratio_threshold
            )));
        }
        Ok(())
    }

    pub fn keeps_attr(&self, tag: &str, attr: &str) -> bool {
        self.global_attrs.contains(attr)
            || self.tag_attrs.get(tag).is_some_and(|s| s.contains(attr))
    }

    fn attr_rank(&self, attr: &str) -> usize {
        self.attr_order
            .iter()
            .position(|a| a == attr)
            .unwrap_or(self.attr_order.len())
    }
}

/// Removes dropped subtrees, comments, unlisted tags (unwrapped) and attributes,
/// and collapses whitespace. Idempotent.
pub fn prune(tree: &DomTree, config: &PruneConfig) -> DomTree {
    DomTree::new(prune_nodes(&tree.children, config))
}

fn prune_nodes(nodes: &[Node], config: &PruneConfig) -> Vec<Node> {
    let mut out: Vec<Node> = Vec::with_capacity(nodes.len());
    for node in nodes {
        match node {
            Node::Comment(_) => {}
            Node::Text(t) => push_text(&mut out, t),
            Node::Element(e) => {
                if config.drop_tags.contains(&e.tag) {
                    continue;
                }
                let children = prune_nodes(&e.children, config);
                if config.tag_whitelist.contains(&e.tag) {
                    out.push(Node::Element(Element {
                        tag: e.tag.clone(),
                        attrs: prune_attrs(e, config),
                        children,
                        node_id: None,
                    }));
                } else {
                    for child in children {
                        match child {
                            Node::Text(t) => push_text(&mut out, &t),
                            other => out.push(other),
                        }
                    }
                }
            }
        }
    }
    for node in &mut out {
        if let Node::Text(t) = node {
            *t = collapse_whitespace(t);
        }
    }
    out.retain(|n| !matches!(n, Node::Text(t) if t.chars().all(is_html_space)));
    out
}

fn push_text(out: &mut Vec<Node>, text: &str) {
    if let Some(Node::Text(prev)) = out.last_mut() {
        prev.push_str(text);
    } else {
        out.push(Node::Text(text.to_string()));
    }
}

fn prune_attrs(e: &Element, config: &PruneConfig) -> Vec<(String, String)> {
    let mut attrs: Vec<(String, String)> = e
        .attrs
        .iter()
        .filter(|(name, _)| config.keeps_attr(&e.tag, name))
        .map(|(name, value)| (name.clone(), collapse_whitespace(value).trim().to_string()))
        .filter(|(_, value)| !value.is_empty())
        .collect();
    attrs.sort_by_key(|(name, _)| config.attr_rank(name));
    attrs
}
