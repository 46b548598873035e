//! HTML parsing, pruning, node-id assignment and serialization.

mod parse;
mod prune;
mod pruned;
mod tree;

pub use parse::{decode_entities, parse_html};
pub use prune::{prune, PruneConfig, DEFAULT_WHITELIST};
pub use pruned::{assign_node_ids, serialize, PrunedDom};
pub use tree::{
    collapse_whitespace, is_html_space, is_void, DomTree, Element, Node, NodePath,
    RAW_TEXT_ELEMENTS, RCDATA_ELEMENTS, VOID_ELEMENTS,
};
