use std::collections::BTreeSet;

use super::tree::{write_node, write_open_tag, DomTree, Element, Node, NodePath};

/// A pruned tree whose elements carry dense node ids `0..n` in post-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedDom {
    root: DomTree,
    /// `index[id]` is the path of the element with that id.
    index: Vec<NodePath>,
}

/// Assigns ids bottom-up: children before parents, left to right, starting at 0.
/// Any `node` attribute carried over from earlier serialization is replaced.
pub fn assign_node_ids(tree: &DomTree) -> PrunedDom {
    fn walk(nodes: &mut [Node], path: &mut NodePath, index: &mut Vec<NodePath>) {
        for (i, node) in nodes.iter_mut().enumerate() {
            if let Node::Element(e) = node {
                path.push(i);
                walk(&mut e.children, path, index);
                e.remove_attr("node");
                e.node_id = Some(index.len() as u32);
                index.push(path.clone());
                path.pop();
            }
        }
    }
    let mut root = tree.clone();
    let mut index = Vec::new();
    walk(&mut root.children, &mut Vec::new(), &mut index);
    PrunedDom { root, index }
}

impl PrunedDom {
    pub fn tree(&self) -> &DomTree {
        &self.root
    }

    pub fn into_tree(self) -> DomTree {
        self.root
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.index.len()
    }

    pub fn path(&self, id: u32) -> Option<&[usize]> {
        self.index.get(id as usize).map(Vec::as_slice)
    }

    pub fn element(&self, id: u32) -> Option<&Element> {
        self.root.get(self.path(id)?)
    }

    /// The id of the element at `path`, if any.
    pub fn id_at(&self, path: &[usize]) -> Option<u32> {
        self.root.get(path)?.node_id
    }

    pub fn parent(&self, id: u32) -> Option<u32> {
        let path = self.path(id)?;
        let (_, parent) = path.split_last()?;
        self.id_at(parent)
    }

    pub fn children(&self, id: u32) -> Vec<u32> {
        self.element(id)
            .map(|e| e.child_elements().filter_map(|c| c.node_id).collect())
            .unwrap_or_default()
    }

    /// True when `id` is `ancestor` or lies inside its subtree.
    pub fn is_descendant_or_self(&self, id: u32, ancestor: u32) -> bool {
        match (self.path(id), self.path(ancestor)) {
            (Some(p), Some(a)) => p.starts_with(a),
            _ => false,
        }
    }

    /// Descendants of `id` at most `depth` levels below it, plus `id` itself.
    pub fn descendants_within(&self, id: u32, depth: usize) -> BTreeSet<u32> {
        fn walk(e: &Element, depth: usize, out: &mut BTreeSet<u32>) {
            if let Some(id) = e.node_id {
                out.insert(id);
            }
            if depth == 0 {
                return;
            }
            for c in e.child_elements() {
                walk(c, depth - 1, out);
            }
        }
        let mut out = BTreeSet::new();
        if let Some(e) = self.element(id) {
            walk(e, depth, &mut out);
        }
        out
    }

    /// Ids of elements whose attribute `name` equals `value`, in id order.
    pub fn find_by_attr(&self, name: &str, value: &str) -> Vec<u32> {
        (0..self.len() as u32)
            .filter(|&id| self.element(id).and_then(|e| e.attr(name)) == Some(value))
            .collect()
    }

    /// The element's opening tag as it appears in [`serialize`], e.g.
    /// `<svg class="open-hamburger-icon" node="832" role="img">`.
    pub fn opening_tag(&self, id: u32) -> Option<String> {
        let e = self.element(id)?;
        let mut out = String::new();
        write_open_tag(e, &mut out, true);
        Some(out)
    }

    pub fn serialize(&self) -> String {
        serialize(self)
    }
}

/// Compact HTML in which every element carries `node="ID"`.
pub fn serialize(pd: &PrunedDom) -> String {
    let mut out = String::new();
    for node in &pd.root.children {
        write_node(node, &mut out, true);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    #[test]
    fn post_order_ids() {
        let pd = assign_node_ids(&parse_html("<html><body><div></div><p></p></body></html>"));
        let tag = |id| pd.element(id).unwrap().tag.clone();
        assert_eq!(
            (0..4).map(tag).collect::<Vec<_>>(),
            vec!["div", "p", "body", "html"]
        );
    }

    #[test]
    fn single_and_empty_documents() {
        let pd = assign_node_ids(&parse_html("<span>x</span>"));
        assert_eq!(pd.len(), 1);
        assert_eq!(pd.element(0).unwrap().tag, "span");
        assert!(assign_node_ids(&parse_html("")).is_empty());
    }

    #[test]
    fn serialize_div() {
        let pd = assign_node_ids(&parse_html("<div></div>"));
        assert_eq!(serialize(&pd), r#"<div node="0"></div>"#);
    }

    #[test]
    fn reassignment_replaces_stale_node_attrs() {
        let pd = assign_node_ids(&parse_html(r#"<div node="7"><a node="3" href="x"></a></div>"#));
        assert_eq!(serialize(&pd), r#"<div node="1"><a href="x" node="0"></a></div>"#);
    }

    #[test]
    fn structure_queries() {
        let pd = assign_node_ids(&parse_html("<div><ul><li><a>x</a></li><li></li></ul></div>"));
        // a=0 li=1 li=2 ul=3 div=4
        assert_eq!(pd.parent(0), Some(1));
        assert_eq!(pd.children(3), vec![1, 2]);
        assert!(pd.is_descendant_or_self(0, 4));
        assert!(pd.is_descendant_or_self(3, 3));
        assert!(!pd.is_descendant_or_self(4, 0));
        assert_eq!(pd.descendants_within(4, 2), BTreeSet::from([4, 3, 1, 2]));
    }
}
