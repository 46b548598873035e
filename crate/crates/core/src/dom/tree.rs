use std::fmt::Write as _;

/// Elements that never have children or an end tag.
pub const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link", "meta", "param",
    "source", "track", "wbr",
];

/// Elements whose content is raw text and is emitted unescaped.
pub const RAW_TEXT_ELEMENTS: &[&str] = &[
    "script", "style", "xmp", "iframe", "noembed", "noframes", "noscript",
];

/// Elements whose content is text with character references decoded.
pub const RCDATA_ELEMENTS: &[&str] = &["textarea", "title"];

pub fn is_void(tag: &str) -> bool {
    VOID_ELEMENTS.contains(&tag)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
    Comment(String),
}

impl Node {
    pub fn as_element(&self) -> Option<&Element> {
        match self {
            Node::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_element_mut(&mut self) -> Option<&mut Element> {
        match self {
            Node::Element(e) => Some(e),
            _ => None,
        }
    }
}

/// An HTML element. Attribute names are unique and kept in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
    pub node_id: Option<u32>,
}

impl Element {
    pub fn new(tag: impl Into<String>) -> Self {
        Element {
            tag: tag.into(),
            attrs: Vec::new(),
            children: Vec::new(),
            node_id: None,
        }
    }

    pub fn with_attr(mut self, name: &str, value: &str) -> Self {
        self.set_attr(name, value);
        self
    }

    pub fn with_child(mut self, child: Node) -> Self {
        self.children.push(child);
        self
    }

    pub fn with_text(self, text: &str) -> Self {
        self.with_child(Node::Text(text.to_string()))
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Sets an attribute, replacing the value in place if the name already exists.
    pub fn set_attr(&mut self, name: &str, value: &str) {
        match self.attrs.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.attrs.push((name.to_string(), value.to_string())),
        }
    }

    pub fn remove_attr(&mut self, name: &str) -> Option<String> {
        let pos = self.attrs.iter().position(|(n, _)| n == name)?;
        Some(self.attrs.remove(pos).1)
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class")
            .map(|v| v.split_ascii_whitespace().any(|c| c == class))
            .unwrap_or(false)
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(Node::as_element)
    }

    /// Concatenated descendant text with whitespace runs collapsed and trimmed.
    pub fn text_content(&self) -> String {
        let mut raw = String::new();
        collect_text(&self.children, &mut raw);
        collapse_whitespace(&raw).trim().to_string()
    }
}

fn collect_text(nodes: &[Node], out: &mut String) {
    for node in nodes {
        match node {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => {
                // Keep words in adjacent elements apart.
                out.push(' ');
                collect_text(&e.children, out);
                out.push(' ');
            }
            Node::Comment(_) => {}
        }
    }
}

/// HTML whitespace (ASCII only; U+00A0 is content).
pub fn is_html_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0c')
}

/// Replaces every run of HTML whitespace with a single space.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_space = false;
    for c in s.chars() {
        if is_html_space(c) {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

/// A parsed document: an ordered list of top-level nodes under an implicit root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomTree {
    pub children: Vec<Node>,
}

/// A child-index path from the document root to an element.
pub type NodePath = Vec<usize>;

impl DomTree {
    pub fn new(children: Vec<Node>) -> Self {
        DomTree { children }
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn get(&self, path: &[usize]) -> Option<&Element> {
        let (first, rest) = path.split_first()?;
        let mut el = self.children.get(*first)?.as_element()?;
        for &i in rest {
            el = el.children.get(i)?.as_element()?;
        }
        Some(el)
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut Element> {
        let (first, rest) = path.split_first()?;
        let mut el = self.children.get_mut(*first)?.as_element_mut()?;
        for &i in rest {
            el = el.children.get_mut(i)?.as_element_mut()?;
        }
        Some(el)
    }

    /// All elements in document (pre-)order with their paths.
    pub fn elements(&self) -> Vec<(NodePath, &Element)> {
        fn walk<'a>(nodes: &'a [Node], path: &mut NodePath, out: &mut Vec<(NodePath, &'a Element)>) {
            for (i, node) in nodes.iter().enumerate() {
                if let Node::Element(e) = node {
                    path.push(i);
                    out.push((path.clone(), e));
                    walk(&e.children, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.children, &mut Vec::new(), &mut out);
        out
    }

    pub fn element_count(&self) -> usize {
        fn count(nodes: &[Node]) -> usize {
            nodes
                .iter()
                .filter_map(Node::as_element)
                .map(|e| 1 + count(&e.children))
                .sum()
        }
        count(&self.children)
    }

    /// Calls `f` on every element, parents before children.
    pub fn for_each_element_mut(&mut self, f: &mut impl FnMut(&mut Element)) {
        fn walk(nodes: &mut [Node], f: &mut impl FnMut(&mut Element)) {
            for node in nodes {
                if let Node::Element(e) = node {
                    f(e);
                    walk(&mut e.children, f);
                }
            }
        }
        walk(&mut self.children, f);
    }

    /// Canonical HTML for the tree. `node` attributes come only from `attrs`.
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        for node in &self.children {
            write_node(node, &mut out, false);
        }
        out
    }
}

pub(crate) fn write_node(node: &Node, out: &mut String, with_ids: bool) {
    match node {
        Node::Text(t) => escape_text(t, out),
        Node::Comment(c) => {
            out.push_str("<!--");
            out.push_str(c);
            out.push_str("-->");
        }
        Node::Element(e) => {
            write_open_tag(e, out, with_ids);
            if is_void(&e.tag) {
                return;
            }
            let raw = RAW_TEXT_ELEMENTS.contains(&e.tag.as_str());
            for child in &e.children {
                match child {
                    Node::Text(t) if raw => out.push_str(t),
                    other => write_node(other, out, with_ids),
                }
            }
            out.push_str("</");
            out.push_str(&e.tag);
            out.push('>');
        }
    }
}

/// Writes `<tag a="v" ...>`. With `with_ids`, the element's node id is emitted as a
/// `node` attribute placed before the first attribute whose name sorts after "node".
pub(crate) fn write_open_tag(e: &Element, out: &mut String, with_ids: bool) {
    out.push('<');
    out.push_str(&e.tag);
    let id = if with_ids { e.node_id } else { None };
    let mut id_written = id.is_none();
    for (name, value) in &e.attrs {
        if id.is_some() && name == "node" {
            continue;
        }
        if !id_written && name.as_str() > "node" {
            let _ = write!(out, " node=\"{}\"", id.unwrap_or_default());
            id_written = true;
        }
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        escape_attr(value, out);
        out.push('"');
    }
    if !id_written {
        let _ = write!(out, " node=\"{}\"", id.unwrap_or_default());
    }
    out.push('>');
}

pub(crate) fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}

pub(crate) fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            c => out.push(c),
        }
    }
}
