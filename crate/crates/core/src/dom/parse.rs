//! A small error-recovering HTML parser.
//!
//! It covers the parts of HTML5 tree construction that matter for recorded page
//! snapshots: void elements, raw-text and RCDATA elements, comments, character
//! references, and implied end tags for `p`, `li`, `dd`/`dt`, `option`, table rows
//! and cells, and headings. It does not synthesize `html`/`head`/`body` or `tbody`,
//! and it does not run the adoption agency algorithm. Every input produces a tree.

use super::tree::{is_html_space, DomTree, Element, Node, RAW_TEXT_ELEMENTS, RCDATA_ELEMENTS};
use super::tree::is_void;

/// Elements that stop a scope search.
const SCOPE_BOUNDARY: &[&str] = &[
    "applet", "caption", "html", "table", "td", "th", "marquee", "object", "template",
];

/// Start tags that implicitly close an open `p`.
const CLOSES_P: &[&str] = &[
    "address", "article", "aside", "blockquote", "center", "details", "dialog", "dir", "div",
    "dl", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5",
    "h6", "header", "hgroup", "hr", "li", "dd", "dt", "listing", "main", "menu", "nav", "ol",
    "p", "pre", "search", "section", "summary", "table", "ul", "xmp",
];

const HEADINGS: &[&str] = &["h1", "h2", "h3", "h4", "h5", "h6"];

/// Elements closed by a matching end tag only when in scope (never skipped over
/// like formatting elements).
const SPECIAL: &[&str] = &[
    "address", "applet", "area", "article", "aside", "base", "blockquote", "body", "br",
    "button", "caption", "center", "col", "colgroup", "dd", "details", "dir", "div", "dl", "dt",
    "embed", "fieldset", "figcaption", "figure", "footer", "form", "frame", "frameset", "h1",
    "h2", "h3", "h4", "h5", "h6", "head", "header", "hgroup", "hr", "html", "iframe", "img",
    "input", "li", "link", "listing", "main", "marquee", "menu", "meta", "nav", "noembed",
    "noframes", "noscript", "object", "ol", "p", "param", "plaintext", "pre", "script",
    "search", "section", "select", "source", "style", "summary", "table", "tbody", "td",
    "template", "textarea", "tfoot", "th", "thead", "title", "tr", "track", "ul", "wbr", "xmp",
];

/// Elements with implied end tags.
const IMPLIED_END: &[&str] = &[
    "dd", "dt", "li", "optgroup", "option", "p", "rb", "rp", "rt", "rtc",
];

enum Token {
    Text(String),
    Comment(String),
    Start {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    End(String),
}

/// Parses HTML into a [`DomTree`]. Total and deterministic.
pub fn parse_html(text: &str) -> DomTree {
    let mut builder = TreeBuilder::default();
    let mut lexer = Lexer { src: text, pos: 0 };
    while let Some(tok) = lexer.next_token() {
        let raw = match &tok {
            Token::Start {
                name, self_closing, ..
            } if !*self_closing
                && (RAW_TEXT_ELEMENTS.contains(&name.as_str())
                    || RCDATA_ELEMENTS.contains(&name.as_str())) =>
            {
                Some(name.clone())
            }
            _ => None,
        };
        builder.process(tok);
        if let Some(name) = raw {
            let body = lexer.raw_text_until_end(&name);
            if !body.is_empty() {
                let text = if RCDATA_ELEMENTS.contains(&name.as_str()) {
                    decode_entities(&body)
                } else {
                    body
                };
                builder.process(Token::Text(text));
            }
            builder.process(Token::End(name));
        }
    }
    builder.finish()
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn next_token(&mut self) -> Option<Token> {
        let rest = self.rest();
        if rest.is_empty() {
            return None;
        }
        if let Some(tag) = rest.strip_prefix('<') {
            if let Some(body) = tag.strip_prefix("!--") {
                let (comment, used) = match body.find("-->") {
                    Some(end) => (&body[..end], 4 + end + 3),
                    None => (body, rest.len()),
                };
                self.pos += used;
                return Some(Token::Comment(comment.to_string()));
            }
            if tag.starts_with('!') || tag.starts_with('?') {
                // Doctype, CDATA and processing instructions are dropped.
                let used = rest.find('>').map(|i| i + 1).unwrap_or(rest.len());
                self.pos += used;
                return self.next_token();
            }
            if let Some(end) = tag.strip_prefix('/') {
                if end.starts_with(|c: char| c.is_ascii_alphabetic()) {
                    let name_len = end
                        .find(|c: char| is_html_space(c) || c == '/' || c == '>')
                        .unwrap_or(end.len());
                    let name = end[..name_len].to_ascii_lowercase();
                    let used = rest.find('>').map(|i| i + 1).unwrap_or(rest.len());
                    self.pos += used;
                    return Some(Token::End(name));
                }
                if end.starts_with('>') {
                    self.pos += 3;
                    return self.next_token();
                }
                // `</` followed by junk is a bogus comment.
                let used = rest.find('>').map(|i| i + 1).unwrap_or(rest.len());
                self.pos += used;
                return self.next_token();
            }
            if tag.starts_with(|c: char| c.is_ascii_alphabetic()) {
                self.pos += 1;
                return Some(self.start_tag());
            }
        }
        // Text up to the next '<' that can open markup.
        let mut end = if rest.starts_with('<') { 1 } else { 0 };
        loop {
            match rest[end..].find('<') {
                None => {
                    end = rest.len();
                    break;
                }
                Some(i) => {
                    end += i;
                    let after = &rest[end + 1..];
                    if after.starts_with(|c: char| c.is_ascii_alphabetic() || c == '!' || c == '/' || c == '?')
                    {
                        break;
                    }
                    end += 1;
                }
            }
        }
        self.pos += end;
        Some(Token::Text(decode_entities(&rest[..end])))
    }

    fn start_tag(&mut self) -> Token {
        let rest = self.rest();
        let name_len = rest
            .find(|c: char| is_html_space(c) || c == '/' || c == '>')
            .unwrap_or(rest.len());
        let name = rest[..name_len].to_ascii_lowercase();
        self.pos += name_len;
        let mut attrs: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;
        loop {
            let rest = self.rest();
            let Some(c) = rest.chars().next() else { break };
            if is_html_space(c) {
                self.pos += c.len_utf8();
                continue;
            }
            if c == '>' {
                self.pos += 1;
                break;
            }
            if c == '/' {
                self.pos += 1;
                if self.rest().starts_with('>') {
                    self_closing = true;
                    self.pos += 1;
                    break;
                }
                continue;
            }
            // Attribute name; a leading '=' is part of the name.
            let skip = if c == '=' { 1 } else { 0 };
            let name_len = skip
                + rest[skip..]
                    .find(|c: char| is_html_space(c) || c == '/' || c == '>' || c == '=')
                    .unwrap_or(rest.len() - skip);
            let attr_name = rest[..name_len].to_ascii_lowercase();
            self.pos += name_len;
            // Optional value.
            let ws = self.rest().len() - self.rest().trim_start_matches(is_html_space).len();
            let mut value = String::new();
            if self.rest()[ws..].starts_with('=') {
                self.pos += ws + 1;
                let ws = self.rest().len() - self.rest().trim_start_matches(is_html_space).len();
                self.pos += ws;
                let rest = self.rest();
                match rest.chars().next() {
                    Some(q @ ('"' | '\'')) => {
                        let body = &rest[1..];
                        let end = body.find(q).unwrap_or(body.len());
                        value = decode_entities(&body[..end]);
                        self.pos += 1 + end + if end < body.len() { 1 } else { 0 };
                    }
                    Some(_) => {
                        let end = rest
                            .find(|c: char| is_html_space(c) || c == '>')
                            .unwrap_or(rest.len());
                        value = decode_entities(&rest[..end]);
                        self.pos += end;
                    }
                    None => {}
                }
            }
            if !attrs.iter().any(|(n, _)| *n == attr_name) {
                attrs.push((attr_name, value));
            }
        }
        Token::Start {
            name,
            attrs,
            self_closing,
        }
    }

    /// Consumes raw text up to (not including) a matching end tag.
    fn raw_text_until_end(&mut self, name: &str) -> String {
        let rest = self.rest();
        let lower = rest.to_ascii_lowercase();
        let needle = format!("</{name}");
        let mut from = 0;
        while let Some(i) = lower[from..].find(&needle) {
            let at = from + i;
            let after = &lower[at + needle.len()..];
            if after.is_empty() || after.starts_with(|c: char| is_html_space(c) || c == '/' || c == '>') {
                let body = rest[..at].to_string();
                self.pos += at;
                return body;
            }
            from = at + needle.len();
        }
        self.pos = self.src.len();
        rest.to_string()
    }
}

#[derive(Default)]
struct TreeBuilder {
    root: Vec<Node>,
    /// Open elements, innermost last. Each is detached until popped.
    stack: Vec<Element>,
}

impl TreeBuilder {
    fn current_children(&mut self) -> &mut Vec<Node> {
        match self.stack.last_mut() {
            Some(e) => &mut e.children,
            None => &mut self.root,
        }
    }

    fn append(&mut self, node: Node) {
        let children = self.current_children();
        if let (Node::Text(t), Some(Node::Text(prev))) = (&node, children.last_mut()) {
            prev.push_str(t);
            return;
        }
        children.push(node);
    }

    fn pop(&mut self) {
        if let Some(e) = self.stack.pop() {
            self.append(Node::Element(e));
        }
    }

    fn pop_until_inclusive(&mut self, idx: usize) {
        while self.stack.len() > idx {
            self.pop();
        }
    }

    fn current_tag(&self) -> Option<&str> {
        self.stack.last().map(|e| e.tag.as_str())
    }

    /// Index of the innermost open `name` not hidden behind a scope boundary.
    fn in_scope(&self, name: &str, extra_boundary: &[&str]) -> Option<usize> {
        for (i, e) in self.stack.iter().enumerate().rev() {
            if e.tag == name {
                return Some(i);
            }
            if SCOPE_BOUNDARY.contains(&e.tag.as_str()) || extra_boundary.contains(&e.tag.as_str()) {
                return None;
            }
        }
        None
    }

    fn close_p_in_button_scope(&mut self) {
        if let Some(i) = self.in_scope("p", &["button"]) {
            self.pop_until_inclusive(i);
        }
    }

    fn process(&mut self, tok: Token) {
        match tok {
            Token::Text(t) => self.append(Node::Text(t)),
            Token::Comment(c) => self.append(Node::Comment(c)),
            Token::Start {
                name,
                attrs,
                self_closing,
            } => self.start(name, attrs, self_closing),
            Token::End(name) => self.end(&name),
        }
    }

    fn start(&mut self, name: String, attrs: Vec<(String, String)>, self_closing: bool) {
        let n = name.as_str();
        if CLOSES_P.contains(&n) {
            self.close_p_in_button_scope();
        }
        match n {
            "li" => self.close_list_item(&["li"]),
            "dd" | "dt" => self.close_list_item(&["dd", "dt"]),
            "option" => {
                if self.current_tag() == Some("option") {
                    self.pop();
                }
            }
            "optgroup" => {
                if self.current_tag() == Some("option") {
                    self.pop();
                }
                if self.current_tag() == Some("optgroup") {
                    self.pop();
                }
            }
            "tr" => {
                if let Some(i) = self.in_table_scope(&["tr"]) {
                    self.pop_until_inclusive(i);
                }
            }
            "td" | "th" => {
                if let Some(i) = self.in_table_scope(&["td", "th"]) {
                    self.pop_until_inclusive(i);
                }
            }
            "a" => {
                if let Some(i) = self.in_scope("a", &[]) {
                    self.pop_until_inclusive(i);
                }
            }
            _ if HEADINGS.contains(&n) => {
                if self.current_tag().is_some_and(|t| HEADINGS.contains(&t)) {
                    self.pop();
                }
            }
            _ => {}
        }
        let element = Element {
            tag: name,
            attrs,
            children: Vec::new(),
            node_id: None,
        };
        if is_void(&element.tag) || self_closing {
            self.append(Node::Element(element));
        } else {
            self.stack.push(element);
        }
    }

    fn close_list_item(&mut self, names: &[&str]) {
        for i in (0..self.stack.len()).rev() {
            let tag = self.stack[i].tag.as_str();
            if names.contains(&tag) {
                self.pop_until_inclusive(i);
                return;
            }
            if SPECIAL.contains(&tag) && !matches!(tag, "address" | "div" | "p") {
                return;
            }
        }
    }

    fn in_table_scope(&self, names: &[&str]) -> Option<usize> {
        for (i, e) in self.stack.iter().enumerate().rev() {
            if names.contains(&e.tag.as_str()) {
                return Some(i);
            }
            if matches!(e.tag.as_str(), "table" | "html" | "template") {
                return None;
            }
        }
        None
    }

    fn end(&mut self, name: &str) {
        if name == "p" {
            match self.in_scope("p", &["button"]) {
                Some(i) => self.pop_until_inclusive(i),
                None => {
                    // A stray </p> yields an empty paragraph.
                    self.append(Node::Element(Element::new("p")));
                }
            }
            return;
        }
        if is_void(name) || name == "body" || name == "html" {
            return;
        }
        if SPECIAL.contains(&name) || IMPLIED_END.contains(&name) {
            let found = match name {
                "li" => self.in_scope("li", &["ul", "ol"]),
                "td" | "th" | "tr" | "tbody" | "thead" | "tfoot" | "table" => {
                    self.in_table_scope(&[name])
                }
                _ => self.in_scope(name, &[]),
            };
            if let Some(i) = found {
                self.pop_until_inclusive(i);
            }
            return;
        }
        // Formatting and other ordinary elements: stop at the first special element.
        for i in (0..self.stack.len()).rev() {
            let tag = self.stack[i].tag.as_str();
            if tag == name {
                self.pop_until_inclusive(i);
                return;
            }
            if SPECIAL.contains(&tag) {
                return;
            }
        }
    }

    fn finish(mut self) -> DomTree {
        self.pop_until_inclusive(0);
        DomTree::new(self.root)
    }
}

const NAMED_ENTITIES: &[(&str, &str)] = &[
    ("amp", "&"),
    ("lt", "<"),
    ("gt", ">"),
    ("quot", "\""),
    ("apos", "'"),
    ("nbsp", "\u{a0}"),
    ("copy", "\u{a9}"),
    ("reg", "\u{ae}"),
    ("trade", "\u{2122}"),
    ("hellip", "\u{2026}"),
    ("mdash", "\u{2014}"),
    ("ndash", "\u{2013}"),
    ("laquo", "\u{ab}"),
    ("raquo", "\u{bb}"),
    ("lsquo", "\u{2018}"),
    ("rsquo", "\u{2019}"),
    ("ldquo", "\u{201c}"),
    ("rdquo", "\u{201d}"),
    ("times", "\u{d7}"),
    ("middot", "\u{b7}"),
    ("bull", "\u{2022}"),
    ("euro", "\u{20ac}"),
    ("pound", "\u{a3}"),
    ("yen", "\u{a5}"),
    ("cent", "\u{a2}"),
    ("deg", "\u{b0}"),
];

/// Decodes `&name;`, `&#N;` and `&#xH;`. Unknown or malformed references are kept
/// literally.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        match decode_one(rest) {
            Some((text, used)) => {
                out.push_str(&text);
                rest = &rest[used..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_one(s: &str) -> Option<(String, usize)> {
    let semi = s.find(';').filter(|&i| i < 40)?;
    let body = &s[1..semi];
    if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse::<u32>().ok()?,
        };
        let c = char::from_u32(code).filter(|&c| c != '\0').unwrap_or('\u{fffd}');
        return Some((c.to_string(), semi + 1));
    }
    NAMED_ENTITIES
        .iter()
        .find(|(name, _)| *name == body)
        .map(|(_, v)| (v.to_string(), semi + 1))
}
