//! A practical CSS selector subset: type, `#id`, `.class`, `[attr]` and
//! `[attr="v"]` constraints joined by descendant (space) or child (`>`) combinators.

use std::fmt;

use thiserror::Error;

use crate::dom::{DomTree, Element, Node, NodePath};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectorError {
    #[error("empty selector")]
    Empty,
    #[error("unsupported selector feature `{token}` at offset {offset}")]
    UnsupportedSelector { token: String, offset: usize },
    #[error("selector syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("selector `{selector}` matches no element")]
    InvalidSelector { selector: String },
    #[error("selector `{selector}` matches {count} elements")]
    AmbiguousSelector { selector: String, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combinator {
    Descendant,
    Child,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrTest {
    pub name: String,
    /// `None` tests presence only.
    pub value: Option<String>,
}

/// One compound step. At least one field is set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Compound {
    pub tag: Option<String>,
    pub id: Option<String>,
    pub classes: Vec<String>,
    pub attrs: Vec<AttrTest>,
}

impl Compound {
    pub fn matches(&self, e: &Element) -> bool {
        self.tag.as_ref().is_none_or(|t| *t == e.tag)
            && self.id.as_ref().is_none_or(|id| e.attr("id") == Some(id.as_str()))
            && self.classes.iter().all(|c| e.has_class(c))
            && self.attrs.iter().all(|a| match (&a.value, e.attr(&a.name)) {
                (_, None) => false,
                (None, Some(_)) => true,
                (Some(want), Some(got)) => want == got,
            })
    }

    fn is_empty(&self) -> bool {
        self.tag.is_none() && self.id.is_none() && self.classes.is_empty() && self.attrs.is_empty()
    }
}

/// `steps[0] combinators[0] steps[1] ...`; `combinators.len() == steps.len() - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    pub steps: Vec<Compound>,
    pub combinators: Vec<Combinator>,
}

pub fn parse_selector(text: &str) -> Result<Selector, SelectorError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(SelectorError::Empty);
    }
    let mut steps = vec![p.compound()?];
    let mut combinators = Vec::new();
    loop {
        let had_ws = p.skip_ws();
        if p.at_end() {
            break;
        }
        let comb = if p.peek() == Some('>') {
            p.pos += 1;
            p.skip_ws();
            Combinator::Child
        } else if had_ws {
            Combinator::Descendant
        } else {
            return Err(p.unexpected());
        };
        if p.at_end() {
            return Err(p.syntax("selector ends with a combinator"));
        }
        combinators.push(comb);
        steps.push(p.compound()?);
    }
    Ok(Selector { steps, combinators })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn syntax(&self, message: &str) -> SelectorError {
        SelectorError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    /// Error for the character at the cursor: known CSS features we do not
    /// support are reported as unsupported, anything else as a syntax error.
    fn unexpected(&self) -> SelectorError {
        let rest = self.rest();
        let token: String = match rest.chars().next() {
            Some(':') => {
                let colons = if rest.starts_with("::") { 2 } else { 1 };
                let name: String = rest[colons..]
                    .chars()
                    .take_while(|&c| is_ident_char(c))
                    .collect();
                format!("{}{name}", &rest[..colons])
            }
            Some(c @ ('+' | '~' | ',' | '*' | '|')) => c.to_string(),
            Some(c) => return self.syntax(&format!("unexpected `{c}`")),
            None => return self.syntax("unexpected end of selector"),
        };
        SelectorError::UnsupportedSelector {
            token,
            offset: self.pos,
        }
    }

    fn compound(&mut self) -> Result<Compound, SelectorError> {
        let mut c = Compound::default();
        if self.peek().is_some_and(is_ident_start) {
            c.tag = Some(self.ident()?.to_ascii_lowercase());
        }
        loop {
            match self.peek() {
                Some('#') => {
                    self.pos += 1;
                    let id = self.ident()?;
                    if c.id.replace(id).is_some() {
                        // `#a#b` can only match if a == b; keep it simple and exact.
                        return Err(self.syntax("more than one id in a compound"));
                    }
                }
                Some('.') => {
                    self.pos += 1;
                    c.classes.push(self.ident()?);
                }
                Some('[') => {
                    self.pos += 1;
                    c.attrs.push(self.attr_test()?);
                }
                Some(ch) if ch.is_ascii_whitespace() || ch == '>' => break,
                None => break,
                Some(_) => return Err(self.unexpected()),
            }
        }
        if c.is_empty() {
            return Err(self.unexpected());
        }
        Ok(c)
    }

    fn attr_test(&mut self) -> Result<AttrTest, SelectorError> {
        self.skip_ws();
        let name = self.ident()?.to_ascii_lowercase();
        self.skip_ws();
        let value = match self.peek() {
            Some(']') => None,
            Some('=') => {
                self.pos += 1;
                self.skip_ws();
                let v = match self.peek() {
                    Some(q @ ('"' | '\'')) => self.quoted(q)?,
                    _ => self.ident()?,
                };
                self.skip_ws();
                Some(v)
            }
            Some(op @ ('~' | '|' | '^' | '$' | '*')) if self.rest()[1..].starts_with('=') => {
                return Err(SelectorError::UnsupportedSelector {
                    token: format!("{op}="),
                    offset: self.pos,
                });
            }
            _ => return Err(self.syntax("expected `=` or `]` in attribute test")),
        };
        if self.bump() != Some(']') {
            return Err(self.syntax("unterminated attribute test"));
        }
        Ok(AttrTest { name, value })
    }

    fn quoted(&mut self, quote: char) -> Result<String, SelectorError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.bump() {
                Some(c) if c == quote => return Ok(out),
                Some('\\') => out.push(self.escape()?),
                Some(c) => out.push(c),
                None => {
                    return Err(SelectorError::Syntax {
                        offset: start,
                        message: "unterminated string".into(),
                    })
                }
            }
        }
    }

    fn ident(&mut self) -> Result<String, SelectorError> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == '\\' {
                self.pos += 1;
                out.push(self.escape()?);
            } else if is_ident_char(c) {
                out.push(c);
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if out.is_empty() {
            return Err(match self.peek() {
                Some(_) => self.unexpected(),
                None => self.syntax("expected a name"),
            });
        }
        Ok(out)
    }

    /// The part of a CSS escape after the backslash.
    fn escape(&mut self) -> Result<char, SelectorError> {
        let hex: String = self
            .rest()
            .chars()
            .take_while(char::is_ascii_hexdigit)
            .take(6)
            .collect();
        if hex.is_empty() {
            return self.bump().ok_or_else(|| self.syntax("dangling escape"));
        }
        self.pos += hex.len();
        if self.peek() == Some(' ') {
            self.pos += 1;
        }
        let code = u32::from_str_radix(&hex, 16).expect("hex digits");
        Ok(char::from_u32(code).filter(|&c| c != '\0').unwrap_or('\u{fffd}'))
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '-' || c == '\\' || !c.is_ascii()
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || !c.is_ascii()
}

fn write_ident(s: &str, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, c) in s.chars().enumerate() {
        let plain = is_ident_char(c) && !(i == 0 && c.is_ascii_digit());
        if plain {
            write!(out, "{c}")?;
        } else {
            write!(out, "\\{:x} ", c as u32)?;
        }
    }
    Ok(())
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = &self.tag {
            write_ident(t, f)?;
        }
        if let Some(id) = &self.id {
            f.write_str("#")?;
            write_ident(id, f)?;
        }
        for c in &self.classes {
            f.write_str(".")?;
            write_ident(c, f)?;
        }
        for a in &self.attrs {
            f.write_str("[")?;
            write_ident(&a.name, f)?;
            if let Some(v) = &a.value {
                f.write_str("=\"")?;
                for c in v.chars() {
                    match c {
                        '"' | '\\' => write!(f, "\\{c}")?,
                        '\n' => f.write_str("\\a ")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

/// Renders a selector that parses back to an equal AST.
impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(match self.combinators[i - 1] {
                    Combinator::Descendant => " ",
                    Combinator::Child => " > ",
                })?;
            }
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

/// Paths of all matching elements in document order.
///
/// Walks the tree once, carrying the set of selector prefixes that are matched
/// by the current ancestor chain.
pub fn resolve(sel: &Selector, dom: &DomTree) -> Vec<NodePath> {
    let n = sel.steps.len();
    let mut out = Vec::new();
    let mut path = Vec::new();
    walk(sel, &dom.children, &vec![false; n], &vec![false; n], &mut path, &mut out);
    out
}

/// `parent`: prefixes whose last step matched the parent element.
/// `ancestor`: prefixes whose last step matched some proper ancestor.
fn walk(
    sel: &Selector,
    nodes: &[Node],
    parent: &[bool],
    ancestor: &[bool],
    path: &mut NodePath,
    out: &mut Vec<NodePath>,
) {
    let n = sel.steps.len();
    for (i, node) in nodes.iter().enumerate() {
        let Node::Element(e) = node else { continue };
        path.push(i);
        let mut here = vec![false; n];
        for k in 0..n {
            let reachable = k == 0
                || match sel.combinators[k - 1] {
                    Combinator::Child => parent[k - 1],
                    Combinator::Descendant => ancestor[k - 1],
                };
            here[k] = reachable && sel.steps[k].matches(e);
        }
        if here[n - 1] {
            out.push(path.clone());
        }
        if !e.children.is_empty() {
            let below: Vec<bool> = ancestor.iter().zip(&here).map(|(a, h)| *a || *h).collect();
            walk(sel, &e.children, &here, &below, path, out);
        }
        path.pop();
    }
}

/// The single match, or InvalidSelector / AmbiguousSelector.
pub fn resolve_unique(sel: &Selector, dom: &DomTree) -> Result<NodePath, SelectorError> {
    let mut found = resolve(sel, dom);
    match found.len() {
        1 => Ok(found.pop().expect("one match")),
        0 => Err(SelectorError::InvalidSelector {
            selector: sel.to_string(),
        }),
        count => Err(SelectorError::AmbiguousSelector {
            selector: sel.to_string(),
            count,
        }),
    }
}
