//! Seeded generators for random DOM trees and selectors.

use domstep::dom::{DomTree, Element, Node};
use domstep::selector::{AttrTest, Combinator, Compound, Selector};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TAGS: &[&str] = &["div", "span", "a", "p", "li", "ul", "button"];
pub const CLASSES: &[&str] = &["x", "y", "z", "btn", "nav-item"];
pub const IDS: &[&str] = &["main", "q", "r1", "top"];
pub const ROLES: &[&str] = &["button", "link", "img"];

/// A random forest with `1..=max_nodes` elements and a few text nodes.
pub fn random_tree(rng: &mut impl Rng, max_nodes: usize) -> DomTree {
    let target = rng.gen_range(1..=max_nodes);
    let mut budget = target;
    let mut roots = Vec::new();
    while budget > 0 {
        roots.push(Node::Element(random_element(rng, &mut budget, 0)));
    }
    DomTree::new(roots)
}

fn random_element(rng: &mut impl Rng, budget: &mut usize, depth: usize) -> Element {
    *budget -= 1;
    let mut e = Element::new(*TAGS.choose(rng).unwrap());
    if rng.gen_bool(0.15) {
        e.set_attr("id", IDS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(1..=2);
        let cls: Vec<&str> = CLASSES.choose_multiple(rng, n).copied().collect();
        e.set_attr("class", &cls.join(" "));
    }
    if rng.gen_bool(0.2) {
        e.set_attr("role", ROLES.choose(rng).unwrap());
    }
    if rng.gen_bool(0.2) {
        e.children.push(Node::Text("t".into()));
    }
    let max_children = if depth > 12 { 0 } else { 4 };
    let kids = rng.gen_range(0..=max_children);
    for _ in 0..kids {
        if *budget == 0 {
            break;
        }
        e.children.push(Node::Element(random_element(rng, budget, depth + 1)));
    }
    e
}

fn random_compound(rng: &mut impl Rng) -> Compound {
    let mut c = Compound::default();
    loop {
        if rng.gen_bool(0.6) {
            c.tag = Some(TAGS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.15) {
            c.id = Some(IDS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.4) {
            c.classes.push(CLASSES.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.15) {
            let value = rng.gen_bool(0.7).then(|| ROLES.choose(rng).unwrap().to_string());
            c.attrs.push(AttrTest { name: "role".into(), value });
        }
        if c != Compound::default() {
            return c;
        }
    }
}

pub fn random_selector(rng: &mut impl Rng) -> Selector {
    let n = rng.gen_range(1..=4);
    let steps = (0..n).map(|_| random_compound(rng)).collect();
    let combinators = (1..n)
        .map(|_| if rng.gen_bool(0.5) { Combinator::Child } else { Combinator::Descendant })
        .collect();
    Selector { steps, combinators }
}
