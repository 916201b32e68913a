//! Symbolic notation for architecture trees.
//!
//! ```text
//! notation := "0" branch+
//! branch   := "(" chain ")"
//! chain    := item ("," item)*
//! item     := label branch*
//! ```
//!
//! Commas chain devices in series, parentheses open a branch. An item that is
//! followed by its own branches splits the flow and must close its chain.
//! Whitespace is ignored everywhere.

use std::collections::BTreeSet;

use super::{ConfigGraph, ROOT};
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    edges: Vec<(u32, u32)>,
    seen: BTreeSet<u32>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == b => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.err(format!("expected '{}', found '{}'", b as char, c as char)),
            None => self.err(format!("expected '{}', found end of input", b as char)),
        }
    }

    fn label(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a node label");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        match text.parse::<u32>() {
            Ok(v) => Ok(v),
            Err(_) => Err(Error::Parse { pos: start, msg: format!("label '{text}' out of range") }),
        }
    }

    fn device(&mut self) -> Result<u32> {
        let start = self.pos;
        let l = self.label()?;
        if l == ROOT {
            return Err(Error::Parse { pos: start, msg: "label 0 is reserved for the tank".into() });
        }
        if !self.seen.insert(l) {
            return Err(Error::Validation(format!("duplicate label {l}")));
        }
        Ok(l)
    }

    /// Parses `branch*` hanging from `from`; returns how many were read.
    fn branches(&mut self, from: u32) -> Result<usize> {
        let mut count = 0;
        while self.peek() == Some(b'(') {
            self.pos += 1;
            self.chain(from)?;
            self.expect(b')')?;
            count += 1;
        }
        Ok(count)
    }

    fn chain(&mut self, from: u32) -> Result<()> {
        let mut prev = from;
        loop {
            let node = self.device()?;
            self.edges.push((prev, node));
            let splits = self.branches(node)?;
            match self.peek() {
                Some(b',') if splits > 0 => {
                    return self.err("a node with branches must end its series chain");
                }
                Some(b',') => {
                    self.pos += 1;
                    prev = node;
                }
                _ => return Ok(()),
            }
        }
    }
}

pub(super) fn parse(text: &str) -> Result<ConfigGraph> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, edges: Vec::new(), seen: BTreeSet::new() };
    let root = p.label()?;
    if root != ROOT {
        return Err(Error::Parse { pos: 0, msg: "notation must start with the tank label 0".into() });
    }
    if p.branches(ROOT)? == 0 {
        return p.err("the tank needs at least one branch");
    }
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    ConfigGraph::from_edges(p.edges)
}

pub(super) fn serialize(g: &ConfigGraph) -> String {
    fn branch(g: &ConfigGraph, first: u32, out: &mut String) {
        out.push('(');
        let mut node = first;
        loop {
            out.push_str(&node.to_string());
            match g.children(node) {
                [] => break,
                [only] => {
                    out.push(',');
                    node = *only;
                }
                many => {
                    for &c in many {
                        out.push(' ');
                        branch(g, c, out);
                    }
                    break;
                }
            }
        }
        out.push(')');
    }

    let mut out = String::from("0");
    for &c in g.children(ROOT) {
        out.push(' ');
        branch(g, c, &mut out);
    }
    out
}
