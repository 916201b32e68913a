//! Architecture graphs: a tank (node 0) feeding a tree of cold-plate devices.

mod flow;
mod notation;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{EdgeFlow, FlowMap, FlowSource};

/// Label of the tank / pump node.
pub const ROOT: u32 = 0;

/// A rooted tree over the tank and a set of labeled devices.
///
/// Device labels are opaque positive integers. They are usually `1..=N`, but
/// gaps are allowed so that hand-written notations with missing labels still
/// parse. Children of every node are kept in canonical order: ascending by the
/// smallest label contained in the child's subtree.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ConfigGraph {
    parent: BTreeMap<u32, u32>,
    children: BTreeMap<u32, Vec<u32>>,
}

impl ConfigGraph {
    /// Builds a graph from `(parent, child)` edges, validating the tree shape.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut parent = BTreeMap::new();
        for (p, c) in edges {
            if c == ROOT {
                return Err(Error::Validation("the tank (0) cannot have a parent".into()));
            }
            if p == c {
                return Err(Error::Validation(format!("self loop on node {c}")));
            }
            if parent.insert(c, p).is_some() {
                return Err(Error::Validation(format!("node {c} has more than one parent")));
            }
        }
        if parent.is_empty() {
            return Err(Error::Validation("a configuration needs at least one device".into()));
        }
        for (&c, &p) in &parent {
            if p != ROOT && !parent.contains_key(&p) {
                return Err(Error::Validation(format!("parent {p} of node {c} is not in the graph")));
            }
        }
        // Every node must reach the root without revisiting a node.
        for &start in parent.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = start;
            while cur != ROOT {
                if !seen.insert(cur) {
                    return Err(Error::Validation(format!("cycle through node {cur}")));
                }
                cur = parent[&cur];
            }
        }

        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        children.insert(ROOT, Vec::new());
        for &c in parent.keys() {
            children.insert(c, Vec::new());
        }
        for (&c, &p) in &parent {
            children.get_mut(&p).expect("parent present").push(c);
        }
        let mut g = Self { parent, children };
        g.canonicalize();
        Ok(g)
    }

    /// Builds a graph from a parent lookup over devices `1..=parents.len()`.
    /// `parents[i]` is the parent of device `i + 1`.
    pub fn from_parent_slice(parents: &[u32]) -> Result<Self> {
        Self::from_edges(parents.iter().enumerate().map(|(i, &p)| (p, i as u32 + 1)))
    }

    pub fn parse(text: &str) -> Result<Self> {
        notation::parse(text)
    }

    /// Canonical notation, e.g. `0 (1,2) (3)`.
    pub fn to_notation(&self) -> String {
        notation::serialize(self)
    }

    fn canonicalize(&mut self) {
        let mut min_label: BTreeMap<u32, u32> = BTreeMap::new();
        fn subtree_min(
            node: u32,
            children: &BTreeMap<u32, Vec<u32>>,
            memo: &mut BTreeMap<u32, u32>,
        ) -> u32 {
            let mut m = node;
            for &c in &children[&node] {
                m = m.min(subtree_min(c, children, memo));
            }
            memo.insert(node, m);
            m
        }
        subtree_min(ROOT, &self.children, &mut min_label);
        for kids in self.children.values_mut() {
            kids.sort_by_key(|c| min_label[c]);
        }
    }

    pub fn device_count(&self) -> usize {
        self.parent.len()
    }

    /// Device labels in ascending order.
    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.parent.keys().copied()
    }

    pub fn contains(&self, label: u32) -> bool {
        label == ROOT || self.parent.contains_key(&label)
    }

    pub fn parent(&self, label: u32) -> Option<u32> {
        self.parent.get(&label).copied()
    }

    pub fn children(&self, label: u32) -> &[u32] {
        self.children.get(&label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn out_degree(&self, label: u32) -> usize {
        self.children(label).len()
    }

    pub fn is_leaf(&self, label: u32) -> bool {
        label != ROOT && self.children(label).is_empty()
    }

    /// Tree edges `(parent, child)` in canonical depth-first order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.device_count());
        self.preorder_edges(ROOT, &mut out);
        out
    }

    fn preorder_edges(&self, node: u32, out: &mut Vec<(u32, u32)>) {
        for &c in self.children(node) {
            out.push((node, c));
            self.preorder_edges(c, out);
        }
    }

    /// Devices with no children, in canonical depth-first order.
    pub fn leaves(&self) -> Vec<u32> {
        self.edges().into_iter().map(|(_, c)| c).filter(|&c| self.is_leaf(c)).collect()
    }

    /// Nodes (including the tank) with two or more children, depth-first.
    pub fn split_nodes(&self) -> Vec<u32> {
        std::iter::once(ROOT)
            .chain(self.edges().into_iter().map(|(_, c)| c))
            .filter(|&n| self.out_degree(n) >= 2)
            .collect()
    }

    /// True when the labels are exactly `1..=N`.
    pub fn has_contiguous_labels(&self) -> bool {
        self.labels().zip(1..).all(|(l, i)| l == i)
    }

    /// All branching happens at the tank: every device has at most one child.
    pub fn is_single_split(&self) -> bool {
        self.labels().all(|l| self.out_degree(l) <= 1)
    }

    /// Depth of a device (tank children have depth 1).
    pub fn depth(&self, label: u32) -> usize {
        let mut d = 0;
        let mut cur = label;
        while cur != ROOT {
            cur = self.parent[&cur];
            d += 1;
        }
        d
    }
}

impl fmt::Display for ConfigGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_notation())
    }
}

impl fmt::Debug for ConfigGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConfigGraph({})", self.to_notation())
    }
}

impl std::str::FromStr for ConfigGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// JSON form `{"edges": [[parent, child], ...]}`.
#[derive(Serialize, Deserialize)]
struct EdgeList {
    edges: Vec<[u32; 2]>,
}

impl Serialize for ConfigGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EdgeList { edges: self.edges().into_iter().map(|(p, c)| [p, c]).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfigGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let list = EdgeList::deserialize(d)?;
        ConfigGraph::from_edges(list.edges.into_iter().map(|[p, c]| (p, c)))
            .map_err(serde::de::Error::custom)
    }
}
