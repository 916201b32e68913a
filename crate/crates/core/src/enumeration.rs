//! Counting and generating configuration spaces.
//!
//! Single-split spaces place every device on a series chain hanging from the
//! tank. Multi-split spaces additionally allow junction devices to split the
//! flow. Counts use exact big-integer arithmetic; generators refuse inputs
//! above [`GENERATE_CAP`] devices unless a larger cap is passed explicitly.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigGraph, ROOT};
use crate::error::{Error, Result};
use crate::spatial::SuperNodeTree;

/// Default device-count cap for generators.
pub const GENERATE_CAP: usize = 8;
/// Default device-count cap for counting from the command line.
pub const COUNT_CAP: usize = 20;

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Number of single-split configurations of `n` labeled devices:
/// `G(n) = sum_{k=1..n} C(n,k) C(n-1,k-1) (n-k)!`, with `G(0) = 1`.
///
/// The `k = 0` term vanishes for `n >= 1` because `C(n-1, -1) = 0`.
pub fn count_single_split(n: usize) -> BigUint {
    if n == 0 {
        return BigUint::one();
    }
    (1..=n).map(|k| binomial(n, k) * binomial(n - 1, k - 1) * factorial(n - k)).sum()
}

/// Number of configurations with `j` labeled junction groups over `n`
/// non-junction devices:
/// `F_1(n) = G(n)`, `F_j(n) = sum_{M=1..n} C(n,M) G(M) F_{j-1}(n-M)`, `F_j(0) = 1`.
pub fn count_multi_split(n: usize, j: usize) -> BigUint {
    assert!(j >= 1, "at least one junction");
    let g: Vec<BigUint> = (0..=n).map(count_single_split).collect();
    // f[m] = F_{level}(m) for the current level.
    let mut f = g.clone();
    for _ in 2..=j {
        let mut next = vec![BigUint::zero(); n + 1];
        next[0] = BigUint::one();
        for (m, slot) in next.iter_mut().enumerate().skip(1) {
            *slot = (1..=m).map(|k| binomial(m, k) * &g[k] * &f[m - k]).sum();
        }
        f = next;
    }
    f[n].clone()
}

/// A generated set of configurations, sorted and deduplicated by canonical
/// notation.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPopulation {
    pub graphs: Vec<ConfigGraph>,
    pub provenance: String,
}

impl GraphPopulation {
    pub fn new(graphs: impl IntoIterator<Item = ConfigGraph>, provenance: impl Into<String>) -> Self {
        let unique: BTreeMap<String, ConfigGraph> =
            graphs.into_iter().map(|g| (g.to_notation(), g)).collect();
        Self { graphs: unique.into_values().collect(), provenance: provenance.into() }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn notations(&self) -> Vec<String> {
        self.graphs.iter().map(ConfigGraph::to_notation).collect()
    }

    /// Population file: a JSON array of notation strings.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.notations()).expect("strings serialize")
    }

    pub fn from_json(text: &str, provenance: impl Into<String>) -> Result<Self> {
        let items: Vec<String> = serde_json::from_str(text)?;
        let graphs = items.iter().map(|s| ConfigGraph::parse(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(graphs, provenance))
    }
}

fn check_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::CapExceeded { what, n, cap })
    } else {
        Ok(())
    }
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Every way to split `labels` into unordered, internally ordered chains.
fn ordered_block_partitions(labels: &[u32]) -> Vec<Vec<Vec<u32>>> {
    let Some((&first, rest)) = labels.split_first() else {
        return vec![vec![]];
    };
    let mut out = Vec::new();
    for mask in 0u32..(1 << rest.len()) {
        let mut block = vec![first];
        let mut remaining = Vec::new();
        for (i, &l) in rest.iter().enumerate() {
            if mask & (1 << i) != 0 {
                block.push(l);
            } else {
                remaining.push(l);
            }
        }
        let orders = permutations(&block);
        for tail in ordered_block_partitions(&remaining) {
            for chain in &orders {
                let mut parts = vec![chain.clone()];
                parts.extend(tail.iter().cloned());
                out.push(parts);
            }
        }
    }
    out
}

/// Edge sets of every single-split arrangement of `labels` below `root`.
pub fn single_split_edges(root: u32, labels: &[u32]) -> Vec<Vec<(u32, u32)>> {
    ordered_block_partitions(labels)
        .into_iter()
        .map(|chains| {
            let mut edges = Vec::with_capacity(labels.len());
            for chain in chains {
                let mut prev = root;
                for l in chain {
                    edges.push((prev, l));
                    prev = l;
                }
            }
            edges
        })
        .collect()
}

/// Increasing-tree generation: the first label hangs from `root`, every later
/// label attaches to any earlier one. Labels are taken in the given order.
pub fn increasing_tree_edges(root: u32, labels: &[u32]) -> Vec<Vec<(u32, u32)>> {
    let Some((&first, rest)) = labels.split_first() else {
        return vec![vec![]];
    };
    let mut graphs = vec![vec![(root, first)]];
    for (k, &node) in rest.iter().enumerate() {
        let parents = &labels[..=k];
        let mut next = Vec::with_capacity(graphs.len() * parents.len());
        for g in &graphs {
            // Nodes of `g` in order of appearance, restricted to allowed parents.
            for &(_, existing) in g.iter() {
                if parents.contains(&existing) {
                    let mut h = g.clone();
                    h.push((existing, node));
                    next.push(h);
                }
            }
        }
        graphs = next;
    }
    graphs
}

/// Edge sets of every labeled tree over `labels` hanging from `root` through a
/// single root edge (Prüfer decoding, `|labels|^(|labels|-1)` trees).
pub fn labeled_tree_edges(root: u32, labels: &[u32]) -> Vec<Vec<(u32, u32)>> {
    let n = labels.len();
    if n == 0 {
        return vec![vec![]];
    }
    if n == 1 {
        return vec![vec![(root, labels[0])]];
    }
    // Vertices 0..=n, vertex 0 stands for `root` and has degree 1, so Prüfer
    // sequences of length n-1 never contain it.
    let mut out = Vec::new();
    let total = n.pow(n as u32 - 1);
    let mut seq = vec![0usize; n - 1];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = 1 + c % n;
            c /= n;
        }
        let mut degree = vec![1usize; n + 1];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut undirected = Vec::with_capacity(n);
        for &s in &seq {
            let leaf = (0..=n).find(|&v| degree[v] == 1).expect("a leaf exists");
            undirected.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rem: Vec<usize> = (0..=n).filter(|&v| degree[v] == 1).collect();
        undirected.push((rem[0], rem[1]));

        // Orient away from vertex 0.
        let mut adj = vec![Vec::new(); n + 1];
        for &(a, b) in &undirected {
            adj[a].push(b);
            adj[b].push(a);
        }
        let name = |v: usize| if v == 0 { root } else { labels[v - 1] };
        let mut edges = Vec::with_capacity(n);
        let mut stack = vec![(0usize, usize::MAX)];
        while let Some((v, from)) = stack.pop() {
            for &w in &adj[v] {
                if w != from {
                    edges.push((name(v), name(w)));
                    stack.push((w, v));
                }
            }
        }
        out.push(edges);
    }
    out
}

fn labels_1_to(n: usize) -> Vec<u32> {
    (1..=n as u32).collect()
}

fn graphs_from(edge_sets: Vec<Vec<(u32, u32)>>) -> Vec<ConfigGraph> {
    edge_sets
        .into_iter()
        .map(|e| ConfigGraph::from_edges(e).expect("generators emit valid trees"))
        .collect()
}

/// All single-split configurations of devices `1..=n`.
pub fn enumerate_single_split(n: usize) -> Result<GraphPopulation> {
    enumerate_single_split_capped(n, GENERATE_CAP)
}

pub fn enumerate_single_split_capped(n: usize, cap: usize) -> Result<GraphPopulation> {
    check_cap("single-split enumeration", n, cap)?;
    if n == 0 {
        return Err(Error::Validation("need at least one device".into()));
    }
    let graphs = graphs_from(single_split_edges(ROOT, &labels_1_to(n)));
    Ok(GraphPopulation::new(graphs, format!("single_split n={n}")))
}

/// Tree generation by successive attachment: start from the edge `(0, 1)`,
/// then node `k` attaches to any of `1..k-1`. Yields `(n-1)!` trees.
pub fn enumerate_trees(n: usize) -> Result<GraphPopulation> {
    enumerate_trees_with(n, false, GENERATE_CAP)
}

/// As [`enumerate_trees`]; with `complete = true` every labeled tree whose
/// tank has out-degree one is produced (`n^(n-1)` trees) instead of only the
/// increasing ones.
pub fn enumerate_trees_with(n: usize, complete: bool, cap: usize) -> Result<GraphPopulation> {
    check_cap("tree enumeration", n, cap)?;
    if n == 0 {
        return Err(Error::Validation("need at least one device".into()));
    }
    let labels = labels_1_to(n);
    let (edges, tag) = if complete {
        (labeled_tree_edges(ROOT, &labels), "labeled_trees")
    } else {
        (increasing_tree_edges(ROOT, &labels), "trees")
    };
    Ok(GraphPopulation::new(graphs_from(edges), format!("{tag} n={n}")))
}

/// How the members of one super-node are arranged below its junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubEnumerator {
    /// Series chains and parallel branches, splitting only at the junction.
    #[default]
    SingleSplit,
    /// Increasing trees rooted at the junction (successive attachment).
    IncreasingTrees,
    /// Every member on its own branch directly below the junction.
    Parallel,
}

impl SubEnumerator {
    fn edges(self, root: u32, labels: &[u32]) -> Vec<Vec<(u32, u32)>> {
        match self {
            SubEnumerator::SingleSplit => single_split_edges(root, labels),
            SubEnumerator::IncreasingTrees => increasing_tree_edges(root, labels),
            SubEnumerator::Parallel => vec![labels.iter().map(|&l| (root, l)).collect()],
        }
    }
}

fn cartesian_merge(parts: &[Vec<Vec<(u32, u32)>>]) -> Vec<Vec<(u32, u32)>> {
    let mut acc: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new()];
    for options in parts {
        let mut next = Vec::with_capacity(acc.len() * options.len());
        for base in &acc {
            for opt in options {
                let mut merged = base.clone();
                merged.extend(opt.iter().copied());
                next.push(merged);
            }
        }
        acc = next;
    }
    acc.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Graphs for one level of a super-node tree.
///
/// Each super-node at `level` contributes the open path from the tank through
/// its ancestor junctions to its own junction, followed by one arrangement of
/// its remaining members below the junction. Super-nodes from shallower levels
/// that could not be subdivided further keep their fixed path. The population
/// is the Cartesian product of the per-super-node arrangements.
pub fn generate_level_graphs(
    tree: &SuperNodeTree,
    level: usize,
    enumerator: SubEnumerator,
) -> Result<GraphPopulation> {
    if level == 0 || level >= tree.levels.len() {
        return Err(Error::Structural(format!(
            "level {level} not available (tree has levels 1..{})",
            tree.levels.len().saturating_sub(1)
        )));
    }
    let mut parts: Vec<Vec<Vec<(u32, u32)>>> = Vec::new();
    let path_edges = |chain: &[u32], junction: u32| -> Vec<(u32, u32)> {
        let mut e: Vec<(u32, u32)> = chain.windows(2).map(|w| (w[0], w[1])).collect();
        e.push((*chain.last().unwrap_or(&ROOT), junction));
        e
    };
    for sn in &tree.levels[level] {
        if sn.members.is_empty() {
            continue;
        }
        let junction = sn.junction.ok_or_else(|| {
            Error::Structural(format!("super-node {:?} at level {level} has no junction", sn.members))
        })?;
        let path = path_edges(&sn.parent_chain, junction);
        let free: Vec<u32> = sn.members.iter().copied().filter(|&m| m != junction).collect();
        let options = enumerator
            .edges(junction, &free)
            .into_iter()
            .map(|mut e| {
                e.extend(path.iter().copied());
                e
            })
            .collect();
        parts.push(options);
    }
    for shallow in &tree.levels[1..level] {
        for sn in shallow.iter().filter(|s| s.is_terminal) {
            if let Some(j) = sn.junction {
                parts.push(vec![path_edges(&sn.parent_chain, j)]);
            }
        }
    }
    let graphs = cartesian_merge(&parts)
        .into_iter()
        .map(ConfigGraph::from_edges)
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphPopulation::new(graphs, format!("spatial_junctions level={level} enumerator={enumerator:?}")))
}

fn combinations(items: &[u32], k: usize) -> Vec<Vec<u32>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        for mut tail in combinations(&items[i + 1..], k - 1) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Assignments of `rest` to the ordered `junctions` following the junction
/// count recursion: each junction in turn takes a nonempty subset while
/// devices remain; once none remain the later junctions stay empty.
fn recursive_assignments(junctions: &[u32], rest: &[u32]) -> Vec<Vec<(u32, Vec<u32>)>> {
    let Some((&j, later)) = junctions.split_first() else {
        return if rest.is_empty() { vec![vec![]] } else { vec![] };
    };
    if rest.is_empty() {
        return vec![later.iter().chain([j].iter()).map(|&x| (x, vec![])).collect()];
    }
    if later.is_empty() {
        return vec![vec![(j, rest.to_vec())]];
    }
    let mut out = Vec::new();
    for size in 1..=rest.len() {
        for chosen in combinations(rest, size) {
            let remaining: Vec<u32> = rest.iter().copied().filter(|x| !chosen.contains(x)).collect();
            for mut tail in recursive_assignments(later, &remaining) {
                tail.insert(0, (j, chosen.clone()));
                out.push(tail);
            }
        }
    }
    out
}

/// One junction layer with enumerated junction locations: every choice of `j`
/// junctions out of devices `1..=n` hangs from the tank and the remaining
/// devices are distributed over them (single-split below each junction).
///
/// The population size is `C(n, j) * F_j(n - j)`.
pub fn enumerate_junction_placements(n: usize, j: usize) -> Result<GraphPopulation> {
    enumerate_junction_placements_capped(n, j, GENERATE_CAP)
}

pub fn enumerate_junction_placements_capped(n: usize, j: usize, cap: usize) -> Result<GraphPopulation> {
    check_cap("junction placement enumeration", n, cap)?;
    if j == 0 || j > n {
        return Err(Error::Validation(format!("need 1 <= junctions <= devices, got j={j}, n={n}")));
    }
    let labels = labels_1_to(n);
    let mut edge_sets = Vec::new();
    for junctions in combinations(&labels, j) {
        let rest: Vec<u32> = labels.iter().copied().filter(|l| !junctions.contains(l)).collect();
        for assignment in recursive_assignments(&junctions, &rest) {
            let mut parts: Vec<Vec<Vec<(u32, u32)>>> = Vec::new();
            for (junction, members) in assignment {
                let options = single_split_edges(junction, &members)
                    .into_iter()
                    .map(|mut e| {
                        e.push((ROOT, junction));
                        e
                    })
                    .collect();
                parts.push(options);
            }
            edge_sets.extend(cartesian_merge(&parts));
        }
    }
    Ok(GraphPopulation::new(graphs_from(edge_sets), format!("enumerated_junctions n={n} j={j}")))
}

/// Population strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleSplit,
    SpatialJunctions,
    EnumeratedJunctions,
    Trees,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "single_split" => Ok(Strategy::SingleSplit),
            "spatial_junctions" | "spatial" => Ok(Strategy::SpatialJunctions),
            "enumerated_junctions" | "junctions" => Ok(Strategy::EnumeratedJunctions),
            "trees" => Ok(Strategy::Trees),
            other => Err(Error::Validation(format!("unknown strategy '{other}'"))),
        }
    }
}
