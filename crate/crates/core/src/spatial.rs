//! Spatial clustering of devices into super-nodes with junctions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Device positions and heat loads; device `i + 1` sits at `positions[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceLayout {
    pub positions: Vec<Point>,
    #[serde(default)]
    pub heat_loads_kw: Vec<f64>,
}

impl DeviceLayout {
    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::Validation("layout has no devices".into()));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("layout positions must be finite".into()));
        }
        if !self.heat_loads_kw.is_empty() && self.heat_loads_kw.len() != self.positions.len() {
            return Err(Error::Validation(format!(
                "{} heat loads for {} devices",
                self.heat_loads_kw.len(),
                self.positions.len()
            )));
        }
        Ok(())
    }

    pub fn position(&self, label: u32) -> Point {
        self.positions[label as usize - 1]
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn centroid(points: &[Point]) -> Point {
    let mut c = [0.0; 3];
    for p in points {
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    c.map(|v| v / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster index of each point. Clusters are numbered in order of their
    /// first point, so equal partitions compare equal.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point>,
    pub inertia: f64,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

const MAX_LLOYD_ITERS: usize = 300;

/// Lloyd's algorithm with k-means++ seeding.
///
/// A cluster that empties during iteration is re-seeded at the point farthest
/// from its assigned centroid.
pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::Validation("k-means needs at least one point".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::Validation(format!("k = {k} for {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Point> = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; take the first unused.
            (0..points.len()).find(|i| !centroids.contains(&points[*i])).unwrap_or(0)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if r < *di {
                    pick = i;
                    break;
                }
                r -= di;
            }
            pick
        };
        centroids.push(points[next]);
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = dist2(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        for c in 0..k {
            if !assignments.contains(&c) {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = dist2(&points[a], &centroids[assignments[a]]);
                        let db = dist2(&points[b], &centroids[assignments[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("nonempty");
                assignments[far] = c;
                changed = true;
            }
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<Point> =
                points.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            *cen = centroid(&members);
        }
        if !changed {
            break;
        }
    }

    // Renumber clusters by first appearance.
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &a in &assignments {
        if map[a] == usize::MAX {
            map[a] = next;
            next += 1;
        }
    }
    let mut ordered = vec![[0.0; 3]; k];
    for (old, &new) in map.iter().enumerate() {
        ordered[new] = centroids[old];
    }
    let assignments: Vec<usize> = assignments.iter().map(|&a| map[a]).collect();
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| dist2(p, &ordered[a])).sum();
    Ok(KMeans { assignments, centroids: ordered, inertia })
}

/// Mean silhouette of a partition; singletons score zero.
pub fn silhouette(points: &[Point], assignments: &[usize]) -> f64 {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[assignments[j]] += dist2(p, q).sqrt();
                counts[assignments[j]] += 1;
            }
        }
        let own = assignments[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / points.len() as f64
}

/// Separation score assigned to the unclustered (K = 1) partition. A split is
/// only preferred over a single cluster when its silhouette beats this value.
pub const SINGLE_CLUSTER_SCORE: f64 = 0.5;

/// Number of k-means restarts used to judge stability.
pub const DEFAULT_RESTARTS: usize = 10;

fn separation(points: &[Point], k: usize, runs: &[KMeans]) -> f64 {
    if k == 1 {
        return SINGLE_CLUSTER_SCORE;
    }
    let best = runs.iter().min_by(|a, b| a.inertia.total_cmp(&b.inertia)).expect("runs");
    silhouette(points, &best.assignments)
}

/// Smallest stable cluster count.
///
/// For `K = 1, 2, ..., N - 1`, k-means is run from `restarts` seeds. `K` is
/// accepted when every restart yields the same partition and its separation
/// score is higher than that of `K + 1`.
pub fn select_cluster_count(points: &[Point], restarts: usize) -> usize {
    let n = points.len();
    if n <= 2 {
        return 1;
    }
    let runs_for = |k: usize| -> Vec<KMeans> {
        (0..restarts.max(1) as u64).map(|s| kmeans(points, k, s).expect("valid k")).collect()
    };
    let mut current = runs_for(1);
    for k in 1..n {
        let next = runs_for(k + 1);
        let stable = current.windows(2).all(|w| w[0].assignments == w[1].assignments);
        if stable && separation(points, k, &current) > separation(points, k + 1, &next) {
            return k;
        }
        current = next;
    }
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNode {
    /// Devices of the cluster, including the junction.
    pub members: Vec<u32>,
    /// Member nearest the cluster centroid. `None` for the level-0 root.
    pub junction: Option<u32>,
    /// Ancestor junctions from the tank (label 0) down to the parent.
    pub parent_chain: Vec<u32>,
    /// No members remain below the junction, so no children were created.
    pub is_terminal: bool,
}

impl SuperNode {
    /// Members still to be placed below the junction.
    pub fn pool(&self) -> Vec<u32> {
        self.members.iter().copied().filter(|&m| Some(m) != self.junction).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNodeTree {
    pub levels: Vec<Vec<SuperNode>>,
    pub requested_levels: usize,
}

impl SuperNodeTree {
    /// Number of clustering levels actually produced.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Member closest to the centroid; ties (within 1e-12 relative) go to the
/// smallest label.
pub fn pick_junction(layout: &DeviceLayout, members: &[u32]) -> u32 {
    let pts: Vec<Point> = members.iter().map(|&m| layout.position(m)).collect();
    let c = centroid(&pts);
    let mut best = members[0];
    let mut best_d = dist2(&pts[0], &c).sqrt();
    for (&m, p) in members.iter().zip(&pts).skip(1) {
        let d = dist2(p, &c).sqrt();
        let tol = 1e-12 * best_d.max(d).max(1.0);
        if d < best_d - tol || ((d - best_d).abs() <= tol && m < best) {
            best = m;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self { restarts: DEFAULT_RESTARTS, seed: 0 }
    }
}

/// Hierarchical clustering of the devices into `num_levels` levels of
/// super-nodes below the tank. Stops early when every pool is empty.
pub fn build_supernode_tree(
    layout: &DeviceLayout,
    num_levels: usize,
    opts: ClusterOptions,
) -> Result<SuperNodeTree> {
    layout.validate()?;
    if num_levels == 0 {
        return Err(Error::Validation("num_levels must be at least 1".into()));
    }
    let all: Vec<u32> = (1..=layout.positions.len() as u32).collect();
    let root = SuperNode { members: all, junction: None, parent_chain: vec![], is_terminal: false };
    let mut levels = vec![vec![root]];
    for _ in 0..num_levels {
        let mut next_level = Vec::new();
        let parents = levels.last_mut().expect("level 0");
        for parent in parents.iter_mut() {
            let pool = parent.pool();
            if pool.is_empty() {
                parent.is_terminal = true;
                continue;
            }
            let mut chain = parent.parent_chain.clone();
            chain.push(parent.junction.unwrap_or(0));
            let pts: Vec<Point> = pool.iter().map(|&m| layout.position(m)).collect();
            let k = select_cluster_count(&pts, opts.restarts);
            let km = kmeans(&pts, k, opts.seed)?;
            for idx in km.clusters() {
                let members: Vec<u32> = idx.iter().map(|&i| pool[i]).collect();
                let junction = pick_junction(layout, &members);
                next_level.push(SuperNode {
                    members,
                    junction: Some(junction),
                    parent_chain: chain.clone(),
                    is_terminal: false,
                });
            }
        }
        if next_level.is_empty() {
            break;
        }
        levels.push(next_level);
    }
    for sn in levels.last_mut().expect("nonempty") {
        sn.is_terminal = sn.pool().is_empty();
    }
    Ok(SuperNodeTree { levels, requested_levels: num_levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn six_device_layout() -> DeviceLayout {
        DeviceLayout {
            positions: vec![
                [2.0, 0.0, 0.0],
                [2.0, 1.0, 0.0],
                [3.0, 1.0, 0.0],
                [12.0, 12.0, 0.0],
                [15.0, 10.0, 0.0],
                [13.0, 13.0, 0.0],
            ],
            heat_loads_kw: vec![5.0; 6],
        }
    }

    #[test]
    fn kmeans_separates_the_two_groups_for_any_seed() {
        let l = six_device_layout();
        for seed in 0..20 {
            let km = kmeans(&l.positions, 2, seed).unwrap();
            assert_eq!(km.assignments, vec![0, 0, 0, 1, 1, 1], "seed {seed}");
        }
        // Oracle: the chosen split has lower inertia than any other 2-partition.
        let km = kmeans(&l.positions, 2, 0).unwrap();
        for mask in 1u32..(1 << 6) - 1 {
            let a: Vec<usize> = (0..6).map(|i| (mask >> i & 1) as usize).collect();
            let mut inertia = 0.0;
            for c in 0..2 {
                let pts: Vec<Point> =
                    (0..6).filter(|&i| a[i] == c).map(|i| l.positions[i]).collect();
                let cen = centroid(&pts);
                inertia += pts.iter().map(|p| dist2(p, &cen)).sum::<f64>();
            }
            assert!(km.inertia <= inertia + 1e-9);
        }
    }

    #[test]
    fn kmeans_edge_cases() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 5.0, 5.0]];
        let km = kmeans(&pts, 3, 7).unwrap();
        assert_eq!(km.assignments, vec![0, 1, 2]);
        let same = vec![[1.0, 2.0, 3.0]; 4];
        let km = kmeans(&same, 1, 0).unwrap();
        assert_eq!(km.centroids, vec![[1.0, 2.0, 3.0]]);
        assert!(kmeans(&same, 5, 0).is_err());
        assert!(kmeans(&[], 1, 0).is_err());
    }

    #[test]
    fn cluster_count_selection() {
        assert_eq!(select_cluster_count(&six_device_layout().positions, 10), 2);
        assert_eq!(select_cluster_count(&[[0.0; 3]], 10), 1);
        let pairs = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [50.0, 0.0, 0.0], [51.0, 0.0, 0.0]];
        assert_eq!(select_cluster_count(&pairs, 10), 2);
        assert_eq!(select_cluster_count(&[[3.0, 3.0, 3.0]; 5], 10), 1);
    }

    #[test]
    fn six_device_tree() {
        let l = six_device_layout();
        let t = build_supernode_tree(&l, 1, ClusterOptions::default()).unwrap();
        assert_eq!(t.depth(), 1);
        let lvl = &t.levels[1];
        assert_eq!(lvl.len(), 2);
        assert_eq!(lvl[0].members, vec![1, 2, 3]);
        assert_eq!(lvl[0].junction, Some(2));
        assert_eq!(lvl[1].members, vec![4, 5, 6]);
        // 4 and 6 are equidistant from the centroid; the smaller label wins.
        assert_eq!(lvl[1].junction, Some(4));
        assert_eq!(lvl[0].parent_chain, vec![0]);
    }

    #[test]
    fn single_device_tree_and_early_stop() {
        let l = DeviceLayout { positions: vec![[1.0, 1.0, 1.0]], heat_loads_kw: vec![] };
        let t = build_supernode_tree(&l, 3, ClusterOptions::default()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.levels[1][0].junction, Some(1));
        assert!(t.levels[1][0].is_terminal);
    }
}
