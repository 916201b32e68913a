//! Sparse square solves through reordering to a banded matrix with a dense
//! border.
//!
//! The symmetric sparsity pattern is split into "border" nodes (rows whose
//! degree is far above the rest, such as a free final time coupling to every
//! grid point) and the remainder, which is ordered with reverse
//! Cuthill-McKee and factored by banded LU with partial pivoting. The border
//! is eliminated through a small dense Schur complement.

use std::collections::VecDeque;

/// Returned when a pivot vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// Reverse Cuthill-McKee order of an undirected graph given as adjacency
/// lists. Every component starts from a pseudo-peripheral node.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |v: usize| adj[v].len();
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&v| (degree(v), v));
    for &s in &seeds {
        if visited[s] {
            continue;
        }
        let start = pseudo_peripheral(adj, s, &visited);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree(w), w));
            next.dedup();
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize, blocked: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = blocked.to_vec();
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().expect("nonempty") {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(adj: &[Vec<usize>], start: usize, blocked: &[bool]) -> usize {
    let mut v = start;
    let mut ecc = bfs_levels(adj, v, blocked).len();
    for _ in 0..8 {
        let levels = bfs_levels(adj, v, blocked);
        let last = levels.last().expect("nonempty");
        let w = *last.iter().min_by_key(|&&w| (adj[w].len(), w)).expect("nonempty");
        let e = bfs_levels(adj, w, blocked).len();
        if e <= ecc {
            break;
        }
        ecc = e;
        v = w;
    }
    v
}

/// Banded LU with partial pivoting, LINPACK-style row interchanges.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`, the extra `kl`
/// diagonals holding fill from pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    lower: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width], lower: vec![0.0; n * kl], piv: vec![0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn factor(&mut self) -> Result<(), Singular> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        // Pivots are judged against the largest entry of their own column.
        let mut col_max = vec![0.0f64; n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                col_max[j] = col_max[j].max(self.data[self.idx(i, j)].abs());
            }
        }
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + ku + kl).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.idx(i, i)].abs();
            for r in i + 1..=last_row {
                let a = self.data[self.idx(r, i)].abs();
                if a > best {
                    best = a;
                    p = r;
                }
            }
            if !(best > 1e-14 * col_max[i].max(1e-300)) {
                return Err(Singular);
            }
            self.piv[i] = p;
            if p != i {
                for j in i..=last_col {
                    let (a, b) = (self.idx(i, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(i, i)];
            for r in i + 1..=last_row {
                let k = self.idx(r, i);
                let m = self.data[k] / d;
                self.data[k] = 0.0;
                self.lower[i * kl + (r - i - 1)] = m;
                if m != 0.0 {
                    let (ri, ii) = (self.idx(r, i + 1), self.idx(i, i + 1));
                    for off in 0..last_col - i {
                        self.data[ri + off] -= m * self.data[ii + off];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for i in 0..n {
            b.swap(i, self.piv[i]);
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.lower[i * kl + (r - i - 1)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku + kl).min(n - 1) {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

/// Square sparse system with a fixed symmetric pattern, factored as a
/// bordered band.
#[derive(Debug, Clone)]
pub struct BorderedBand {
    n: usize,
    /// Original index to position in the band, or `usize::MAX` for border.
    pos: Vec<usize>,
    /// Original index to border slot.
    bpos: Vec<usize>,
    border: Vec<usize>,
    lu: BandLu,
    /// Column block `B` (band rows x border), border-major.
    b_cols: Vec<Vec<f64>>,
    /// Row block `C` (border x band columns), border-major.
    c_rows: Vec<Vec<f64>>,
    d: Vec<f64>,
    /// `A^-1 B`, border-major.
    ainv_b: Vec<Vec<f64>>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl BorderedBand {
    /// `pattern` lists structurally nonzero `(i, j)`; it is symmetrized.
    pub fn new(n: usize, pattern: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in pattern {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut degrees: Vec<usize> = adj.iter().map(Vec::len).collect();
        degrees.sort_unstable();
        let median = degrees.get(n / 2).copied().unwrap_or(0);
        let cut = (8 * median + 16).max(n / 8);
        let border: Vec<usize> = if n > 64 { (0..n).filter(|&v| adj[v].len() > cut).collect() } else { vec![] };
        let mut is_border = vec![false; n];
        border.iter().for_each(|&v| is_border[v] = true);

        let inner: Vec<usize> = (0..n).filter(|&v| !is_border[v]).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &v) in inner.iter().enumerate() {
            local[v] = k;
        }
        let sub_adj: Vec<Vec<usize>> = inner
            .iter()
            .map(|&v| adj[v].iter().filter(|&&w| !is_border[w]).map(|&w| local[w]).collect())
            .collect();
        let order = reverse_cuthill_mckee(&sub_adj);
        let mut pos = vec![usize::MAX; n];
        for (p, &k) in order.iter().enumerate() {
            pos[inner[k]] = p;
        }
        let mut bw = 0;
        for &(i, j) in pattern {
            if pos[i] != usize::MAX && pos[j] != usize::MAX {
                bw = bw.max(pos[i].abs_diff(pos[j]));
            }
        }
        let mut bpos = vec![usize::MAX; n];
        for (k, &v) in border.iter().enumerate() {
            bpos[v] = k;
        }
        let m = inner.len();
        let nb = border.len();
        Self {
            n,
            pos,
            bpos,
            lu: BandLu::new(m, bw, bw),
            b_cols: vec![vec![0.0; m]; nb],
            c_rows: vec![vec![0.0; m]; nb],
            d: vec![0.0; nb * nb],
            ainv_b: vec![vec![0.0; m]; nb],
            border,
            schur: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn border_len(&self) -> usize {
        self.border.len()
    }

    pub fn bandwidth(&self) -> usize {
        self.lu.bandwidths().0
    }

    pub fn clear(&mut self) {
        self.lu.clear();
        self.b_cols.iter_mut().chain(self.c_rows.iter_mut()).for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
        self.d.iter_mut().for_each(|x| *x = 0.0);
        self.schur = None;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let nb = self.border.len();
        match (self.pos[i], self.pos[j]) {
            (pi, pj) if pi != usize::MAX && pj != usize::MAX => self.lu.add(pi, pj, v),
            (pi, _) if pi != usize::MAX => self.b_cols[self.bpos[j]][pi] += v,
            (_, pj) if pj != usize::MAX => self.c_rows[self.bpos[i]][pj] += v,
            _ => self.d[self.bpos[i] * nb + self.bpos[j]] += v,
        }
    }

    pub fn factor(&mut self) -> Result<(), Singular> {
        self.lu.factor()?;
        let nb = self.border.len();
        if nb == 0 {
            return Ok(());
        }
        for k in 0..nb {
            let mut col = self.b_cols[k].clone();
            self.lu.solve(&mut col);
            self.ainv_b[k] = col;
        }
        let mut s = nalgebra::DMatrix::zeros(nb, nb);
        for r in 0..nb {
            for c in 0..nb {
                let cx: f64 = self.c_rows[r].iter().zip(&self.ainv_b[c]).map(|(a, b)| a * b).sum();
                s[(r, c)] = self.d[r * nb + c] - cx;
            }
        }
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lu = s.lu();
        let umin = (0..nb).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(umin > scale.max(1e-300) * 1e-14) {
            return Err(Singular);
        }
        self.schur = Some(lu);
        Ok(())
    }

    /// Solves in place; `rhs` and the result use original indexing.
    pub fn solve(&self, rhs: &mut [f64]) {
        let m = self.lu.dim();
        let mut y = vec![0.0; m];
        let mut r2 = nalgebra::DVector::zeros(self.border.len());
        for (i, &v) in rhs.iter().enumerate() {
            match self.pos[i] {
                usize::MAX => r2[self.bpos[i]] = v,
                p => y[p] = v,
            }
        }
        self.lu.solve(&mut y);
        if let Some(lu) = &self.schur {
            for (k, row) in self.c_rows.iter().enumerate() {
                r2[k] -= row.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            }
            let x2 = lu.solve(&r2).expect("factored Schur complement");
            for (k, col) in self.ainv_b.iter().enumerate() {
                for (yi, c) in y.iter_mut().zip(col) {
                    *yi -= c * x2[k];
                }
            }
            r2 = x2;
        }
        for (i, v) in rhs.iter_mut().enumerate() {
            *v = match self.pos[i] {
                usize::MAX => r2[self.bpos[i]],
                p => y[p],
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn residual(n: usize, entries: &[(usize, usize, f64)], x: &[f64], b: &[f64]) -> f64 {
        let mut r = b.to_vec();
        for &(i, j, v) in entries {
            r[i] -= v * x[j];
        }
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / n as f64
    }

    #[test]
    fn band_lu_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, kl, ku) = (30, 3, 2);
        let mut lu = BandLu::new(n, kl, ku);
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal forces pivoting
                let v: f64 = rng.random_range(-1.0..1.0) * if i == j { 0.01 } else { 1.0 };
                lu.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        lu.factor().unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        lu.solve(&mut x);
        let want = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for (a, w) in x.iter().zip(want.iter()) {
            assert!((a - w).abs() < 1e-9 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut lu = BandLu::new(3, 1, 1);
        lu.add(0, 0, 1.0);
        lu.add(1, 1, 0.0);
        lu.add(2, 2, 1.0);
        assert_eq!(lu.factor(), Err(Singular));
    }

    #[test]
    fn rcm_recovers_a_path() {
        // Path 0-1-...-9 relabeled randomly.
        let perm = [7, 2, 9, 0, 4, 1, 8, 3, 6, 5];
        let mut adj = vec![Vec::new(); 10];
        for w in perm.windows(2) {
            adj[w[0]].push(w[1]);
            adj[w[1]].push(w[0]);
        }
        let order = reverse_cuthill_mckee(&adj);
        let mut pos = [0; 10];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        for w in perm.windows(2) {
            assert_eq!(pos[w[0]].abs_diff(pos[w[1]]), 1);
        }
    }

    #[test]
    fn bordered_system_with_dense_row() {
        // Chain structure plus one variable coupled to everything.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let hub = 57;
        let mut entries = Vec::new();
        for i in 0..n {
            if i == hub {
                continue;
            }
            entries.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
            let j = (i * 37) % n; // scrambled chain neighbour
            let k = ((i + 1) * 37) % n;
            if j != hub && k != hub && i + 1 < n {
                let v = rng.random_range(-1.0..1.0);
                entries.push((j, k, v));
                entries.push((k, j, rng.random_range(-1.0..1.0)));
            }
            entries.push((i, hub, rng.random_range(-0.5..0.5)));
            entries.push((hub, i, rng.random_range(-0.5..0.5)));
        }
        entries.push((hub, hub, 3.0));
        let pattern: Vec<(usize, usize)> = entries.iter().map(|&(i, j, _)| (i, j)).collect();
        let mut sys = BorderedBand::new(n, &pattern);
        assert_eq!(sys.border_len(), 1);
        assert!(sys.bandwidth() < 10, "bandwidth {}", sys.bandwidth());
        for &(i, j, v) in &entries {
            sys.add(i, j, v);
        }
        sys.factor().unwrap();
        let b: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).cos()).collect();
        let mut x = b.clone();
        sys.solve(&mut x);
        assert!(residual(n, &entries, &x, &b) < 1e-13);
    }
}
