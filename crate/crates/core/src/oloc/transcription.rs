//! Direct collocation of the control problem on a uniform grid in scaled
//! time `tau = t / t_f`.
//!
//! Every grid point carries `z = [theta; mu; delta; v]`; the final time is
//! the last decision variable. Constraints are, in order: initial
//! temperatures, optional fixed initial flows, dependent-flow definitions at
//! every point, and collocation defects per segment.

use serde::{Deserialize, Serialize};

use super::problem::OlocProblem;
use crate::nlp::Nlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Trapezoidal,
    /// Separated form with midpoint variables.
    HermiteSimpson,
}

/// Linear combination `sum c_p s_p - alpha * t_f * sum w_p F(z_p)` over points.
#[derive(Debug, Clone)]
struct Defect {
    terms: Vec<(usize, f64, f64)>,
}

/// Sparse pattern of one dynamics row in point-local columns.
#[derive(Debug, Clone)]
struct RowTemplate {
    cols: Vec<usize>,
    lin: Vec<(usize, f64)>,
    /// `(bilinear index, pos tail, pos head, pos var)`.
    bil: Vec<(usize, usize, usize, usize)>,
    /// Position of the control for flow rows.
    control: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Transcription<'a> {
    pub problem: &'a OlocProblem,
    pub scheme: Scheme,
    pub segments: usize,
    /// Scaled time of every grid point.
    pub tau: Vec<f64>,
    /// Quadrature weights on the grid.
    pub quad: Vec<f64>,
    /// Time scale of the final-time variable, s.
    pub t_ref: f64,
    /// Variables per grid point.
    pub np: usize,
    defects: Vec<Defect>,
    templates: Vec<RowTemplate>,
    guess: Vec<f64>,
    n_fixed_flow_rows: usize,
}

impl<'a> Transcription<'a> {
    pub fn new(problem: &'a OlocProblem, segments: usize, scheme: Scheme, t_ref: f64) -> Self {
        assert!(segments >= 1, "at least one segment");
        let (n, nf, nd) = (problem.n, problem.nf, problem.nd);
        let np = n + 2 * nf + nd;
        let h = 1.0 / segments as f64;
        let (tau, quad, defects) = match scheme {
            Scheme::Trapezoidal => {
                let tau: Vec<f64> = (0..=segments).map(|k| k as f64 * h).collect();
                let mut quad = vec![h; segments + 1];
                quad[0] = h / 2.0;
                quad[segments] = h / 2.0;
                let defects = (0..segments)
                    .map(|k| Defect { terms: vec![(k, -1.0, h / 2.0), (k + 1, 1.0, h / 2.0)] })
                    .collect();
                (tau, quad, defects)
            }
            Scheme::HermiteSimpson => {
                let tau: Vec<f64> = (0..=2 * segments).map(|k| k as f64 * h / 2.0).collect();
                let mut quad = vec![0.0; 2 * segments + 1];
                let mut defects = Vec::with_capacity(2 * segments);
                for k in 0..segments {
                    let (a, m, b) = (2 * k, 2 * k + 1, 2 * k + 2);
                    quad[a] += h / 6.0;
                    quad[m] += 4.0 * h / 6.0;
                    quad[b] += h / 6.0;
                    defects.push(Defect { terms: vec![(a, -0.5, h / 8.0), (m, 1.0, 0.0), (b, -0.5, -h / 8.0)] });
                    defects.push(Defect {
                        terms: vec![(a, -1.0, h / 6.0), (m, 0.0, 4.0 * h / 6.0), (b, 1.0, h / 6.0)],
                    });
                }
                (tau, quad, defects)
            }
        };
        let templates = (0..n + nf).map(|r| row_template(problem, r)).collect();
        let mut t = Self {
            problem,
            scheme,
            segments,
            tau,
            quad,
            t_ref,
            np,
            defects,
            templates,
            guess: Vec::new(),
            n_fixed_flow_rows: if problem.options.fix_initial_flows { nf } else { 0 },
        };
        t.guess = vec![0.0; t.n_vars()];
        t
    }

    pub fn n_points(&self) -> usize {
        self.tau.len()
    }

    pub fn tf_index(&self) -> usize {
        self.n_points() * self.np
    }

    pub fn set_initial_guess(&mut self, x: Vec<f64>) {
        assert_eq!(x.len(), self.n_vars());
        self.guess = x;
    }

    /// Decision vector from per-point states, independent flows (kg/s) and
    /// the final time (s). Dependent flows follow from the flows; controls
    /// from their differences.
    pub fn pack(&self, temps: &[Vec<f64>], indep: &[Vec<f64>], t_f: f64) -> Vec<f64> {
        let p = self.problem;
        let (n, nf) = (p.n, p.nf);
        let mp = p.pump_flow();
        let mut x = vec![0.0; self.n_vars()];
        for k in 0..self.n_points() {
            let z = &mut x[k * self.np..(k + 1) * self.np];
            for i in 0..n {
                z[i] = p.to_theta(temps[k][i]);
            }
            let mu: Vec<f64> = indep[k].iter().map(|m| m / mp).collect();
            z[n..n + nf].copy_from_slice(&mu);
            for (d, (row, off)) in p.m_rows.iter().zip(&p.offset).enumerate() {
                z[n + nf + d] = off + row.iter().zip(&mu).map(|(a, m)| a * m).sum::<f64>();
            }
        }
        x[self.tf_index()] = t_f / self.t_ref;
        x
    }

    /// Linear interpolation of a solution on another grid onto this one.
    pub fn interpolate(&self, tau: &[f64], x: &[f64]) -> Vec<f64> {
        let np = self.np;
        let mut out = vec![0.0; self.n_vars()];
        for (k, &t) in self.tau.iter().enumerate() {
            let j = tau.partition_point(|&s| s <= t).clamp(1, tau.len() - 1) - 1;
            let w = ((t - tau[j]) / (tau[j + 1] - tau[j])).clamp(0.0, 1.0);
            for c in 0..np {
                out[k * np + c] = (1.0 - w) * x[j * np + c] + w * x[(j + 1) * np + c];
            }
        }
        out[self.tf_index()] = x[tau.len() * np];
        out
    }

    fn point<'b>(&self, x: &'b [f64], k: usize) -> &'b [f64] {
        let s = k * self.np;
        &x[s..s + self.np]
    }

    fn tf(&self, x: &[f64]) -> f64 {
        x[self.tf_index()]
    }

    fn load_terms(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let t_end = self.tf(x) * self.t_ref;
        let p = self.problem;
        if p.loads.breaks.is_empty() {
            let b = p.load_term(0.0);
            return vec![b; self.n_points()];
        }
        self.tau.iter().map(|t| p.load_term(t * t_end)).collect()
    }

    /// Dynamics `F(z)` of every differential row at point `k`.
    fn rates(&self, z: &[f64], b: &[f64]) -> Vec<f64> {
        let p = self.problem;
        let (n, nf, nd) = (p.n, p.nf, p.nd);
        let mut out = p.theta_rate(&z[..n], &z[n..n + nf + nd], b);
        out.extend(z[n + nf + nd..].iter().map(|v| p.beta * v));
        out
    }

    /// Gradient of dynamics row `r` at `z`, aligned with its template.
    fn row_gradient(&self, r: usize, z: &[f64], out: &mut Vec<f64>) {
        let t = &self.templates[r];
        out.clear();
        out.resize(t.cols.len(), 0.0);
        for &(pos, a) in &t.lin {
            out[pos] += a;
        }
        let n = self.problem.n;
        for &(e, pt, ph, pv) in &t.bil {
            let b = &self.problem.bil[e];
            let w = z[n + b.var];
            out[pt] += b.k * w;
            out[ph] -= b.k * w;
            out[pv] += b.k * (z[b.tail] - z[b.head]);
        }
        if let Some(pos) = t.control {
            out[pos] += self.problem.beta;
        }
    }

    fn first_defect_row(&self) -> usize {
        self.problem.n + self.n_fixed_flow_rows + self.n_points() * self.problem.nd
    }

    /// Streams Jacobian entries `(row, col, value)` in a fixed order.
    fn jacobian_entries(&self, x: &[f64], emit: &mut impl FnMut(usize, usize, f64)) {
        let p = self.problem;
        let (n, nf) = (p.n, p.nf);
        let np = self.np;
        let mut row = 0;
        for i in 0..n {
            emit(row, i, 1.0);
            row += 1;
        }
        for j in 0..self.n_fixed_flow_rows {
            emit(row, n + j, 1.0);
            row += 1;
        }
        for k in 0..self.n_points() {
            for (d, mrow) in p.m_rows.iter().enumerate() {
                emit(row, k * np + n + nf + d, 1.0);
                for (j, &a) in mrow.iter().enumerate() {
                    if a != 0.0 {
                        emit(row, k * np + n + j, -a);
                    }
                }
                row += 1;
            }
        }
        let tf = self.tf(x);
        let tfi = self.tf_index();
        let alpha = self.t_ref;
        let b = self.load_terms(x);
        let rates: Vec<Vec<f64>> = (0..self.n_points()).map(|k| self.rates(self.point(x, k), &b[k])).collect();
        let mut grad = Vec::new();
        for d in &self.defects {
            for r in 0..n + nf {
                let t = &self.templates[r];
                let mut d_tf = 0.0;
                for &(k, c, w) in &d.terms {
                    let z = self.point(x, k);
                    self.row_gradient(r, z, &mut grad);
                    for (pos, &col) in t.cols.iter().enumerate() {
                        let self_term = if col == r { c } else { 0.0 };
                        emit(row, k * np + col, self_term - alpha * tf * w * grad[pos]);
                    }
                    d_tf -= alpha * w * rates[k][r];
                }
                emit(row, tfi, d_tf);
                row += 1;
            }
        }
    }

    fn hessian_entries(&self, x: &[f64], of: f64, lam: &[f64], emit: &mut impl FnMut(usize, usize, f64)) {
        let p = self.problem;
        let (n, nf, nd) = (p.n, p.nf, p.nd);
        let np = self.np;
        let tfi = self.tf_index();
        let tf = self.tf(x);
        let rho = p.rho();
        if nf > 0 {
            for (k, &q) in self.quad.iter().enumerate() {
                for j in 0..nf {
                    let col = k * np + n + nf + nd + j;
                    emit(col, col, of * 2.0 * rho * tf * q);
                    emit(tfi, col, of * 2.0 * rho * q * x[col]);
                }
            }
        }
        let alpha = self.t_ref;
        let mut row = self.first_defect_row();
        let mut grad = Vec::new();
        for d in &self.defects {
            for r in 0..n + nf {
                let l = lam[row];
                let t = &self.templates[r];
                for &(k, _, w) in &d.terms {
                    if w == 0.0 {
                        continue;
                    }
                    let base = k * np;
                    for &(e, _, _, _) in &t.bil {
                        let b = &p.bil[e];
                        let s = alpha * tf * l * w * b.k;
                        emit(base + n + b.var, base + b.tail, -s);
                        emit(base + n + b.var, base + b.head, s);
                    }
                    self.row_gradient(r, self.point(x, k), &mut grad);
                    for (pos, &col) in t.cols.iter().enumerate() {
                        emit(tfi, base + col, -alpha * l * w * grad[pos]);
                    }
                }
                row += 1;
            }
        }
    }

    /// Scaled penalty integral `rho * sum_k q_k |v_k|^2` (per unit t_f).
    pub fn penalty_density(&self, x: &[f64]) -> f64 {
        let p = self.problem;
        if p.nf == 0 {
            return 0.0;
        }
        let off = p.n + p.nf + p.nd;
        let s: f64 = self
            .quad
            .iter()
            .enumerate()
            .map(|(k, q)| q * self.point(x, k)[off..].iter().map(|v| v * v).sum::<f64>())
            .sum();
        p.rho() * s
    }
}

fn row_template(p: &OlocProblem, r: usize) -> RowTemplate {
    let (n, nf, nd) = (p.n, p.nf, p.nd);
    if r >= n {
        let j = r - n;
        let cols = vec![r, n + nf + nd + j];
        return RowTemplate { cols, lin: vec![], bil: vec![], control: Some(1) };
    }
    let mut cols: Vec<usize> = vec![r];
    cols.extend(p.lin[r].iter().map(|&(j, _)| j));
    let edges: Vec<usize> = p.bil.iter().enumerate().filter(|(_, b)| b.head == r).map(|(e, _)| e).collect();
    for &e in &edges {
        cols.extend([p.bil[e].tail, p.bil[e].head, n + p.bil[e].var]);
    }
    cols.sort_unstable();
    cols.dedup();
    let pos = |c: usize| cols.binary_search(&c).expect("column in template");
    let lin = p.lin[r].iter().map(|&(j, a)| (pos(j), a)).collect();
    let bil = edges
        .iter()
        .map(|&e| {
            let b = &p.bil[e];
            (e, pos(b.tail), pos(b.head), pos(n + b.var))
        })
        .collect();
    RowTemplate { cols, lin, bil, control: None }
}

impl Nlp for Transcription<'_> {
    fn n_vars(&self) -> usize {
        self.n_points() * self.np + 1
    }

    fn n_cons(&self) -> usize {
        self.first_defect_row() + self.defects.len() * self.problem.state_dim()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.problem;
        let (n, nf, nd) = (p.n, p.nf, p.nd);
        let mut lo = Vec::with_capacity(self.n_vars());
        let mut hi = Vec::with_capacity(self.n_vars());
        for _ in 0..self.n_points() {
            lo.extend(std::iter::repeat_n(f64::NEG_INFINITY, n));
            hi.extend(std::iter::repeat_n(1.0, n));
            lo.extend(std::iter::repeat_n(0.0, nf + nd));
            hi.extend(std::iter::repeat_n(1.0, nf + nd));
            lo.extend(std::iter::repeat_n(-1.0, nf));
            hi.extend(std::iter::repeat_n(1.0, nf));
        }
        lo.push(p.options.t_f_min / self.t_ref);
        hi.push(p.options.t_f_max / self.t_ref);
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.guess.clone()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let tf = self.tf(x);
        -tf + tf * self.penalty_density(x)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        let tfi = self.tf_index();
        g[tfi] = -1.0 + self.penalty_density(x);
        let p = self.problem;
        if p.nf > 0 {
            let tf = self.tf(x);
            let off = p.n + p.nf + p.nd;
            for (k, &q) in self.quad.iter().enumerate() {
                for j in 0..p.nf {
                    let col = k * self.np + off + j;
                    g[col] = 2.0 * p.rho() * tf * q * x[col];
                }
            }
        }
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        let p = self.problem;
        let (n, nf) = (p.n, p.nf);
        let mut row = 0;
        let z0 = self.point(x, 0);
        for i in 0..n {
            c[row] = z0[i] - p.theta_init[i];
            row += 1;
        }
        for j in 0..self.n_fixed_flow_rows {
            c[row] = z0[n + j] - p.mu_equal[j];
            row += 1;
        }
        for k in 0..self.n_points() {
            let z = self.point(x, k);
            for (d, (mrow, off)) in p.m_rows.iter().zip(&p.offset).enumerate() {
                let dep = off + mrow.iter().zip(&z[n..n + nf]).map(|(a, m)| a * m).sum::<f64>();
                c[row] = z[n + nf + d] - dep;
                row += 1;
            }
        }
        let tf = self.tf(x);
        let b = self.load_terms(x);
        let rates: Vec<Vec<f64>> = (0..self.n_points()).map(|k| self.rates(self.point(x, k), &b[k])).collect();
        for d in &self.defects {
            for r in 0..n + nf {
                let mut v = 0.0;
                for &(k, coef, w) in &d.terms {
                    v += coef * self.point(x, k)[r] - self.t_ref * tf * w * rates[k][r];
                }
                c[row] = v;
                row += 1;
            }
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        self.jacobian_entries(&self.guess, &mut |r, c, _| s.push((r, c)));
        s
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.jacobian_entries(x, &mut |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        let lam = vec![0.0; self.n_cons()];
        self.hessian_entries(&self.guess, 1.0, &lam, &mut |r, c, _| s.push((r, c)));
        s
    }

    fn hessian_values(&self, x: &[f64], of: f64, lambda: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.hessian_entries(x, of, lambda, &mut |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }
}
