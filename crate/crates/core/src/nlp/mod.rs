//! Sparse nonlinear programming by a primal-dual interior-point method.
//!
//! Problems have the form
//!
//! ```text
//! min f(x)  s.t.  c(x) = 0,  lo <= x <= hi
//! ```
//!
//! with exact first and second derivatives supplied in triplet form.

pub mod band;
mod ipm;

pub use ipm::{solve, IpmOptions, IpmResult, IpmStatus, WarmStart};

/// Problem callbacks. Triplet structures are fixed for the lifetime of the
/// problem; duplicate entries are summed.
pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    /// Variable bounds, infinite where absent.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);
    /// Lower triangle (`row >= col`) of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * H_f + sum(lambda_i * H_ci)`.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);
}

/// Central-difference check of the objective gradient and constraint
/// Jacobian at `x`; returns the worst relative error.
pub fn derivative_check<P: Nlp + ?Sized>(p: &P, x: &[f64], step: f64) -> f64 {
    let n = p.n_vars();
    let m = p.n_cons();
    let mut g = vec![0.0; n];
    p.gradient(x, &mut g);
    let js = p.jacobian_structure();
    let mut jv = vec![0.0; js.len()];
    p.jacobian_values(x, &mut jv);
    let mut jac = vec![vec![0.0; m]; n];
    for (&(r, c), v) in js.iter().zip(&jv) {
        jac[c][r] += v;
    }
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..n {
        let h = step * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let fp = p.objective(&xp);
        p.constraints(&xp, &mut cp);
        xp[j] = x[j] - h;
        let fm = p.objective(&xp);
        p.constraints(&xp, &mut cm);
        xp[j] = x[j];
        worst = worst.max(rel(g[j], (fp - fm) / (2.0 * h)));
        for r in 0..m {
            worst = worst.max(rel(jac[j][r], (cp[r] - cm[r]) / (2.0 * h)));
        }
    }
    worst
}

/// Central-difference check of the Lagrangian Hessian against differences
/// of the gradient and Jacobian; returns the worst relative error.
pub fn hessian_check<P: Nlp + ?Sized>(p: &P, x: &[f64], lambda: &[f64], step: f64) -> f64 {
    let n = p.n_vars();
    let grad_l = |x: &[f64]| {
        let mut g = vec![0.0; n];
        p.gradient(x, &mut g);
        let js = p.jacobian_structure();
        let mut jv = vec![0.0; js.len()];
        p.jacobian_values(x, &mut jv);
        for (&(r, c), v) in js.iter().zip(&jv) {
            g[c] += lambda[r] * v;
        }
        g
    };
    let hs = p.hessian_structure();
    let mut hv = vec![0.0; hs.len()];
    p.hessian_values(x, 1.0, lambda, &mut hv);
    let mut dense = vec![vec![0.0; n]; n];
    for (&(r, c), v) in hs.iter().zip(&hv) {
        dense[r][c] += v;
        if r != c {
            dense[c][r] += v;
        }
    }
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let gp = grad_l(&xp);
        xp[j] = x[j] - h;
        let gm = grad_l(&xp);
        xp[j] = x[j];
        for i in 0..n {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            worst = worst.max((dense[i][j] - fd).abs() / (1.0 + fd.abs().max(dense[i][j].abs())));
        }
    }
    worst
}
