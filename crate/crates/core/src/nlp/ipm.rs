use std::fmt;

use super::band::BorderedBand;
use super::Nlp;

#[derive(Debug, Clone)]
pub struct IpmOptions {
    /// Scaled optimality tolerance.
    pub tol: f64,
    /// Absolute constraint violation tolerance.
    pub constr_viol_tol: f64,
    pub acceptable_tol: f64,
    /// Consecutive acceptable iterates before stopping early.
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Relative push of the starting point into the bounds.
    pub bound_push: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            constr_viol_tol: 1e-6,
            acceptable_tol: 1e-4,
            acceptable_iter: 15,
            max_iter: 400,
            mu_init: 0.1,
            bound_push: 1e-2,
            verbose: std::env::var_os("THERMOFORGE_IPM_TRACE").is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    /// Stopped at a point meeting the looser acceptable tolerance.
    Acceptable,
    MaxIterations,
    LineSearchFailure,
    NumericalFailure,
}

impl IpmStatus {
    pub fn is_success(self) -> bool {
        matches!(self, IpmStatus::Converged | IpmStatus::Acceptable)
    }
}

impl fmt::Display for IpmStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IpmStatus::Converged => "converged",
            IpmStatus::Acceptable => "acceptable",
            IpmStatus::MaxIterations => "max iterations",
            IpmStatus::LineSearchFailure => "line search failure",
            IpmStatus::NumericalFailure => "numerical failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Scaled dual infeasibility at exit.
    pub dual_inf: f64,
    /// Max-norm constraint violation at exit.
    pub primal_inf: f64,
    pub complementarity: f64,
    pub mu: f64,
}

/// Starting data overriding the problem's initial point.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub mu: Option<f64>,
}

struct Kkt {
    n: usize,
    m: usize,
    sys: BorderedBand,
    hs: Vec<(usize, usize)>,
    js: Vec<(usize, usize)>,
}

impl Kkt {
    fn new(n: usize, m: usize, hs: Vec<(usize, usize)>, js: Vec<(usize, usize)>) -> Self {
        let mut pattern: Vec<(usize, usize)> = (0..n + m).map(|i| (i, i)).collect();
        for &(r, c) in &hs {
            pattern.push((r, c));
            pattern.push((c, r));
        }
        for &(r, c) in &js {
            pattern.push((n + r, c));
            pattern.push((c, n + r));
        }
        Self { n, m, sys: BorderedBand::new(n + m, &pattern), hs, js }
    }

    fn factor(&mut self, hv: &[f64], jv: &[f64], sigma: &[f64], dw: f64, dc: f64) -> bool {
        let s = &mut self.sys;
        s.clear();
        for (&(r, c), &v) in self.hs.iter().zip(hv) {
            s.add(r, c, v);
            if r != c {
                s.add(c, r, v);
            }
        }
        for (i, &sg) in sigma.iter().enumerate() {
            s.add(i, i, sg + dw);
        }
        for (&(r, c), &v) in self.js.iter().zip(jv) {
            s.add(self.n + r, c, v);
            s.add(c, self.n + r, v);
        }
        if dc != 0.0 {
            for r in 0..self.m {
                s.add(self.n + r, self.n + r, -dc);
            }
        }
        s.factor().is_ok()
    }
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
    has_lo: Vec<bool>,
    has_hi: Vec<bool>,
}

impl Bounds {
    fn slacks(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sl = x.iter().zip(&self.lo).zip(&self.has_lo).map(|((x, l), &h)| if h { x - l } else { 1.0 }).collect();
        let su = x.iter().zip(&self.hi).zip(&self.has_hi).map(|((x, u), &h)| if h { u - x } else { 1.0 }).collect();
        (sl, su)
    }

    fn barrier(&self, x: &[f64], mu: f64) -> f64 {
        let mut b = 0.0;
        for i in 0..x.len() {
            if self.has_lo[i] {
                b -= mu * (x[i] - self.lo[i]).ln();
            }
            if self.has_hi[i] {
                b -= mu * (self.hi[i] - x[i]).ln();
            }
        }
        b
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest step in `(0, 1]` keeping `v + a dv >= (1 - tau) v` for positive `v`.
fn max_step(v: &[f64], dv: &[f64], active: &[bool], tau: f64) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if active[i] && dv[i] < 0.0 {
            a = a.min(-tau * v[i] / dv[i]);
        }
    }
    a
}

/// Minimizes `p` from its initial point (or `warm`).
pub fn solve<P: Nlp + ?Sized>(p: &P, opts: &IpmOptions, warm: &WarmStart) -> IpmResult {
    let n = p.n_vars();
    let m = p.n_cons();
    let (lo, hi) = p.bounds();
    let has_lo: Vec<bool> = lo.iter().map(|v| v.is_finite()).collect();
    let has_hi: Vec<bool> = hi.iter().map(|v| v.is_finite()).collect();
    let bd = Bounds { lo, hi, has_lo, has_hi };

    let mut x = warm.x.clone().unwrap_or_else(|| p.initial_point());
    for i in 0..n {
        let (l, u) = (bd.lo[i], bd.hi[i]);
        let width = if bd.has_lo[i] && bd.has_hi[i] { u - l } else { f64::INFINITY };
        if bd.has_lo[i] {
            let push = (opts.bound_push * l.abs().max(1.0)).min(opts.bound_push * width);
            x[i] = x[i].max(l + push);
        }
        if bd.has_hi[i] {
            let push = (opts.bound_push * u.abs().max(1.0)).min(opts.bound_push * width);
            x[i] = x[i].min(u - push);
        }
    }
    let mut lambda = warm.lambda.clone().filter(|l| l.len() == m).unwrap_or_else(|| vec![0.0; m]);
    let mut mu = warm.mu.unwrap_or(opts.mu_init);
    let mut zl: Vec<f64> = bd.has_lo.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = bd.has_hi.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    if warm.mu.is_some() {
        let (sl, su) = bd.slacks(&x);
        for i in 0..n {
            if bd.has_lo[i] {
                zl[i] = mu / sl[i];
            }
            if bd.has_hi[i] {
                zu[i] = mu / su[i];
            }
        }
    }

    let mut kkt = Kkt::new(n, m, p.hessian_structure(), p.jacobian_structure());
    let mut g = vec![0.0; n];
    let mut c = vec![0.0; m];
    let mut jv = vec![0.0; kkt.js.len()];
    let mut hv = vec![0.0; kkt.hs.len()];
    let mut ct = vec![0.0; m];
    let mut nu = 0.0f64;
    let mut dw_last = 0.0f64;
    let mut acceptable_count = 0;
    let mut status = IpmStatus::MaxIterations;
    let mut iter = 0;
    let mut errs = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let tau_min = 0.99f64;
    let kappa_sigma = 1e10;

    let merit = |x: &[f64], mu: f64, nu: f64, ct: &mut [f64]| -> f64 {
        let f = p.objective(x);
        p.constraints(x, ct);
        let v = f + bd.barrier(x, mu) + nu * one_norm(ct);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    'outer: while iter < opts.max_iter {
        p.gradient(&x, &mut g);
        p.constraints(&x, &mut c);
        p.jacobian_values(&x, &mut jv);
        if g.iter().chain(&c).chain(&jv).any(|v| !v.is_finite()) {
            status = IpmStatus::NumericalFailure;
            break;
        }
        let (sl, su) = bd.slacks(&x);

        let mut grad_lag = g.clone();
        for (&(r, col), &v) in kkt.js.iter().zip(&jv) {
            grad_lag[col] += lambda[r] * v;
        }
        for i in 0..n {
            grad_lag[i] += zu[i] - zl[i];
        }
        let s_max = 100.0;
        let zsum = one_norm(&zl) + one_norm(&zu);
        let s_d = ((one_norm(&lambda) + zsum) / ((n + m) as f64).max(1.0)).max(s_max) / s_max;
        let s_c = (zsum / (n as f64).max(1.0)).max(s_max) / s_max;
        let compl = |mu: f64| {
            let mut e = 0.0f64;
            for i in 0..n {
                if bd.has_lo[i] {
                    e = e.max((sl[i] * zl[i] - mu).abs());
                }
                if bd.has_hi[i] {
                    e = e.max((su[i] * zu[i] - mu).abs());
                }
            }
            e
        };
        let dual = inf_norm(&grad_lag) / s_d;
        let primal = inf_norm(&c);
        errs = (dual, primal, compl(0.0) / s_c);
        let e0 = dual.max(primal).max(errs.2);
        if e0 <= opts.tol && primal <= opts.constr_viol_tol {
            status = IpmStatus::Converged;
            break;
        }
        if e0 <= opts.acceptable_tol && primal <= opts.constr_viol_tol {
            acceptable_count += 1;
            if acceptable_count >= opts.acceptable_iter {
                status = IpmStatus::Acceptable;
                break;
            }
        } else {
            acceptable_count = 0;
        }
        while mu > opts.tol / 10.0 && dual.max(primal).max(compl(mu) / s_c) <= 10.0 * mu {
            mu = (opts.tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)));
        }
        let tau = tau_min.max(1.0 - mu);
        if opts.verbose {
            eprintln!(
                "ipm {iter:4} f={:+.6e} inf_pr={primal:.2e} inf_du={dual:.2e} compl={:.2e} mu={mu:.1e} dw={dw_last:.1e}",
                p.objective(&x),
                errs.2
            );
        }

        p.hessian_values(&x, 1.0, &lambda, &mut hv);
        let sigma: Vec<f64> = (0..n)
            .map(|i| {
                (if bd.has_lo[i] { zl[i] / sl[i] } else { 0.0 }) + (if bd.has_hi[i] { zu[i] / su[i] } else { 0.0 })
            })
            .collect();
        let grad_phi: Vec<f64> = (0..n)
            .map(|i| {
                g[i] - if bd.has_lo[i] { mu / sl[i] } else { 0.0 } + if bd.has_hi[i] { mu / su[i] } else { 0.0 }
            })
            .collect();
        let mut rhs = vec![0.0; n + m];
        for i in 0..n {
            rhs[i] = -grad_phi[i];
        }
        for (&(r, col), &v) in kkt.js.iter().zip(&jv) {
            rhs[col] -= lambda[r] * v;
        }
        for r in 0..m {
            rhs[n + r] = -c[r];
        }

        // Regularize until the step has positive curvature, then line search.
        let mut dw = 0.0f64;
        let mut dc = 0.0f64;
        let mut ls_failures = 0;
        loop {
            let mut sol = rhs.clone();
            if !kkt.factor(&hv, &jv, &sigma, dw, dc) {
                if dc == 0.0 {
                    dc = 1e-8 * mu.powf(0.25);
                    continue;
                }
                dw = next_dw(dw, dw_last);
                if dw > 1e40 {
                    status = IpmStatus::NumericalFailure;
                    break 'outer;
                }
                continue;
            }
            kkt.sys.solve(&mut sol);
            let (dx, dl) = sol.split_at(n);
            if dx.iter().chain(dl).any(|v| !v.is_finite()) {
                dw = next_dw(dw, dw_last);
                if dw > 1e40 {
                    status = IpmStatus::NumericalFailure;
                    break 'outer;
                }
                continue;
            }
            let mut hdx = vec![0.0; n];
            for (&(r, col), &v) in kkt.hs.iter().zip(&hv) {
                hdx[r] += v * dx[col];
                if r != col {
                    hdx[col] += v * dx[r];
                }
            }
            let dxdx = dot(dx, dx);
            let curv = dot(dx, &hdx) + dot(&sigma, &dx.iter().map(|v| v * v).collect::<Vec<_>>()) + dw * dxdx;
            if curv < 1e-10 * dxdx && dxdx > 0.0 {
                dw = next_dw(dw, dw_last);
                if dw > 1e40 {
                    status = IpmStatus::NumericalFailure;
                    break 'outer;
                }
                continue;
            }

            let c1 = one_norm(&c);
            let dphi = dot(&grad_phi, dx);
            if c1 > 0.0 {
                let need = (dphi + 0.5 * curv.max(0.0)) / (0.9 * c1);
                if nu < need {
                    nu = need + 1e-4;
                }
            }
            let d_merit = dphi - nu * c1;
            let phi0 = merit(&x, mu, nu, &mut ct);

            let active_l = &bd.has_lo;
            let active_u = &bd.has_hi;
            let neg_dx: Vec<f64> = dx.iter().map(|v| -v).collect();
            let a_max = max_step(&sl, dx, active_l, tau).min(max_step(&su, &neg_dx, active_u, tau));

            let mut alpha = a_max;
            let mut accepted: Option<Vec<f64>> = None;
            let mut first = true;
            while alpha > 1e-14 * a_max.max(1e-300) && alpha > 1e-16 {
                let xt: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
                let phit = merit(&xt, mu, nu, &mut ct);
                if phit <= phi0 + 1e-4 * alpha * d_merit {
                    accepted = Some(xt);
                    break;
                }
                if first && phit.is_finite() && one_norm(&ct) >= c1 {
                    // Second-order correction against the Maratos effect.
                    let mut soc = rhs.clone();
                    for r in 0..m {
                        soc[n + r] = -(alpha * c[r] + ct[r]);
                    }
                    kkt.sys.solve(&mut soc);
                    let dxs = &soc[..n];
                    let neg: Vec<f64> = dxs.iter().map(|v| -v).collect();
                    let a_soc = max_step(&sl, dxs, active_l, tau).min(max_step(&su, &neg, active_u, tau));
                    let xs: Vec<f64> = x.iter().zip(dxs).map(|(a, b)| a + a_soc * b).collect();
                    if merit(&xs, mu, nu, &mut ct) <= phi0 + 1e-4 * alpha * d_merit {
                        accepted = Some(xs);
                        break;
                    }
                }
                first = false;
                alpha *= 0.5;
            }

            let Some(xn) = accepted else {
                ls_failures += 1;
                if ls_failures > 4 {
                    status = IpmStatus::LineSearchFailure;
                    break 'outer;
                }
                dw = next_dw(dw.max(1e-4), dw_last) * 10.0;
                continue;
            };
            if dw > 0.0 {
                dw_last = dw;
            }

            // Dual step.
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dzl: Vec<f64> = (0..n)
                .map(|i| if bd.has_lo[i] { mu / sl[i] - zl[i] - zl[i] / sl[i] * step[i] } else { 0.0 })
                .collect();
            let dzu: Vec<f64> = (0..n)
                .map(|i| if bd.has_hi[i] { mu / su[i] - zu[i] + zu[i] / su[i] * step[i] } else { 0.0 })
                .collect();
            let a_z = max_step(&zl, &dzl, active_l, tau).min(max_step(&zu, &dzu, active_u, tau));
            let a_primal = alpha.min(1.0);
            for r in 0..m {
                lambda[r] += a_primal * dl[r];
            }
            x = xn;
            let (sl, su) = bd.slacks(&x);
            for i in 0..n {
                if bd.has_lo[i] {
                    zl[i] = (zl[i] + a_z * dzl[i]).clamp(mu / (kappa_sigma * sl[i]), kappa_sigma * mu / sl[i]);
                }
                if bd.has_hi[i] {
                    zu[i] = (zu[i] + a_z * dzu[i]).clamp(mu / (kappa_sigma * su[i]), kappa_sigma * mu / su[i]);
                }
            }
            break;
        }
        iter += 1;
        if inf_norm(&x) > 1e20 {
            status = IpmStatus::NumericalFailure;
            break;
        }
    }

    if !status.is_success() && errs.0.max(errs.1).max(errs.2) <= opts.acceptable_tol && errs.1 <= opts.constr_viol_tol
    {
        status = IpmStatus::Acceptable;
    }
    p.constraints(&x, &mut c);
    IpmResult {
        status,
        objective: p.objective(&x),
        primal_inf: inf_norm(&c),
        dual_inf: errs.0,
        complementarity: errs.2,
        x,
        lambda,
        z_lower: zl,
        z_upper: zu,
        iterations: iter,
        mu,
    }
}

fn next_dw(dw: f64, dw_last: f64) -> f64 {
    if dw == 0.0 {
        if dw_last == 0.0 {
            1e-4
        } else {
            (dw_last / 3.0).max(1e-20)
        }
    } else if dw_last == 0.0 {
        dw * 100.0
    } else {
        dw * 8.0
    }
}
