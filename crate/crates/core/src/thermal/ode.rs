//! Dormand–Prince 5(4) integrator with dense output and event location.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-8, h0: None, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    /// Length of the step the polynomial was built for.
    pub h: f64,
    /// End of the interval where this step is used (below `t0 + h` when an
    /// event truncated the step).
    pub t1: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// Accepted step end points, starting at `t0`.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<DenseStep>,
    /// Time at which the event function first reached zero, if it did.
    pub event_time: Option<f64>,
    pub n_rhs: usize,
}

impl OdeSolution {
    /// State at any `t` inside the integrated interval.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.states[0].len();
        let mut out = vec![0.0; n];
        if self.steps.is_empty() || t <= self.times[0] {
            out.copy_from_slice(&self.states[0]);
            return out;
        }
        let idx = self.steps.partition_point(|s| s.t1 < t).min(self.steps.len() - 1);
        self.steps[idx].eval(t, &mut out);
        out
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty")
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error estimate coefficients (5th minus embedded 4th order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// When `event` is given, integration stops at the first time where
/// `event(t, y)` changes sign from negative to non-negative; the crossing is
/// located on the dense output to about 1e-12 relative.
pub fn integrate<F, G>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut event: Option<G>,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> f64,
{
    let n = y0.len();
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        steps: Vec::new(),
        event_time: None,
        n_rhs: 0,
    };
    if let Some(g) = event.as_mut() {
        if g(t0, y0) >= 0.0 {
            sol.event_time = Some(t0);
            return Ok(sol);
        }
    }
    if t_end <= t0 {
        return Ok(sol);
    }

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0]);
    sol.n_rhs += 1;

    let scale = |a: f64, b: f64| opts.atol + opts.rtol * a.abs().max(b.abs());
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let d0 = (y.iter().map(|v| (v / scale(*v, *v)).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
            let d1 = (k[0].iter().zip(&y).map(|(d, v)| (d / scale(*v, *v)).powi(2)).sum::<f64>()
                / n.max(1) as f64)
                .sqrt();
            if d0 < 1e-5 || d1 < 1e-5 {
                1e-6
            } else {
                0.01 * d0 / d1
            }
        }
    }
    .min(opts.h_max)
    .min(t_end - t0);
    let mut g_prev = event.as_mut().map(|g| g(t, &y));

    let mut steps = 0usize;
    let mut fac_max = 10.0f64;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Numerical(format!("exceeded {} integration steps", opts.max_steps)));
        }
        if h < 1e-12 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        let stage = |coef: &[(usize, f64)], rest: &[Vec<f64>], tmp: &mut [f64], y: &[f64]| {
            for i in 0..n {
                let mut acc = 0.0;
                for &(s, a) in coef {
                    acc += a * if s == 0 { k1[i] } else { rest[s - 1][i] };
                }
                tmp[i] = y[i] + h * acc;
            }
        };
        stage(&[(0, A21)], rest, &mut tmp, &y);
        f(t + C2 * h, &tmp, &mut rest[0]);
        stage(&[(0, A31), (1, A32)], rest, &mut tmp, &y);
        f(t + C3 * h, &tmp, &mut rest[1]);
        stage(&[(0, A41), (1, A42), (2, A43)], rest, &mut tmp, &y);
        f(t + C4 * h, &tmp, &mut rest[2]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], rest, &mut tmp, &y);
        f(t + C5 * h, &tmp, &mut rest[3]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], rest, &mut tmp, &y);
        f(t + h, &tmp, &mut rest[4]);
        stage(&[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], rest, &mut y_new, &y);
        f(t + h, &y_new, &mut rest[5]);
        sol.n_rhs += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * rest[1][i] + E4 * rest[2][i] + E5 * rest[3][i] + E6 * rest[4][i]
                    + E7 * rest[5][i]);
            err += (e / scale(y[i], y_new[i])).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            fac_max = 1.0;
            continue;
        }

        if err <= 1.0 {
            let mut r = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = h * k1[i] - dy;
                r[0][i] = y[i];
                r[1][i] = dy;
                r[2][i] = bspl;
                r[3][i] = dy - h * rest[5][i] - bspl;
                r[4][i] = h
                    * (D1 * k1[i] + D3 * rest[1][i] + D4 * rest[2][i] + D5 * rest[3][i]
                        + D6 * rest[4][i]
                        + D7 * rest[5][i]);
            }
            let t_new = if last { t_end } else { t + h };
            let mut dense = DenseStep { t0: t, h, t1: t_new, r };

            if let (Some(g), Some(_)) = (event.as_mut(), g_prev) {
                let g_new = g(t_new, &y_new);
                if g_new >= 0.0 {
                    let mut lo = t;
                    let mut hi = t_new;
                    let mut buf = vec![0.0; n];
                    for _ in 0..200 {
                        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                            break;
                        }
                        let mid = 0.5 * (lo + hi);
                        dense.eval(mid, &mut buf);
                        let gm = g(mid, &buf);
                        if gm >= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    dense.eval(hi, &mut buf);
                    dense.t1 = hi;
                    sol.times.push(hi);
                    sol.states.push(buf);
                    sol.steps.push(dense);
                    sol.event_time = Some(hi);
                    return Ok(sol);
                }
                g_prev = Some(g_new);
            }

            sol.steps.push(dense);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            sol.times.push(t);
            sol.states.push(y.clone());
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).min(fac_max);
            h = (h * fac).min(opts.h_max);
            fac_max = 10.0;
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            fac_max = 1.0;
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    type NoEvent = fn(f64, &[f64]) -> f64;

    #[test]
    fn exponential_decay() {
        let sol = integrate(
            |_, y, dy| dy[0] = -2.0 * y[0],
            0.0,
            &[1.0],
            3.0,
            &OdeOptions::with_tol(1e-10),
            None::<NoEvent>,
        )
        .unwrap();
        let exact = (-6.0f64).exp();
        assert!((sol.final_state()[0] - exact).abs() < 1e-9);
        assert_eq!(sol.final_time(), 3.0);
        // dense output inside a step
        let mid = sol.at(1.2345);
        assert!((mid[0] - (-2.469f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            10.0,
            &OdeOptions::with_tol(1e-11),
            None::<NoEvent>,
        )
        .unwrap();
        for i in 0..100 {
            let t = 0.1 * i as f64 + 0.037;
            let y = sol.at(t);
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn event_location() {
        // y = 1 + t^2 crosses 5 at t = 2
        let sol = integrate(
            |t, _, dy| dy[0] = 2.0 * t,
            0.0,
            &[1.0],
            10.0,
            &OdeOptions::with_tol(1e-10),
            Some(|_: f64, y: &[f64]| y[0] - 5.0),
        )
        .unwrap();
        let te = sol.event_time.unwrap();
        assert!((te - 2.0).abs() < 1e-9, "{te}");
        assert!((sol.final_state()[0] - 5.0).abs() < 1e-8);
        assert!((sol.at(te * 0.99)[0] - (1.0 + (te * 0.99).powi(2))).abs() < 1e-8);
    }

    #[test]
    fn underflow_is_reported() {
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &OdeOptions::with_tol(1e-8),
            None::<NoEvent>,
        );
        assert!(matches!(r, Err(Error::StepUnderflow { .. }) | Err(Error::Numerical(_))));
    }
}
