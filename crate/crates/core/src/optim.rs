//! Bound-constrained limited-memory quasi-Newton minimizer.
//!
//! Projected L-BFGS: the search direction comes from the two-loop recursion
//! restricted to the variables not held at a bound, and the step is a
//! backtracking Armijo search along the projected path.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsbConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub pg_tol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub f_rel_tol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsbConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            pg_tol: 1e-6,
            f_rel_tol: 1e-10,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ProjectedGradient,
    FunctionChange,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| {
            let stepped = (xi - gi).clamp(*l, *h);
            (stepped - xi).abs()
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lo, hi]`. `f` returns the value and writes
/// the gradient; a non-finite value marks the point as rejected.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], cfg: &LbfgsbConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            f: f64::INFINITY,
            iterations: 0,
            evaluations,
            termination: Termination::NonFiniteStart,
        };
    }

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.memory);
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if projected_gradient_norm(&x, &g, lo, hi) < cfg.pg_tol {
            termination = Termination::ProjectedGradient;
            break;
        }
        iterations += 1;

        // variables pinned at a bound with the gradient pushing outward
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();

        let mut d = two_loop(&g, &free, &s_hist, &y_hist);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().zip(&free).map(|(gi, fr)| if *fr { -gi } else { 0.0 }).collect();
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                termination = Termination::ProjectedGradient;
                break;
            }
        }

        let mut step = if s_hist.is_empty() {
            let gnorm = dot(&d, &d).sqrt();
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..cfg.max_line_search {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lo, hi);
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            let decrease: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if f_new.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_new <= fx + 1e-4 * decrease
            {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if s_hist.len() == cfg.memory {
                        s_hist.pop_front();
                        y_hist.pop_front();
                    }
                    s_hist.push_back(s);
                    y_hist.push_back(y);
                }
                let f_old = fx;
                fx = f_new;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                accepted = true;
                if (f_old - fx).abs() <= cfg.f_rel_tol * f_old.abs().max(fx.abs()).max(1.0) {
                    termination = Termination::FunctionChange;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            termination = Termination::LineSearchFailed;
            break;
        }
        if termination == Termination::FunctionChange {
            break;
        }
    }

    Minimum {
        x,
        f: fx,
        iterations,
        evaluations,
        termination,
    }
}

fn two_loop(g: &[f64], free: &[bool], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let masked = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect()
    };
    let mut q = masked(g);
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    let mut rho = vec![0.0; k];
    let s_m: Vec<Vec<f64>> = s_hist.iter().map(|s| masked(s)).collect();
    let y_m: Vec<Vec<f64>> = y_hist.iter().map(|y| masked(y)).collect();
    for i in (0..k).rev() {
        let sy = dot(&s_m[i], &y_m[i]);
        rho[i] = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        alpha[i] = rho[i] * dot(&s_m[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_m[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let sy = dot(&s_m[k - 1], &y_m[k - 1]);
        let yy = dot(&y_m[k - 1], &y_m[k - 1]);
        if sy > 0.0 && yy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_m[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_m[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter().zip(free).map(|(v, f)| if *f { -v } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let inf = f64::INFINITY;
        let m = minimize(rosenbrock, &[-1.2, 1.0], &[-inf, -inf], &[inf, inf], &LbfgsbConfig::default());
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of the unconstrained problem lies outside the box
        let m = minimize(rosenbrock, &[0.0, 0.0], &[-2.0, -2.0], &[0.5, 2.0], &LbfgsbConfig::default());
        assert!((m.x[0] - 0.5).abs() < 1e-8, "{m:?}");
        assert!((m.x[1] - 0.25).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn quadratic_with_both_bounds() {
        let target = [3.0, -3.0, 0.25];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * (x[i] - target[i]) * (i + 1) as f64;
                v += (x[i] - target[i]).powi(2) * (i + 1) as f64;
            }
            v
        };
        let m = minimize(f, &[0.0; 3], &[-1.0; 3], &[1.0; 3], &LbfgsbConfig::default());
        assert_eq!(m.x[0], 1.0);
        assert_eq!(m.x[1], -1.0);
        assert!((m.x[2] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn rejected_start_reports_non_finite() {
        let m = minimize(|_, _| f64::NAN, &[0.0], &[-1.0], &[1.0], &LbfgsbConfig::default());
        assert_eq!(m.termination, Termination::NonFiniteStart);
    }

    #[test]
    fn degenerate_box_returns_the_point() {
        let m = minimize(rosenbrock, &[0.3, 0.7], &[0.3, 0.7], &[0.3, 0.7], &LbfgsbConfig::default());
        assert_eq!(m.x, vec![0.3, 0.7]);
    }
}
