//! Quasi-Newton minimization: dense BFGS with Armijo backtracking, plus a
//! limited-memory variant for unknowns too large for the dense inverse
//! Hessian.

use ndarray::{Array1, Array2};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    Converged,
    MaxIterations,
    /// The backtracking search ran out of attempts; the best iterate so far
    /// is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct BfgsOpts {
    pub max_iterations: usize,
    /// Stop when the euclidean gradient norm falls below this.
    pub grad_tolerance: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// `None` runs dense BFGS; `Some(m)` switches to the limited-memory
    /// update with history length m.
    pub memory: Option<usize>,
}

impl Default for BfgsOpts {
    fn default() -> Self {
        BfgsOpts {
            max_iterations: 200,
            grad_tolerance: 1e-8,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            memory: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Objective value at every accepted iterate, starting from x0;
    /// non-increasing by the Armijo condition.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize a smooth objective from `x0`. The callable returns the value and
/// gradient at a point; any error it raises aborts the run.
pub fn bfgs_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: &[f64],
    opts: &BfgsOpts,
) -> Result<BfgsResult> {
    match opts.memory {
        None => dense_bfgs(objective, x0, opts),
        Some(m) => lbfgs(objective, x0, opts, m.max(1)),
    }
}

fn dense_bfgs(
    objective: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: &[f64],
    opts: &BfgsOpts,
) -> Result<BfgsResult> {
    let n = x0.len();
    let mut x = Array1::from_vec(x0.to_vec());
    let (mut fx, g0) = objective(x.as_slice().unwrap())?;
    let mut g = Array1::from_vec(g0);
    let mut h = Array2::<f64>::eye(n);
    let mut trace = vec![fx];
    let mut first_update = true;

    for iter in 0..opts.max_iterations {
        let gnorm = norm(g.as_slice().unwrap());
        if gnorm <= opts.grad_tolerance {
            return Ok(BfgsResult {
                x: x.to_vec(),
                value: fx,
                grad_norm: gnorm,
                trace,
                iterations: iter,
                status: BfgsStatus::Converged,
            });
        }
        let p = -h.dot(&g);
        let slope = dot(p.as_slice().unwrap(), g.as_slice().unwrap());
        let p = if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            -g.clone()
        } else {
            p
        };
        let slope = dot(p.as_slice().unwrap(), g.as_slice().unwrap());

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let xt = &x + &(alpha * &p);
            let (ft, gt) = objective(xt.as_slice().unwrap())?;
            if ft.is_finite() && ft <= fx + opts.armijo_c1 * alpha * slope {
                accepted = Some((xt, ft, Array1::from_vec(gt)));
                break;
            }
            alpha *= opts.backtrack_factor;
        }
        let Some((xt, ft, gt)) = accepted else {
            return Ok(BfgsResult {
                x: x.to_vec(),
                value: fx,
                grad_norm: gnorm,
                trace,
                iterations: iter,
                status: BfgsStatus::LineSearchFailed,
            });
        };

        let s = &xt - &x;
        let y = &gt - &g;
        let sy = dot(s.as_slice().unwrap(), y.as_slice().unwrap());
        if sy > 1e-12 * norm(s.as_slice().unwrap()) * norm(y.as_slice().unwrap()) {
            if first_update {
                let yy = dot(y.as_slice().unwrap(), y.as_slice().unwrap());
                h *= sy / yy;
                first_update = false;
            }
            let hy = h.dot(&y);
            let yhy = dot(y.as_slice().unwrap(), hy.as_slice().unwrap());
            let rho = 1.0 / sy;
            // H+ = H + (1 + rho yHy) rho s s^T - rho (s (Hy)^T + (Hy) s^T)
            let c1 = (1.0 + rho * yhy) * rho;
            for r in 0..n {
                for c in 0..n {
                    h[[r, c]] += c1 * s[r] * s[c] - rho * (s[r] * hy[c] + hy[r] * s[c]);
                }
            }
        }
        x = xt;
        fx = ft;
        g = gt;
        trace.push(fx);
    }
    let gnorm = norm(g.as_slice().unwrap());
    Ok(BfgsResult {
        x: x.to_vec(),
        value: fx,
        grad_norm: gnorm,
        trace,
        iterations: opts.max_iterations,
        status: if gnorm <= opts.grad_tolerance {
            BfgsStatus::Converged
        } else {
            BfgsStatus::MaxIterations
        },
    })
}

fn lbfgs(
    objective: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: &[f64],
    opts: &BfgsOpts,
    memory: usize,
) -> Result<BfgsResult> {
    let mut x = x0.to_vec();
    let (mut fx, mut g) = objective(&x)?;
    let mut trace = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for iter in 0..opts.max_iterations {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tolerance {
            return Ok(BfgsResult {
                x,
                value: fx,
                grad_norm: gnorm,
                trace,
                iterations: iter,
                status: BfgsStatus::Converged,
            });
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            for (qv, yv) in q.iter_mut().zip(&y_hist[i]) {
                *qv -= alphas[i] * yv;
            }
        }
        if k > 0 {
            let last = k - 1;
            let scale = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            for qv in q.iter_mut() {
                *qv *= scale;
            }
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qv, sv) in q.iter_mut().zip(&s_hist[i]) {
                *qv += (alphas[i] - beta) * sv;
            }
        }
        let p: Vec<f64> = q.iter().map(|v| -v).collect();
        let slope = dot(&p, &g);
        let (p, slope) = if slope >= 0.0 {
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            let sl = dot(&sd, &g);
            (sd, sl)
        } else {
            (p, slope)
        };

        // weak-Wolfe bracketing: backtrack on the Armijo test, expand on the
        // curvature test; keeps s^T y > 0 so the history stays well-scaled
        let c2 = 0.9;
        let mut alpha = 1.0;
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut accepted = None;
        let mut armijo_point = None;
        for _ in 0..2 * opts.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(xv, pv)| xv + alpha * pv).collect();
            let (ft, gt) = objective(&xt)?;
            if !ft.is_finite() || ft > fx + opts.armijo_c1 * alpha * slope {
                hi = alpha;
                alpha = 0.5 * (lo + hi);
            } else if dot(&gt, &p) < c2 * slope {
                armijo_point = Some((xt, ft, gt));
                lo = alpha;
                alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * alpha };
            } else {
                accepted = Some((xt, ft, gt));
                break;
            }
        }
        // settle for a plain Armijo point if the curvature side never closed
        let accepted = accepted.or(armijo_point);
        let Some((xt, ft, gt)) = accepted else {
            return Ok(BfgsResult {
                x,
                value: fx,
                grad_norm: gnorm,
                trace,
                iterations: iter,
                status: BfgsStatus::LineSearchFailed,
            });
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = xt;
        fx = ft;
        g = gt;
        trace.push(fx);
    }
    let gnorm = norm(&g);
    Ok(BfgsResult {
        x,
        value: fx,
        grad_norm: gnorm,
        trace,
        iterations: opts.max_iterations,
        status: if gnorm <= opts.grad_tolerance {
            BfgsStatus::Converged
        } else {
            BfgsStatus::MaxIterations
        },
    })
}
