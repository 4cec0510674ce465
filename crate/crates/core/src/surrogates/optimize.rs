//! Damped Newton minimization of `u -> <p, L(u)>`.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{expected_loss, OptimalReportSet, Smoothness, SurrogateLoss};
use crate::error::{Error, Result};
use crate::geometry::Distribution;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Random restarts tried when the run from the origin stalls.
    pub restarts: usize,
    pub restart_radius: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iters: 100_000,
            restarts: 8,
            restart_radius: 10.0,
            seed: 0x5eed,
        }
    }
}

/// Width below which a recovered 1-d argmin counts as a single point.
const UNIQUE_WIDTH: f64 = 1e-6;
/// Bisection precision for the 1-d argmin endpoints.
const ENDPOINT_TOL: f64 = 1e-10;

/// Minimizes the expected surrogate loss at `p`.
///
/// Nonsmooth losses are answered by their analytic minimizer. For `d = 1` the
/// flat region around the minimizer is recovered as an interval.
pub fn minimize(
    s: &dyn SurrogateLoss,
    p: &Distribution,
    cfg: &OptimizerConfig,
) -> Result<OptimalReportSet> {
    if p.len() != s.outcomes() {
        return Err(Error::invalid(format!(
            "distribution has {} outcomes, surrogate has {}",
            p.len(),
            s.outcomes()
        )));
    }
    if s.smoothness() == Smoothness::NonsmoothDemo {
        return s
            .analytic_minimizer(p)
            .ok_or_else(|| Error::NonDifferentiable { u: vec![] });
    }
    let d = s.dim();
    let mut found = newton(s, p, vec![0.0; d], cfg);
    if found.is_none() {
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.restarts {
            let start = random_in_ball(&mut rng, d, cfg.restart_radius);
            found = newton(s, p, start, cfg);
            if found.is_some() {
                break;
            }
        }
    }
    let u = found.ok_or_else(|| Error::NoConvergence {
        max_iters: cfg.max_iters,
        p: p.probs().to_vec(),
    })?;
    let opt_value = expected_loss(s, p, &u);

    if d == 1 {
        let (a, b) = flat_interval(s, p, u[0], cfg.grad_tol);
        if b - a > UNIQUE_WIDTH {
            return Ok(OptimalReportSet {
                representative: u,
                is_unique: false,
                interval: Some((a, b)),
                opt_value,
            });
        }
        return Ok(OptimalReportSet::point(u, opt_value));
    }

    let is_unique = match s.expected_hessian(p, &u) {
        Some(h) => h.symmetric_eigenvalues().min() > 1e-8,
        None => true,
    };
    Ok(OptimalReportSet {
        representative: u,
        is_unique,
        interval: None,
        opt_value,
    })
}

fn random_in_ball(rng: &mut StdRng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 <= 1.0 {
            return v.into_iter().map(|x| x * radius).collect();
        }
    }
}

fn newton(
    s: &dyn SurrogateLoss,
    p: &Distribution,
    mut u: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Option<Vec<f64>> {
    let d = u.len();
    let mut f = expected_loss(s, p, &u);
    for _ in 0..cfg.max_iters {
        let g = s.expected_gradient(p, &u);
        let gn = g.norm();
        if !gn.is_finite() {
            return None;
        }
        if gn <= cfg.grad_tol {
            return Some(u);
        }
        let mut dir = match s.expected_hessian(p, &u) {
            Some(h) => regularized_solve(h, &g),
            None => -&g,
        };
        if g.dot(&dir) >= 0.0 {
            dir = -&g;
        }
        let slope = g.dot(&dir);

        // Armijo on the loss, then a fallback on the gradient norm for the
        // last digits where loss differences vanish in round-off.
        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..80 {
            let trial: Vec<f64> = (0..d).map(|i| u[i] + step * dir[i]).collect();
            let ft = expected_loss(s, p, &trial);
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        if accepted.is_none() {
            let mut step = 1.0;
            for _ in 0..60 {
                let trial: Vec<f64> = (0..d).map(|i| u[i] + step * dir[i]).collect();
                if s.expected_gradient(p, &trial).norm() < gn {
                    let ft = expected_loss(s, p, &trial);
                    accepted = Some((trial, ft));
                    break;
                }
                step *= 0.5;
            }
        }
        let (next, fnext) = accepted?;
        u = next;
        f = fnext;
    }
    None
}

/// Solves `(H + lambda I) x = -g`, raising `lambda` until Cholesky succeeds.
fn regularized_solve(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let d = h.nrows();
    let scale = h.amax().max(1.0);
    let mut lambda = 0.0;
    loop {
        let m = &h + DMatrix::identity(d, d) * lambda;
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(&(-g));
            if x.iter().all(|v| v.is_finite()) {
                return x;
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
        if lambda > 1e12 * scale {
            return -g;
        }
    }
}

/// Flat region `{x : |d/dx <p, L(x)>| <= tol}` around a minimizer `u`.
///
/// The derivative is nondecreasing, so each endpoint is found by doubling
/// outward and then bisecting.
fn flat_interval(s: &dyn SurrogateLoss, p: &Distribution, u: f64, tol: f64) -> (f64, f64) {
    let deriv = |x: f64| s.expected_gradient(p, &[x])[0];
    let edge = |dirn: f64| -> f64 {
        let flat = |x: f64| deriv(x) * dirn <= tol;
        let mut h = 1e-7;
        if !flat(u + dirn * h) {
            return u;
        }
        while flat(u + dirn * h) && h < 1e7 {
            h *= 2.0;
        }
        let (mut lo, mut hi) = (h / 2.0, h);
        while hi - lo > ENDPOINT_TOL {
            let mid = 0.5 * (lo + hi);
            if flat(u + dirn * mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u + dirn * lo
    };
    (edge(-1.0), edge(1.0))
}
