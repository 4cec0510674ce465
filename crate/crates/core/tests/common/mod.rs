//! Brute-force oracles shared by the integration suites. None of these call
//! into the optimizer or the polytope code they are used to check.

#![allow(dead_code)]

use std::sync::Arc;

use levelset::construct1d::construct;
use levelset::geometry::{simplex_lattice, Distribution};
use levelset::surrogates::{CeQuadratic, Cusp, HuberOrdinal, HuberPair, SmoothCusp, Universal};
use levelset::{SurrogateLoss, TargetLoss};
use rand::rngs::StdRng;
use rand::Rng;

pub fn dist(p: &[f64]) -> Distribution {
    Distribution::new(p.to_vec()).unwrap()
}

/// Interior point drawn from a flat Dirichlet via normalized exponentials.
pub fn random_interior(rng: &mut StdRng, n: usize) -> Distribution {
    let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-3f64..1.0).ln()).collect();
    let s: f64 = w.iter().sum();
    dist(&w.iter().map(|x| x / s).collect::<Vec<_>>())
}

pub fn expected(s: &dyn SurrogateLoss, p: &[f64], u: &[f64]) -> f64 {
    s.value(u).iter().zip(p).map(|(l, q)| l * q).sum()
}

/// Central-difference Jacobian, `n x d` row-major.
pub fn fd_jacobian(s: &dyn SurrogateLoss, u: &[f64]) -> Vec<Vec<f64>> {
    let n = s.outcomes();
    let mut rows = vec![vec![0.0; u.len()]; n];
    for j in 0..u.len() {
        let h = 1e-6 * u[j].abs().max(1.0);
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[j] += h;
        dn[j] -= h;
        let (a, b) = (s.value(&up), s.value(&dn));
        for y in 0..n {
            rows[y][j] = (a[y] - b[y]) / (2.0 * h);
        }
    }
    rows
}

/// Largest `|J - J_fd| / max(1, |J|)` entry.
pub fn jacobian_rel_error(s: &dyn SurrogateLoss, u: &[f64]) -> f64 {
    let j = s.jacobian(u);
    let fd = fd_jacobian(s, u);
    let mut worst = 0.0f64;
    for (y, row) in fd.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let a = j[(y, k)];
            worst = worst.max((a - v).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Grid search on `[-radius, radius]^d` followed by repeated zooming around
/// the best grid point. Only for `d <= 2`.
pub fn grid_zoom_minimize(s: &dyn SurrogateLoss, p: &[f64], radius: f64) -> (Vec<f64>, f64) {
    let d = s.dim();
    assert!(d <= 2, "grid oracle is for d <= 2");
    let per_axis = if d == 1 { 4001 } else { 401 };
    let mut center = vec![0.0; d];
    let mut half = radius;
    let mut best = (center.clone(), expected(s, p, &center));
    while half > 1e-11 {
        let step = 2.0 * half / (per_axis - 1) as f64;
        let axis = |i: usize, c: f64| c - half + step * i as f64;
        if d == 1 {
            for i in 0..per_axis {
                let u = vec![axis(i, center[0])];
                let v = expected(s, p, &u);
                if v < best.1 {
                    best = (u, v);
                }
            }
        } else {
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let u = vec![axis(i, center[0]), axis(j, center[1])];
                    let v = expected(s, p, &u);
                    if v < best.1 {
                        best = (u, v);
                    }
                }
            }
        }
        center = best.0.clone();
        half = 4.0 * step;
    }
    best
}

/// Lattice points `q` with `|J^T q| <= tau`, at spacing `1/steps`.
pub fn lattice_level_set(jt_rows: &[Vec<f64>], n: usize, steps: usize, tau: f64) -> Vec<Vec<f64>> {
    simplex_lattice(n, steps)
        .into_iter()
        .filter(|q| {
            let r2: f64 = jt_rows
                .iter()
                .map(|row| row.iter().zip(q.probs()).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum();
            r2.sqrt() <= tau
        })
        .map(|q| q.probs().to_vec())
        .collect()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Distance from `x` to the convex hull of `vertices` by projected gradient
/// on the mixing weights.
pub fn hull_distance(vertices: &[Vec<f64>], x: &[f64]) -> f64 {
    let m = vertices.len();
    if m == 0 {
        return f64::INFINITY;
    }
    let lip: f64 = vertices
        .iter()
        .map(|v| v.iter().map(|a| a * a).sum::<f64>())
        .sum::<f64>()
        .max(1e-12);
    let mut w = vec![1.0 / m as f64; m];
    let point = |w: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; x.len()];
        for (wi, v) in w.iter().zip(vertices) {
            for (pk, vk) in p.iter_mut().zip(v) {
                *pk += wi * vk;
            }
        }
        p
    };
    for _ in 0..4000 {
        let r: Vec<f64> = point(&w).iter().zip(x).map(|(a, b)| a - b).collect();
        for (wi, v) in w.iter_mut().zip(vertices) {
            *wi -= v.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / lip;
        }
        project_simplex(&mut w);
    }
    point(&w)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Built-in surrogates paired with every built-in target of matching `n`.
pub fn builtin_pairs() -> Vec<(Arc<dyn SurrogateLoss>, TargetLoss, String)> {
    let binary = || vec![("abstain", TargetLoss::abstain(0.25))];
    let ternary = || {
        vec![
            ("ordinal:3", TargetLoss::ordinal(3)),
            ("zero-one:3", TargetLoss::zero_one(3)),
            ("ce-l1", TargetLoss::two_report([2.5, 1.25, 0.0])),
            ("ce-l2", TargetLoss::two_report([2.0, 1.0, 0.0])),
            ("ce-l3", TargetLoss::two_report([5.0 / 3.0, 5.0 / 6.0, 0.0])),
        ]
    };
    let constructed_abs = construct(&TargetLoss::abstain(0.25)).unwrap().surrogate;
    let constructed_ord = construct(&TargetLoss::ordinal(3)).unwrap().surrogate;
    let surrogates: Vec<(Arc<dyn SurrogateLoss>, &str)> = vec![
        (Arc::new(Cusp), "cusp"),
        (Arc::new(SmoothCusp), "smooth-cusp"),
        (Arc::new(HuberPair::new(1).unwrap()), "huber-pair:1"),
        (Arc::new(HuberPair::new(2).unwrap()), "huber-pair:2"),
        (Arc::new(constructed_abs), "constructed(abstain)"),
        (Arc::new(CeQuadratic), "ce"),
        (Arc::new(HuberOrdinal), "huber-ordinal"),
        (Arc::new(Universal::new(3).unwrap()), "universal:3"),
        (Arc::new(constructed_ord), "constructed(ordinal:3)"),
    ];
    let mut out = Vec::new();
    for (s, sname) in surrogates {
        let targets = if s.outcomes() == 2 { binary() } else { ternary() };
        for (tname, t) in targets {
            out.push((s.clone(), t, format!("{sname} / {tname}")));
        }
    }
    let u4: Arc<dyn SurrogateLoss> = Arc::new(Universal::new(4).unwrap());
    out.push((u4.clone(), TargetLoss::zero_one(4), "universal:4 / zero-one:4".into()));
    out.push((u4, TargetLoss::ordinal(4), "universal:4 / ordinal:4".into()));
    out
}

/// Rejected draws of [`random_orderable_target`].
#[derive(Debug, Default, Clone, Copy)]
pub struct Redraws {
    pub redundant: usize,
    pub not_orderable: usize,
}

/// Random target `l(r)_y = g(|y - r|)` with `g` strictly increasing
/// integers. A non-convex `g` can make non-adjacent cells meet, so draws are
/// repeated until the target is non-redundant and orderable.
pub fn random_orderable_target(rng: &mut StdRng, redraws: &mut Redraws) -> TargetLoss {
    loop {
        let n = rng.gen_range(2..=5usize);
        let k = rng.gen_range(2..=5usize);
        let mut g = vec![rng.gen_range(0..=2) as f64];
        for _ in 1..n.max(k) {
            let last = *g.last().unwrap();
            g.push(last + rng.gen_range(1..=4) as f64);
        }
        let rows = (0..k)
            .map(|r| (0..n).map(|y| g[y.abs_diff(r)]).collect())
            .collect();
        let t = TargetLoss::new(rows, None).unwrap();
        if t.validate_nonredundant().is_err() {
            redraws.redundant += 1;
        } else if t.orderability().enumeration.is_none() {
            redraws.not_orderable += 1;
        } else {
            return t;
        }
    }
}
