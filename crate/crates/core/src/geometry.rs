//! Linear algebra and polytope primitives over the probability simplex.
//!
//! Polytopes are kept in both representations: the defining constraints
//! (on top of the implicit simplex constraints `p >= 0`, `sum p = 1`) and the
//! enumerated vertex list. Vertex enumeration is exhaustive over active sets,
//! which is fine for the outcome counts this crate targets (`n <= 12`).

use itertools::Itertools;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Constraint tolerance for enumerated vertices; also the dedup radius.
pub const VERTEX_TOL: f64 = 1e-9;
/// Largest outcome count accepted by vertex enumeration.
pub const MAX_SECTION_OUTCOMES: usize = 12;

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates and wraps a probability vector.
    ///
    /// Entries must be nonnegative and sum to one within `1e-9`; small
    /// deviations are renormalized away.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution has no outcomes"));
        }
        if probs.iter().any(|x| !x.is_finite() || *x < -1e-12) {
            return Err(Error::invalid(format!(
                "distribution entries must be finite and nonnegative: {probs:?}"
            )));
        }
        let probs: Vec<f64> = probs.into_iter().map(|x| x.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(Self(probs.into_iter().map(|x| x / total).collect()))
    }

    /// Clamps negatives to zero and rescales. Used for solver output that is
    /// feasible up to round-off.
    pub(crate) fn from_approx(probs: Vec<f64>) -> Self {
        let probs: Vec<f64> = probs.into_iter().map(|x| x.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        Self(probs.into_iter().map(|x| x / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on outcome `y`.
    pub fn vertex(n: usize, y: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[y] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        dot(&self.0, w)
    }

    /// Max-norm distance.
    pub fn max_dist(&self, other: &Distribution) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &Distribution) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// True when every coordinate exceeds `margin`.
    pub fn is_interior(&self, margin: f64) -> bool {
        self.0.iter().all(|&x| x > margin)
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Linear constraint `<p, normal> (=|<=) offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Constraint {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Homogeneous constraint `<p, normal> (=|<=) 0`.
    pub fn through_origin(normal: Vec<f64>) -> Self {
        Self { normal, offset: 0.0 }
    }

    /// `<p, normal> - offset`.
    pub fn residual(&self, p: &[f64]) -> f64 {
        dot(p, &self.normal) - self.offset
    }

    fn scale(&self) -> f64 {
        norm(&self.normal).max(1.0)
    }
}

/// A polytope inside the simplex, in both H- and V-form.
///
/// `equalities` and `inequalities` are in addition to the simplex itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimplexPolytope {
    pub dim_ambient: usize,
    pub vertices: Vec<Distribution>,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
}

impl SimplexPolytope {
    /// Builds the polytope and enumerates its vertices.
    pub fn from_constraints(
        n: usize,
        equalities: Vec<Constraint>,
        inequalities: Vec<Constraint>,
    ) -> Result<Self> {
        let vertices = enumerate_vertices(n, &equalities, &inequalities)?;
        Ok(Self {
            dim_ambient: n,
            vertices,
            equalities,
            inequalities,
        })
    }

    /// A single point, with equalities pinning each coordinate.
    pub fn point(p: Distribution) -> Self {
        let n = p.len();
        let equalities = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                Constraint::new(e, p.probs()[i])
            })
            .collect();
        Self {
            dim_ambient: n,
            vertices: vec![p],
            equalities,
            inequalities: Vec::new(),
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            dim_ambient: n,
            vertices: Vec::new(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Affine dimension from the rank of vertex differences; `None` if empty.
    pub fn affine_dim(&self) -> Option<usize> {
        let first = self.vertices.first()?;
        if self.vertices.len() == 1 {
            return Some(0);
        }
        let n = self.dim_ambient;
        let diffs = DMatrix::from_fn(self.vertices.len() - 1, n, |i, j| {
            self.vertices[i + 1].probs()[j] - first.probs()[j]
        });
        Some(numerical_rank(&diffs, VERTEX_TOL))
    }

    /// H-form membership test: simplex plus every defining constraint, each
    /// within `tol` (scaled by the constraint normal's norm when above one).
    pub fn contains(&self, p: &Distribution, tol: f64) -> bool {
        if p.len() != self.dim_ambient || self.is_empty() {
            return false;
        }
        self.equalities
            .iter()
            .all(|c| c.residual(p.probs()).abs() <= tol * c.scale())
            && self
                .inequalities
                .iter()
                .all(|c| c.residual(p.probs()) <= tol * c.scale())
    }

    /// Hausdorff distance between the two vertex sets (Euclidean).
    ///
    /// Equal polytopes have equal minimal vertex sets, so this is zero
    /// exactly when the polytopes coincide.
    pub fn vertex_hausdorff(&self, other: &SimplexPolytope) -> f64 {
        if self.is_empty() && other.is_empty() {
            return 0.0;
        }
        if self.is_empty() || other.is_empty() {
            return f64::INFINITY;
        }
        let one_way = |a: &[Distribution], b: &[Distribution]| {
            a.iter()
                .map(|x| b.iter().map(|y| x.dist(y)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        one_way(&self.vertices, &other.vertices).max(one_way(&other.vertices, &self.vertices))
    }

    /// Mean of the vertices.
    pub fn barycenter(&self) -> Option<Distribution> {
        if self.is_empty() {
            return None;
        }
        let n = self.dim_ambient;
        let m = self.vertices.len() as f64;
        let mut c = vec![0.0; n];
        for v in &self.vertices {
            for (ci, vi) in c.iter_mut().zip(v.probs()) {
                *ci += vi / m;
            }
        }
        Some(Distribution::from_approx(c))
    }
}

/// The linear map `p -> J^T p` where `J` is an `n x d` Jacobian.
#[derive(Clone, Debug)]
pub struct LinearMapOnSimplex {
    jacobian: DMatrix<f64>,
}

impl LinearMapOnSimplex {
    pub fn new(jacobian: DMatrix<f64>) -> Result<Self> {
        if jacobian.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("linear map has non-finite entries"));
        }
        Ok(Self { jacobian })
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn outcomes(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn apply(&self, p: &[f64]) -> DVector<f64> {
        self.jacobian.tr_mul(&DVector::from_column_slice(p))
    }
}

fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the column space of `j`, cut at `rank_tol * sigma_max`.
fn range_basis(j: &DMatrix<f64>, rank_tol: f64) -> Vec<DVector<f64>> {
    if j.ncols() == 0 || j.iter().all(|&x| x == 0.0) {
        return Vec::new();
    }
    let svd = j.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let smax = svd.singular_values.max();
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rank_tol * smax)
        .map(|(i, _)| u.column(i).into_owned())
        .collect()
}

/// Orthonormal basis of `ker(J^T)`, the distributions-side null space.
pub fn kernel_basis(m: &LinearMapOnSimplex, rank_tol: f64) -> Vec<DVector<f64>> {
    let n = m.outcomes();
    let mut basis = range_basis(&m.jacobian, rank_tol);
    let r = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.push(v / nv);
        }
    }
    basis.split_off(r)
}

/// `{p in simplex : J^T p = 0}` with vertices enumerated.
pub fn simplex_section(m: &LinearMapOnSimplex, rank_tol: f64) -> Result<SimplexPolytope> {
    let n = m.outcomes();
    if n > MAX_SECTION_OUTCOMES {
        return Err(Error::DimensionOverflow {
            n,
            limit: MAX_SECTION_OUTCOMES,
        });
    }
    let reduced: Vec<Constraint> = range_basis(&m.jacobian, rank_tol)
        .into_iter()
        .map(|v| Constraint::through_origin(v.iter().copied().collect()))
        .collect();
    let vertices = enumerate_vertices(n, &reduced, &[])?;
    let equalities = m
        .jacobian
        .column_iter()
        .map(|c| Constraint::through_origin(c.iter().copied().collect()))
        .collect();
    Ok(SimplexPolytope {
        dim_ambient: n,
        vertices,
        equalities,
        inequalities: Vec::new(),
    })
}

/// Vertices of `{p in simplex : equalities, inequalities}`.
///
/// Every basic solution with `n - s` active inequality constraints (`s` the
/// rank of the equality system including `sum p = 1`) is solved and kept if
/// feasible. Results are deduplicated at [`VERTEX_TOL`].
pub fn enumerate_vertices(
    n: usize,
    equalities: &[Constraint],
    inequalities: &[Constraint],
) -> Result<Vec<Distribution>> {
    if n > MAX_SECTION_OUTCOMES {
        return Err(Error::DimensionOverflow {
            n,
            limit: MAX_SECTION_OUTCOMES,
        });
    }
    if equalities
        .iter()
        .chain(inequalities)
        .any(|c| c.normal.len() != n)
    {
        return Err(Error::invalid("constraint dimension does not match n"));
    }

    // Equality system, rows normalized, including the simplex hyperplane.
    let mut rows: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; n], 1.0)];
    for c in equalities {
        let s = norm(&c.normal);
        if s == 0.0 {
            if c.offset.abs() > VERTEX_TOL {
                return Ok(Vec::new());
            }
            continue;
        }
        rows.push((c.normal.iter().map(|x| x / s).collect(), c.offset / s));
    }
    let e = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));

    let svd = e.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let rank = kept.len();

    // Reduced, independent equality rows and a consistency check.
    let mut red_rows = Vec::with_capacity(rank);
    let mut ls = DVector::zeros(n);
    for &i in &kept {
        let rhs = u.column(i).dot(&b) / svd.singular_values[i];
        let row = v_t.row(i).transpose();
        ls += &row * rhs;
        red_rows.push((row, rhs));
    }
    if (&e * &ls - &b).norm() > VERTEX_TOL {
        return Ok(Vec::new());
    }

    // Candidate active constraints: p_i >= 0 then the given inequalities.
    let mut ineq: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let mut w = vec![0.0; n];
            w[i] = -1.0;
            (w, 0.0)
        })
        .collect();
    for c in inequalities {
        let s = norm(&c.normal);
        if s == 0.0 {
            if c.offset < -VERTEX_TOL {
                return Ok(Vec::new());
            }
            continue;
        }
        ineq.push((c.normal.iter().map(|x| x / s).collect(), c.offset / s));
    }

    let free = n - rank;
    let mut out: Vec<Distribution> = Vec::new();
    for active in (0..ineq.len()).combinations(free) {
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i < rank {
                red_rows[i].0[j]
            } else {
                ineq[active[i - rank]].0[j]
            }
        });
        let rhs = DVector::from_fn(n, |i, _| {
            if i < rank {
                red_rows[i].1
            } else {
                ineq[active[i - rank]].1
            }
        });
        let sv = a.singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            continue;
        }
        let Some(x) = a.lu().solve(&rhs) else {
            continue;
        };
        let x: Vec<f64> = x.iter().copied().collect();
        let eq_ok = rows
            .iter()
            .all(|(w, off)| (dot(w, &x) - off).abs() <= VERTEX_TOL);
        let ineq_ok = ineq.iter().all(|(w, off)| dot(w, &x) - off <= VERTEX_TOL);
        if !(eq_ok && ineq_ok) {
            continue;
        }
        let p = Distribution::from_approx(x);
        if !out.iter().any(|q| q.max_dist(&p) <= VERTEX_TOL) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Feasible point of an LP with a strictness margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpWitness {
    pub point: Distribution,
    /// Smallest slack over the strict constraints (capped at 1).
    pub slack: f64,
}

/// Finds `p` in the simplex with all `equalities` holding and every strict
/// constraint `<p, w> < offset` holding with slack at least
/// `strictness_margin`, by maximizing the minimum slack. Returns `None` when
/// the best achievable slack falls short.
pub fn lp_feasible_strict(
    n: usize,
    equalities: &[Constraint],
    strict: &[Constraint],
    strictness_margin: f64,
) -> Option<LpWitness> {
    if equalities
        .iter()
        .chain(strict)
        .any(|c| c.normal.len() != n)
    {
        return None;
    }
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n).map(|_| pb.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let slack = pb.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    let simplex: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    pb.add_constraint(&simplex[..], ComparisonOp::Eq, 1.0);
    for c in equalities {
        let expr: Vec<_> = vars.iter().zip(&c.normal).map(|(&v, &w)| (v, w)).collect();
        pb.add_constraint(&expr[..], ComparisonOp::Eq, c.offset);
    }
    for c in strict {
        let mut expr: Vec<_> = vars.iter().zip(&c.normal).map(|(&v, &w)| (v, w)).collect();
        expr.push((slack, 1.0));
        pb.add_constraint(&expr[..], ComparisonOp::Le, c.offset);
    }
    let sol = pb.solve().ok()?;
    let t = sol[slack];
    if t < strictness_margin {
        return None;
    }
    let x: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
    let point = Distribution::from_approx(x);
    if equalities
        .iter()
        .any(|c| c.residual(point.probs()).abs() > VERTEX_TOL * c.scale())
    {
        return None;
    }
    Some(LpWitness { point, slack: t })
}

/// All distributions whose coordinates are multiples of `1/steps`.
pub fn simplex_lattice(n: usize, steps: usize) -> Vec<Distribution> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for i in (0..=left).rev() {
            cur.push(i);
            rec(n, left - i, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(n, steps, &mut Vec::with_capacity(n), &mut raw);
    raw.into_iter()
        .map(|c| Distribution(c.into_iter().map(|x| x as f64 / steps as f64).collect()))
        .collect()
}

/// Number of lattice steps for a spacing such as `1/20`.
pub fn lattice_steps(resolution: f64) -> usize {
    (1.0 / resolution).round().max(1.0) as usize
}
