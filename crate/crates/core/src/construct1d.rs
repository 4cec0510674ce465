//! Convex, differentiable 1-d surrogates for orderable targets.
//!
//! The surrogate gradient `v(x)` is piecewise linear with knots at
//! `x = 1, ..., k + 1`. Interior knots are positive multiples of the target
//! boundary normals, scaled so that `v` is coordinatewise nondecreasing; the
//! end knots are padded so every cell's distributions have their zero
//! crossing inside that cell's unit interval. Report `r_j` then occupies
//! `[j, j + 1)` and the link is `clamp(floor(x), 1, k)`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::dot;
use crate::links::{IntervalLink, Orientation};
use crate::surrogates::{Smoothness, SurrogateLoss, SurrogateSpec};
use crate::targets::TargetLoss;

/// Tolerance for the boundary certificate zeros.
pub const CERTIFICATE_TOL: f64 = 1e-9;

fn default_tail_slope() -> f64 {
    1.0
}

/// `L(x) = int_0^x v(a) da` with `v` the piecewise-linear interpolant of
/// `gradient_values` at `knots`, extended linearly with `tail_slope` beyond
/// the end knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadSurrogate {
    pub knots: Vec<f64>,
    #[serde(alias = "slopes")]
    pub gradient_values: Vec<Vec<f64>>,
    #[serde(default = "default_tail_slope")]
    pub tail_slope: f64,
}

impl PiecewiseQuadSurrogate {
    pub fn new(knots: Vec<f64>, gradient_values: Vec<Vec<f64>>, tail_slope: f64) -> Result<Self> {
        let s = Self {
            knots,
            gradient_values,
            tail_slope,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks shape, ordering and coordinatewise monotonicity.
    pub fn validate(&self) -> Result<()> {
        let m = self.knots.len();
        if m < 2 || self.gradient_values.len() != m {
            return Err(Error::invalid(
                "need at least two knots and one gradient vector per knot",
            ));
        }
        let n = self.gradient_values[0].len();
        if n < 2 || self.gradient_values.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("gradient vectors need a common length >= 2"));
        }
        if self
            .knots
            .iter()
            .chain(self.gradient_values.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("knots and gradients must be finite"));
        }
        if self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if !(self.tail_slope > 0.0 && self.tail_slope.is_finite()) {
            return Err(Error::invalid("tail slope must be positive"));
        }
        if !self.is_monotone() {
            return Err(Error::invalid("gradient values must be coordinatewise nondecreasing"));
        }
        Ok(())
    }

    /// Exact check that `v(x_i) <= v(x_j)` coordinatewise for all `i < j`.
    pub fn is_monotone(&self) -> bool {
        self.gradient_values
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a <= b))
    }

    fn n(&self) -> usize {
        self.gradient_values[0].len()
    }

    /// Segment index: `None` left of the first knot, `Some(m - 1)` right of
    /// the last.
    fn segment(&self, x: f64) -> Option<usize> {
        if x < self.knots[0] {
            return None;
        }
        let i = self.knots.partition_point(|&k| k <= x);
        Some(i - 1)
    }

    /// `v(x)`, the gradient of every component.
    pub fn gradient(&self, x: f64) -> Vec<f64> {
        let m = self.knots.len();
        let vs = &self.gradient_values;
        match self.segment(x) {
            None => {
                let dx = self.knots[0] - x;
                vs[0].iter().map(|v| v - self.tail_slope * dx).collect()
            }
            Some(i) if i + 1 >= m => {
                let dx = x - self.knots[m - 1];
                vs[m - 1].iter().map(|v| v + self.tail_slope * dx).collect()
            }
            Some(i) => {
                let t = (x - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
                vs[i]
                    .iter()
                    .zip(&vs[i + 1])
                    .map(|(a, b)| a + t * (b - a))
                    .collect()
            }
        }
    }

    /// Slope of `v_y` at `x` (right derivative at knots).
    pub fn curvature(&self, y: usize, x: f64) -> f64 {
        let m = self.knots.len();
        match self.segment(x) {
            None => self.tail_slope,
            Some(i) if i + 1 >= m => self.tail_slope,
            Some(i) => {
                (self.gradient_values[i + 1][y] - self.gradient_values[i][y])
                    / (self.knots[i + 1] - self.knots[i])
            }
        }
    }

    /// Antiderivative of `v` anchored at the first knot.
    fn antiderivative(&self, x: f64) -> Vec<f64> {
        let m = self.knots.len();
        let vx = self.gradient(x);
        let trap = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(p, q)| 0.5 * h * (p + q)).collect()
        };
        match self.segment(x) {
            None => trap(&vx, &self.gradient_values[0], self.knots[0] - x)
                .into_iter()
                .map(|v| -v)
                .collect(),
            Some(i) => {
                let mut acc = vec![0.0; self.n()];
                for j in 0..i.min(m - 1) {
                    let seg = trap(
                        &self.gradient_values[j],
                        &self.gradient_values[j + 1],
                        self.knots[j + 1] - self.knots[j],
                    );
                    for (a, s) in acc.iter_mut().zip(seg) {
                        *a += s;
                    }
                }
                let last = trap(&self.gradient_values[i], &vx, x - self.knots[i]);
                for (a, s) in acc.iter_mut().zip(last) {
                    *a += s;
                }
                acc
            }
        }
    }

    /// Per-component zero set of `v_y` as `[lo, hi]`, plus whether the sign
    /// pattern over the tails and knots is strictly negative, then zero, then
    /// strictly positive.
    pub fn sign_scan(&self) -> Vec<SignScan> {
        let m = self.knots.len();
        let spread = self
            .gradient_values
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let reach = (spread + 1.0) / self.tail_slope;
        let mut xs = vec![self.knots[0] - reach];
        xs.extend(&self.knots);
        xs.push(self.knots[m - 1] + reach);
        (0..self.n())
            .map(|y| {
                let vals: Vec<f64> = xs.iter().map(|&x| self.gradient(x)[y]).collect();
                let signs: Vec<i8> = vals
                    .iter()
                    .map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 })
                    .collect();
                let ordered = signs.windows(2).all(|w| w[0] <= w[1]);
                let passed = ordered && signs[0] < 0 && signs[signs.len() - 1] > 0;
                let zero = zero_set(&xs, &vals);
                SignScan {
                    component: y,
                    zero_set: zero,
                    passed,
                }
            })
            .collect()
    }
}

/// Zero set of a nondecreasing piecewise-linear function sampled at `xs`.
fn zero_set(xs: &[f64], vals: &[f64]) -> Option<(f64, f64)> {
    let root = |i: usize| -> f64 {
        let (x0, x1, v0, v1) = (xs[i], xs[i + 1], vals[i], vals[i + 1]);
        x0 + (x1 - x0) * (-v0) / (v1 - v0)
    };
    let first_nonneg = vals.iter().position(|&v| v >= 0.0)?;
    let last_nonpos = vals.iter().rposition(|&v| v <= 0.0)?;
    let lo = if first_nonneg == 0 || vals[first_nonneg] == 0.0 {
        xs[first_nonneg]
    } else {
        root(first_nonneg - 1)
    };
    let hi = if last_nonpos + 1 < xs.len() && vals[last_nonpos] < 0.0 {
        root(last_nonpos)
    } else {
        xs[last_nonpos]
    };
    Some((lo.min(hi), hi.max(lo)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignScan {
    pub component: usize,
    pub zero_set: Option<(f64, f64)>,
    pub passed: bool,
}

impl SurrogateLoss for PiecewiseQuadSurrogate {
    fn name(&self) -> String {
        format!("piecewise_quadratic_1d(knots={})", self.knots.len())
    }

    fn dim(&self) -> usize {
        1
    }

    fn outcomes(&self) -> usize {
        self.n()
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        let at_x = self.antiderivative(u[0]);
        let at_0 = self.antiderivative(0.0);
        for ((o, a), b) in out.iter_mut().zip(at_x).zip(at_0) {
            *o = a - b;
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n(), 1, &self.gradient(u[0]))
    }

    fn component_hessian(&self, y: usize, u: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.curvature(y, u[0])))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Differentiable
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        Some(SurrogateSpec::PiecewiseQuadratic1d {
            piecewise_quadratic_1d: self.clone(),
        })
    }
}

/// Output of [`construct`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Construction {
    pub surrogate: PiecewiseQuadSurrogate,
    pub link: IntervalLink,
    /// Report indices in cell order along the real line.
    pub enumeration: Vec<usize>,
    /// Scale of each boundary normal `l(r_j) - l(r_{j-1})`.
    pub beta: Vec<f64>,
    pub padding: (f64, f64),
}

/// Builds a calibrated 1-d surrogate and its link for an orderable target.
pub fn construct(t: &TargetLoss) -> Result<Construction> {
    t.validate_nonredundant()?;
    let cert = t.orderability();
    let enumeration = cert.enumeration.ok_or(Error::NotOrderable)?;
    let mut reversed = enumeration.clone();
    reversed.reverse();
    for order in [enumeration, reversed] {
        if let Some(c) = construct_along(t, &order)? {
            return Ok(c);
        }
    }
    Err(Error::ScalingInfeasible)
}

fn construct_along(t: &TargetLoss, order: &[usize]) -> Result<Option<Construction>> {
    let k = order.len();
    let normals: Vec<Vec<f64>> = order.windows(2).map(|w| t.row_diff(w[1], w[0])).collect();
    let Some(beta) = scaling_lp(&normals) else {
        return Ok(None);
    };
    let interior: Vec<Vec<f64>> = normals
        .iter()
        .zip(&beta)
        .map(|(d, b)| d.iter().map(|x| x * b).collect())
        .collect();

    let first_cell = t.cell(order[0])?.polytope;
    let last_cell = t.cell(order[k - 1])?.polytope;
    let v_first = &interior[0];
    let v_last = &interior[interior.len() - 1];
    let c1 = first_cell
        .vertices
        .iter()
        .map(|p| p.dot(v_first))
        .fold(0.0f64, f64::max)
        + 1.0;
    let c2 = last_cell
        .vertices
        .iter()
        .map(|p| -p.dot(v_last))
        .fold(0.0f64, f64::max)
        + 1.0;

    let mut values = Vec::with_capacity(k + 1);
    values.push(v_first.iter().map(|x| x - c1).collect());
    values.extend(interior.iter().cloned());
    values.push(v_last.iter().map(|x| x + c2).collect());
    let knots: Vec<f64> = (1..=k + 1).map(|x| x as f64).collect();
    let surrogate = PiecewiseQuadSurrogate::new(knots, values, 1.0)?;

    let boundaries = (2..=k).map(|x| (x as f64, x as f64)).collect();
    let link = IntervalLink::new(
        boundaries,
        order.to_vec(),
        order[1..].to_vec(),
        Orientation::Ascending,
    )?;
    Ok(Some(Construction {
        surrogate,
        link,
        enumeration: order.to_vec(),
        beta,
        padding: (c1, c2),
    }))
}

/// Smallest `beta >= 1` (in total) with `beta_j d_j <= beta_{j+1} d_{j+1}`
/// coordinatewise.
fn scaling_lp(normals: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = normals
        .iter()
        .map(|_| lp.add_var(1.0, (1.0, f64::INFINITY)))
        .collect();
    for j in 0..normals.len().saturating_sub(1) {
        for y in 0..normals[j].len() {
            let (a, b) = (normals[j][y], normals[j + 1][y]);
            lp.add_constraint([(vars[j], a), (vars[j + 1], -b)], ComparisonOp::Le, 0.0);
        }
    }
    let sol = lp.solve().ok()?;
    let beta: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
    // The LP solver works to ~1e-9; snap tiny monotonicity violations by
    // re-checking and rejecting anything visibly off.
    let ok = (0..normals.len().saturating_sub(1)).all(|j| {
        normals[j]
            .iter()
            .zip(&normals[j + 1])
            .all(|(a, b)| beta[j] * a <= beta[j + 1] * b + 1e-9)
    });
    ok.then_some(beta)
}

/// One target boundary checked against its surrogate knot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryCheck {
    /// Position `j` of the boundary between `enumeration[j - 1]` and
    /// `enumeration[j]`.
    pub boundary: usize,
    pub reports: (usize, usize),
    pub knot: f64,
    /// Largest `|<p, v(knot)>|` over the boundary's vertices.
    pub max_vertex_residual: f64,
    /// `<p', v(knot)>` at the interior witness of the lower cell (must be
    /// positive) and the upper cell (must be negative).
    pub lower_witness_value: f64,
    pub upper_witness_value: f64,
}

/// Verifies that each interior knot gradient vanishes on its target
/// boundary and has the right sign on both adjacent cells.
pub fn boundary_certificate(
    s: &PiecewiseQuadSurrogate,
    t: &TargetLoss,
    enumeration: &[usize],
) -> Result<Vec<BoundaryCheck>> {
    let k = enumeration.len();
    if s.knots.len() != k + 1 || s.outcomes() != t.outcomes() {
        return Err(Error::invalid(
            "surrogate knots do not match the target enumeration",
        ));
    }
    let witnesses = t.validate_nonredundant()?;
    (1..k)
        .map(|j| {
            let (lo, hi) = (enumeration[j - 1], enumeration[j]);
            let v = &s.gradient_values[j];
            let bd = t.boundary(lo, hi)?;
            if bd.is_empty() {
                return Err(Error::CertificateFailure {
                    boundary: j,
                    reason: "target boundary is empty".into(),
                });
            }
            let residual = bd
                .vertices
                .iter()
                .map(|p| dot(p.probs(), v).abs())
                .fold(0.0f64, f64::max);
            let lower = witnesses[lo].dot(v);
            let upper = witnesses[hi].dot(v);
            let check = BoundaryCheck {
                boundary: j,
                reports: (lo, hi),
                knot: s.knots[j],
                max_vertex_residual: residual,
                lower_witness_value: lower,
                upper_witness_value: upper,
            };
            if residual > CERTIFICATE_TOL {
                return Err(Error::CertificateFailure {
                    boundary: j,
                    reason: format!("vertex residual {residual:.3e}"),
                });
            }
            if !(lower > 0.0 && upper < 0.0) {
                return Err(Error::CertificateFailure {
                    boundary: j,
                    reason: format!("witness signs {lower:.3e} / {upper:.3e}"),
                });
            }
            Ok(check)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Distribution;

    #[test]
    fn ordinal_construction_matches_hand_values() {
        let t = TargetLoss::ordinal(3);
        let c = construct(&t).unwrap();
        assert_eq!(c.enumeration, vec![0, 1, 2]);
        assert_eq!(c.beta, vec![1.0, 1.0]);
        assert_eq!(c.surrogate.gradient_values[1], vec![1.0, -1.0, -1.0]);
        assert_eq!(c.surrogate.gradient_values[2], vec![1.0, 1.0, -1.0]);
        assert!(c.surrogate.is_monotone());
        assert!(c.surrogate.sign_scan().iter().all(|s| s.passed));
        let checks = boundary_certificate(&c.surrogate, &t, &c.enumeration).unwrap();
        assert_eq!(checks.len(), 2);
        assert!(checks[0].max_vertex_residual <= 1e-12);
    }

    #[test]
    fn abstain_construction_certifies_quarter_boundaries() {
        let t = TargetLoss::abstain(0.25);
        let c = construct(&t).unwrap();
        let checks = boundary_certificate(&c.surrogate, &t, &c.enumeration).unwrap();
        assert!(checks.iter().all(|c| c.max_vertex_residual <= 1e-9));
        let p = Distribution::new(vec![0.25, 0.75]).unwrap();
        let v = &c.surrogate.gradient_values[1];
        assert!(p.dot(v).abs() <= 1e-12);
    }

    #[test]
    fn zero_one_is_not_orderable() {
        assert!(matches!(
            construct(&TargetLoss::zero_one(3)),
            Err(Error::NotOrderable)
        ));
    }

    #[test]
    fn value_is_integral_of_gradient() {
        let c = construct(&TargetLoss::ordinal(3)).unwrap();
        let s = &c.surrogate;
        for x in [-3.0, 0.5, 1.0, 1.7, 2.0, 3.3, 4.0, 6.5] {
            let h = 1e-6;
            let lp = s.value(&[x + h]);
            let lm = s.value(&[x - h]);
            let g = s.gradient(x);
            for y in 0..3 {
                assert!(((lp[y] - lm[y]) / (2.0 * h) - g[y]).abs() < 1e-6);
            }
        }
        assert!(s.value(&[0.0]).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_decreasing_gradients() {
        let bad = PiecewiseQuadSurrogate::new(
            vec![0.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn json_accepts_slopes_alias() {
        let s: PiecewiseQuadSurrogate = serde_json::from_str(
            r#"{"knots": [0, 1], "slopes": [[-1, -2], [1, 0.5]]}"#,
        )
        .unwrap();
        assert_eq!(s.tail_slope, 1.0);
        s.validate().unwrap();
    }
}
