//! Built-in surrogates with closed-form values, Jacobians and Hessians.
//!
//! Binary losses order outcomes as `(+1, -1)`.

use nalgebra::DMatrix;

use super::{BuiltinName, BuiltinParams, OptimalReportSet, Smoothness, SurrogateLoss, SurrogateSpec};
use crate::error::{Error, Result};
use crate::geometry::{Constraint, Distribution, SimplexPolytope};

/// Scalar Huber function: `x^2/2` on `[-1, 1]`, `|x| - 1/2` outside.
pub(crate) fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub(crate) fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

pub(crate) fn huber_curv(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        1.0
    } else {
        0.0
    }
}

fn binary_point(p_plus: f64) -> SimplexPolytope {
    SimplexPolytope::point(Distribution::from_approx(vec![p_plus, 1.0 - p_plus]))
}

fn spec(name: BuiltinName, params: BuiltinParams) -> Option<SurrogateSpec> {
    Some(SurrogateSpec::Builtin {
        builtin: name,
        params,
    })
}

/// `L(u)_y = (1 - u y)^2 + |u|`: strongly convex away from a cusp at zero.
#[derive(Clone, Copy, Debug)]
pub struct Cusp;

impl SurrogateLoss for Cusp {
    fn name(&self) -> String {
        "cusp".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn outcomes(&self) -> usize {
        2
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        let x = u[0];
        out[0] = (1.0 - x).powi(2) + x.abs();
        out[1] = (1.0 + x).powi(2) + x.abs();
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let x = u[0];
        let s = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        DMatrix::from_column_slice(2, 1, &[2.0 * (x - 1.0) + s, 2.0 * (x + 1.0) + s])
    }

    fn component_hessian(&self, _y: usize, _u: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 2.0))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::NonsmoothDemo
    }

    /// With `q` the weight on `+1`: `2q - 3/2` above `3/4`, `2q - 1/2` below
    /// `1/4`, and `0` in between.
    fn analytic_minimizer(&self, p: &Distribution) -> Option<OptimalReportSet> {
        let q = p.probs()[0];
        let u = if q > 0.75 {
            2.0 * q - 1.5
        } else if q < 0.25 {
            2.0 * q - 0.5
        } else {
            0.0
        };
        let v = self.value(&[u]);
        Some(OptimalReportSet::point(vec![u], p.dot(&v)))
    }

    fn analytic_level_set(&self, u: &[f64]) -> Option<SimplexPolytope> {
        let x = u[0];
        Some(if x == 0.0 {
            SimplexPolytope::from_constraints(
                2,
                Vec::new(),
                vec![
                    Constraint::new(vec![-1.0, 0.0], -0.25),
                    Constraint::new(vec![1.0, 0.0], 0.75),
                ],
            )
            .expect("two outcomes")
        } else if x > 0.0 && x <= 0.5 {
            binary_point((x + 1.5) / 2.0)
        } else if (-0.5..0.0).contains(&x) {
            binary_point((x + 0.5) / 2.0)
        } else {
            SimplexPolytope::empty(2)
        })
    }

    fn is_kink(&self, u: &[f64]) -> bool {
        u[0] == 0.0
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(BuiltinName::Cusp, BuiltinParams::default())
    }
}

/// `L(u)_y = (1 - u y)^2`.
#[derive(Clone, Copy, Debug)]
pub struct SmoothCusp;

impl SurrogateLoss for SmoothCusp {
    fn name(&self) -> String {
        "smooth_cusp".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn outcomes(&self) -> usize {
        2
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        out[0] = (1.0 - u[0]).powi(2);
        out[1] = (1.0 + u[0]).powi(2);
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[2.0 * (u[0] - 1.0), 2.0 * (u[0] + 1.0)])
    }

    fn component_hessian(&self, _y: usize, _u: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 2.0))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::StronglyConvex { modulus: 2.0 }
    }

    fn analytic_minimizer(&self, p: &Distribution) -> Option<OptimalReportSet> {
        let u = 2.0 * p.probs()[0] - 1.0;
        Some(OptimalReportSet::point(vec![u], p.dot(&self.value(&[u]))))
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(BuiltinName::SmoothCusp, BuiltinParams::default())
    }
}

/// Three strongly convex quadratics on `R^2` whose Jacobian drops to rank
/// one only at the origin.
#[derive(Clone, Copy, Debug)]
pub struct CeQuadratic;

impl CeQuadratic {
    // (a1, b1, a2, b2) per outcome: a1 u1^2 + b1 u1 + a2 u2^2 + b2 u2
    const COEF: [[f64; 4]; 3] = [
        [1.0, 1.0, 1.0, 2.0],
        [2.0, 1.0, 2.0, 2.0],
        [3.0, -1.0, 1.0, -2.0],
    ];
}

impl SurrogateLoss for CeQuadratic {
    fn name(&self) -> String {
        "ce_quadratic".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn outcomes(&self) -> usize {
        3
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(Self::COEF) {
            *o = c[0] * u[0] * u[0] + c[1] * u[0] + c[2] * u[1] * u[1] + c[3] * u[1];
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(3, 2, |y, j| {
            let c = Self::COEF[y];
            if j == 0 {
                2.0 * c[0] * u[0] + c[1]
            } else {
                2.0 * c[2] * u[1] + c[3]
            }
        })
    }

    fn component_hessian(&self, y: usize, _u: &[f64]) -> Option<DMatrix<f64>> {
        let c = Self::COEF[y];
        Some(DMatrix::from_row_slice(2, 2, &[2.0 * c[0], 0.0, 0.0, 2.0 * c[2]]))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::StronglyConvex { modulus: 2.0 }
    }

    /// The expected loss separates by coordinate, so each coordinate is a
    /// one-dimensional quadratic minimum.
    fn analytic_minimizer(&self, p: &Distribution) -> Option<OptimalReportSet> {
        let mut u = [0.0; 2];
        for (j, slot) in u.iter_mut().enumerate() {
            let (mut quad, mut lin) = (0.0, 0.0);
            for (py, c) in p.probs().iter().zip(Self::COEF) {
                quad += py * c[2 * j];
                lin += py * c[2 * j + 1];
            }
            *slot = -lin / (2.0 * quad);
        }
        Some(OptimalReportSet::point(u.to_vec(), p.dot(&self.value(&u))))
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(BuiltinName::CeQuadratic, BuiltinParams::default())
    }
}

/// `[f(x - 2), x^2 / 2, f(x + 2)]` with `f` the Huber function; a 1-d
/// surrogate for three-class ordinal regression.
#[derive(Clone, Copy, Debug)]
pub struct HuberOrdinal;

impl SurrogateLoss for HuberOrdinal {
    fn name(&self) -> String {
        "huber_ordinal".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn outcomes(&self) -> usize {
        3
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        let x = u[0];
        out[0] = huber(x - 2.0);
        out[1] = 0.5 * x * x;
        out[2] = huber(x + 2.0);
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let x = u[0];
        DMatrix::from_column_slice(3, 1, &[huber_grad(x - 2.0), x, huber_grad(x + 2.0)])
    }

    fn component_hessian(&self, y: usize, u: &[f64]) -> Option<DMatrix<f64>> {
        let x = u[0];
        let c = match y {
            0 => huber_curv(x - 2.0),
            1 => 1.0,
            _ => huber_curv(x + 2.0),
        };
        Some(DMatrix::from_element(1, 1, c))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Differentiable
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(BuiltinName::HuberOrdinal, BuiltinParams::default())
    }
}

/// Two radial Huber losses on `R^d` centred at `+2 e_1` and `-2 e_1`.
///
/// Component order is `[f_H(u - 2 e_1), f_H(u + 2 e_1)]`, so the weight `p_1`
/// pulls the minimizer toward `+2`.
#[derive(Clone, Copy, Debug)]
pub struct HuberPair {
    d: usize,
}

impl HuberPair {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("huber pair needs d >= 1"));
        }
        Ok(Self { d })
    }

    fn shifted(&self, u: &[f64], y: usize) -> Vec<f64> {
        let mut w = u.to_vec();
        w[0] += if y == 0 { -2.0 } else { 2.0 };
        w
    }
}

fn radial_huber(w: &[f64]) -> f64 {
    let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r <= 1.0 {
        0.5 * r * r
    } else {
        r - 0.5
    }
}

impl SurrogateLoss for HuberPair {
    fn name(&self) -> String {
        format!("huber_pair(d={})", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn outcomes(&self) -> usize {
        2
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = radial_huber(&self.shifted(u, y));
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2, self.d);
        for y in 0..2 {
            let w = self.shifted(u, y);
            let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if r <= 1.0 { 1.0 } else { 1.0 / r };
            for (k, wk) in w.iter().enumerate() {
                j[(y, k)] = wk * scale;
            }
        }
        j
    }

    fn component_hessian(&self, y: usize, u: &[f64]) -> Option<DMatrix<f64>> {
        let w = self.shifted(u, y);
        let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d = self.d;
        Some(if r <= 1.0 {
            DMatrix::identity(d, d)
        } else {
            DMatrix::from_fn(d, d, |i, k| {
                let id = if i == k { 1.0 } else { 0.0 };
                (id - w[i] * w[k] / (r * r)) / r
            })
        })
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Differentiable
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(
            BuiltinName::HuberPair,
            BuiltinParams {
                n: None,
                d: Some(self.d),
            },
        )
    }
}

/// `L(u)_y = sum_j (u_j - [y = j])^2` on `R^{n-1}`; the expected loss is
/// minimized uniquely at `(p_1, ..., p_{n-1})`.
#[derive(Clone, Copy, Debug)]
pub struct Universal {
    n: usize,
}

impl Universal {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("universal surrogate needs n >= 2"));
        }
        Ok(Self { n })
    }
}

impl SurrogateLoss for Universal {
    fn name(&self) -> String {
        format!("universal(n={})", self.n)
    }

    fn dim(&self) -> usize {
        self.n - 1
    }

    fn outcomes(&self) -> usize {
        self.n
    }

    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = u
                .iter()
                .enumerate()
                .map(|(j, &uj)| {
                    let t = if j == y { uj - 1.0 } else { uj };
                    t * t
                })
                .sum();
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n - 1, |y, j| {
            2.0 * (u[j] - if j == y { 1.0 } else { 0.0 })
        })
    }

    fn component_hessian(&self, _y: usize, _u: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.n - 1, self.n - 1) * 2.0)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::StronglyConvex { modulus: 2.0 }
    }

    fn analytic_minimizer(&self, p: &Distribution) -> Option<OptimalReportSet> {
        let u = p.probs()[..self.n - 1].to_vec();
        let v = p.dot(&self.value(&u));
        Some(OptimalReportSet::point(u, v))
    }

    fn spec(&self) -> Option<SurrogateSpec> {
        spec(
            BuiltinName::Universal,
            BuiltinParams {
                n: Some(self.n),
                d: None,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_scalar() {
        assert_eq!(huber(0.5), 0.125);
        assert_eq!(huber(-3.0), 2.5);
        assert_eq!(huber_grad(-3.0), -1.0);
    }

    #[test]
    fn ce_jacobian_rows() {
        let j = CeQuadratic.jacobian(&[0.0, 0.0]);
        assert_eq!(j.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(j.row(2).iter().copied().collect::<Vec<_>>(), vec![-1.0, -2.0]);
        let j = CeQuadratic.jacobian(&[1.0, 1.0]);
        assert_eq!(j.as_slice(), &[3.0, 5.0, 5.0, 4.0, 6.0, 0.0]);
    }

    #[test]
    fn cusp_analytic_minimizer_regions() {
        let at = |q: f64| {
            Cusp.analytic_minimizer(&Distribution::new(vec![q, 1.0 - q]).unwrap())
                .unwrap()
                .representative[0]
        };
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(0.25), 0.0);
        assert!((at(0.9) - 0.3).abs() < 1e-12);
        assert!((at(0.1) + 0.3).abs() < 1e-12);
    }

    #[test]
    fn cusp_level_set_at_zero_is_abstain_cell() {
        let ls = Cusp.analytic_level_set(&[0.0]).unwrap();
        assert_eq!(ls.vertices.len(), 2);
        assert!(Cusp.analytic_level_set(&[0.7]).unwrap().is_empty());
    }
}
