//! Surrogate loss oracles, expected-loss minimization and level sets.

mod builtin;
mod optimize;

use std::fmt::Debug;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::construct1d::PiecewiseQuadSurrogate;
use crate::error::{Error, Result};
use crate::geometry::{simplex_section, Distribution, LinearMapOnSimplex, SimplexPolytope};

pub use builtin::{CeQuadratic, Cusp, HuberOrdinal, HuberPair, SmoothCusp, Universal};
pub use optimize::{minimize, OptimizerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Differentiable,
    StronglyConvex { modulus: f64 },
    /// Convex with kinks; must supply analytic minimizers and level sets.
    NonsmoothDemo,
}

/// A convex loss `L: R^d -> R^n`, one component per outcome.
pub trait SurrogateLoss: Debug + Send + Sync {
    fn name(&self) -> String;

    /// Prediction dimension `d`.
    fn dim(&self) -> usize;

    /// Number of outcomes `n`.
    fn outcomes(&self) -> usize;

    fn value_into(&self, u: &[f64], out: &mut [f64]);

    /// `n x d` Jacobian; row `y` is the gradient of component `y`.
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;

    /// `d x d` Hessian of component `y`, when available.
    fn component_hessian(&self, _y: usize, _u: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn smoothness(&self) -> Smoothness;

    fn analytic_minimizer(&self, _p: &Distribution) -> Option<OptimalReportSet> {
        None
    }

    fn analytic_level_set(&self, _u: &[f64]) -> Option<SimplexPolytope> {
        None
    }

    /// True where the Jacobian is not defined.
    fn is_kink(&self, _u: &[f64]) -> bool {
        false
    }

    /// Serializable description, when one exists.
    fn spec(&self) -> Option<SurrogateSpec> {
        None
    }

    fn value(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes()];
        self.value_into(u, &mut out);
        out
    }

    fn expected_gradient(&self, p: &Distribution, u: &[f64]) -> DVector<f64> {
        self.jacobian(u).tr_mul(&DVector::from_column_slice(p.probs()))
    }

    fn expected_hessian(&self, p: &Distribution, u: &[f64]) -> Option<DMatrix<f64>> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (y, &py) in p.probs().iter().enumerate() {
            if py != 0.0 {
                h += self.component_hessian(y, u)? * py;
            }
        }
        Some(h)
    }
}

/// `<p, L(u)>`.
pub fn expected_loss(s: &dyn SurrogateLoss, p: &Distribution, u: &[f64]) -> f64 {
    p.dot(&s.value(u))
}

/// Result of minimizing `<p, L(.)>`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalReportSet {
    pub representative: Vec<f64>,
    pub is_unique: bool,
    /// The full argmin when `d = 1` and it is a nondegenerate segment.
    pub interval: Option<(f64, f64)>,
    pub opt_value: f64,
}

impl OptimalReportSet {
    pub fn point(u: Vec<f64>, opt_value: f64) -> Self {
        Self {
            representative: u,
            is_unique: true,
            interval: None,
            opt_value,
        }
    }

    /// Euclidean distance from `u` to the argmin (point or interval).
    pub fn distance(&self, u: &[f64]) -> f64 {
        match self.interval {
            Some((a, b)) if u.len() == 1 => {
                let x = u[0];
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            }
            _ => u
                .iter()
                .zip(&self.representative)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `Gamma_u`: distributions for which `u` is optimal.
pub fn level_set(s: &dyn SurrogateLoss, u: &[f64], rank_tol: f64) -> Result<SimplexPolytope> {
    if let Some(ls) = s.analytic_level_set(u) {
        return Ok(ls);
    }
    if s.is_kink(u) {
        return Err(Error::NonDifferentiable { u: u.to_vec() });
    }
    simplex_section(&LinearMapOnSimplex::new(s.jacobian(u))?, rank_tol)
}

/// Per-component outcome of the compact-argmin probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub component: usize,
    pub argmin_lo: Vec<f64>,
    pub argmin_hi: Vec<f64>,
    pub min_value: f64,
    /// Smallest increase seen over the axis probes (negative means a probe
    /// did not increase).
    pub min_increase: f64,
    pub passed: bool,
}

/// Heuristic evidence that each component has a nonempty compact argmin:
/// the component is minimized, then required to strictly increase along
/// every axis direction at `probe_radius` beyond the argmin box. A pass is
/// necessary-style evidence, not a proof.
pub fn validate_compact_argmin(
    s: &dyn SurrogateLoss,
    probe_radius: f64,
    cfg: &OptimizerConfig,
) -> Result<Vec<ComponentCheck>> {
    let n = s.outcomes();
    let d = s.dim();
    (0..n)
        .map(|y| {
            let e = Distribution::vertex(n, y);
            let set = minimize(s, &e, cfg)?;
            let (lo, hi) = match set.interval {
                Some((a, b)) => (vec![a], vec![b]),
                None => (set.representative.clone(), set.representative.clone()),
            };
            let mut min_increase = f64::INFINITY;
            for axis in 0..d {
                for (base, sign) in [(&lo, -1.0), (&hi, 1.0)] {
                    let mut probe = base.clone();
                    probe[axis] += sign * probe_radius;
                    let inc = s.value(&probe)[y] - set.opt_value;
                    min_increase = min_increase.min(inc);
                }
            }
            Ok(ComponentCheck {
                component: y,
                argmin_lo: lo,
                argmin_hi: hi,
                min_value: set.opt_value,
                min_increase,
                passed: min_increase > 1e-12,
            })
        })
        .collect()
}

/// Serializable surrogate description.
///
/// `{"builtin": name, "params": {...}}` or
/// `{"piecewise_quadratic_1d": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurrogateSpec {
    Builtin {
        builtin: BuiltinName,
        #[serde(default)]
        params: BuiltinParams,
    },
    PiecewiseQuadratic1d {
        piecewise_quadratic_1d: PiecewiseQuadSurrogate,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    Cusp,
    SmoothCusp,
    CeQuadratic,
    HuberOrdinal,
    HuberPair,
    Universal,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BuiltinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl SurrogateSpec {
    pub fn builtin(name: BuiltinName) -> Self {
        SurrogateSpec::Builtin {
            builtin: name,
            params: BuiltinParams::default(),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn SurrogateLoss>> {
        match self {
            SurrogateSpec::Builtin { builtin, params } => Ok(match builtin {
                BuiltinName::Cusp => Arc::new(Cusp),
                BuiltinName::SmoothCusp => Arc::new(SmoothCusp),
                BuiltinName::CeQuadratic => Arc::new(CeQuadratic),
                BuiltinName::HuberOrdinal => Arc::new(HuberOrdinal),
                BuiltinName::HuberPair => Arc::new(HuberPair::new(params.d.unwrap_or(1))?),
                BuiltinName::Universal => Arc::new(Universal::new(params.n.unwrap_or(3))?),
            }),
            SurrogateSpec::PiecewiseQuadratic1d {
                piecewise_quadratic_1d,
            } => {
                piecewise_quadratic_1d.validate()?;
                Ok(Arc::new(piecewise_quadratic_1d.clone()))
            }
        }
    }

    /// Parses a short name such as `universal:4`, `huber-pair:2` or `ce`.
    pub fn from_name(name: &str) -> Option<Self> {
        let (base, arg) = match name.split_once(':') {
            Some((b, a)) => (b, a.parse::<usize>().ok()),
            None => (name, None),
        };
        let (builtin, params) = match base {
            "cusp" => (BuiltinName::Cusp, BuiltinParams::default()),
            "smooth-cusp" => (BuiltinName::SmoothCusp, BuiltinParams::default()),
            "ce" | "ce-quadratic" => (BuiltinName::CeQuadratic, BuiltinParams::default()),
            "huber-ordinal" => (BuiltinName::HuberOrdinal, BuiltinParams::default()),
            "huber-pair" => (
                BuiltinName::HuberPair,
                BuiltinParams { n: None, d: arg.or(Some(1)) },
            ),
            "universal" => (
                BuiltinName::Universal,
                BuiltinParams { n: arg.or(Some(3)), d: None },
            ),
            _ => return None,
        };
        Some(SurrogateSpec::Builtin { builtin, params })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn expected_loss_examples() {
        assert!((expected_loss(&Cusp, &dist(&[0.5, 0.5]), &[0.0]) - 1.0).abs() < 1e-15);
        assert!(
            (expected_loss(&HuberOrdinal, &dist(&[0.5, 0.0, 0.5]), &[0.0]) - 1.5).abs() < 1e-15
        );
        let u = [0.3, -1.2];
        let v = CeQuadratic.value(&u);
        for y in 0..3 {
            assert_eq!(expected_loss(&CeQuadratic, &Distribution::vertex(3, y), &u), v[y]);
        }
    }

    #[test]
    fn ce_level_set_at_origin_is_segment() {
        let ls = level_set(&CeQuadratic, &[0.0, 0.0], 1e-9).unwrap();
        assert_eq!(ls.vertices.len(), 2);
        let want = [dist(&[0.5, 0.0, 0.5]), dist(&[0.0, 0.5, 0.5])];
        for w in &want {
            assert!(ls.vertices.iter().any(|v| v.max_dist(w) < 1e-8));
        }
    }

    #[test]
    fn huber_ordinal_level_set_at_zero() {
        let ls = level_set(&HuberOrdinal, &[0.0], 1e-9).unwrap();
        assert_eq!(ls.vertices.len(), 2);
        for w in [dist(&[0.5, 0.0, 0.5]), dist(&[0.0, 1.0, 0.0])] {
            assert!(ls.vertices.iter().any(|v| v.max_dist(&w) < 1e-9));
        }
    }

    #[test]
    fn smooth_cusp_level_sets_are_points() {
        for u in [-0.8, -0.25, 0.0, 0.6] {
            let ls = level_set(&SmoothCusp, &[u], 1e-9).unwrap();
            assert_eq!(ls.vertices.len(), 1);
            let want = dist(&[(u + 1.0) / 2.0, (1.0 - u) / 2.0]);
            assert!(ls.vertices[0].max_dist(&want) < 1e-12);
        }
        assert!(level_set(&SmoothCusp, &[1.5], 1e-9).unwrap().is_empty());
    }

    #[derive(Debug)]
    struct Absolute;

    impl SurrogateLoss for Absolute {
        fn name(&self) -> String {
            "absolute".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn outcomes(&self) -> usize {
            2
        }
        fn value_into(&self, u: &[f64], out: &mut [f64]) {
            out[0] = (u[0] - 1.0).abs();
            out[1] = (u[0] + 1.0).abs();
        }
        fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
            DMatrix::from_column_slice(2, 1, &[(u[0] - 1.0).signum(), (u[0] + 1.0).signum()])
        }
        fn smoothness(&self) -> Smoothness {
            Smoothness::NonsmoothDemo
        }
        fn is_kink(&self, u: &[f64]) -> bool {
            u[0].abs() == 1.0
        }
    }

    #[test]
    fn level_set_at_kink_without_analytic_form_errors() {
        assert!(matches!(
            level_set(&Absolute, &[1.0], 1e-9),
            Err(Error::NonDifferentiable { .. })
        ));
        assert!(level_set(&Cusp, &[0.0], 1e-9).is_ok());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: SurrogateSpec =
            serde_json::from_str(r#"{"builtin": "universal", "params": {"n": 4}}"#).unwrap();
        let s = spec.build().unwrap();
        assert_eq!((s.dim(), s.outcomes()), (3, 4));
        let spec: SurrogateSpec = serde_json::from_str(r#"{"builtin": "ce_quadratic"}"#).unwrap();
        assert_eq!(spec.build().unwrap().dim(), 2);
        assert!(SurrogateSpec::from_name("huber-pair:2").is_some());
        assert!(SurrogateSpec::from_name("nope").is_none());
    }
}
