//! Discrete target losses and the finite properties they elicit.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lp_feasible_strict, Constraint, Distribution, SimplexPolytope};

pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// Margin for every "relative interior" LP in this module.
pub const RELINT_MARGIN: f64 = 1e-6;

/// A `k x n` loss matrix; entry `(r, y)` is the loss of report `r` under
/// outcome `y`.
#[derive(Clone, Debug)]
pub struct TargetLoss {
    loss: DMatrix<f64>,
    labels: Vec<String>,
}

/// Level set `gamma_r` of one report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetCell {
    pub report: usize,
    pub polytope: SimplexPolytope,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionEdge {
    pub reports: (usize, usize),
    /// Relative-interior point where both reports tie and beat all others.
    pub witness: Distribution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderabilityCertificate {
    pub ordered: bool,
    pub enumeration: Option<Vec<usize>>,
    pub intersection_edges: Vec<IntersectionEdge>,
}

impl OrderabilityCertificate {
    pub fn edge(&self, a: usize, b: usize) -> Option<&IntersectionEdge> {
        self.intersection_edges
            .iter()
            .find(|e| e.reports == (a.min(b), a.max(b)))
    }
}

impl TargetLoss {
    /// Builds a target from loss rows (one row per report).
    pub fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::invalid("target needs at least two reports"));
        }
        let n = rows[0].len();
        if n < 2 {
            return Err(Error::invalid("target needs at least two outcomes"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("loss rows have different lengths"));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("loss entries must be finite"));
        }
        let labels = match labels {
            Some(l) if l.len() != k => {
                return Err(Error::invalid(format!(
                    "{} labels for {k} reports",
                    l.len()
                )))
            }
            Some(l) => l,
            None => (1..=k).map(|r| r.to_string()).collect(),
        };
        Ok(Self {
            loss: DMatrix::from_fn(k, n, |r, y| rows[r][y]),
            labels,
        })
    }

    /// Ordinal regression loss `|y - r|` on `n` ordered classes.
    pub fn ordinal(n: usize) -> Self {
        let rows = (0..n)
            .map(|r| (0..n).map(|y| (y as f64 - r as f64).abs()).collect())
            .collect();
        Self::new(rows, None).expect("valid ordinal loss")
    }

    /// Binary classification with an abstain option.
    ///
    /// Outcomes are ordered `(+1, -1)` and reports `(-1, abstain, +1)`.
    pub fn abstain(level: f64) -> Self {
        let rows = vec![vec![1.0, 0.0], vec![level, level], vec![0.0, 1.0]];
        let labels = ["-1", "abstain", "+1"].map(String::from).to_vec();
        Self::new(rows, Some(labels)).expect("valid abstain loss")
    }

    /// Misclassification loss on `n` classes.
    pub fn zero_one(n: usize) -> Self {
        let rows = (0..n)
            .map(|r| (0..n).map(|y| if r == y { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(rows, None).expect("valid 0-1 loss")
    }

    /// Two reports on three outcomes: report 1 costs `(1, 1, 1)`, report 2
    /// costs `second`.
    pub fn two_report(second: [f64; 3]) -> Self {
        Self::new(vec![vec![1.0, 1.0, 1.0], second.to_vec()], None).expect("valid target")
    }

    pub fn reports(&self) -> usize {
        self.loss.nrows()
    }

    pub fn outcomes(&self) -> usize {
        self.loss.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, r: usize) -> &str {
        &self.labels[r]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.loss.row(r).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.loss
    }

    /// `l(r) - l(s)`.
    pub fn row_diff(&self, r: usize, s: usize) -> Vec<f64> {
        (0..self.outcomes())
            .map(|y| self.loss[(r, y)] - self.loss[(s, y)])
            .collect()
    }

    pub fn expected_losses(&self, p: &Distribution) -> Vec<f64> {
        (0..self.reports())
            .map(|r| p.dot(self.loss.row(r).transpose().as_slice()))
            .collect()
    }

    /// Reports whose expected loss is within `tie_tol` of the minimum.
    pub fn gamma(&self, p: &Distribution, tie_tol: f64) -> Vec<usize> {
        let losses = self.expected_losses(p);
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        (0..self.reports())
            .filter(|&r| losses[r] <= min + tie_tol)
            .collect()
    }

    fn beats_constraints(&self, r: usize, skip: &[usize]) -> Vec<Constraint> {
        (0..self.reports())
            .filter(|s| *s != r && !skip.contains(s))
            .map(|s| Constraint::through_origin(self.row_diff(r, s)))
            .collect()
    }

    /// The cell `gamma_r = {p : <p, l(r) - l(s)> <= 0 for all s}`.
    pub fn cell(&self, r: usize) -> Result<TargetCell> {
        if r >= self.reports() {
            return Err(Error::invalid(format!("no report {r}")));
        }
        let polytope = SimplexPolytope::from_constraints(
            self.outcomes(),
            Vec::new(),
            self.beats_constraints(r, &[]),
        )?;
        Ok(TargetCell { report: r, polytope })
    }

    /// `gamma_r ∩ gamma_s`.
    pub fn boundary(&self, r: usize, s: usize) -> Result<SimplexPolytope> {
        let mut ineq = self.beats_constraints(r, &[s]);
        ineq.extend(self.beats_constraints(s, &[r]));
        SimplexPolytope::from_constraints(
            self.outcomes(),
            vec![Constraint::through_origin(self.row_diff(r, s))],
            ineq,
        )
    }

    /// A witness distribution per report at which it beats every other
    /// report by at least [`RELINT_MARGIN`].
    pub fn validate_nonredundant(&self) -> Result<Vec<Distribution>> {
        (0..self.reports())
            .map(|r| {
                let strict: Vec<Constraint> = (0..self.reports())
                    .filter(|&s| s != r)
                    .map(|s| Constraint::through_origin(self.row_diff(r, s)))
                    .collect();
                lp_feasible_strict(self.outcomes(), &[], &strict, RELINT_MARGIN)
                    .map(|w| w.point)
                    .ok_or(Error::RedundantReport { report: r })
            })
            .collect()
    }

    /// Builds the intersection graph over relative-interior ties and checks
    /// whether it is a path.
    pub fn orderability(&self) -> OrderabilityCertificate {
        let k = self.reports();
        let n = self.outcomes();
        let positivity: Vec<Constraint> = (0..n)
            .map(|i| {
                let mut w = vec![0.0; n];
                w[i] = -1.0;
                Constraint::through_origin(w)
            })
            .collect();
        let mut edges = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let eq = [Constraint::through_origin(self.row_diff(a, b))];
                let mut strict = self.beats_constraints(a, &[b]);
                strict.extend(positivity.iter().cloned());
                if let Some(w) = lp_feasible_strict(n, &eq, &strict, RELINT_MARGIN) {
                    edges.push(IntersectionEdge {
                        reports: (a, b),
                        witness: w.point,
                    });
                }
            }
        }
        let enumeration = path_order(k, &edges);
        OrderabilityCertificate {
            ordered: enumeration.is_some(),
            enumeration,
            intersection_edges: edges,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: TargetFile = serde_json::from_str(s)?;
        file.into_target()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> TargetFile {
        TargetFile {
            n: self.outcomes(),
            k: self.reports(),
            loss: (0..self.reports())
                .map(|r| self.row(r).into_iter().map(ExactNumber).collect())
                .collect(),
            labels: Some(self.labels.clone()),
        }
    }
}

/// Degree-and-connectivity path test; returns the walk from the
/// lowest-indexed endpoint.
fn path_order(k: usize, edges: &[IntersectionEdge]) -> Option<Vec<usize>> {
    if edges.len() != k - 1 {
        return None;
    }
    let mut adj = vec![Vec::new(); k];
    for e in edges {
        adj[e.reports.0].push(e.reports.1);
        adj[e.reports.1].push(e.reports.0);
    }
    if adj.iter().any(|a| a.is_empty() || a.len() > 2) {
        return None;
    }
    let start = (0..k).find(|&r| adj[r].len() == 1)?;
    let mut order = vec![start];
    let mut seen = BTreeSet::from([start]);
    let mut cur = start;
    while let Some(&next) = adj[cur].iter().find(|x| !seen.contains(x)) {
        order.push(next);
        seen.insert(next);
        cur = next;
    }
    (order.len() == k).then_some(order)
}

/// JSON form of a target: `{"n", "k", "loss", "labels"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetFile {
    pub n: usize,
    pub k: usize,
    pub loss: Vec<Vec<ExactNumber>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl TargetFile {
    pub fn into_target(self) -> Result<TargetLoss> {
        if self.loss.len() != self.k {
            return Err(Error::invalid(format!(
                "k = {} but {} loss rows",
                self.k,
                self.loss.len()
            )));
        }
        if self.loss.iter().any(|r| r.len() != self.n) {
            return Err(Error::invalid(format!("every loss row must have n = {} entries", self.n)));
        }
        let rows = self
            .loss
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.0).collect())
            .collect();
        TargetLoss::new(rows, self.labels)
    }
}

/// A number given as JSON number, decimal string or rational string `"a/b"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ExactNumber(pub f64);

impl<'de> Deserialize<'de> for ExactNumber {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExactNumber(x)),
            Raw::Str(s) => parse_exact(&s).map(ExactNumber).map_err(serde::de::Error::custom),
        }
    }
}

pub fn parse_exact(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {s:?}"))
    };
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse(b)?;
            if den == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            Ok(parse(a)? / den)
        }
        None => parse(s),
    }
}
