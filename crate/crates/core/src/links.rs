//! Link functions from surrogate reports to target reports.

use std::sync::Arc;

use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::elicitation::{build_atlas, check_ie, check_strong_ie, ElicitationConfig, ReportAtlas};
use crate::error::{Error, Result};
use crate::surrogates::{level_set, minimize, OptimizerConfig, SurrogateLoss, SurrogateSpec};
use crate::targets::{TargetFile, TargetLoss};

/// Hausdorff tolerance between a boundary level set and the target boundary.
pub const BOUNDARY_MATCH_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// The first report of the enumeration sits at the left end of the line.
    Ascending,
    Descending,
}

/// Step-function link on `R`.
///
/// `boundaries` are disjoint closed intervals sorted left to right;
/// `region_reports[j]` covers the open gap left of `boundaries[j]` (the last
/// entry covers everything right of the last boundary) and
/// `boundary_reports[j]` covers `boundaries[j]` itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalLink {
    pub boundaries: Vec<(f64, f64)>,
    pub region_reports: Vec<usize>,
    pub boundary_reports: Vec<usize>,
    pub orientation: Orientation,
}

impl IntervalLink {
    pub fn new(
        boundaries: Vec<(f64, f64)>,
        region_reports: Vec<usize>,
        boundary_reports: Vec<usize>,
        orientation: Orientation,
    ) -> Result<Self> {
        if region_reports.len() != boundaries.len() + 1
            || boundary_reports.len() != boundaries.len()
        {
            return Err(Error::invalid("interval link needs m boundaries and m + 1 regions"));
        }
        if boundaries.iter().any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("boundary intervals must be finite with lo <= hi"));
        }
        if boundaries.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(Error::invalid("boundary intervals must be disjoint and sorted"));
        }
        Ok(Self {
            boundaries,
            region_reports,
            boundary_reports,
            orientation,
        })
    }

    pub fn apply(&self, u: f64) -> usize {
        let j = self.boundaries.partition_point(|&(_, hi)| hi < u);
        match self.boundaries.get(j) {
            Some(&(lo, _)) if lo <= u => self.boundary_reports[j],
            _ => self.region_reports[j],
        }
    }

    /// Maximal pieces of the line on which the link is constant, left to
    /// right.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::new();
        let mut left = f64::NEG_INFINITY;
        for (j, &(lo, hi)) in self.boundaries.iter().enumerate() {
            out.push(Piece {
                lo: left,
                hi: lo,
                closed: (false, false),
                report: self.region_reports[j],
            });
            out.push(Piece {
                lo,
                hi,
                closed: (true, true),
                report: self.boundary_reports[j],
            });
            left = hi;
        }
        out.push(Piece {
            lo: left,
            hi: f64::INFINITY,
            closed: (false, false),
            report: self.region_reports[self.boundaries.len()],
        });
        out
    }
}

/// Interval of the line on which an [`IntervalLink`] is constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub closed: (bool, bool),
    pub report: usize,
}

/// The interval link of a 1-d surrogate for an orderable target.
///
/// Each boundary `I^j` is `Gamma(p)` at a relative-interior point of the
/// boundary between consecutive cells; the level set there must coincide
/// with that boundary.
pub fn build_interval_link(
    s: &dyn SurrogateLoss,
    t: &TargetLoss,
    opt: &OptimizerConfig,
    rank_tol: f64,
) -> Result<IntervalLink> {
    if s.dim() != 1 {
        return Err(Error::invalid("interval links need a 1-d surrogate"));
    }
    let witnesses = t.validate_nonredundant()?;
    let cert = t.orderability();
    let order = cert.enumeration.clone().ok_or(Error::NotOrderable)?;
    let mut bounds = Vec::new();
    let mut breports = Vec::new();
    for (j, w) in order.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let edge = cert.edge(a, b).ok_or(Error::NotOrderable)?;
        let set = minimize(s, &edge.witness, opt)?;
        let (lo, hi) = set
            .interval
            .unwrap_or((set.representative[0], set.representative[0]));
        let mid = 0.5 * (lo + hi);
        let ls = level_set(s, &[mid], rank_tol)?;
        let bd = t.boundary(a, b)?;
        let distance = ls.vertex_hausdorff(&bd);
        if !(distance <= BOUNDARY_MATCH_TOL) {
            return Err(Error::BoundaryLevelSetMismatch {
                boundary: j + 1,
                distance,
            });
        }
        bounds.push((lo, hi));
        breports.push(a.min(b));
    }
    let first = minimize(s, &witnesses[order[0]], opt)?.representative[0];
    let last = minimize(s, &witnesses[order[order.len() - 1]], opt)?.representative[0];
    let (orientation, regions) = if first <= last {
        (Orientation::Ascending, order)
    } else {
        bounds.reverse();
        breports.reverse();
        let mut r = order;
        r.reverse();
        (Orientation::Descending, r)
    };
    IntervalLink::new(bounds, regions, breports, orientation).map_err(|_| {
        Error::invalid("boundary intervals overlap or are out of order; IE likely fails")
    })
}

/// Nearest-neighbour link over an atlas of optimal reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionLink {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub resolution: f64,
}

fn nearest(points: &[Vec<f64>], u: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d: f64 = q.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best
}

impl ProjectionLink {
    pub fn apply(&self, u: &[f64]) -> usize {
        nearest(&self.points, u).map_or(0, |i| self.labels[i])
    }
}

/// Labels each atlas report with the smallest report optimal at all of its
/// level-set corners; requires strong IE on the atlas.
pub fn build_projection_link(atlas: &ReportAtlas) -> Result<ProjectionLink> {
    if check_strong_ie(atlas).violated() {
        return Err(Error::StrongIERequired);
    }
    let (points, labels) = labelled_points(atlas).ok_or(Error::StrongIERequired)?;
    Ok(ProjectionLink {
        points,
        labels,
        resolution: atlas.resolution,
    })
}

fn labelled_points(atlas: &ReportAtlas) -> Option<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut points = Vec::with_capacity(atlas.entries.len());
    let mut labels = Vec::with_capacity(atlas.entries.len());
    for e in &atlas.entries {
        points.push(e.u.clone());
        labels.push(*e.common_gamma().first()?);
    }
    Some((points, labels))
}

/// The link forced by IE: `psi(u)` is the smallest report optimal at every
/// corner of `Gamma_u`. Reports with an empty or ambiguous level set fall
/// back to the nearest atlas report.
#[derive(Clone, Debug)]
pub struct LevelSetLink {
    surrogate: Arc<dyn SurrogateLoss>,
    target: TargetLoss,
    pub corner_tie_tol: f64,
    pub rank_tol: f64,
    pub fallback: ProjectionLink,
}

impl LevelSetLink {
    /// Requires IE on the atlas.
    pub fn build(
        s: Arc<dyn SurrogateLoss>,
        t: &TargetLoss,
        atlas: &ReportAtlas,
        corner_tie_tol: f64,
        rank_tol: f64,
    ) -> Result<Self> {
        if check_ie(atlas).violated() {
            return Err(Error::IERequired);
        }
        let (points, labels) = labelled_points(atlas).ok_or(Error::IERequired)?;
        Ok(Self {
            surrogate: s,
            target: t.clone(),
            corner_tie_tol,
            rank_tol,
            fallback: ProjectionLink {
                points,
                labels,
                resolution: atlas.resolution,
            },
        })
    }

    pub fn surrogate(&self) -> &Arc<dyn SurrogateLoss> {
        &self.surrogate
    }

    pub fn apply(&self, u: &[f64]) -> usize {
        if let Ok(ls) = level_set(self.surrogate.as_ref(), u, self.rank_tol) {
            let mut common: Option<Vec<usize>> = None;
            for c in &ls.vertices {
                let g = self.target.gamma(c, self.corner_tie_tol);
                common = Some(match common {
                    None => g,
                    Some(prev) => prev.into_iter().filter(|r| g.contains(r)).collect(),
                });
            }
            if let Some(&r) = common.as_ref().and_then(|c| c.first()) {
                return r;
            }
        }
        self.fallback.apply(u)
    }
}

#[derive(Serialize, Deserialize)]
struct LevelSetLinkFile {
    surrogate: SurrogateSpec,
    target: TargetFile,
    corner_tie_tol: f64,
    rank_tol: f64,
    fallback: ProjectionLink,
}

impl Serialize for LevelSetLink {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let spec = self
            .surrogate
            .spec()
            .ok_or_else(|| S::Error::custom("surrogate has no serializable spec"))?;
        LevelSetLinkFile {
            surrogate: spec,
            target: self.target.to_file(),
            corner_tie_tol: self.corner_tie_tol,
            rank_tol: self.rank_tol,
            fallback: self.fallback.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for LevelSetLink {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let f = LevelSetLinkFile::deserialize(de)?;
        Ok(Self {
            surrogate: f.surrogate.build().map_err(D::Error::custom)?,
            target: f.target.into_target().map_err(D::Error::custom)?,
            corner_tie_tol: f.corner_tie_tol,
            rank_tol: f.rank_tol,
            fallback: f.fallback,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    Interval(IntervalLink),
    Projection(ProjectionLink),
    LevelSet(LevelSetLink),
}

impl Link {
    pub fn apply(&self, u: &[f64]) -> usize {
        match self {
            Link::Interval(l) => l.apply(u[0]),
            Link::Projection(l) => l.apply(u),
            Link::LevelSet(l) => l.apply(u),
        }
    }

    pub fn as_interval(&self) -> Option<&IntervalLink> {
        match self {
            Link::Interval(l) => Some(l),
            _ => None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Interval link when `d = 1` and the level sets match the target
/// boundaries, else the projection link (strong IE), else the level-set link
/// (IE).
pub fn auto_link(s: &Arc<dyn SurrogateLoss>, t: &TargetLoss, cfg: &ElicitationConfig) -> Result<Link> {
    if s.dim() == 1 {
        if let Ok(l) = build_interval_link(s.as_ref(), t, &cfg.opt, cfg.rank_tol) {
            return Ok(Link::Interval(l));
        }
    }
    let atlas = build_atlas(s.as_ref(), t, cfg)?;
    if let Ok(l) = build_projection_link(&atlas) {
        return Ok(Link::Projection(l));
    }
    Ok(Link::LevelSet(LevelSetLink::build(
        s.clone(),
        t,
        &atlas,
        cfg.corner_tie_tol,
        cfg.rank_tol,
    )?))
}
