//! Indirect elicitation checks through the corners of surrogate level sets.
//!
//! IE holds at a report `u` iff some target report is optimal at every
//! corner of `Gamma_u`; strong IE holds iff all corners share the same
//! optimal set. Both are checked over a report atlas: the surrogate
//! minimizers of a simplex lattice plus every target-cell vertex and
//! boundary barycenter. Verdicts are qualified by the atlas resolution.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{lattice_steps, simplex_lattice, Distribution, SimplexPolytope, DEFAULT_RANK_TOL};
use crate::surrogates::{level_set, minimize, OptimizerConfig, SurrogateLoss};
use crate::targets::TargetLoss;

/// Corner membership tolerance used when replaying certificates.
pub const REPLAY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElicitationConfig {
    /// Simplex grid spacing, e.g. `0.05`.
    pub resolution: f64,
    /// Tie tolerance for `gamma` at atlas points and level-set corners.
    pub corner_tie_tol: f64,
    pub rank_tol: f64,
    /// Interior samples taken across a 1-d interval argmin.
    pub interval_samples: usize,
    pub opt: OptimizerConfig,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            corner_tie_tol: 1e-7,
            rank_tol: DEFAULT_RANK_TOL,
            interval_samples: 7,
            opt: OptimizerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub p: Distribution,
    /// An optimal report for `p`.
    pub u: Vec<f64>,
    pub gamma_set: Vec<usize>,
    pub level_set_corners: Vec<Distribution>,
    pub corner_gammas: Vec<Vec<usize>>,
}

impl AtlasEntry {
    /// Reports optimal at every corner.
    pub fn common_gamma(&self) -> Vec<usize> {
        let mut it = self.corner_gammas.iter();
        let Some(first) = it.next() else {
            return self.gamma_set.clone();
        };
        let mut common: BTreeSet<usize> = first.iter().copied().collect();
        for g in it {
            let g: BTreeSet<usize> = g.iter().copied().collect();
            common = &common & &g;
        }
        common.into_iter().collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportAtlas {
    pub resolution: f64,
    pub entries: Vec<AtlasEntry>,
}

/// Lattice points at `resolution` plus every cell vertex and the barycenter
/// of every nonempty pairwise boundary, deduplicated.
pub fn probe_points(t: &TargetLoss, resolution: f64) -> Result<Vec<Distribution>> {
    let n = t.outcomes();
    let mut points = simplex_lattice(n, lattice_steps(resolution));
    for r in 0..t.reports() {
        points.extend(t.cell(r)?.polytope.vertices);
    }
    for a in 0..t.reports() {
        for b in a + 1..t.reports() {
            if let Some(c) = t.boundary(a, b)?.barycenter() {
                points.push(c);
            }
        }
    }
    let mut seen = HashSet::new();
    points.retain(|p| {
        let key: Vec<i64> = p.probs().iter().map(|x| (x * 1e9).round() as i64).collect();
        seen.insert(key)
    });
    Ok(points)
}

/// Corners of `Gamma_u`; falls back to a looser rank tolerance and finally
/// to `[p]` when round-off leaves the section numerically empty.
fn corners_at(
    s: &dyn SurrogateLoss,
    u: &[f64],
    p: &Distribution,
    rank_tol: f64,
) -> Result<Vec<Distribution>> {
    let ls = level_set(s, u, rank_tol)?;
    if !ls.is_empty() {
        return Ok(ls.vertices);
    }
    let ls = level_set(s, u, rank_tol.max(1e-6))?;
    if !ls.is_empty() {
        return Ok(ls.vertices);
    }
    Ok(vec![p.clone()])
}

pub fn build_atlas(
    s: &dyn SurrogateLoss,
    t: &TargetLoss,
    cfg: &ElicitationConfig,
) -> Result<ReportAtlas> {
    let mut entries = Vec::new();
    for p in probe_points(t, cfg.resolution)? {
        let set = minimize(s, &p, &cfg.opt)?;
        let gamma_set = t.gamma(&p, cfg.corner_tie_tol);
        let us: Vec<Vec<f64>> = match set.interval {
            Some((a, b)) => {
                let m = cfg.interval_samples;
                let mut v = vec![vec![a], vec![b]];
                v.extend((1..=m).map(|i| vec![a + (b - a) * i as f64 / (m + 1) as f64]));
                v
            }
            None => vec![set.representative.clone()],
        };
        for u in us {
            let corners = corners_at(s, &u, &p, cfg.rank_tol)?;
            let corner_gammas = corners
                .iter()
                .map(|c| t.gamma(c, cfg.corner_tie_tol))
                .collect();
            entries.push(AtlasEntry {
                p: p.clone(),
                u,
                gamma_set: gamma_set.clone(),
                level_set_corners: corners,
                corner_gammas,
            });
        }
    }
    Ok(ReportAtlas {
        resolution: cfg.resolution,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    #[serde(rename = "ie")]
    IE,
    #[serde(rename = "strong_ie")]
    StrongIE,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerdictStatus {
    NoViolationFound { resolution: f64 },
    Violated,
}

/// A report `u` whose level-set corners conflict under the claim.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolationCertificate {
    pub u: Vec<f64>,
    pub corners: Vec<Distribution>,
    pub corner_gammas: Vec<Vec<usize>>,
    /// Two corners whose optimal sets conflict on their own, when such a
    /// pair exists (for IE an empty intersection can need three corners).
    pub pair: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElicitationVerdict {
    pub claim: Claim,
    #[serde(flatten)]
    pub status: VerdictStatus,
    pub certificate: Option<ViolationCertificate>,
}

impl ElicitationVerdict {
    pub fn violated(&self) -> bool {
        self.status == VerdictStatus::Violated
    }

    /// Recomputes the level set and target optima behind a violation.
    ///
    /// Returns `Ok(true)` when every stored corner lies in `Gamma_u` within
    /// [`REPLAY_TOL`] and the recomputed optimal sets still conflict.
    pub fn replay(
        &self,
        s: &dyn SurrogateLoss,
        t: &TargetLoss,
        cfg: &ElicitationConfig,
    ) -> Result<bool> {
        let Some(cert) = &self.certificate else {
            return Ok(false);
        };
        let ls = level_set(s, &cert.u, cfg.rank_tol)?;
        if !cert.corners.iter().all(|c| ls.contains(c, REPLAY_TOL)) {
            return Ok(false);
        }
        let gammas: Vec<Vec<usize>> = cert
            .corners
            .iter()
            .map(|c| t.gamma(c, cfg.corner_tie_tol))
            .collect();
        Ok(conflict(self.claim, &gammas).is_some())
    }
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    !a.iter().any(|x| b.contains(x))
}

/// `Some(pair)` when the corner optimal sets violate the claim.
fn conflict(claim: Claim, gammas: &[Vec<usize>]) -> Option<Option<(usize, usize)>> {
    match claim {
        Claim::IE => {
            let mut common: BTreeSet<usize> = gammas.first()?.iter().copied().collect();
            for g in gammas {
                common.retain(|r| g.contains(r));
            }
            if !common.is_empty() {
                return None;
            }
            for i in 0..gammas.len() {
                for j in i + 1..gammas.len() {
                    if disjoint(&gammas[i], &gammas[j]) {
                        return Some(Some((i, j)));
                    }
                }
            }
            Some(None)
        }
        Claim::StrongIE => {
            let first = gammas.first()?;
            gammas
                .iter()
                .position(|g| g != first)
                .map(|j| Some((0, j)))
        }
    }
}

fn check(atlas: &ReportAtlas, claim: Claim) -> ElicitationVerdict {
    for e in &atlas.entries {
        if let Some(pair) = conflict(claim, &e.corner_gammas) {
            return ElicitationVerdict {
                claim,
                status: VerdictStatus::Violated,
                certificate: Some(ViolationCertificate {
                    u: e.u.clone(),
                    corners: e.level_set_corners.clone(),
                    corner_gammas: e.corner_gammas.clone(),
                    pair,
                }),
            };
        }
    }
    ElicitationVerdict {
        claim,
        status: VerdictStatus::NoViolationFound {
            resolution: atlas.resolution,
        },
        certificate: None,
    }
}

/// IE at every atlas report: the corner optimal sets share a report.
pub fn check_ie(atlas: &ReportAtlas) -> ElicitationVerdict {
    check(atlas, Claim::IE)
}

/// Strong IE at every atlas report: all corner optimal sets are equal.
pub fn check_strong_ie(atlas: &ReportAtlas) -> ElicitationVerdict {
    check(atlas, Claim::StrongIE)
}

/// Per-entry agreement of the two checks (strong IE implies IE).
pub fn entry_verdicts(entry: &AtlasEntry) -> (bool, bool) {
    (
        conflict(Claim::IE, &entry.corner_gammas).is_none(),
        conflict(Claim::StrongIE, &entry.corner_gammas).is_none(),
    )
}

/// Level sets across `Gamma(p)`; 32 samples when the argmin is an interval.
pub fn level_set_bundle(
    s: &dyn SurrogateLoss,
    p: &Distribution,
    cfg: &ElicitationConfig,
) -> Result<Vec<(Vec<f64>, SimplexPolytope)>> {
    let set = minimize(s, p, &cfg.opt)?;
    let us: Vec<Vec<f64>> = match set.interval {
        Some((a, b)) => (0..32)
            .map(|i| vec![a + (b - a) * i as f64 / 31.0])
            .collect(),
        None => vec![set.representative],
    };
    us.into_iter()
        .map(|u| {
            let ls = level_set(s, &u, cfg.rank_tol)?;
            Ok((u, ls))
        })
        .collect()
}
