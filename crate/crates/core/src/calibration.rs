//! Calibration gaps: `inf { <p, L(u)> : psi(u) not in gamma(p) }` minus the
//! unrestricted optimum.
//!
//! A gap at or below `gap_tol` is reported as a violation together with a
//! sequence of wrongly-linked reports whose losses approach the optimum.
//! Interval links on `R` are handled exactly, piece by piece; every other
//! link is searched over a box with a dense grid, local refinement and a
//! search over the image of the surrogate property.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::elicitation::probe_points;
use crate::error::{Error, Result};
use crate::geometry::{dot, lattice_steps, simplex_lattice, Distribution};
use crate::links::{IntervalLink, Link};
use crate::surrogates::{expected_loss, minimize, OptimalReportSet, OptimizerConfig, SurrogateLoss};
use crate::targets::{TargetLoss, DEFAULT_TIE_TOL};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapConfig {
    /// Half-width of the search box `||u||_inf <= radius`.
    pub radius: f64,
    /// Grid points on the line when `d = 1`.
    pub grid: usize,
    /// Points per axis for each of the two grid passes when `d = 2`.
    pub coarse_grid: usize,
    /// Points per axis when `d >= 3`.
    pub grid_high_dim: usize,
    pub gap_tol: f64,
    pub tie_tol: f64,
    /// Cap on grid evaluations per pass.
    pub max_evals: u64,
    /// Lattice spacing for the search over optimal reports `Gamma(q)`.
    pub image_resolution: f64,
    pub opt: OptimizerConfig,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            radius: 10.0,
            grid: 4001,
            coarse_grid: 101,
            grid_high_dim: 21,
            gap_tol: 1e-6,
            tie_tol: DEFAULT_TIE_TOL,
            max_evals: 5_000_000,
            image_resolution: 0.05,
            opt: OptimizerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub u: Vec<f64>,
    pub report: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationProbe {
    pub p: Distribution,
    pub gamma_set: Vec<usize>,
    pub opt_value: f64,
    /// `None` when no wrongly-linked report exists in the search box.
    pub restricted_value: Option<f64>,
    pub gap: Option<f64>,
    pub violated: bool,
    /// Wrongly-linked reports with decreasing loss.
    pub witness_sequence: Vec<WitnessPoint>,
}

impl CalibrationProbe {
    /// Recomputes every witness loss and link value.
    pub fn replay(&self, s: &dyn SurrogateLoss, link: &Link) -> bool {
        self.witness_sequence.iter().all(|w| {
            let loss = expected_loss(s, &self.p, &w.u);
            let r = link.apply(&w.u);
            (loss - w.loss).abs() <= 1e-10 && r == w.report && !self.gamma_set.contains(&r)
        })
    }
}

const TRAIL_CAP: usize = 64;

/// Tracks the best wrongly-linked report seen and the improving trail.
struct Search<'a> {
    s: &'a dyn SurrogateLoss,
    link: &'a Link,
    p: &'a Distribution,
    gamma: &'a [usize],
    radius: f64,
    best: Option<(f64, Vec<f64>)>,
    /// Infima approached but not attained (open piece ends).
    limit: f64,
    trail: Vec<WitnessPoint>,
}

impl<'a> Search<'a> {
    fn best_value(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
    }

    fn inf(&self) -> Option<f64> {
        let v = self.best_value().min(self.limit);
        v.is_finite().then_some(v)
    }

    fn record(&mut self, u: &[f64], report: usize, loss: f64) {
        if loss < self.best_value() {
            self.best = Some((loss, u.to_vec()));
            if self.trail.len() == TRAIL_CAP {
                self.trail.remove(0);
            }
            self.trail.push(WitnessPoint {
                u: u.to_vec(),
                report,
                loss,
            });
        }
    }

    /// Loss at `u` when `u` lies in the box and links outside `gamma(p)`.
    fn eval(&mut self, u: &[f64]) -> Option<f64> {
        if u.iter().any(|x| !x.is_finite() || x.abs() > self.radius) {
            return None;
        }
        let r = self.link.apply(u);
        if self.gamma.contains(&r) {
            return None;
        }
        let loss = expected_loss(self.s, self.p, u);
        self.record(u, r, loss);
        Some(loss)
    }

    fn offer(&mut self, c: &Cached) {
        if !self.gamma.contains(&c.report) {
            let loss = dot(self.p.probs(), &c.values);
            self.record(&c.u, c.report, loss);
        }
    }

    /// Bisects the segment from a wrongly-linked `bad` toward `good`.
    fn bisect(&mut self, bad: &[f64], good: &[f64], iters: usize) {
        let (mut b, mut g) = (bad.to_vec(), good.to_vec());
        for _ in 0..iters {
            let mid: Vec<f64> = b.iter().zip(&g).map(|(x, y)| 0.5 * (x + y)).collect();
            if mid == b || mid == g {
                break;
            }
            if self.eval(&mid).is_some() {
                b = mid;
            } else {
                g = mid;
            }
        }
    }

    /// Coordinate pattern search from the current best, step `h`.
    fn pattern(&mut self, mut h: f64) {
        let Some((_, start)) = self.best.clone() else {
            return;
        };
        let d = start.len();
        let mut cur = start;
        let mut steps = 0;
        while h > 1e-12 && steps < 20_000 {
            steps += 1;
            let before = self.best_value();
            for i in 0..d {
                for sign in [-1.0, 1.0] {
                    let mut trial = cur.clone();
                    trial[i] += sign * h;
                    self.eval(&trial);
                }
            }
            if self.best_value() < before {
                cur = self.best.as_ref().expect("improved").1.clone();
            } else {
                h *= 0.5;
            }
        }
    }

    fn into_trail(self) -> Vec<WitnessPoint> {
        self.trail
    }
}

/// Precomputed link values and surrogate losses shared across probes.
#[derive(Clone, Debug, Default)]
pub struct SearchCache {
    grid: Vec<Cached>,
    grid_spacing: f64,
    image: Vec<(Distribution, Cached)>,
}

#[derive(Clone, Debug)]
struct Cached {
    u: Vec<f64>,
    report: usize,
    values: Vec<f64>,
}

fn axis_points(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect()
}

/// All points of the product grid of `axes`.
fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|pre| {
                axis.iter().map(move |&x| {
                    let mut v = pre.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

fn points_per_axis(d: usize, cfg: &GapConfig) -> usize {
    match d {
        1 => cfg.grid,
        2 => cfg.coarse_grid,
        _ => cfg.grid_high_dim,
    }
}

fn check_budget(m: usize, d: usize, cfg: &GapConfig) -> Result<()> {
    let needed = (m as u64).checked_pow(d as u32).unwrap_or(u64::MAX);
    if needed > cfg.max_evals {
        return Err(Error::SearchBudgetExceeded {
            needed,
            limit: cfg.max_evals,
        });
    }
    Ok(())
}

fn uses_exact_path(s: &dyn SurrogateLoss, link: &Link) -> bool {
    s.dim() == 1 && matches!(link, Link::Interval(_))
}

/// Builds the grid and image caches for the generic search.
pub fn build_cache(s: &dyn SurrogateLoss, link: &Link, cfg: &GapConfig) -> Result<SearchCache> {
    if uses_exact_path(s, link) {
        return Ok(SearchCache::default());
    }
    let d = s.dim();
    let m = points_per_axis(d, cfg);
    check_budget(m, d, cfg)?;
    let axis = axis_points(-cfg.radius, cfg.radius, m);
    let spacing = 2.0 * cfg.radius / (m.max(2) - 1) as f64;
    let grid = product(&vec![axis; d])
        .into_iter()
        .map(|u| Cached {
            report: link.apply(&u),
            values: s.value(&u),
            u,
        })
        .collect();
    let mut image = Vec::new();
    if d >= 2 {
        let n = s.outcomes();
        for q in simplex_lattice(n, lattice_steps(cfg.image_resolution)) {
            let u = minimize(s, &q, &cfg.opt)?.representative;
            if u.iter().all(|x| x.abs() <= cfg.radius) {
                image.push((
                    q,
                    Cached {
                        report: link.apply(&u),
                        values: s.value(&u),
                        u,
                    },
                ));
            }
        }
    }
    Ok(SearchCache {
        grid,
        grid_spacing: spacing,
        image,
    })
}

/// Calibration gap at `p`.
pub fn gap(
    s: &dyn SurrogateLoss,
    t: &TargetLoss,
    link: &Link,
    p: &Distribution,
    cfg: &GapConfig,
) -> Result<CalibrationProbe> {
    let cache = build_cache(s, link, cfg)?;
    gap_with_cache(s, t, link, p, cfg, &cache)
}

pub fn gap_with_cache(
    s: &dyn SurrogateLoss,
    t: &TargetLoss,
    link: &Link,
    p: &Distribution,
    cfg: &GapConfig,
    cache: &SearchCache,
) -> Result<CalibrationProbe> {
    if p.len() != t.outcomes() || p.len() != s.outcomes() {
        return Err(Error::invalid("distribution, target and surrogate disagree on n"));
    }
    let set = minimize(s, p, &cfg.opt)?;
    let gamma_set = t.gamma(p, cfg.tie_tol);
    let mut search = Search {
        s,
        link,
        p,
        gamma: &gamma_set,
        radius: cfg.radius,
        best: None,
        limit: f64::INFINITY,
        trail: Vec::new(),
    };
    match link {
        Link::Interval(il) if s.dim() == 1 => exact_interval(&mut search, il, &set),
        _ => generic(&mut search, s, &set, cfg, cache)?,
    }
    let restricted_value = search.inf();
    let gap = restricted_value.map(|r| r - set.opt_value);
    Ok(CalibrationProbe {
        p: p.clone(),
        gamma_set: gamma_set.clone(),
        opt_value: set.opt_value,
        restricted_value,
        gap,
        violated: gap.is_some_and(|g| g <= cfg.gap_tol),
        witness_sequence: search.into_trail(),
    })
}

/// On each wrongly-linked piece the convex loss is minimized at the point
/// nearest the argmin; open ends are approached by a geometric sequence.
fn exact_interval(search: &mut Search, link: &IntervalLink, set: &OptimalReportSet) {
    let (a, b) = set
        .interval
        .unwrap_or((set.representative[0], set.representative[0]));
    let r = search.radius;
    for piece in link.pieces() {
        if search.gamma.contains(&piece.report) {
            continue;
        }
        let (lo, lo_closed) = if piece.lo < -r {
            (-r, true)
        } else {
            (piece.lo, piece.closed.0)
        };
        let (hi, hi_closed) = if piece.hi > r {
            (r, true)
        } else {
            (piece.hi, piece.closed.1)
        };
        if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            continue;
        }
        let target = if b < lo {
            lo
        } else if a > hi {
            hi
        } else {
            a.max(lo)
        };
        let attained =
            (target > lo || lo_closed) && (target < hi || hi_closed) && target >= lo && target <= hi;
        if attained {
            search.eval(&[target]);
            continue;
        }
        search.limit = search.limit.min(expected_loss(search.s, search.p, &[target]));
        let inward = if target == lo { 1.0 } else { -1.0 };
        let width = (hi - lo).min(1.0);
        for t in 1..=60 {
            let u = target + inward * width * 0.5f64.powi(t);
            if u == target {
                break;
            }
            search.eval(&[u]);
        }
    }
}

fn generic(
    search: &mut Search,
    s: &dyn SurrogateLoss,
    set: &OptimalReportSet,
    cfg: &GapConfig,
    cache: &SearchCache,
) -> Result<()> {
    let d = s.dim();
    let u_star = set.representative.clone();
    if search.eval(&u_star).is_some() {
        return Ok(());
    }
    if let Some((a, b)) = set.interval {
        for i in 0..=16 {
            if search.eval(&[a + (b - a) * i as f64 / 16.0]).is_some() {
                return Ok(());
            }
        }
    }
    for c in &cache.grid {
        search.offer(c);
    }
    let h = cache.grid_spacing;
    if d == 1 {
        refine_runs_1d(search, cache);
    } else if let Some((_, centre)) = search.best.clone() {
        let m = points_per_axis(d, cfg);
        check_budget(m, d, cfg)?;
        let axes: Vec<Vec<f64>> = centre
            .iter()
            .map(|&c| axis_points((c - 2.0 * h).max(-cfg.radius), (c + 2.0 * h).min(cfg.radius), m))
            .collect();
        for u in product(&axes) {
            search.eval(&u);
        }
    }
    let fine = if d == 1 { h } else { 4.0 * h / (points_per_axis(d, cfg) as f64) };
    toward_argmin(search, set);
    search.pattern(fine);

    if !cache.image.is_empty() {
        image_search(search, s, cfg, cache)?;
        toward_argmin(search, set);
        search.pattern(fine);
    }
    Ok(())
}

fn nearest_argmin_point(set: &OptimalReportSet, u: &[f64]) -> Vec<f64> {
    match set.interval {
        Some((a, b)) if u.len() == 1 => vec![u[0].clamp(a, b)],
        _ => set.representative.clone(),
    }
}

fn toward_argmin(search: &mut Search, set: &OptimalReportSet) {
    if let Some((_, best)) = search.best.clone() {
        let target = nearest_argmin_point(set, &best);
        search.bisect(&best, &target, 80);
    }
}

/// Each maximal run of wrongly-linked grid points is widened to its true
/// edges by bisection and then minimized by golden-section search.
fn refine_runs_1d(search: &mut Search, cache: &SearchCache) {
    let g = &cache.grid;
    let bad: Vec<bool> = g.iter().map(|c| !search.gamma.contains(&c.report)).collect();
    let mut i = 0;
    while i < g.len() {
        if !bad[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < g.len() && bad[i + 1] {
            i += 1;
        }
        let end = i;
        i += 1;
        let mut left = g[start].u[0];
        let mut right = g[end].u[0];
        if start > 0 {
            left = edge(search, left, g[start - 1].u[0]);
        }
        if end + 1 < g.len() {
            right = edge(search, right, g[end + 1].u[0]);
        }
        golden(search, left, right);
    }
}

/// Last wrongly-linked point between `bad` and `good`.
fn edge(search: &mut Search, bad: f64, good: f64) -> f64 {
    let (mut b, mut g) = (bad, good);
    for _ in 0..80 {
        let mid = 0.5 * (b + g);
        if mid == b || mid == g {
            break;
        }
        if search.eval(&[mid]).is_some() {
            b = mid;
        } else {
            g = mid;
        }
    }
    b
}

fn golden(search: &mut Search, lo: f64, hi: f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let f = |search: &mut Search, x: f64| {
        search
            .eval(&[x])
            .unwrap_or_else(|| expected_loss(search.s, search.p, &[x]))
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(search, c), f(search, d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(search, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(search, d);
        }
    }
    f(search, lo);
    f(search, hi);
}

/// Pattern search over `q` in the simplex, moving along `e_i - e_j`, on the
/// optimal reports `Gamma(q)` that link outside `gamma(p)`.
fn image_search(
    search: &mut Search,
    s: &dyn SurrogateLoss,
    cfg: &GapConfig,
    cache: &SearchCache,
) -> Result<()> {
    let mut start: Option<(f64, &Distribution)> = None;
    for (q, c) in &cache.image {
        if search.gamma.contains(&c.report) {
            continue;
        }
        let loss = dot(search.p.probs(), &c.values);
        search.record(&c.u, c.report, loss);
        if start.is_none_or(|(l, _)| loss < l) {
            start = Some((loss, q));
        }
    }
    let Some((mut cur_loss, q0)) = start else {
        return Ok(());
    };
    let n = q0.len();
    let mut q = q0.probs().to_vec();
    let mut h = cfg.image_resolution;
    let mut steps = 0;
    while h > 1e-12 && steps < 5_000 {
        steps += 1;
        let mut moved = false;
        'moves: for i in 0..n {
            for j in 0..n {
                if i == j || q[j] < h {
                    continue;
                }
                let mut trial = q.clone();
                trial[i] += h;
                trial[j] -= h;
                let Ok(qd) = Distribution::new(trial.clone()) else {
                    continue;
                };
                let u = minimize(s, &qd, &cfg.opt)?.representative;
                if let Some(loss) = search.eval(&u) {
                    if loss < cur_loss {
                        cur_loss = loss;
                        q = trial;
                        moved = true;
                        break 'moves;
                    }
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(())
}

/// Outcome of [`minimizing_sequence_check`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceCheck {
    pub final_loss_gap: f64,
    pub final_distance: f64,
    /// Loss of the last element within `1e-8` of the optimum.
    pub loss_converges: bool,
    /// Last element within `1e-4` of the argmin.
    pub distance_converges: bool,
    /// Both flags agree.
    pub equivalent: bool,
}

/// Checks that loss convergence and argmin convergence agree on the tail of
/// a sequence of reports.
pub fn minimizing_sequence_check(
    s: &dyn SurrogateLoss,
    p: &Distribution,
    seq: &[Vec<f64>],
    opt: &OptimizerConfig,
) -> Result<SequenceCheck> {
    let last = seq
        .last()
        .ok_or_else(|| Error::invalid("empty report sequence"))?;
    let set = minimize(s, p, opt)?;
    let final_loss_gap = expected_loss(s, p, last) - set.opt_value;
    let final_distance = set.distance(last);
    let loss_converges = final_loss_gap.abs() <= 1e-8;
    let distance_converges = final_distance <= 1e-4;
    Ok(SequenceCheck {
        final_loss_gap,
        final_distance,
        loss_converges,
        distance_converges,
        equivalent: loss_converges == distance_converges,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub probes: Vec<CalibrationProbe>,
    /// Smallest gap over probes whose `gamma(p)` is a single report.
    pub min_interior_gap: Option<f64>,
    /// Indices into `probes`.
    pub violations: Vec<usize>,
    /// Distributions whose probe failed, with the error message.
    pub errors: Vec<(Distribution, String)>,
}

/// Probes the lattice at `resolution` plus cell vertices and boundary
/// barycenters.
pub fn sweep(
    s: &dyn SurrogateLoss,
    t: &TargetLoss,
    link: &Link,
    resolution: f64,
    cfg: &GapConfig,
) -> Result<SweepReport> {
    let cache = build_cache(s, link, cfg)?;
    let mut probes = Vec::new();
    let mut errors = Vec::new();
    for p in probe_points(t, resolution)? {
        match gap_with_cache(s, t, link, &p, cfg, &cache) {
            Ok(probe) => probes.push(probe),
            Err(e) => errors.push((p, e.to_string())),
        }
    }
    let min_interior_gap = probes
        .iter()
        .filter(|pr| pr.gamma_set.len() == 1)
        .map(|pr| pr.gap.unwrap_or(f64::INFINITY))
        .reduce(f64::min);
    let violations = probes
        .iter()
        .enumerate()
        .filter(|(_, pr)| pr.violated)
        .map(|(i, _)| i)
        .collect();
    Ok(SweepReport {
        probes,
        min_interior_gap,
        violations,
        errors,
    })
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub p: Vec<f64>,
    pub gamma_set: Vec<usize>,
    pub opt_value: f64,
    pub restricted_value: f64,
    pub gap: f64,
    pub violated: bool,
}

impl From<&CalibrationProbe> for ProbeRow {
    fn from(pr: &CalibrationProbe) -> Self {
        ProbeRow {
            p: pr.p.probs().to_vec(),
            gamma_set: pr.gamma_set.clone(),
            opt_value: pr.opt_value,
            restricted_value: pr.restricted_value.unwrap_or(f64::INFINITY),
            gap: pr.gap.unwrap_or(f64::INFINITY),
            violated: pr.violated,
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.17e}")
    }
}

impl SweepReport {
    /// Columns `p1..pn, gamma_set, opt_value, restricted_value, gap,
    /// violated`; `gamma_set` is `;`-separated report indices.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.probes.first().map_or(0, |p| p.p.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
        header.extend(
            ["gamma_set", "opt_value", "restricted_value", "gap", "violated"].map(String::from),
        );
        wr.write_record(&header)?;
        for pr in &self.probes {
            let row = ProbeRow::from(pr);
            let mut rec: Vec<String> = row.p.iter().map(|&x| fmt_num(x)).collect();
            rec.push(
                row.gamma_set
                    .iter()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            rec.push(fmt_num(row.opt_value));
            rec.push(fmt_num(row.restricted_value));
            rec.push(fmt_num(row.gap));
            rec.push(row.violated.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads a CSV written by [`SweepReport::write_csv`].
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<ProbeRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let n = headers.iter().filter(|h| h.starts_with('p') && h[1..].parse::<usize>().is_ok()).count();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::invalid(format!("bad number {s:?} in sweep CSV")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != n + 5 {
            return Err(Error::invalid("sweep CSV row has the wrong number of fields"));
        }
        let p = (0..n).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
        let gamma_set = if rec[n].is_empty() {
            Vec::new()
        } else {
            rec[n]
                .split(';')
                .map(|x| {
                    x.parse::<usize>()
                        .map_err(|_| Error::invalid(format!("bad report index {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        rows.push(ProbeRow {
            p,
            gamma_set,
            opt_value: num(&rec[n + 1])?,
            restricted_value: num(&rec[n + 2])?,
            gap: num(&rec[n + 3])?,
            violated: rec[n + 4]
                .parse::<bool>()
                .map_err(|_| Error::invalid("bad violated flag"))?,
        });
    }
    Ok(rows)
}
