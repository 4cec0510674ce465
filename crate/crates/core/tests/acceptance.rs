//! Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails. Runs without the libtest harness so the lines are
//! always printed.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use levelset::calibration::{gap, minimizing_sequence_check, sweep, GapConfig};
use levelset::construct1d::{boundary_certificate, construct};
use levelset::elicitation::{build_atlas, check_ie, check_strong_ie, entry_verdicts, ElicitationConfig};
use levelset::links::{build_interval_link, LevelSetLink, Link};
use levelset::surrogates::{
    level_set, minimize, CeQuadratic, Cusp, HuberOrdinal, HuberPair, SmoothCusp, Universal,
};
use levelset::{Error, OptimizerConfig, SurrogateLoss, TargetLoss};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::*;

// Tolerances pinned by the criteria.
const CE_FORMULA_TOL: f64 = 1e-6;
const CE_SEGMENT_TOL: f64 = 1e-8;
const ZERO_GAP_TOL: f64 = 1e-6;
const SMOOTH_CUSP_GAP_TOL: f64 = 1e-4;
const MIN_INTERIOR_GAP: f64 = 1e-3;
const HUBER_INTERVAL_TOL: f64 = 1e-4;
const HUBER_POINT_TOL: f64 = 1e-6;
const UNIVERSAL_TOL: f64 = 1e-8;
const KNOT_FD_TOL: f64 = 1e-6;
const CERT_TOL: f64 = 1e-9;
const HULL_TOL: f64 = 1e-6;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const MINIMIZE_ORACLE_TOL: f64 = 1e-5;
const SEED: u64 = 20_240_917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ce_targets() -> [TargetLoss; 3] {
    [
        TargetLoss::two_report([2.5, 1.25, 0.0]),
        TargetLoss::two_report([2.0, 1.0, 0.0]),
        TargetLoss::two_report([5.0 / 3.0, 5.0 / 6.0, 0.0]),
    ]
}

fn c1_ce_formula() -> Outcome {
    let opt = OptimizerConfig::default();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for eps in [0.5, 0.1, 0.01] {
        let p = dist(&[0.5 + eps / 2.0, 0.0, 0.5 - eps / 2.0]);
        let u = minimize(&CeQuadratic, &p, &opt).unwrap().representative;
        let want = [-eps / (5.0 - eps), -2.0 * eps / (3.0 + eps)];
        let err = ((u[0] - want[0]).powi(2) + (u[1] - want[1]).powi(2)).sqrt();
        worst = worst.max(err);
        notes.push(format!("eps={eps}: u=({:.6},{:.6}) formula=({:.6},{:.6})", u[0], u[1], want[0], want[1]));
    }
    outcome(
        worst <= CE_FORMULA_TOL,
        format!("max |du|={worst:.3e}; {}", notes.join("; ")),
    )
}

fn c2_ce_level_set() -> Outcome {
    let ls = level_set(&CeQuadratic, &[0.0, 0.0], 1e-9).unwrap();
    let want = [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    let matched = ls.vertices.len() == 2
        && want.iter().all(|w| {
            ls.vertices.iter().any(|v| {
                v.probs().iter().zip(w).all(|(a, b)| (a - b).abs() <= CE_SEGMENT_TOL)
            })
        });
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut full_rank = 0;
    for _ in 0..100 {
        let u = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let j = CeQuadratic.jacobian(&u);
        // Rank 2 iff some 2x2 minor is nonzero.
        let minor = |a: usize, b: usize| j[(a, 0)] * j[(b, 1)] - j[(a, 1)] * j[(b, 0)];
        let m = minor(0, 1).abs().max(minor(0, 2).abs()).max(minor(1, 2).abs());
        if m > 1e-9 {
            full_rank += 1;
        }
    }
    outcome(
        matched && full_rank == 100,
        format!("segment vertices matched={matched} ({} vertices); rank 2 at {full_rank}/100", ls.vertices.len()),
    )
}

fn c3_trichotomy() -> Outcome {
    let cfg = ElicitationConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, t) in ce_targets().iter().enumerate() {
        let atlas = build_atlas(&CeQuadratic, t, &cfg).unwrap();
        let ie = check_ie(&atlas);
        let sie = check_strong_ie(&atlas);
        let (want_ie, want_sie) = [(true, true), (false, true), (false, false)][i];
        let mut row_ok = ie.violated() == want_ie && sie.violated() == want_sie;
        for v in [&ie, &sie] {
            if v.violated() {
                row_ok &= v.replay(&CeQuadratic, t, &cfg).unwrap();
            }
        }
        if i == 1 {
            let u = &sie.certificate.as_ref().unwrap().u;
            row_ok &= u.iter().all(|x| x.abs() < 1e-9);
        }
        ok &= row_ok;
        notes.push(format!(
            "l{}: ie_violated={} sie_violated={}",
            i + 1,
            ie.violated(),
            sie.violated()
        ));
    }
    outcome(ok, notes.join("; "))
}

fn c4_counterexamples() -> Outcome {
    let gcfg = GapConfig::default();
    let ecfg = ElicitationConfig::default();

    let t_abs = TargetLoss::abstain(0.25);
    let cusp: Arc<dyn SurrogateLoss> = Arc::new(Cusp);
    let atlas = build_atlas(cusp.as_ref(), &t_abs, &ecfg).unwrap();
    let link = Link::LevelSet(
        LevelSetLink::build(cusp.clone(), &t_abs, &atlas, ecfg.corner_tie_tol, ecfg.rank_tol).unwrap(),
    );
    let probe = gap(cusp.as_ref(), &t_abs, &link, &dist(&[0.5, 0.5]), &gcfg).unwrap();
    let cusp_gap = probe.gap.unwrap_or(f64::INFINITY);
    let cusp_ok = cusp_gap.abs() <= ZERO_GAP_TOL
        && !probe.witness_sequence.is_empty()
        && probe.replay(cusp.as_ref(), &link);

    let t2 = &ce_targets()[1];
    let ce: Arc<dyn SurrogateLoss> = Arc::new(CeQuadratic);
    let atlas = build_atlas(ce.as_ref(), t2, &ecfg).unwrap();
    let link = Link::LevelSet(
        LevelSetLink::build(ce.clone(), t2, &atlas, ecfg.corner_tie_tol, ecfg.rank_tol).unwrap(),
    );
    let pstar = dist(&[0.0, 0.5, 0.5]);
    let probe = gap(ce.as_ref(), t2, &link, &pstar, &gcfg).unwrap();
    let ce_gap = probe.gap.unwrap_or(f64::INFINITY);

    // The minimizers at p_eps link away from gamma(p*) and approach the
    // optimum at p*. Below eps ~ 1e-7 the Jacobian's smaller singular value
    // drops under the rank tolerance and Gamma_u is read as Gamma_0.
    let opt = OptimizerConfig::default();
    let seq: Vec<Vec<f64>> = (1..=20)
        .map(|t| {
            let eps = 0.5f64.powi(t);
            let p = dist(&[0.5 + eps / 2.0, 0.0, 0.5 - eps / 2.0]);
            minimize(ce.as_ref(), &p, &opt).unwrap().representative
        })
        .collect();
    let links_away = seq.iter().all(|u| link.apply(u) == 0);
    let sc = minimizing_sequence_check(ce.as_ref(), &pstar, &seq, &opt).unwrap();
    let ce_ok = ce_gap.abs() <= ZERO_GAP_TOL
        && !probe.witness_sequence.is_empty()
        && probe.replay(ce.as_ref(), &link)
        && links_away
        && sc.loss_converges
        && sc.distance_converges;
    outcome(
        cusp_ok && ce_ok,
        format!(
            "cusp gap={cusp_gap:.2e}; ce gap={ce_gap:.2e} witnesses={} p_eps-sequence links to 1: {links_away}, loss gap {:.1e}",
            probe.witness_sequence.len(),
            sc.final_loss_gap
        ),
    )
}

fn c5_calibrated_gaps() -> Outcome {
    let cfg = GapConfig::default();
    let opt = OptimizerConfig::default();
    let t_abs = TargetLoss::abstain(0.25);
    let link = Link::Interval(build_interval_link(&SmoothCusp, &t_abs, &opt, 1e-9).unwrap());
    let probe = gap(&SmoothCusp, &t_abs, &link, &dist(&[0.5, 0.5]), &cfg).unwrap();
    // Oracle: min of 1 + u^2 over |u| >= 1/2 on a fine grid, minus 1.
    let oracle = (0..=200_000)
        .map(|i| 0.5 + 9.5 * i as f64 / 200_000.0)
        .map(|u| 1.0 + u * u)
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let g = probe.gap.unwrap_or(f64::NAN);
    let sc_ok = (g - 0.25).abs() <= SMOOTH_CUSP_GAP_TOL && (g - oracle).abs() <= SMOOTH_CUSP_GAP_TOL;

    let t_ord = TargetLoss::ordinal(3);
    let link = Link::Interval(build_interval_link(&HuberOrdinal, &t_ord, &opt, 1e-9).unwrap());
    let report = sweep(&HuberOrdinal, &t_ord, &link, 0.05, &cfg).unwrap();
    let min_gap = report.min_interior_gap.unwrap_or(f64::NAN);
    let h_ok = min_gap > MIN_INTERIOR_GAP && report.violations.is_empty() && report.errors.is_empty();
    outcome(
        sc_ok && h_ok,
        format!(
            "smooth cusp gap={g:.6} (oracle {oracle:.6}); huber-ordinal sweep {} probes, min interior gap={min_gap:.4e}, violations={}",
            report.probes.len(),
            report.violations.len()
        ),
    )
}

fn c6_huber_sets() -> Outcome {
    let s = HuberPair::new(1).unwrap();
    let opt = OptimizerConfig::default();
    let half = minimize(&s, &dist(&[0.5, 0.5]), &opt).unwrap();
    let quarter = minimize(&s, &dist(&[0.25, 0.75]), &opt).unwrap();
    let interval_ok = half
        .interval
        .is_some_and(|(a, b)| (a + 1.0).abs() <= HUBER_INTERVAL_TOL && (b - 1.0).abs() <= HUBER_INTERVAL_TOL);
    let q = quarter.representative[0];
    let point_ok = quarter.is_unique && (q + 5.0 / 3.0).abs() <= HUBER_POINT_TOL;
    outcome(
        interval_ok && point_ok,
        format!("Gamma(1/2)={:?}; Gamma(1/4)={q:.9}", half.interval),
    )
}

fn c7_universal() -> Outcome {
    let opt = OptimizerConfig::default();
    let mut rng = StdRng::seed_from_u64(SEED + 7);
    let mut worst = 0.0f64;
    let mut verdicts_ok = true;
    let mut notes = Vec::new();
    for n in 3..=5 {
        let s = Universal::new(n).unwrap();
        for _ in 0..50 {
            let p = random_interior(&mut rng, n);
            let u = minimize(&s, &p, &opt).unwrap().representative;
            for (a, b) in u.iter().zip(p.probs()) {
                worst = worst.max((a - b).abs());
            }
        }
        let cfg = ElicitationConfig::default();
        for (name, t) in [("zero-one", TargetLoss::zero_one(n)), ("ordinal", TargetLoss::ordinal(n))] {
            let v = check_strong_ie(&build_atlas(&s, &t, &cfg).unwrap());
            verdicts_ok &= !v.violated();
            notes.push(format!("n={n} {name}: {}", if v.violated() { "violated" } else { "no_violation" }));
        }
    }
    outcome(
        worst <= UNIVERSAL_TOL && verdicts_ok,
        format!("max |u - p|={worst:.2e}; {}", notes.join(", ")),
    )
}

/// Exact for a single quadratic piece.
fn one_sided_derivative(s: &dyn SurrogateLoss, x: f64, h: f64, y: usize) -> f64 {
    let v = |t: f64| s.value(&[t])[y];
    (-3.0 * v(x) + 4.0 * v(x + h) - v(x + 2.0 * h)) / (2.0 * h)
}

fn c8_construction() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let gcfg = GapConfig::default();
    let ecfg = ElicitationConfig::default();
    let mut rng = StdRng::seed_from_u64(SEED + 8);
    for (name, t) in [("ordinal:3", TargetLoss::ordinal(3)), ("abstain", TargetLoss::abstain(0.25))] {
        let c = construct(&t).unwrap();
        let s = &c.surrogate;
        let monotone = s.is_monotone();
        let mut fd_err = 0.0f64;
        for &x in &s.knots {
            let g = s.gradient(x);
            for (y, gy) in g.iter().enumerate() {
                let right = one_sided_derivative(s, x, 1e-4, y);
                let left = one_sided_derivative(s, x, -1e-4, y);
                fd_err = fd_err.max((right - gy).abs()).max((left - gy).abs());
            }
        }
        let scan = s.sign_scan().iter().all(|c| c.passed);
        let certs = boundary_certificate(s, &t, &c.enumeration);
        let certs_ok = certs.as_ref().is_ok_and(|cs| {
            cs.iter().all(|b| {
                b.max_vertex_residual <= CERT_TOL && b.lower_witness_value > 0.0 && b.upper_witness_value < 0.0
            })
        });
        let ie = !check_ie(&build_atlas(s, &t, &ecfg).unwrap()).violated();
        let link = Link::Interval(c.link.clone());
        let mut min_gap = f64::INFINITY;
        for _ in 0..25 {
            let p = random_interior(&mut rng, t.outcomes());
            let probe = gap(s, &t, &link, &p, &gcfg).unwrap();
            min_gap = min_gap.min(if probe.violated { 0.0 } else { probe.gap.unwrap_or(f64::INFINITY) });
        }
        let row = monotone && fd_err <= KNOT_FD_TOL && scan && certs_ok && ie && min_gap > 0.0;
        ok &= row;
        notes.push(format!(
            "{name}: monotone={monotone} knot fd={fd_err:.1e} sign_scan={scan} certificates={certs_ok} ie={ie} min gap={min_gap:.3e}"
        ));
    }
    let zo = matches!(construct(&TargetLoss::zero_one(3)), Err(Error::NotOrderable));
    ok &= zo;
    notes.push(format!("zero-one:3 NotOrderable={zo}"));
    outcome(ok, notes.join("; "))
}

fn c9_properties() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = StdRng::seed_from_u64(SEED + 9);
    let pairs = builtin_pairs();

    // (a) strong IE implies IE at every atlas entry.
    let mut entries = 0;
    let mut bad_a = 0;
    for (s, t, _) in &pairs {
        let res = if s.outcomes() == 4 { 0.1 } else { 0.05 };
        let cfg = ElicitationConfig {
            resolution: res,
            ..ElicitationConfig::default()
        };
        let atlas = build_atlas(s.as_ref(), t, &cfg).unwrap();
        for e in &atlas.entries {
            let (ie, sie) = entry_verdicts(e);
            entries += 1;
            if sie && !ie {
                bad_a += 1;
            }
        }
    }
    notes.push(format!("(a) {} pairs, {entries} entries, {bad_a} disagreements", pairs.len()));

    // (b) level sets against a 1/200 lattice.
    let mut surrogates: Vec<Arc<dyn SurrogateLoss>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (s, _, name) in &pairs {
        let sname = name.split(" / ").next().unwrap().to_string();
        if seen.insert(sname) {
            surrogates.push(s.clone());
        }
    }
    let mut worst_contain = 0.0f64;
    let mut worst_cover = 0.0f64;
    let mut worst_inside = 0.0f64;
    let mut bad_b = 0;
    let steps = 200;
    let h = 1.0 / steps as f64;
    for s in &surrogates {
        let n = s.outcomes();
        let d = s.dim();
        let mut tried = 0;
        while tried < 20 {
            let u: Vec<f64> = if s.name().starts_with("universal") {
                random_interior(&mut rng, n).probs()[..d].to_vec()
            } else {
                (0..d).map(|_| rng.gen_range(-2.5..2.5)).collect()
            };
            if s.is_kink(&u) {
                continue;
            }
            tried += 1;
            let Ok(ls) = level_set(s.as_ref(), &u, 1e-9) else {
                bad_b += 1;
                continue;
            };
            let j = s.jacobian(&u);
            let jt: Vec<Vec<f64>> = (0..d).map(|k| (0..n).map(|y| j[(y, k)]).collect()).collect();
            let jnorm = j.iter().map(|x| x * x).sum::<f64>().sqrt();
            let tau = jnorm * h * (n as f64).sqrt();
            let grid = lattice_level_set(&jt, n, steps, tau);
            let verts: Vec<Vec<f64>> = ls.vertices.iter().map(|v| v.probs().to_vec()).collect();
            for v in &verts {
                let res = jt
                    .iter()
                    .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs())
                    .fold(0.0, f64::max);
                let off = v.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max)
                    + (v.iter().sum::<f64>() - 1.0).abs();
                worst_contain = worst_contain.max(res.max(off));
                let near = grid
                    .iter()
                    .map(|g| g.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                worst_cover = worst_cover.max(near / h);
            }
            if !verts.is_empty() {
                let svals = j.clone().svd(false, false).singular_values;
                let smin = svals.iter().copied().filter(|x| *x > 1e-9).fold(f64::INFINITY, f64::min);
                for g in &grid {
                    worst_inside = worst_inside.max(hull_distance(&verts, g) / (tau / smin + 2.0 * h * (n as f64).sqrt()));
                }
            }
        }
    }
    let b_ok = bad_b == 0 && worst_contain <= HULL_TOL && worst_cover <= 2.0 * 5f64.sqrt() && worst_inside <= 1.0;
    notes.push(format!(
        "(b) {} surrogates x 20 u: containment {worst_contain:.1e}, vertex-to-lattice {worst_cover:.2} h, lattice-to-hull ratio {worst_inside:.2}, failures {bad_b}",
        surrogates.len()
    ));

    // (c) Jacobians against central differences.
    let mut worst_c = 0.0f64;
    for s in &surrogates {
        for _ in 0..50 {
            let u: Vec<f64> = (0..s.dim()).map(|_| rng.gen_range(-4.0..4.0)).collect();
            // Skip points within a difference step of a kink.
            let near_kink = (0..s.dim()).any(|k| {
                [-2e-6, 2e-6].iter().any(|dx| {
                    let mut w = u.clone();
                    w[k] += dx;
                    s.is_kink(&w)
                })
            });
            if s.is_kink(&u) || near_kink || s.name().starts_with("cusp") {
                continue;
            }
            worst_c = worst_c.max(jacobian_rel_error(s.as_ref(), &u));
        }
    }
    notes.push(format!("(c) max relative jacobian error {worst_c:.1e}"));

    // (d) minimize against grid + zoom.
    let opt = OptimizerConfig::default();
    let mut worst_d = 0.0f64;
    for s in &surrogates {
        if s.dim() > 2 {
            continue;
        }
        for _ in 0..10 {
            let p = random_interior(&mut rng, s.outcomes());
            let set = minimize(s.as_ref(), &p, &opt).unwrap();
            let (uo, vo) = grid_zoom_minimize(s.as_ref(), p.probs(), 10.0);
            let err = if set.is_unique {
                set.distance(&uo)
            } else {
                match set.interval {
                    Some(_) => set.distance(&uo),
                    None => (vo - set.opt_value).abs(),
                }
            };
            worst_d = worst_d.max(err).max(set.opt_value - vo);
        }
    }
    notes.push(format!("(d) max minimizer error {worst_d:.1e}"));

    let ok = bad_a == 0 && b_ok && worst_c <= JACOBIAN_REL_TOL && worst_d <= MINIMIZE_ORACLE_TOL;
    outcome(ok, notes.join("; "))
}

fn c10_theory_sweep() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED + 10);
    let ecfg = ElicitationConfig::default();
    let gcfg = GapConfig::default();
    let mut ok = true;
    let mut failures = Vec::new();
    let mut redraws = Redraws::default();
    let mut probes = 0;
    for i in 0..20 {
        let t = random_orderable_target(&mut rng, &mut redraws);
        let shape = format!("#{i} k={} n={}", t.reports(), t.outcomes());
        let c = match construct(&t) {
            Ok(c) => c,
            Err(e) => {
                ok = false;
                failures.push(format!("{shape}: {e}"));
                continue;
            }
        };
        let ie = check_ie(&build_atlas(&c.surrogate, &t, &ecfg).unwrap());
        let report = sweep(&c.surrogate, &t, &Link::Interval(c.link.clone()), 0.05, &gcfg).unwrap();
        probes += report.probes.len();
        if ie.violated() || !report.violations.is_empty() || !report.errors.is_empty() {
            ok = false;
            failures.push(format!(
                "{shape}: ie_violated={} violations={} errors={}",
                ie.violated(),
                report.violations.len(),
                report.errors.len()
            ));
        }
    }
    outcome(
        ok,
        format!(
            "20 targets ({} redundant and {} non-orderable draws redrawn), {probes} probes; failures: [{}]",
            redraws.redundant,
            redraws.not_orderable,
            failures.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, Option<Duration>, fn() -> Outcome); 10] = [
        (1, "ce minimizer formula", Some(Duration::from_secs(1)), c1_ce_formula),
        (2, "ce level set and rank", Some(Duration::from_secs(1)), c2_ce_level_set),
        (3, "ie / strong ie trichotomy", Some(Duration::from_secs(30)), c3_trichotomy),
        (4, "counterexample falsification", Some(Duration::from_secs(30)), c4_counterexamples),
        (5, "calibrated gaps", Some(Duration::from_secs(120)), c5_calibrated_gaps),
        (6, "huber set-valued minima", Some(Duration::from_secs(1)), c6_huber_sets),
        (7, "universal surrogate", Some(Duration::from_secs(60)), c7_universal),
        (8, "construction end-to-end", Some(Duration::from_secs(120)), c8_construction),
        (9, "property suites", None, c9_properties),
        (10, "theory-consistency sweep", Some(Duration::from_secs(600)), c10_theory_sweep),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let o = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map_or("no limit".to_string(), |l| format!("limit {} s", l.as_secs()));
        println!(
            "criterion {id:>2} {} {name}: {} [{:.2} s, {budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
