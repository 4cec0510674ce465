//! Command-line front end.
//!
//! Exit codes: 0 no violation, 1 violation found, 2 invalid input,
//! 3 redundant target, 4 target not orderable, 5 optimizer did not
//! converge, 6 any other failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::{gap, sweep, GapConfig};
use crate::construct1d::{boundary_certificate, construct};
use crate::elicitation::{
    build_atlas, check_ie, check_strong_ie, level_set_bundle, ElicitationConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{lattice_steps, simplex_lattice, Distribution, SimplexPolytope};
use crate::links::{auto_link, build_interval_link, build_projection_link, LevelSetLink, Link};
use crate::surrogates::{OptimizerConfig, SurrogateLoss, SurrogateSpec};
use crate::svg::{render, Rendered};
use crate::targets::{TargetLoss, DEFAULT_TIE_TOL};

#[derive(Debug, Parser)]
#[command(name = "levelset", version, about = "Level-set checks for surrogate losses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cells, non-redundancy witnesses and orderability of a target.
    AnalyzeTarget(CommonArgs),
    /// IE or strong IE of a surrogate for a target.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        claim: ClaimArg,
    },
    /// Builds a calibrated 1-d surrogate and link for an orderable target.
    #[command(name = "construct-1d")]
    Construct1d(CommonArgs),
    /// Calibration gap at one distribution.
    Falsify {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated distribution, e.g. `0.5,0.5`.
        #[arg(long)]
        p: String,
    },
    /// Calibration gaps over a simplex lattice, written as CSV.
    Sweep(CommonArgs),
    /// SVG of target cells and surrogate level sets (three outcomes).
    Render(CommonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClaimArg {
    Ie,
    Sie,
}

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// Target JSON path, or one of `ordinal:N`, `zero-one:N`, `abstain[:L]`,
    /// `ce-l1`, `ce-l2`, `ce-l3`.
    #[arg(long)]
    pub target: String,
    /// Surrogate JSON path or built-in name (`cusp`, `smooth-cusp`, `ce`,
    /// `huber-ordinal`, `huber-pair:D`, `universal:N`).
    #[arg(long)]
    pub surrogate: Option<String>,
    /// Link: `auto`, `interval`, `projection`, `level-set` or a link JSON path.
    #[arg(long, default_value = "auto")]
    pub link: String,
    #[arg(long, default_value_t = 0.05)]
    pub resolution: f64,
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub rank_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub grad_tol: f64,
    /// Output file (or directory for `construct-1d`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG path for `analyze-target`.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

/// Validated settings shared by every command.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub target: String,
    pub surrogate: Option<String>,
    pub link: String,
    pub resolution: f64,
    pub grad_tol: f64,
    pub tie_tol: f64,
    pub gap_tol: f64,
    pub rank_tol: f64,
    pub radius: f64,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(command: &str, a: &CommonArgs) -> Result<Self> {
        let cfg = Self {
            command: command.to_string(),
            target: a.target.clone(),
            surrogate: a.surrogate.clone(),
            link: a.link.clone(),
            resolution: a.resolution,
            grad_tol: a.grad_tol,
            tie_tol: a.tie_tol,
            gap_tol: a.gap_tol,
            rank_tol: a.rank_tol,
            radius: a.radius,
            out: a.out.clone(),
            svg: a.svg.clone(),
            seed: a.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grad-tol", self.grad_tol),
            ("tie-tol", self.tie_tol),
            ("gap-tol", self.gap_tol),
            ("rank-tol", self.rank_tol),
            ("radius", self.radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("--{name} must be positive")));
            }
        }
        if !(self.resolution > 0.0 && self.resolution <= 1.0) {
            return Err(Error::invalid("--resolution must lie in (0, 1]"));
        }
        Ok(())
    }

    fn opt(&self) -> OptimizerConfig {
        OptimizerConfig {
            grad_tol: self.grad_tol,
            seed: self.seed,
            ..OptimizerConfig::default()
        }
    }

    fn elicitation(&self) -> ElicitationConfig {
        ElicitationConfig {
            resolution: self.resolution,
            rank_tol: self.rank_tol,
            opt: self.opt(),
            ..ElicitationConfig::default()
        }
    }

    fn gap(&self) -> GapConfig {
        GapConfig {
            radius: self.radius,
            gap_tol: self.gap_tol,
            tie_tol: self.tie_tol,
            opt: self.opt(),
            ..GapConfig::default()
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::DimensionOverflow { .. }
        | Error::NonDifferentiable { .. } => 2,
        Error::RedundantReport { .. } => 3,
        Error::NotOrderable => 4,
        Error::NoConvergence { .. } => 5,
        _ => 6,
    }
}

/// Parses a target by built-in name or loads it from a JSON file.
pub fn load_target(spec: &str) -> Result<TargetLoss> {
    let (base, arg) = match spec.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (spec, None),
    };
    let count = |default: usize| -> Result<usize> {
        arg.map_or(Ok(default), |a| {
            a.parse::<usize>()
                .ok()
                .filter(|&n| n >= 2)
                .ok_or_else(|| Error::invalid(format!("bad size in {spec:?}")))
        })
    };
    match base {
        "ordinal" => Ok(TargetLoss::ordinal(count(3)?)),
        "zero-one" => Ok(TargetLoss::zero_one(count(3)?)),
        "abstain" => {
            let level = arg.map_or(Ok(0.25), |a| {
                crate::targets::parse_exact(a).map_err(Error::invalid)
            })?;
            if !(level > 0.0 && level < 0.5) {
                return Err(Error::invalid("abstain level must lie in (0, 1/2)"));
            }
            Ok(TargetLoss::abstain(level))
        }
        "ce-l1" => Ok(TargetLoss::two_report([2.5, 1.25, 0.0])),
        "ce-l2" => Ok(TargetLoss::two_report([2.0, 1.0, 0.0])),
        "ce-l3" => Ok(TargetLoss::two_report([5.0 / 3.0, 5.0 / 6.0, 0.0])),
        _ => TargetLoss::load(spec),
    }
}

pub fn load_surrogate(spec: &str) -> Result<Arc<dyn SurrogateLoss>> {
    match SurrogateSpec::from_name(spec) {
        Some(s) => s.build(),
        None if Path::new(spec).exists() => SurrogateSpec::load(spec)?.build(),
        None => Err(Error::invalid(format!("unknown surrogate {spec:?}"))),
    }
}

fn require_surrogate(cfg: &RunConfig) -> Result<Arc<dyn SurrogateLoss>> {
    let name = cfg
        .surrogate
        .as_deref()
        .ok_or_else(|| Error::invalid("--surrogate is required"))?;
    load_surrogate(name)
}

fn check_dims(s: &dyn SurrogateLoss, t: &TargetLoss) -> Result<()> {
    if s.outcomes() != t.outcomes() {
        return Err(Error::invalid(format!(
            "surrogate has {} outcomes, target has {}",
            s.outcomes(),
            t.outcomes()
        )));
    }
    Ok(())
}

/// Resolves `--link`. `auto` tries the interval link (1-d), then the
/// projection link (strong IE), then the level-set link (IE).
pub fn resolve_link(
    s: &Arc<dyn SurrogateLoss>,
    t: &TargetLoss,
    cfg: &RunConfig,
) -> Result<Link> {
    let ecfg = cfg.elicitation();
    let interval = || -> Result<Link> {
        Ok(Link::Interval(build_interval_link(
            s.as_ref(),
            t,
            &ecfg.opt,
            cfg.rank_tol,
        )?))
    };
    let atlas = || build_atlas(s.as_ref(), t, &ecfg);
    match cfg.link.as_str() {
        "interval" => interval(),
        "projection" => Ok(Link::Projection(build_projection_link(&atlas()?)?)),
        "level-set" => Ok(Link::LevelSet(LevelSetLink::build(
            s.clone(),
            t,
            &atlas()?,
            ecfg.corner_tie_tol,
            cfg.rank_tol,
        )?)),
        "auto" => auto_link(s, t, &ecfg),
        path => Link::from_json_str(&std::fs::read_to_string(path)?),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn stdout(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(cfg: &RunConfig, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(out) = &cfg.out {
        std::fs::write(out, &text)?;
    }
    stdout(&format!("{text}\n"));
    Ok(())
}

fn parse_distribution(s: &str) -> Result<Distribution> {
    let probs = s
        .split(',')
        .map(|x| crate::targets::parse_exact(x).map_err(Error::invalid))
        .collect::<Result<Vec<_>>>()?;
    Distribution::new(probs)
}

fn analyze_target(cfg: &RunConfig) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    let witnesses = t.validate_nonredundant()?;
    let cells = (0..t.reports())
        .map(|r| {
            let c = t.cell(r)?;
            Ok(json!({
                "report": r,
                "label": t.label(r),
                "vertices": c.polytope.vertices,
                "affine_dim": c.polytope.affine_dim(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut boundaries = Vec::new();
    for a in 0..t.reports() {
        for b in a + 1..t.reports() {
            let bd = t.boundary(a, b)?;
            if !bd.is_empty() {
                boundaries.push(json!({"reports": [a, b], "vertices": bd.vertices}));
            }
        }
    }
    let order = t.orderability();
    if let Some(path) = &cfg.svg {
        write_rendered(path, render(&t, &[], &cfg.target)?)?;
    }
    emit(
        cfg,
        &json!({
            "target": t.to_file(),
            "cells": cells,
            "boundaries": boundaries,
            "nonredundancy_witnesses": witnesses,
            "orderability": order,
        }),
    )?;
    Ok(0)
}

fn write_rendered(path: &Path, r: Rendered) -> Result<()> {
    match r {
        Rendered::Svg(s) | Rendered::Table(s) => std::fs::write(path, s)?,
    }
    Ok(())
}

fn check(cfg: &RunConfig, claim: ClaimArg) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    t.validate_nonredundant()?;
    let s = require_surrogate(cfg)?;
    check_dims(s.as_ref(), &t)?;
    let ecfg = cfg.elicitation();
    let atlas = build_atlas(s.as_ref(), &t, &ecfg)?;
    let verdict = match claim {
        ClaimArg::Ie => check_ie(&atlas),
        ClaimArg::Sie => check_strong_ie(&atlas),
    };
    let replayed = verdict.replay(s.as_ref(), &t, &ecfg)?;
    emit(
        cfg,
        &json!({
            "surrogate": s.name(),
            "atlas_entries": atlas.entries.len(),
            "verdict": verdict,
            "certificate_replays": replayed,
            "config": cfg,
        }),
    )?;
    Ok(i32::from(verdict.violated()))
}

fn construct_1d(cfg: &RunConfig) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    let c = construct(&t)?;
    let certs = boundary_certificate(&c.surrogate, &t, &c.enumeration)?;
    let ecfg = cfg.elicitation();
    let ie = check_ie(&build_atlas(&c.surrogate, &t, &ecfg)?);
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let spec = SurrogateSpec::PiecewiseQuadratic1d {
        piecewise_quadratic_1d: c.surrogate.clone(),
    };
    let files = [
        ("surrogate.json", serde_json::to_string_pretty(&spec)?),
        (
            "link.json",
            serde_json::to_string_pretty(&Link::Interval(c.link.clone()))?,
        ),
        ("certificates.json", serde_json::to_string_pretty(&certs)?),
    ];
    for (name, text) in &files {
        std::fs::write(dir.join(name), text)?;
    }
    stdout(&format!(
        "{}\n",
        serde_json::to_string_pretty(&json!({
            "enumeration": c.enumeration,
            "beta": c.beta,
            "padding": c.padding,
            "sign_scan": c.surrogate.sign_scan(),
            "ie_verdict": ie,
            "files": files.iter().map(|(n, _)| dir.join(n)).collect::<Vec<_>>(),
        }))?
    ));
    Ok(i32::from(ie.violated()))
}

fn falsify(cfg: &RunConfig, p: &str) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    let s = require_surrogate(cfg)?;
    check_dims(s.as_ref(), &t)?;
    let p = parse_distribution(p)?;
    let link = resolve_link(&s, &t, cfg)?;
    let probe = gap(s.as_ref(), &t, &link, &p, &cfg.gap())?;
    let replays = probe.replay(s.as_ref(), &link);
    emit(
        cfg,
        &json!({"probe": probe, "witness_replays": replays, "config": cfg}),
    )?;
    Ok(i32::from(probe.violated))
}

fn run_sweep(cfg: &RunConfig) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    let s = require_surrogate(cfg)?;
    check_dims(s.as_ref(), &t)?;
    let link = resolve_link(&s, &t, cfg)?;
    let report = sweep(s.as_ref(), &t, &link, cfg.resolution, &cfg.gap())?;
    match &cfg.out {
        Some(path) => report.write_csv(std::fs::File::create(path)?)?,
        None => report.write_csv(std::io::stdout())?,
    }
    let summary = json!({
        "probes": report.probes.len(),
        "min_interior_gap": report.min_interior_gap,
        "violations": report.violations.iter().map(|&i| &report.probes[i].p).collect::<Vec<_>>(),
        "errors": report.errors,
        "seed": cfg.seed,
    });
    eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(i32::from(!report.violations.is_empty()))
}

/// Distinct surrogate level sets over a coarse lattice.
fn sample_level_sets(
    s: &dyn SurrogateLoss,
    n: usize,
    ecfg: &ElicitationConfig,
) -> Result<Vec<SimplexPolytope>> {
    let mut out: Vec<SimplexPolytope> = Vec::new();
    for p in simplex_lattice(n, lattice_steps(ecfg.resolution)) {
        for (_, ls) in level_set_bundle(s, &p, ecfg)? {
            if !ls.is_empty() && !out.iter().any(|o| o.vertex_hausdorff(&ls) < 1e-9) {
                out.push(ls);
            }
        }
    }
    Ok(out)
}

fn render_cmd(cfg: &RunConfig) -> Result<i32> {
    let t = load_target(&cfg.target)?;
    let level_sets = match &cfg.surrogate {
        Some(_) => {
            let s = require_surrogate(cfg)?;
            check_dims(s.as_ref(), &t)?;
            sample_level_sets(s.as_ref(), t.outcomes(), &cfg.elicitation())?
        }
        None => Vec::new(),
    };
    let title = match &cfg.surrogate {
        Some(s) => format!("{} / {}", cfg.target, s),
        None => cfg.target.clone(),
    };
    let rendered = render(&t, &level_sets, &title)?;
    match &cfg.out {
        Some(path) => write_rendered(path, rendered)?,
        None => match rendered {
            Rendered::Svg(s) | Rendered::Table(s) => stdout(&s),
        },
    }
    Ok(0)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::AnalyzeTarget(a) => RunConfig::new("analyze-target", a).and_then(|c| analyze_target(&c)),
        Command::Check { common, claim } => {
            RunConfig::new("check", common).and_then(|c| check(&c, *claim))
        }
        Command::Construct1d(a) => RunConfig::new("construct-1d", a).and_then(|c| construct_1d(&c)),
        Command::Falsify { common, p } => {
            RunConfig::new("falsify", common).and_then(|c| falsify(&c, p))
        }
        Command::Sweep(a) => RunConfig::new("sweep", a).and_then(|c| run_sweep(&c)),
        Command::Render(a) => RunConfig::new("render", a).and_then(|c| render_cmd(&c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_targets_parse() {
        assert_eq!(load_target("ordinal:4").unwrap().reports(), 4);
        assert_eq!(load_target("abstain").unwrap().reports(), 3);
        assert_eq!(load_target("ce-l2").unwrap().row(1), vec![2.0, 1.0, 0.0]);
        assert!(load_target("abstain:0.7").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        assert_eq!(exit_code(&Error::RedundantReport { report: 1 }), 3);
        assert_eq!(exit_code(&Error::NotOrderable), 4);
        assert_eq!(
            exit_code(&Error::NoConvergence {
                max_iters: 1,
                p: vec![]
            }),
            5
        );
    }

    #[test]
    fn run_config_validation() {
        let cli = Cli::try_parse_from([
            "levelset",
            "sweep",
            "--target",
            "ordinal:3",
            "--resolution",
            "1.5",
        ])
        .unwrap();
        let Command::Sweep(a) = cli.command else {
            panic!()
        };
        assert!(RunConfig::new("sweep", &a).is_err());
    }
}
