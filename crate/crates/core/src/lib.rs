//! Level-set tools for surrogate loss design.
//!
//! Given a discrete target loss (a `k x n` matrix) and a convex surrogate
//! loss `L: R^d -> R^n`, this crate computes the elicited properties of both,
//! checks indirect elicitation (IE) and strong IE through the corners of the
//! surrogate level sets, builds link functions, constructs calibrated
//! one-dimensional surrogates for orderable targets, and numerically probes
//! calibration gaps.
//!
//! Everything is desk-scale: outcome counts up to 12 and prediction
//! dimensions where dense grids are affordable.

pub mod calibration;
pub mod cli;
pub mod construct1d;
pub mod elicitation;
pub mod error;
pub mod geometry;
pub mod links;
pub mod surrogates;
pub mod svg;
pub mod targets;

pub use error::{Error, Result};
pub use geometry::{Distribution, SimplexPolytope};
pub use surrogates::{OptimalReportSet, OptimizerConfig, SurrogateLoss, SurrogateSpec};
pub use targets::TargetLoss;
