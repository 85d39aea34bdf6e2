//! Optimal transport and Wasserstein barycenters on finite metric graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`metric_graph`]: graphs with edge lengths, the induced length distance,
//!   geodesic paths and oriented cut points.
//! * [`line_ot`]: measures on the real line, quantile calculus, the quantile
//!   form of the quadratic Wasserstein distance and the averaged-quantile
//!   barycenter.
//! * [`transport`]: an exact transportation simplex for discrete couplings.
//! * [`ot_core`]: measures on graphs, optimal plans, geodesic-class
//!   decomposition of plans and restriction maps.
//! * [`branched_cover`]: the unfolding of a graph around an oriented edge
//!   onto the real line, at the level of measures.
//! * [`barycenter`]: the fixed-support LP barycenter, the clamped-quantile
//!   fixed-point solver and the quasi-regularity report.
//! * [`io`]: JSON and CSV formats shared with the command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod branched_cover;
mod error;
pub mod exec;
pub mod io;
pub mod line_ot;
pub mod metric_graph;
pub mod ot_core;
pub mod transport;

pub use error::{Error, GraphError, Result};

/// Mass conservation tolerance for probability measures.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on plan marginals.
pub const MARGINAL_TOL: f64 = 1e-10;
/// Tolerance used when comparing transport costs and path lengths.
pub const COST_TOL: f64 = 1e-9;
/// Offsets closer than this to an edge end are identified with the vertex.
pub const SNAP_TOL: f64 = 1e-12;
