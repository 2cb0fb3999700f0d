//! Recall-maximizing decision boundaries over a 2D grid of model score and
//! prediction uncertainty.
//!
//! The crate is organized bottom-up:
//!
//! * [`dataset`] holds labeled `(score, uncertainty, label)` samples.
//! * [`binning`] partitions the score x uncertainty plane into a `K x L` grid.
//! * [`isotonic`] is a weighted pool-adjacent-violators solver.
//! * [`boundary`] contains the threshold solvers (ST, GMT, MIST, EW-DPMT,
//!   VW-DPMT), the exhaustive oracle and PR sweeps.
//! * [`theory`] and [`simulate`] model how score estimation bias depends on
//!   evidence strength and class undersampling.
//! * [`metrics`] evaluates fitted boundaries on held-out data and reports
//!   expected calibration error.

pub mod binning;
pub mod boundary;
pub mod dataset;
mod error;
pub mod isotonic;
pub mod metrics;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};

/// Precision test shared by every solver: `tp / selected >= sigma`, never true
/// for an empty selection.
#[inline]
pub(crate) fn meets_precision(tp: u64, selected: u64, sigma: f64) -> bool {
    selected > 0 && (tp as f64 / selected as f64) >= sigma
}
