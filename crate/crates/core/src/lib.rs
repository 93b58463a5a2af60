//! Day-ahead market clearing with a regulated settlement rule for one
//! dominant firm.
//!
//! The pieces, bottom up:
//!
//! * [`lp`] — a dense bounded-variable simplex with duals and a KKT checker.
//! * [`grid`] — network, units, offers, PTDFs and scenario validation.
//! * [`market`] — the welfare-maximizing clearing LP, LMPs and settlement.
//! * [`regulation`] — the two-run regulated revenue rule and uplift.
//! * [`strategy`] — best-response sweeps over offer distortions.
//! * [`verify`] — executable checks of the mechanism's structural claims.
//! * [`io`] — scenario documents and CSV reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops mirror
// the row/hour algebra they build.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod io;
pub mod lp;
pub mod market;
pub mod regulation;
pub mod strategy;
pub mod verify;

pub use error::{Error, Result, RunKind, Violation};
pub use grid::{
    compute_ptdf, is_within_true_envelope, validate_scenario, FirmOffer, GeneratingUnit, OfferBlock, OfferCurve, Owner,
    Scenario, TechParams, UnitOffer,
};
pub use market::{clear, restricted_clear, settle, ClearingResult, Dispatch, FirmSchedule, Settlement};
pub use regulation::{
    compare_methods, regulated_profit, run_regulation, standard_method, RegulationOutcome, RegulatorEstimate,
};
pub use strategy::{apply_distortion, best_response_sweep, DistortionSpec, GridSpec, Regime, SweepResult};
