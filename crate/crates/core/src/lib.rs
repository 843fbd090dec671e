//! Carry-gap measurement from index option cross-sections.
//!
//! The pipeline identifies option-implied discount factors from put-call
//! parity, compares them with benchmark (OIS or Treasury CMT) discount
//! curves, and explains the resulting carry gap with path-risk regressors
//! in a date-clustered panel regression validated by leave-one-year-out
//! refits.
//!
//! Stages map onto modules:
//!
//! - [`ingest`]: quote/macro CSV loading, call-put pairing, eligibility filters
//! - [`implied_discount`]: joint `(B, F)` identification per expiry cell
//! - [`curves`]: OIS bootstrap, DGS curve, log-linear discounting
//! - [`carrygap`]: carry-gap panel and its descriptive statistics
//! - [`pathrisk`]: path-risk regressor and Monte Carlo check of its closed forms
//! - [`econometrics`]: panel construction, clustered OLS, LOYO validation
//! - [`synthgen`]: planted-truth generators used as test oracles

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carrygap;
pub mod curves;
pub mod econometrics;
pub mod implied_discount;
pub mod ingest;
pub mod pathrisk;
pub mod stats;
pub mod synthgen;
mod types;

pub use types::{Benchmark, Market, ParseEnumError};
