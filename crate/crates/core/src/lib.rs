//! Composable finite-key secret-key rates for practical BB84 implementations.
//!
//! The crate covers three implementation families of the BB84 coding:
//!
//! - weak coherent pulses without decoy states ([`wcp`]), an unconditional
//!   bound;
//! - the three-intensity decoy protocol ([`decoy`]), an approximate bound
//!   built on a simplified fluctuation treatment;
//! - entanglement-based coding ([`entanglement`]) with two alternative
//!   bounds, squashing and double-click estimation.
//!
//! [`finite_key`] holds the shared machinery (entropies, fluctuation and
//! finite-size corrections, the failure-probability budget), [`channel`] the
//! a-priori expected-value models used at design time, and [`optimize`] the
//! constrained maximization of the key rate over experiment designs and the
//! internal epsilon split.
//!
//! Everything is pure and deterministic: the same inputs produce
//! bit-identical outputs, which the sweep machinery relies on to emit
//! reproducible tables from a worker pool.

pub mod channel;
pub mod decoy;
pub mod entanglement;
pub mod error;
pub mod finite_key;
pub mod optimize;
pub mod rate;
pub mod wcp;

pub use error::{Error, Result};
pub use rate::{BoundDetail, RateFlags, RateResult, Variant};
