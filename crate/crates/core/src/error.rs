//! Error types shared by every bound module.

use thiserror::Error;

/// Errors raised by the finite-key machinery.
///
/// Domain errors mean a caller violated a documented precondition. The
/// remaining variants are protocol-level signals: they tell the caller that a
/// bound cannot be evaluated on the given data, which is different from the
/// data being malformed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument is outside its documented domain.
    #[error("`{name}` = {value} violates {constraint}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// A [`SecurityBudget`](crate::finite_key::SecurityBudget) was built for a
    /// different number of estimated parameters than the bound requires.
    #[error("security budget carries n_PE = {actual}, bound requires n_PE = {expected}")]
    ParameterCountMismatch { expected: u32, actual: u32 },

    /// The requested estimate needs data that the observables do not contain.
    #[error("estimation impossible: {0}")]
    EstimationImpossible(&'static str),

    /// Every single-photon yield bound collapsed to zero; the protocol cannot
    /// certify any single-photon contribution, so no key can be extracted.
    #[error("no single-photon key possible: {0}")]
    NoSinglePhotonKey(&'static str),

    /// The double-click bound is outside its validity window and must not be
    /// extrapolated; callers should fall back to the squashing bound.
    #[error("double-click bound inapplicable: {0}")]
    BoundInapplicable(&'static str),

    /// An optimization or sweep was configured with an infeasible setup.
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks a probability-like argument against a closed interval.
pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    constraint: &'static str,
) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::OutOfDomain {
            name,
            value,
            constraint,
        })
    }
}

/// Checks an open-interval probability such as an epsilon, which must be
/// strictly inside (0, 1).
pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::OutOfDomain {
            name,
            value,
            constraint: "strictly inside (0, 1)",
        })
    }
}
