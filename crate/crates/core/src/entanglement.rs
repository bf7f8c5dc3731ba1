//! Finite-key bounds for entanglement-based BB84 coding.
//!
//! Two alternative bounds are provided. Under squashing, double-click events
//! stay in the raw key as random bits and only the error rate needs to be
//! estimated. The double-click bound instead removes those events and
//! estimates their fraction, paying a second estimated parameter for a
//! better error budget at high visibility.

use serde::{Deserialize, Serialize};

use crate::channel::{eb_rates, EbSourceParams};
use crate::error::{Error, Result};
use crate::finite_key::{
    binary_entropy_unchecked, delta_correction, fluctuation_bound, leak_ec, round_count,
    secret_fraction, ErrorCorrectionModel, SecurityBudget, SiftedCounts,
};
use crate::rate::{BoundDetail, RateFlags, RateResult, Variant};
use crate::wcp::{check_ec_consistency, expect_n_pe};

/// Tolerance for the consistency between the squashed and double-click-removed
/// error conventions.
pub const ERROR_CONVENTION_TOLERANCE: f64 = 1e-12;

/// Measured quantities of an entanglement-based run, in both error
/// conventions.
///
/// `e_x`/`e_z` are the error rates when double clicks are squashed to random
/// bits; `eprime_x`/`eprime_z` are the raw-key error rates once double-click
/// events are removed. The two are tied together by the double-click
/// fraction: `e = (1 - d2c) e' + d2c / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbObservables {
    /// Sifting bookkeeping over the detections including double clicks.
    pub counts: SiftedCounts,
    /// Detection rate including double clicks.
    pub rate: f64,
    /// Detection rate with double-click events removed.
    pub rate_single: f64,
    /// Squashing-convention error rates.
    pub e_x: f64,
    pub e_z: f64,
    /// Double-click-removed error rates.
    pub eprime_x: f64,
    pub eprime_z: f64,
}

impl EbObservables {
    /// Builds the observables from squashing-convention error rates, deriving
    /// the double-click-removed ones.
    pub fn from_squashed(
        counts: SiftedCounts,
        rate: f64,
        rate_single: f64,
        e_x: f64,
        e_z: f64,
    ) -> Result<Self> {
        let d2c = double_click_fraction(rate, rate_single)?;
        let invert = |name: &'static str, e: f64| -> Result<f64> {
            let ep = (e - d2c / 2.0) / (1.0 - d2c);
            if !(ep.is_finite() && (-ERROR_CONVENTION_TOLERANCE..=1.0).contains(&ep)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: e,
                    constraint: "squashed error consistent with the double-click fraction",
                });
            }
            Ok(ep.max(0.0))
        };
        let eprime_x = invert("e_x", e_x)?;
        let eprime_z = invert("e_z", e_z)?;
        Self::new_full(counts, rate, rate_single, e_x, e_z, eprime_x, eprime_z)
    }

    /// Builds the observables from double-click-removed error rates, deriving
    /// the squashing-convention ones.
    pub fn from_raw(
        counts: SiftedCounts,
        rate: f64,
        rate_single: f64,
        eprime_x: f64,
        eprime_z: f64,
    ) -> Result<Self> {
        let d2c = double_click_fraction(rate, rate_single)?;
        let e_x = (1.0 - d2c) * eprime_x + d2c / 2.0;
        let e_z = (1.0 - d2c) * eprime_z + d2c / 2.0;
        Self::new_full(counts, rate, rate_single, e_x, e_z, eprime_x, eprime_z)
    }

    /// Accepts both conventions at once and verifies their consistency to
    /// [`ERROR_CONVENTION_TOLERANCE`].
    pub fn new_full(
        counts: SiftedCounts,
        rate: f64,
        rate_single: f64,
        e_x: f64,
        e_z: f64,
        eprime_x: f64,
        eprime_z: f64,
    ) -> Result<Self> {
        let d2c = double_click_fraction(rate, rate_single)?;
        for (name, e) in [
            ("e_x", e_x),
            ("e_z", e_z),
            ("eprime_x", eprime_x),
            ("eprime_z", eprime_z),
        ] {
            if !(e.is_finite() && (0.0..=1.0).contains(&e)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: e,
                    constraint: "error rate in [0, 1]",
                });
            }
        }
        for (name, e, ep) in [("e_x", e_x, eprime_x), ("e_z", e_z, eprime_z)] {
            if (e - ((1.0 - d2c) * ep + d2c / 2.0)).abs() > ERROR_CONVENTION_TOLERANCE {
                return Err(Error::OutOfDomain {
                    name,
                    value: e,
                    constraint: "error conventions consistent within 1e-12",
                });
            }
        }
        Ok(Self {
            counts,
            rate,
            rate_single,
            e_x,
            e_z,
            eprime_x,
            eprime_z,
        })
    }

    /// Measured double-click fraction.
    pub fn d2c(&self) -> f64 {
        (self.rate - self.rate_single) / self.rate
    }

    /// A-priori expected observables for experiment design.
    pub fn expected(src: &EbSourceParams, detected: u64, p_z: f64) -> Result<Self> {
        let rates = eb_rates(src)?;
        let counts = SiftedCounts::new(detected, p_z)?;
        Self::from_raw(
            counts,
            rates.detection_rate(),
            rates.detection_rate_single(),
            rates.error_raw(),
            rates.error_raw(),
        )
    }
}

/// Measured double-click fraction `d2c = (R - R') / R`.
pub fn double_click_fraction(rate: f64, rate_single: f64) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0 && rate <= 1.0) {
        return Err(Error::OutOfDomain {
            name: "rate",
            value: rate,
            constraint: "detection rate in (0, 1]",
        });
    }
    if !(rate_single.is_finite() && rate_single >= 0.0 && rate_single <= rate) {
        return Err(Error::OutOfDomain {
            name: "rate_single",
            value: rate_single,
            constraint: "0 <= R' <= R",
        });
    }
    Ok((rate - rate_single) / rate)
}

/// Error-scaling factor of the double-click bound,
/// `F(d2c) = (1 - 4 d2c) / (1 - d2c)`.
///
/// Positive only below `d2c = 0.25`; past that the double-click bound has
/// nothing to certify and the caller must fall back to squashing.
pub fn koashi_factor(delta_2c: f64) -> Result<f64> {
    if !(delta_2c.is_finite() && (0.0..1.0).contains(&delta_2c)) {
        return Err(Error::OutOfDomain {
            name: "delta_2c",
            value: delta_2c,
            constraint: "double-click fraction in [0, 1)",
        });
    }
    let f = (1.0 - 4.0 * delta_2c) / (1.0 - delta_2c);
    if f < 0.0 {
        return Err(Error::BoundInapplicable(
            "double-click fraction of 0.25 or more",
        ));
    }
    Ok(f)
}

/// Squashing finite-key rate:
/// `K = R p_z^2 [ 1 - h(e_X^U) - Delta(n) - leak_ec(e_Z) ]`
/// with `e_X^U = e_X + xi(m, 2)`. Only the error rate is estimated.
pub fn key_rate_squashing(
    obs: &EbObservables,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<RateResult> {
    expect_n_pe(budget, Variant::EbSquashing)?;
    check_ec_consistency(budget, ec)?;

    let mut flags = RateFlags::default();
    let xi_m = fluctuation_bound(obs.counts.sample_len, 2, budget.eps_pe)?;
    let raw = obs.e_x + xi_m;
    if raw > 0.5 {
        flags.error_cap = true;
    }
    let ex_upper = raw.min(0.5);
    let s_xi = 1.0 - binary_entropy_unchecked(ex_upper);

    let n = obs.counts.raw_key_len;
    let delta = delta_correction(n, budget.eps_bar, budget.eps_pa)?;
    let leak = leak_ec(obs.e_z, ec, n)?;
    let bracket = s_xi - delta - leak;
    let r = secret_fraction(s_xi, delta, leak, obs.counts.p_z);
    if r == 0.0 {
        flags.no_key = true;
    }

    Ok(RateResult {
        secret_fraction: r,
        key_rate: obs.rate * r,
        key_length: (r * obs.counts.detected as f64).floor() as u64,
        bracket,
        delta,
        leak_ec: leak,
        budget: *budget,
        detail: BoundDetail::EbSquashing { ex_upper, s_xi },
        flags,
    })
}

/// Double-click finite-key rate:
///
/// ```text
/// K = R' p_z^2 { F(d2c^U) [ 1 - h(e'_X^U / F(d2c^U)) ] - Delta(n) - leak_ec(e'_Z) }
/// ```
///
/// with `d2c^U = (R - R')/R + xi(N, 2)` and `e'_X^U = e'_X + xi(m', 2)`. The
/// raw key lives in the double-click-removed stream, so the block lengths
/// derive from `N' = N R'/R`. The underlying uncertainty estimate is only
/// valid for `e'_X^U` up to about `0.08 F`; beyond that window (or when `F`
/// is not positive) the bound is inapplicable and the squashing bound should
/// be used instead.
pub fn key_rate_double_click(
    obs: &EbObservables,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<RateResult> {
    expect_n_pe(budget, Variant::EbDoubleClick)?;
    check_ec_consistency(budget, ec)?;

    let mut flags = RateFlags::default();
    let xi_n = fluctuation_bound(obs.counts.detected, 2, budget.eps_pe)?;
    let d2c_upper = (obs.d2c() + xi_n).min(1.0 - f64::EPSILON);
    let koashi = koashi_factor(d2c_upper)?;
    if koashi <= 0.0 {
        return Err(Error::BoundInapplicable(
            "error-scaling factor vanishes at the fluctuated double-click fraction",
        ));
    }

    let reduced = round_count(obs.counts.detected as f64 * obs.rate_single / obs.rate);
    let counts = SiftedCounts::new(reduced, obs.counts.p_z)?;
    let xi_m = fluctuation_bound(counts.sample_len, 2, budget.eps_pe)?;
    let exprime_upper = obs.eprime_x + xi_m;
    if exprime_upper > 0.08 * koashi {
        return Err(Error::BoundInapplicable(
            "error rate outside the validity window of the double-click estimate",
        ));
    }

    let s_xi = koashi * (1.0 - binary_entropy_unchecked(exprime_upper / koashi));
    let n = counts.raw_key_len;
    let delta = delta_correction(n, budget.eps_bar, budget.eps_pa)?;
    let leak = leak_ec(obs.eprime_z, ec, n)?;
    let bracket = s_xi - delta - leak;

    let p_z2 = obs.counts.p_z * obs.counts.p_z;
    let key_rate = (obs.rate_single * p_z2 * bracket).max(0.0);
    let ell = (n as f64 * bracket).max(0.0);
    let r = ell / obs.counts.detected as f64;
    if key_rate == 0.0 {
        flags.no_key = true;
    }

    Ok(RateResult {
        secret_fraction: r,
        key_rate,
        key_length: ell.floor() as u64,
        bracket,
        delta,
        leak_ec: leak,
        budget: *budget,
        detail: BoundDetail::EbDoubleClick {
            delta_2c_upper: d2c_upper,
            koashi_factor: koashi,
            exprime_upper,
            s_xi,
        },
        flags,
    })
}
