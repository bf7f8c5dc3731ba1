//! Finite-key bound for prepare-and-measure BB84 with weak coherent pulses
//! and no decoy states.
//!
//! The adversary is assumed to learn the photon number of every pulse, so
//! the worst case forwards every multi-photon pulse and the certified
//! uncertainty rests entirely on the single-photon fraction. The resulting
//! bound is unconditionally secure.

use serde::{Deserialize, Serialize};

use crate::channel::{expected_error_wcp, expected_rate_wcp, ChannelParams};
use crate::error::{Error, Result};
use crate::finite_key::{
    binary_entropy_unchecked, delta_correction, fluctuation_bound, key_rate, leak_ec,
    secret_fraction, ErrorCorrectionModel, SecurityBudget, SiftedCounts,
};
use crate::rate::{BoundDetail, RateFlags, RateResult, Variant};

/// Measured quantities of a no-decoy run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcpObservables {
    pub counts: SiftedCounts,
    /// Detection rate per sent pulse. This is a directly counted ratio, not a
    /// statistical estimate, so no fluctuation is ever attached to it.
    pub rate: f64,
    /// Measured error rate in the estimation basis.
    pub e_x: f64,
    /// Measured error rate in the key basis.
    pub e_z: f64,
    /// Mean photon number of the source.
    pub mu: f64,
}

impl WcpObservables {
    pub fn new(counts: SiftedCounts, rate: f64, e_x: f64, e_z: f64, mu: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0 && rate <= 1.0) {
            return Err(Error::OutOfDomain {
                name: "rate",
                value: rate,
                constraint: "detection rate in (0, 1]",
            });
        }
        for (name, e) in [("e_x", e_x), ("e_z", e_z)] {
            if !(e.is_finite() && (0.0..=1.0).contains(&e)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: e,
                    constraint: "error rate in [0, 1]",
                });
            }
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::OutOfDomain {
                name: "mu",
                value: mu,
                constraint: "mean photon number > 0",
            });
        }
        Ok(Self {
            counts,
            rate,
            e_x,
            e_z,
            mu,
        })
    }

    /// A-priori expected observables for experiment design.
    pub fn expected(mu: f64, ch: &ChannelParams, detected: u64, p_z: f64) -> Result<Self> {
        let counts = SiftedCounts::new(detected, p_z)?;
        let rate = expected_rate_wcp(mu, ch)?;
        let e = expected_error_wcp(mu, ch)?;
        Self::new(counts, rate, e, e, mu)
    }
}

/// Probability that a Poissonian pulse carries two or more photons:
/// `p(k >= 2 | mu) = 1 - exp(-mu) (1 + mu)`.
pub fn multi_photon_fraction(mu: f64) -> Result<f64> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::OutOfDomain {
            name: "mu",
            value: mu,
            constraint: "mean photon number >= 0",
        });
    }
    Ok(1.0 - (-mu).exp() * (1.0 + mu))
}

/// Lower bound on the single-photon yield fraction,
/// `Y1^L = max(0, 1 - (p(k>=2|mu) + xi(N, 2)) / R)`.
///
/// All `N` detected signals participate in the virtual two-outcome
/// measurement "fewer than two photons" versus "two or more", hence the
/// `xi(N, 2)` deviation. The measured rate `R` enters raw.
pub fn y1_lower(obs: &WcpObservables, eps_pe: f64) -> Result<f64> {
    let xi = fluctuation_bound(obs.counts.detected, 2, eps_pe)?;
    let multi = multi_photon_fraction(obs.mu)?;
    Ok((1.0 - (multi + xi) / obs.rate).max(0.0))
}

/// Upper bound on the single-photon error rate in the estimation basis,
/// `e_X^U(1) = min(0.5, (e_X + xi(m, 2)) / Y1^L)`.
///
/// Capped at one half: beyond a random channel the adversary gains nothing
/// more, and the binary entropy would otherwise leave its meaningful branch.
pub fn ex1_upper(obs: &WcpObservables, y1_lower: f64, eps_pe: f64) -> Result<f64> {
    if y1_lower <= 0.0 {
        return Err(Error::NoSinglePhotonKey(
            "single-photon yield bound is zero",
        ));
    }
    let xi = fluctuation_bound(obs.counts.sample_len, 2, eps_pe)?;
    Ok(((obs.e_x + xi) / y1_lower).min(0.5))
}

/// Full no-decoy finite-key rate:
/// `K = R p_z^2 [ Y1^L (1 - h(e_X^U(1))) - Delta(n) - leak_ec(e_Z) ]`,
/// clamped at zero.
///
/// The budget must have been split for the two estimated parameters of this
/// bound (the multi-photon fraction and the estimation-basis error rate).
pub fn key_rate_no_decoy(
    obs: &WcpObservables,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<RateResult> {
    expect_n_pe(budget, Variant::NoDecoy)?;
    check_ec_consistency(budget, ec)?;

    let mut flags = RateFlags::default();
    let y1 = y1_lower(obs, budget.eps_pe)?;
    let (ex1, s_xi) = if y1 > 0.0 {
        let xi_m = fluctuation_bound(obs.counts.sample_len, 2, budget.eps_pe)?;
        let raw = (obs.e_x + xi_m) / y1;
        if raw > 0.5 {
            flags.error_cap = true;
        }
        let ex1 = raw.min(0.5);
        (ex1, y1 * (1.0 - binary_entropy_unchecked(ex1)))
    } else {
        flags.no_single_photon = true;
        (0.5, 0.0)
    };

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
        key_rate: key_rate(obs.rate, r),
        key_length: (r * obs.counts.detected as f64).floor() as u64,
        bracket,
        delta,
        leak_ec: leak,
        budget: *budget,
        detail: BoundDetail::NoDecoy {
            y1_lower: y1,
            ex1_upper: ex1,
            s_xi,
        },
        flags,
    })
}

pub(crate) fn expect_n_pe(budget: &SecurityBudget, variant: Variant) -> Result<()> {
    budget.validate()?;
    if budget.n_pe != variant.n_pe() {
        return Err(Error::ParameterCountMismatch {
            expected: variant.n_pe(),
            actual: budget.n_pe,
        });
    }
    Ok(())
}

pub(crate) fn check_ec_consistency(
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<()> {
    if budget.eps_ec != ec.eps_ec {
        return Err(Error::InfeasibleConfig(format!(
            "error-correction eps_ec = {} differs from the budget's eps_ec = {}",
            ec.eps_ec, budget.eps_ec
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_key::SiftedCounts;

    fn obs(detected: u64, p_z: f64, rate: f64, e: f64, mu: f64) -> WcpObservables {
        WcpObservables::new(SiftedCounts::new(detected, p_z).unwrap(), rate, e, e, mu).unwrap()
    }

    #[test]
    fn multi_photon_fraction_values() {
        assert_eq!(multi_photon_fraction(0.0).unwrap(), 0.0);
        assert!((multi_photon_fraction(0.5).unwrap() - 0.09020401043104986).abs() < 1e-16);
        assert!(multi_photon_fraction(200.0).unwrap() > 1.0 - 1e-12);
        assert!(multi_photon_fraction(-0.5).is_err());
    }

    #[test]
    fn multi_photon_fraction_increases_with_mu() {
        let mut prev = 0.0;
        for i in 1..50 {
            let v = multi_photon_fraction(0.1 * i as f64).unwrap();
            assert!(v > prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn y1_lower_composes_the_primitives() {
        // Frozen 50-digit evaluation at mu = 0.1, R = 0.011, N = 1e9,
        // eps_pe = 1e-7, plus the compositional identity against the
        // already-tested primitives.
        let o = obs(1_000_000_000, 0.9, 0.011, 0.01, 0.1);
        let y1 = y1_lower(&o, 1e-7).unwrap();
        assert!((y1 - 0.559227848085655).abs() < 1e-13);
        let composed = 1.0
            - (multi_photon_fraction(0.1).unwrap()
                + fluctuation_bound(1_000_000_000, 2, 1e-7).unwrap())
                / 0.011;
        assert_eq!(y1, composed.max(0.0));
    }

    #[test]
    fn y1_lower_clamps_when_all_detections_may_be_multiphoton() {
        // Strong source over a weak channel: p(k>=2) alone exceeds R.
        let o = obs(1_000_000, 0.9, 0.01, 0.01, 1.0);
        assert_eq!(y1_lower(&o, 1e-7).unwrap(), 0.0);
    }

    #[test]
    fn y1_lower_approaches_asymptotic_estimate() {
        let o = obs(1_000_000_000_000_000_000, 0.9, 0.011, 0.01, 0.1);
        let y1 = y1_lower(&o, 1e-7).unwrap();
        let asymptotic = 1.0 - multi_photon_fraction(0.1).unwrap() / 0.011;
        assert!(y1 <= asymptotic);
        assert!((y1 - asymptotic).abs() < 1e-6);
    }

    #[test]
    fn ex1_upper_limits() {
        let o = obs(1_000_000_000_000_000_000, 0.5, 0.9, 0.0, 0.1);
        // Error-free channel with a huge sample: bound collapses to zero.
        assert!(ex1_upper(&o, 1.0, 1e-7).unwrap() < 1e-7);

        // Cap engages when the corrected error exceeds one half.
        let small = obs(400, 0.5, 0.9, 0.3, 0.1);
        assert_eq!(ex1_upper(&small, 0.5, 1e-7).unwrap(), 0.5);

        // Zero yield is a protocol signal, not a domain error.
        assert!(matches!(
            ex1_upper(&small, 0.0, 1e-7),
            Err(Error::NoSinglePhotonKey(_))
        ));
    }

    #[test]
    fn ex1_upper_recovers_asymptotic_ratio() {
        let o = obs(1_000_000_000_000_000_000, 0.5, 0.011, 0.01, 0.1);
        let y1_tilde = 1.0 - multi_photon_fraction(0.1).unwrap() / 0.011;
        let e1 = ex1_upper(&o, y1_tilde, 1e-7).unwrap();
        assert!((e1 - 0.01 / y1_tilde).abs() < 1e-6);
    }

    #[test]
    fn fully_noisy_channel_yields_no_key() {
        let o = obs(1_000_000_000, 0.9, 0.011, 0.5, 0.01);
        let budget = SecurityBudget::uniform(1e-5, 1e-10, 2).unwrap();
        let ec = ErrorCorrectionModel::new(1.05, 1e-10).unwrap();
        let res = key_rate_no_decoy(&o, &budget, &ec).unwrap();
        assert_eq!(res.key_rate, 0.0);
        assert_eq!(res.key_length, 0);
        assert!(res.flags.no_key);
    }

    #[test]
    fn budget_parameter_count_is_enforced() {
        let o = obs(1_000_000_000, 0.9, 0.011, 0.01, 0.01);
        let budget = SecurityBudget::uniform(1e-5, 1e-10, 3).unwrap();
        let ec = ErrorCorrectionModel::new(1.05, 1e-10).unwrap();
        assert!(matches!(
            key_rate_no_decoy(&o, &budget, &ec),
            Err(Error::ParameterCountMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn asymptotic_recovery_of_the_rate() {
        // Huge block with p_z near one: both xi terms and Delta vanish and
        // the finite bound approaches p_z^2 R [ Y1~ (1 - h(e/Y1~)) - f_ec h(e) ].
        let detected = 1_000_000_000_000_000_000u64;
        let p_z = 1.0 - 1e-3;
        let mu = 0.01;
        let rate = 0.0011;
        let e = 0.01;
        let o = obs(detected, p_z, rate, e, mu);
        let budget = SecurityBudget::uniform(1e-5, 1e-10, 2).unwrap();
        let ec = ErrorCorrectionModel::new(1.05, 1e-10).unwrap();
        let res = key_rate_no_decoy(&o, &budget, &ec).unwrap();

        let y1_tilde = 1.0 - multi_photon_fraction(mu).unwrap() / rate;
        let e1_tilde = e / y1_tilde;
        let asymptotic = rate
            * (y1_tilde * (1.0 - binary_entropy_unchecked(e1_tilde))
                - 1.05 * binary_entropy_unchecked(e));
        assert!(res.key_rate <= asymptotic + 1e-12);
        assert!((res.key_rate - p_z * p_z * asymptotic).abs() / asymptotic < 1e-4);
    }

    #[test]
    fn finite_key_rate_monotone_in_block_size_and_errors() {
        let budget = SecurityBudget::uniform(1e-5, 1e-10, 2).unwrap();
        let ec = ErrorCorrectionModel::new(1.05, 1e-10).unwrap();
        let k = |detected: u64, e: f64| {
            let o = obs(detected, 0.95, 0.0011, e, 0.01);
            key_rate_no_decoy(&o, &budget, &ec).unwrap().key_rate
        };
        assert!(k(100_000_000, 0.01) <= k(10_000_000_000, 0.01));
        assert!(k(10_000_000_000, 0.02) <= k(10_000_000_000, 0.01));
    }
}
