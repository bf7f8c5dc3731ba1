//! A-priori expected-value models for experiment design.
//!
//! These convert calibrated hardware parameters (channel transmittivity,
//! detector efficiency, dark counts, optical error) into the observables a
//! run is expected to produce. They are design-time predictions only: the
//! security bounds themselves must always be fed measured values.

use serde::{Deserialize, Serialize};

use crate::decoy::DecoyIntensities;
use crate::error::{check_range, Error, Result};

/// Calibrated parameters of a prepare-and-measure link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Channel transmittivity in (0, 1].
    pub t: f64,
    /// Detector quantum efficiency in (0, 1].
    pub eta: f64,
    /// Dark-count probability per detector per gate.
    pub p_d: f64,
    /// Optical error rate of the channel, in [0, 0.5).
    pub q_optical: f64,
}

impl ChannelParams {
    pub fn new(t: f64, eta: f64, p_d: f64, q_optical: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0 && t <= 1.0) {
            return Err(Error::OutOfDomain {
                name: "t",
                value: t,
                constraint: "transmittivity in (0, 1]",
            });
        }
        if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
            return Err(Error::OutOfDomain {
                name: "eta",
                value: eta,
                constraint: "detector efficiency in (0, 1]",
            });
        }
        check_range("p_d", p_d, 0.0, 0.5, "dark-count probability in [0, 0.5]")?;
        if !(q_optical.is_finite() && (0.0..0.5).contains(&q_optical)) {
            return Err(Error::OutOfDomain {
                name: "q_optical",
                value: q_optical,
                constraint: "optical error rate in [0, 0.5)",
            });
        }
        Ok(Self {
            t,
            eta,
            p_d,
            q_optical,
        })
    }

    /// Builds the parameters from a two-photon visibility, `Q = (1 - V) / 2`.
    pub fn with_visibility(t: f64, eta: f64, p_d: f64, visibility: f64) -> Result<Self> {
        check_range("visibility", visibility, 0.0, 1.0, "visibility in [0, 1]")?;
        Self::new(t, eta, p_d, (1.0 - visibility) / 2.0)
    }

    /// Visibility equivalent of the optical error rate.
    pub fn visibility(&self) -> f64 {
        1.0 - 2.0 * self.q_optical
    }

    /// End-to-end transmission `t * eta` seen by a photon.
    pub fn transmission(&self) -> f64 {
        self.t * self.eta
    }
}

/// Entangled-pair source description for the continuous-pumping model.
///
/// `y` is the product of the pair rate and the coincidence window; the model
/// keeps terms up to one extra pair, so it is only trustworthy for small `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbSourceParams {
    /// Pair parameter, dimensionless and well below 1.
    pub y: f64,
    pub channel: ChannelParams,
}

impl EbSourceParams {
    /// Accepts `y` up to 0.3; beyond 0.15 the two-pair truncation error is no
    /// longer comfortably negligible, see [`EbSourceParams::truncation_warning`].
    pub fn new(y: f64, channel: ChannelParams) -> Result<Self> {
        if !(y.is_finite() && y > 0.0 && y <= 0.3) {
            return Err(Error::OutOfDomain {
                name: "y",
                value: y,
                constraint: "pair parameter in (0, 0.3]",
            });
        }
        Ok(Self { y, channel })
    }

    /// True when `y` exceeds 0.15 and the truncated source model should be
    /// treated with caution.
    pub fn truncation_warning(&self) -> bool {
        self.y > 0.15
    }
}

/// Expected detection rate of a weak-coherent-pulse link:
/// `R(mu) = 1 - (1 - 2 p_d) exp(-mu t eta)`.
///
/// Double clicks are neglected here; their contribution is numerically small
/// compared to the dark-count term.
pub fn expected_rate_wcp(mu: f64, ch: &ChannelParams) -> Result<f64> {
    check_mu(mu)?;
    Ok(1.0 - (1.0 - 2.0 * ch.p_d) * (-mu * ch.transmission()).exp())
}

/// Expected error rate of a weak-coherent-pulse link:
/// `e(mu) = [ (1 - exp(-mu t eta)) Q + exp(-mu t eta) p_d ] / R(mu)`.
///
/// Detected signal photons err with the optical rate; dark counts are random
/// and contribute half an error each, which is where the bare `p_d` in the
/// numerator comes from.
pub fn expected_error_wcp(mu: f64, ch: &ChannelParams) -> Result<f64> {
    check_mu(mu)?;
    let r = expected_rate_wcp(mu, ch)?;
    if r <= 0.0 {
        return Err(Error::OutOfDomain {
            name: "R(mu)",
            value: r,
            constraint: "expected detection rate must be positive",
        });
    }
    let absorbed = (-mu * ch.transmission()).exp();
    Ok(((1.0 - absorbed) * ch.q_optical + absorbed * ch.p_d) / r)
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::OutOfDomain {
            name: "mu",
            value: mu,
            constraint: "mean photon number >= 0",
        });
    }
    Ok(())
}

/// Expected rates of the entangled-pair implementation, per heralding
/// detection on the source side times the heralding probability `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbExpectedRates {
    /// Single-click rate `R_1c`, signal and dark contributions combined.
    pub single_click: f64,
    /// Signal part of the single-click rate.
    pub single_click_signal: f64,
    /// Dark-count part of the single-click rate.
    pub single_click_dark: f64,
    /// Double-click rate `R_2c`.
    pub double_click: f64,
    /// Error rate of the single-click events (the raw-key error once double
    /// clicks are removed).
    pub qber: f64,
}

impl EbExpectedRates {
    /// Detection rate including double clicks, `R = R_1c + R_2c`.
    pub fn detection_rate(&self) -> f64 {
        self.single_click + self.double_click
    }

    /// Detection rate with double clicks removed, `R' = R_1c`.
    pub fn detection_rate_single(&self) -> f64 {
        self.single_click
    }

    /// Expected double-click fraction `R_2c / (R_1c + R_2c)`.
    pub fn double_click_fraction(&self) -> f64 {
        self.double_click / self.detection_rate()
    }

    /// Raw-key error rates with double clicks removed.
    pub fn error_raw(&self) -> f64 {
        self.qber
    }

    /// Error rate under the squashing convention, where each double click
    /// contributes a random bit: `e = (1 - d2c) e' + d2c / 2`.
    pub fn error_squashed(&self) -> f64 {
        let d = self.double_click_fraction();
        (1.0 - d) * self.qber + d / 2.0
    }
}

/// Expected single-click rate, double-click rate and error of the entangled
/// source, truncated at two pairs: `p_A(1) = 1`, `p_A(2) = y`.
///
/// The dark-count bracket of the signal-free terms follows the printed model
/// verbatim; the whole accounting is kept in this one function so a revised
/// detector model only touches one place.
pub fn eb_rates(src: &EbSourceParams) -> Result<EbExpectedRates> {
    let y = src.y;
    let te = src.channel.transmission();
    let p_d = src.channel.p_d;
    let visibility = src.channel.visibility();
    let p1 = 1.0;
    let p2 = y;

    let r_pair = y * (te * (p1 + p2 * (2.0 - te)));
    let r_dark = y * (2.0 * p_d * (p1 * (1.0 - te) + p2 * (1.0 - te) * (1.0 - te)));
    let single_click = r_pair + r_dark;
    let qber = ((1.0 - visibility + y) * r_pair + r_dark) / (2.0 * single_click);
    let double_click =
        y * (p2 * 0.5 * te * te + (p1 + p2 * (1.0 - te)) * (te * p_d + (1.0 - te) * p_d * p_d));

    Ok(EbExpectedRates {
        single_click,
        single_click_signal: r_pair,
        single_click_dark: r_dark,
        double_click,
        qber,
    })
}

/// Expected per-intensity detection rate and error rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedIntensityObservables {
    pub rate: f64,
    pub error_x: f64,
}

/// Applies the weak-coherent-pulse expectations at each of the three decoy
/// intensities. Returned in the order vacuum, key intensity, decoy intensity.
pub fn expected_decoy_observables(
    ints: &DecoyIntensities,
    ch: &ChannelParams,
) -> Result<[ExpectedIntensityObservables; 3]> {
    let mut out = [ExpectedIntensityObservables {
        rate: 0.0,
        error_x: 0.0,
    }; 3];
    for (slot, mu) in out.iter_mut().zip([0.0, ints.mu_i, ints.mu_ii]) {
        slot.rate = expected_rate_wcp(mu, ch)?;
        slot.error_x = expected_error_wcp(mu, ch)?;
    }
    Ok(out)
}
