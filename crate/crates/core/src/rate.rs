//! Result records produced by the protocol bounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::finite_key::SecurityBudget;

/// Protocol implementation whose bound was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Weak coherent pulses, no decoy states.
    NoDecoy,
    /// Three-intensity decoy protocol (vacuum plus two intensities),
    /// approximate fluctuation treatment.
    DecoyThree,
    /// Entanglement-based coding, squashing bound.
    EbSquashing,
    /// Entanglement-based coding, double-click estimation bound.
    EbDoubleClick,
}

impl Variant {
    /// Number of parameters the bound estimates from finite samples.
    pub fn n_pe(self) -> u32 {
        match self {
            Variant::NoDecoy => 2,
            Variant::DecoyThree => 3,
            Variant::EbSquashing => 1,
            Variant::EbDoubleClick => 2,
        }
    }

    /// Stable identifier used in reports and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Variant::NoDecoy => "no-decoy",
            Variant::DecoyThree => "decoy-3",
            Variant::EbSquashing => "eb-squash",
            Variant::EbDoubleClick => "eb-2click",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Qualitative annotations attached to a rate computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateFlags {
    /// The bracket was non-positive; the fraction was clamped to zero.
    pub no_key: bool,
    /// A single-photon error bound hit the 0.5 cap.
    pub error_cap: bool,
    /// Every usable single-photon yield bound collapsed to zero.
    pub no_single_photon: bool,
    /// Result relies on the simplified decoy fluctuation recipe and is not an
    /// unconditional security bound.
    pub approximate: bool,
    /// No vacuum-intensity data was available; the vacuum yield term was
    /// dropped and, at design stage, the dark-count forward probability was
    /// taken from the channel model.
    pub no_vacuum_data: bool,
    /// Entangled-source pair parameter is large enough that the two-pair
    /// truncation becomes questionable.
    pub truncation_warning: bool,
}

impl fmt::Display for RateFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = Vec::new();
        if self.approximate {
            parts.push("approx");
        }
        if self.no_key {
            parts.push("no_key");
        }
        if self.no_single_photon {
            parts.push("no_single_photon");
        }
        if self.error_cap {
            parts.push("error_cap");
        }
        if self.no_vacuum_data {
            parts.push("no_vacuum_data");
        }
        if self.truncation_warning {
            parts.push("truncation_warning");
        }
        f.write_str(&parts.join(";"))
    }
}

/// Intermediate quantities of each bound, kept for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bound", rename_all = "kebab-case")]
pub enum BoundDetail {
    NoDecoy {
        /// Lower bound on the single-photon yield fraction.
        y1_lower: f64,
        /// Upper bound on the single-photon estimation-basis error.
        ex1_upper: f64,
        /// Certified adversary uncertainty per raw-key bit.
        s_xi: f64,
    },
    DecoyThree {
        /// Dark-count forward probability estimate.
        f0: f64,
        /// Single-photon forward probability estimate.
        f1: f64,
        /// Lower bound on the vacuum yield fraction at the key intensity.
        y0_lower_key: f64,
        /// Lower bound on the single-photon yield fraction at the key
        /// intensity.
        y1_lower_key: f64,
        /// Upper bound on the single-photon estimation-basis error.
        ex1_upper: f64,
        /// Certified adversary uncertainty per raw-key bit.
        s_xi: f64,
    },
    EbSquashing {
        /// Upper bound on the estimation-basis error rate.
        ex_upper: f64,
        /// Certified adversary uncertainty per raw-key bit.
        s_xi: f64,
    },
    EbDoubleClick {
        /// Upper bound on the double-click fraction.
        delta_2c_upper: f64,
        /// Error-scaling factor evaluated at the fluctuated double-click
        /// fraction.
        koashi_factor: f64,
        /// Upper bound on the double-click-removed estimation-basis error.
        exprime_upper: f64,
        /// Certified adversary uncertainty per raw-key bit.
        s_xi: f64,
    },
}

impl BoundDetail {
    pub fn variant(&self) -> Variant {
        match self {
            BoundDetail::NoDecoy { .. } => Variant::NoDecoy,
            BoundDetail::DecoyThree { .. } => Variant::DecoyThree,
            BoundDetail::EbSquashing { .. } => Variant::EbSquashing,
            BoundDetail::EbDoubleClick { .. } => Variant::EbDoubleClick,
        }
    }
}

/// Outcome of a finite-key rate computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// Secret fraction `r`: extractable secret bits per detected signal.
    pub secret_fraction: f64,
    /// Secret-key rate `K` per sent signal.
    pub key_rate: f64,
    /// Output key length `ell = floor(r N)` for the run's detected count.
    pub key_length: u64,
    /// The bracket `S_xi - Delta - leak` before clamping at zero.
    pub bracket: f64,
    /// Finite-size min-entropy correction used.
    pub delta: f64,
    /// Error-correction leakage used.
    pub leak_ec: f64,
    /// Epsilon split the bound was evaluated with.
    pub budget: SecurityBudget,
    /// Bound-specific intermediates.
    pub detail: BoundDetail,
    pub flags: RateFlags,
}

impl RateResult {
    pub fn variant(&self) -> Variant {
        self.detail.variant()
    }
}
