//! Implementation-independent finite-key machinery.
//!
//! Everything in this module is shared by the concrete protocol bounds: the
//! binary entropy, the statistical fluctuation bound on estimated
//! probabilities, the finite-size correction to the smooth min-entropy, the
//! error-correction leakage model, the failure-probability budget and the
//! generic secret-fraction assembly.
//!
//! All functions here are pure: identical inputs produce bit-identical
//! outputs, and nothing touches shared state, so they can be called from any
//! number of worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, check_range, Error, Result};

/// Tolerance for the failure-probability budget identity, see
/// [`SecurityBudget::validate`].
pub const BUDGET_TOLERANCE: f64 = 1e-15;

/// Decomposition of the total tolerated failure probability.
///
/// The total security parameter of a run splits additively into the failure
/// probabilities of error correction, smoothing, parameter estimation (one
/// share per estimated parameter) and privacy amplification:
///
/// ```text
/// eps_total = eps_ec + eps_bar + n_pe * eps_pe + eps_pa
/// ```
///
/// Constructors keep this identity exact by always deriving `eps_pa` as the
/// remainder of the split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityBudget {
    /// Total tolerated failure probability of the key extraction.
    pub eps_total: f64,
    /// Failure probability of the error-correction step.
    pub eps_ec: f64,
    /// Smoothing parameter of the min-entropy estimate.
    pub eps_bar: f64,
    /// Failure probability per estimated parameter.
    pub eps_pe: f64,
    /// Failure probability of privacy amplification.
    pub eps_pa: f64,
    /// Number of parameters subject to statistical estimation.
    pub n_pe: u32,
}

impl SecurityBudget {
    /// Builds a budget from an explicit `(eps_bar, eps_pe)` choice, deriving
    /// `eps_pa` as the exact remainder of `eps_total - eps_ec`.
    pub fn from_split(
        eps_total: f64,
        eps_ec: f64,
        n_pe: u32,
        eps_bar: f64,
        eps_pe: f64,
    ) -> Result<Self> {
        check_open_unit("eps_total", eps_total)?;
        check_open_unit("eps_ec", eps_ec)?;
        check_open_unit("eps_bar", eps_bar)?;
        check_open_unit("eps_pe", eps_pe)?;
        if n_pe == 0 {
            return Err(Error::OutOfDomain {
                name: "n_pe",
                value: 0.0,
                constraint: "at least one estimated parameter",
            });
        }
        let eps_pa = (eps_total - eps_ec) - eps_bar - n_pe as f64 * eps_pe;
        if !(eps_pa > 0.0 && eps_pa < 1.0) {
            return Err(Error::OutOfDomain {
                name: "eps_pa",
                value: eps_pa,
                constraint: "positive remainder of the budget split",
            });
        }
        Ok(Self {
            eps_total,
            eps_ec,
            eps_bar,
            eps_pe,
            eps_pa,
            n_pe,
        })
    }

    /// Budget with the auxiliary epsilons split uniformly:
    /// `eps_bar = eps_pe = eps_pa = (eps_total - eps_ec) / (n_pe + 2)`.
    pub fn uniform(eps_total: f64, eps_ec: f64, n_pe: u32) -> Result<Self> {
        if !(eps_total > eps_ec) {
            return Err(Error::InfeasibleConfig(format!(
                "eps_total = {eps_total} must exceed eps_ec = {eps_ec}"
            )));
        }
        let share = (eps_total - eps_ec) / (n_pe as f64 + 2.0);
        Self::from_split(eps_total, eps_ec, n_pe, share, share)
    }

    /// Budget available to the auxiliary parameters, `eps_total - eps_ec`.
    pub fn auxiliary(&self) -> f64 {
        self.eps_total - self.eps_ec
    }

    /// Verifies the additive budget identity to [`BUDGET_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        let sum = self.eps_ec + self.eps_bar + self.n_pe as f64 * self.eps_pe + self.eps_pa;
        if (sum - self.eps_total).abs() <= BUDGET_TOLERANCE {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                name: "eps_total",
                value: sum - self.eps_total,
                constraint: "budget components must sum to eps_total within 1e-15",
            })
        }
    }
}

/// Efficiency model of the error-correction step.
///
/// Practical codes leak `f_ec * h(e)` bits per raw-key bit instead of the
/// Shannon limit `h(e)`, plus a short verification tag that fails with
/// probability `eps_ec`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCorrectionModel {
    /// Code inefficiency relative to the Shannon limit, at least 1.
    pub f_ec: f64,
    /// Failure probability of error correction.
    pub eps_ec: f64,
}

impl ErrorCorrectionModel {
    pub fn new(f_ec: f64, eps_ec: f64) -> Result<Self> {
        if !(f_ec.is_finite() && f_ec >= 1.0) {
            return Err(Error::OutOfDomain {
                name: "f_ec",
                value: f_ec,
                constraint: "error-correction efficiency >= 1",
            });
        }
        check_open_unit("eps_ec", eps_ec)?;
        Ok(Self { f_ec, eps_ec })
    }
}

/// Bookkeeping of the asymmetric basis choice.
///
/// Out of `detected` signals, sifting keeps `raw_key_len = round(N p_z^2)`
/// key-basis pairs and `sample_len = round(N p_x^2)` estimation pairs. The
/// counts are rounded to the nearest integer with a minimum of 1, which
/// differs from the real-valued products by O(1/N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftedCounts {
    /// Number of detected signals before sifting.
    pub detected: u64,
    /// Probability of choosing the key basis.
    pub p_z: f64,
    /// Probability of choosing the estimation basis, `1 - p_z`.
    pub p_x: f64,
    /// Raw-key length `n`.
    pub raw_key_len: u64,
    /// Parameter-estimation sample length `m`.
    pub sample_len: u64,
}

impl SiftedCounts {
    pub fn new(detected: u64, p_z: f64) -> Result<Self> {
        check_open_unit("p_z", p_z)?;
        if detected == 0 {
            return Err(Error::OutOfDomain {
                name: "detected",
                value: 0.0,
                constraint: "at least one detected signal",
            });
        }
        let p_x = 1.0 - p_z;
        let n = detected as f64;
        Ok(Self {
            detected,
            p_z,
            p_x,
            raw_key_len: round_count(n * p_z * p_z),
            sample_len: round_count(n * p_x * p_x),
        })
    }
}

/// Rounds a real-valued sample count to the nearest integer, at least 1.
pub(crate) fn round_count(x: f64) -> u64 {
    let r = x.round();
    if r < 1.0 {
        1
    } else if r >= u64::MAX as f64 {
        u64::MAX
    } else {
        r as u64
    }
}

/// Binary entropy in bits, with the convention `0 log2 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_range("p", p, 0.0, 1.0, "probability in [0, 1]")?;
    Ok(binary_entropy_unchecked(p))
}

pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Deviation bound for a probability estimated from `m_prime` samples of a
/// `d`-outcome measurement, at failure probability `eps_pe`:
///
/// ```text
/// xi(m', d) = sqrt( (ln(1/eps_pe) + d ln(m' + 1)) / (2 m') )
/// ```
///
/// The bound is exact for `d = 2`; for `d > 2` it is the largest possible
/// deviation. Note the natural logarithms: this expression must not be
/// silently rebased.
pub fn fluctuation_bound(m_prime: u64, d: u32, eps_pe: f64) -> Result<f64> {
    if m_prime == 0 {
        return Err(Error::OutOfDomain {
            name: "m_prime",
            value: 0.0,
            constraint: "sample count >= 1",
        });
    }
    if d < 2 {
        return Err(Error::OutOfDomain {
            name: "d",
            value: d as f64,
            constraint: "POVM outcome count >= 2",
        });
    }
    check_open_unit("eps_pe", eps_pe)?;
    let m = m_prime as f64;
    Ok((((1.0 / eps_pe).ln() + d as f64 * (m + 1.0).ln()) / (2.0 * m)).sqrt())
}

/// Like [`fluctuation_bound`] but maps an empty sample to an infinite
/// deviation instead of an error. Design-stage evaluations use this so that
/// an intensity that is never emitted simply contributes nothing.
pub(crate) fn fluctuation_bound_or_inf(m_prime: u64, d: u32, eps_pe: f64) -> Result<f64> {
    if m_prime == 0 {
        Ok(f64::INFINITY)
    } else {
        fluctuation_bound(m_prime, d, eps_pe)
    }
}

/// Upper bound compatible with the fluctuation: `min(lambda + xi, 1)`.
pub fn clamp_upper(lambda: f64, xi: f64) -> Result<f64> {
    check_range("lambda", lambda, 0.0, 1.0, "probability in [0, 1]")?;
    check_nonneg_deviation(xi)?;
    Ok((lambda + xi).min(1.0))
}

/// Lower bound compatible with the fluctuation: `max(lambda - xi, 0)`.
pub fn clamp_lower(lambda: f64, xi: f64) -> Result<f64> {
    check_range("lambda", lambda, 0.0, 1.0, "probability in [0, 1]")?;
    check_nonneg_deviation(xi)?;
    Ok((lambda - xi).max(0.0))
}

fn check_nonneg_deviation(xi: f64) -> Result<()> {
    // Infinite deviations are legal: they arise from empty samples and clamp
    // the estimate to its trivial bound.
    if xi.is_nan() || xi < 0.0 {
        return Err(Error::OutOfDomain {
            name: "xi",
            value: xi,
            constraint: "deviation >= 0",
        });
    }
    Ok(())
}

/// Finite-size correction to the smooth min-entropy, in bits per raw-key bit:
///
/// ```text
/// Delta(n) = 7 sqrt( log2(2/eps_bar) / n ) + (2/n) log2(1/eps_pa)
/// ```
///
/// Base-2 logarithms, as opposed to the natural logarithms of
/// [`fluctuation_bound`].
pub fn delta_correction(n: u64, eps_bar: f64, eps_pa: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: 0.0,
            constraint: "raw-key length >= 1",
        });
    }
    check_open_unit("eps_bar", eps_bar)?;
    check_open_unit("eps_pa", eps_pa)?;
    let n = n as f64;
    Ok(7.0 * ((2.0 / eps_bar).log2() / n).sqrt() + 2.0 / n * (1.0 / eps_pa).log2())
}

/// Error-correction leakage per raw-key bit:
///
/// ```text
/// leak_ec = f_ec h(e_key) + (1/n) log2(2/eps_ec)
/// ```
///
/// assuming symmetric errors, so that the conditional entropy of the raw key
/// given the partner's key is the binary entropy of the key-basis error rate.
pub fn leak_ec(e_key: f64, ec: &ErrorCorrectionModel, n: u64) -> Result<f64> {
    check_range("e_key", e_key, 0.0, 0.5, "key-basis error rate in [0, 0.5]")?;
    if n == 0 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: 0.0,
            constraint: "raw-key length >= 1",
        });
    }
    Ok(ec.f_ec * binary_entropy_unchecked(e_key) + (2.0 / ec.eps_ec).log2() / n as f64)
}

/// Secret fraction `r = max(0, p_z^2 (s_xi - delta - leak))`.
///
/// A negative bracket means the adversary's certified uncertainty does not
/// cover the finite-size and error-correction costs; no key can be extracted
/// and the fraction is reported as zero.
pub fn secret_fraction(s_xi: f64, delta: f64, leak: f64, p_z: f64) -> f64 {
    (p_z * p_z * (s_xi - delta - leak)).max(0.0)
}

/// Secret-key rate per sent signal, `K = R r`.
pub fn key_rate(detection_rate: f64, secret_fraction: f64) -> f64 {
    detection_rate * secret_fraction
}
