//! Approximate finite-key bound for the three-intensity decoy protocol.
//!
//! Alice interleaves a vacuum intensity, a key intensity `mu_I` and a decoy
//! intensity `mu_II >= mu_I`; the key is extracted from the `mu_I` pulses
//! only. The fluctuation treatment follows the simplified recipe: the rate
//! constraints are solved without fluctuations to obtain the forward
//! probabilities `f0`, `f1`, and a deviation is then attached to the yields.
//! The resulting bound is therefore NOT an unconditional security bound, and
//! every result it produces carries the `approximate` flag.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::finite_key::{
    binary_entropy_unchecked, delta_correction, fluctuation_bound, fluctuation_bound_or_inf,
    leak_ec, round_count, ErrorCorrectionModel, SecurityBudget, SiftedCounts,
};
use crate::rate::{BoundDetail, RateFlags, RateResult, Variant};
use crate::wcp::{check_ec_consistency, expect_n_pe};

/// Which of the three source settings a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intensity {
    /// The empty pulse, `mu = 0`.
    Vacuum,
    /// The key-producing intensity `mu_I`.
    Key,
    /// The brighter decoy intensity `mu_II`.
    Decoy,
}

/// The three source intensities and their emission probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyIntensities {
    pub mu_i: f64,
    pub mu_ii: f64,
    pub q_empty: f64,
    pub q_i: f64,
    pub q_ii: f64,
}

impl DecoyIntensities {
    pub fn new(mu_i: f64, mu_ii: f64, q_empty: f64, q_i: f64, q_ii: f64) -> Result<Self> {
        if !(mu_i.is_finite() && mu_i > 0.0) {
            return Err(Error::OutOfDomain {
                name: "mu_i",
                value: mu_i,
                constraint: "key intensity > 0",
            });
        }
        if !(mu_ii.is_finite() && mu_ii >= mu_i) {
            return Err(Error::OutOfDomain {
                name: "mu_ii",
                value: mu_ii,
                constraint: "decoy intensity >= key intensity",
            });
        }
        // Single-photon emission must not decrease from mu_I to mu_II,
        // automatic below mu = 1 but a real constraint beyond.
        if mu_i * (-mu_i).exp() > mu_ii * (-mu_ii).exp() {
            return Err(Error::OutOfDomain {
                name: "mu_ii",
                value: mu_ii,
                constraint: "mu_I exp(-mu_I) <= mu_II exp(-mu_II)",
            });
        }
        for (name, q) in [("q_empty", q_empty), ("q_i", q_i), ("q_ii", q_ii)] {
            if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: q,
                    constraint: "emission probability in [0, 1]",
                });
            }
        }
        if ((q_empty + q_i + q_ii) - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfDomain {
                name: "q_empty + q_i + q_ii",
                value: q_empty + q_i + q_ii,
                constraint: "emission probabilities summing to 1",
            });
        }
        Ok(Self {
            mu_i,
            mu_ii,
            q_empty,
            q_i,
            q_ii,
        })
    }

    pub fn mu(&self, which: Intensity) -> f64 {
        match which {
            Intensity::Vacuum => 0.0,
            Intensity::Key => self.mu_i,
            Intensity::Decoy => self.mu_ii,
        }
    }

    pub fn q(&self, which: Intensity) -> f64 {
        match which {
            Intensity::Vacuum => self.q_empty,
            Intensity::Key => self.q_i,
            Intensity::Decoy => self.q_ii,
        }
    }

    /// Poissonian vacuum-emission probability `p(0 | mu) = exp(-mu)`.
    pub fn p_zero(&self, which: Intensity) -> f64 {
        (-self.mu(which)).exp()
    }

    /// Poissonian single-photon probability `p(1 | mu) = mu exp(-mu)`.
    pub fn p_single(&self, which: Intensity) -> f64 {
        let mu = self.mu(which);
        mu * (-mu).exp()
    }
}

/// Per-intensity measured statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityObservables {
    /// Detected signals at this intensity.
    pub detected: u64,
    /// Pulses emitted at this intensity. The detection-versus-no-detection
    /// outcome is defined for every emitted pulse, so this is the sample size
    /// behind the rate estimate.
    pub sent: u64,
    /// Detection rate `detected / sent`.
    pub rate: f64,
    /// Measured error rate in the estimation basis.
    pub error_x: f64,
    /// Estimation-basis sample length behind `error_x`.
    pub sample_x: u64,
}

/// Measured quantities of a three-intensity decoy run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyObservables {
    pub vacuum: IntensityObservables,
    pub key: IntensityObservables,
    pub decoy: IntensityObservables,
    /// Key-basis error rate of the `mu_I` stream.
    pub e_z_key: f64,
    /// Key-basis probability for the key intensity.
    pub p_z: f64,
    /// Estimation-basis probability, `1 - p_z`.
    pub p_x: f64,
}

impl DecoyObservables {
    pub fn new(
        vacuum: IntensityObservables,
        key: IntensityObservables,
        decoy: IntensityObservables,
        e_z_key: f64,
        p_z: f64,
    ) -> Result<Self> {
        for (name, io) in [("vacuum", &vacuum), ("key", &key), ("decoy", &decoy)] {
            if !(io.rate.is_finite() && (0.0..=1.0).contains(&io.rate)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: io.rate,
                    constraint: "detection rate in [0, 1]",
                });
            }
            if !(io.error_x.is_finite() && (0.0..=1.0).contains(&io.error_x)) {
                return Err(Error::OutOfDomain {
                    name,
                    value: io.error_x,
                    constraint: "error rate in [0, 1]",
                });
            }
            if io.detected > io.sent && io.sent > 0 {
                return Err(Error::OutOfDomain {
                    name,
                    value: io.detected as f64,
                    constraint: "detected count <= sent count",
                });
            }
            if io.sample_x > io.detected {
                return Err(Error::OutOfDomain {
                    name,
                    value: io.sample_x as f64,
                    constraint: "estimation sample <= detected count",
                });
            }
        }
        if !(e_z_key.is_finite() && (0.0..=1.0).contains(&e_z_key)) {
            return Err(Error::OutOfDomain {
                name: "e_z_key",
                value: e_z_key,
                constraint: "error rate in [0, 1]",
            });
        }
        if !(p_z.is_finite() && p_z > 0.0 && p_z < 1.0) {
            return Err(Error::OutOfDomain {
                name: "p_z",
                value: p_z,
                constraint: "basis probability strictly inside (0, 1)",
            });
        }
        Ok(Self {
            vacuum,
            key,
            decoy,
            e_z_key,
            p_z,
            p_x: 1.0 - p_z,
        })
    }

    pub fn get(&self, which: Intensity) -> &IntensityObservables {
        match which {
            Intensity::Vacuum => &self.vacuum,
            Intensity::Key => &self.key,
            Intensity::Decoy => &self.decoy,
        }
    }

    /// Total detected signals over the three intensities.
    pub fn detected_total(&self) -> u64 {
        self.vacuum.detected + self.key.detected + self.decoy.detected
    }

    /// A-priori expected observables for experiment design.
    ///
    /// `n_detected` is the total detected-signal budget of the run; it splits
    /// across the intensities in proportion to `q_gamma R^gamma`. Estimation
    /// samples follow the basis rules of the protocol: the key intensity
    /// sifts on both sides (`m_I = N_I p_x^2`), decoy pulses are always
    /// prepared in the estimation basis (`m_II = N_II p_x`), and vacuum
    /// events need no sifting at all (`m_0 = N_0`).
    pub fn expected(
        ints: &DecoyIntensities,
        ch: &ChannelParams,
        n_detected: u64,
        p_z: f64,
    ) -> Result<Self> {
        use crate::channel::{expected_error_wcp, expected_rate_wcp};

        let p_x = 1.0 - p_z;
        let r_vac = 2.0 * ch.p_d;
        let r_key = expected_rate_wcp(ints.mu_i, ch)?;
        let r_dec = expected_rate_wcp(ints.mu_ii, ch)?;
        let mean_rate = ints.q_empty * r_vac + ints.q_i * r_key + ints.q_ii * r_dec;
        if !(mean_rate > 0.0) {
            return Err(Error::InfeasibleConfig(
                "expected detection rate is zero for every intensity".into(),
            ));
        }
        let n_total = n_detected as f64;
        let sent_total = n_total / mean_rate;

        let split = |q: f64, r: f64| -> (u64, u64) {
            let sent = (q * sent_total).round() as u64;
            let detected = (n_total * q * r / mean_rate).round() as u64;
            (sent, detected)
        };
        let (sent_v, det_v) = split(ints.q_empty, r_vac);
        let (sent_k, det_k) = split(ints.q_i, r_key);
        let (sent_d, det_d) = split(ints.q_ii, r_dec);

        let e_key = expected_error_wcp(ints.mu_i, ch)?;
        let e_dec = expected_error_wcp(ints.mu_ii, ch)?;

        let vacuum = IntensityObservables {
            detected: det_v,
            sent: sent_v,
            rate: r_vac,
            error_x: 0.5,
            sample_x: det_v,
        };
        let key = IntensityObservables {
            detected: det_k,
            sent: sent_k,
            rate: r_key,
            error_x: e_key,
            sample_x: if det_k == 0 {
                0
            } else {
                round_count(det_k as f64 * p_x * p_x)
            },
        };
        let decoy = IntensityObservables {
            detected: det_d,
            sent: sent_d,
            rate: r_dec,
            error_x: e_dec,
            sample_x: if det_d == 0 {
                0
            } else {
                round_count(det_d as f64 * p_x)
            },
        };
        Self::new(vacuum, key, decoy, e_key, p_z)
    }
}

/// Reads the dark-count forward probability and vacuum error rate off the
/// vacuum intensity: `f0 = R_vac`, `e_X(0) = e_X_vac`.
pub fn f0_estimate(obs: &DecoyObservables) -> Result<(f64, f64)> {
    if obs.vacuum.sent == 0 {
        return Err(Error::EstimationImpossible("no vacuum pulses were emitted"));
    }
    Ok((obs.vacuum.rate, obs.vacuum.error_x))
}

/// Single-photon forward probability from the two bright intensities:
///
/// ```text
/// f1 = [ R_I mu_II / p(1|I) - R_II mu_I / p(1|II) ] / (mu_II - mu_I)
///      - f0 (mu_II + mu_I) / (mu_II mu_I)
/// ```
///
/// clamped to [0, 1]. The expression is the worst-case solution of the rate
/// constraints under `f_k <= 1`; on an honest channel it sits below the true
/// single-photon forward probability and approaches it as `mu_I` shrinks.
pub fn f1_estimate(obs: &DecoyObservables, ints: &DecoyIntensities) -> Result<f64> {
    let (f0, _) = f0_estimate(obs)?;
    f1_from_rates(obs.key.rate, obs.decoy.rate, f0, ints.mu_i, ints.mu_ii)
}

pub(crate) fn f1_from_rates(
    rate_i: f64,
    rate_ii: f64,
    f0: f64,
    mu_i: f64,
    mu_ii: f64,
) -> Result<f64> {
    if mu_i >= mu_ii {
        return Err(Error::OutOfDomain {
            name: "mu_i",
            value: mu_i,
            constraint: "strictly below mu_ii",
        });
    }
    let p1_i = mu_i * (-mu_i).exp();
    let p1_ii = mu_ii * (-mu_ii).exp();
    let bright = (rate_i * mu_ii / p1_i - rate_ii * mu_i / p1_ii) / (mu_ii - mu_i);
    let vacuum = f0 * (mu_ii + mu_i) / (mu_ii * mu_i);
    Ok((bright - vacuum).clamp(0.0, 1.0))
}

/// Lower bound on the vacuum yield fraction at intensity `gamma`:
/// `Y0^L(gamma) = max(0, (p(0|gamma) R_vac - xi(sent_vac, 2)) / R_gamma)`.
///
/// The deviation sample is the number of vacuum pulses emitted: every one of
/// them yields a detection-versus-no-detection outcome, whether or not it
/// produced a click.
pub fn y0_lower(
    gamma: Intensity,
    obs: &DecoyObservables,
    ints: &DecoyIntensities,
    eps_pe: f64,
) -> Result<f64> {
    let (f0, _) = f0_estimate(obs)?;
    let rate = obs.get(gamma).rate;
    if !(rate > 0.0) {
        return Err(Error::OutOfDomain {
            name: "rate",
            value: rate,
            constraint: "detection rate > 0 at the requested intensity",
        });
    }
    let xi = fluctuation_bound(obs.vacuum.sent, 2, eps_pe)?;
    Ok(((ints.p_zero(gamma) * f0 - xi) / rate).max(0.0))
}

/// Lower bound on the single-photon yield fraction at intensity `gamma`:
/// `Y1^L(gamma) = max(0, (p(1|gamma) f1 - xi(N_gamma, 2)) / R_gamma)`.
pub fn y1_lower(
    gamma: Intensity,
    obs: &DecoyObservables,
    ints: &DecoyIntensities,
    f1: f64,
    eps_pe: f64,
) -> Result<f64> {
    let rate = obs.get(gamma).rate;
    if !(rate > 0.0) {
        return Err(Error::OutOfDomain {
            name: "rate",
            value: rate,
            constraint: "detection rate > 0 at the requested intensity",
        });
    }
    let xi = fluctuation_bound(obs.get(gamma).detected, 2, eps_pe)?;
    Ok(((ints.p_single(gamma) * f1 - xi) / rate).max(0.0))
}

/// Upper bound on the single-photon error rate,
/// minimised over the two bright intensities:
///
/// ```text
/// e_X^U(1) = min_gamma ( e_X^{gamma,U} - Y0^L(gamma) e_X^{vac,L} ) / Y1^L(gamma)
/// ```
///
/// with `e_X^{gamma,U} = e_X^gamma + xi(m_gamma, 2)` and the vacuum error
/// fluctuated downwards and floored at zero. Intensities whose single-photon
/// yield bound collapsed to zero cannot testify; if both collapsed there is
/// no single-photon key at all.
pub fn ex1_upper_decoy(
    obs: &DecoyObservables,
    y0: (f64, f64),
    y1: (f64, f64),
    eps_pe: f64,
) -> Result<f64> {
    let e0_lower = vacuum_error_lower(obs, eps_pe)?;
    let mut best: Option<f64> = None;
    for (gamma, y0_g, y1_g) in [(Intensity::Key, y0.0, y1.0), (Intensity::Decoy, y0.1, y1.1)] {
        if y1_g <= 0.0 {
            continue;
        }
        let io = obs.get(gamma);
        let e_up = io.error_x + fluctuation_bound_or_inf(io.sample_x, 2, eps_pe)?;
        let candidate = (e_up - y0_g * e0_lower) / y1_g;
        best = Some(match best {
            Some(b) => b.min(candidate),
            None => candidate,
        });
    }
    match best {
        Some(e) => Ok(e.clamp(0.0, 0.5)),
        None => Err(Error::NoSinglePhotonKey(
            "both single-photon yield bounds are zero",
        )),
    }
}

/// Vacuum error rate fluctuated in the direction that weakens the bound,
/// `e_X^{vac,L} = max(0, e_X_vac - xi(N_vac, 2))`. The error sample is the
/// detected vacuum events; no sifting loss applies because an empty pulse
/// carries no basis.
fn vacuum_error_lower(obs: &DecoyObservables, eps_pe: f64) -> Result<f64> {
    let xi = fluctuation_bound_or_inf(obs.vacuum.detected, 2, eps_pe)?;
    Ok((obs.vacuum.error_x - xi).max(0.0))
}

/// Full three-intensity decoy finite-key rate:
///
/// ```text
/// K = q_I R_I p_z^2 [ Y0^L(I) + Y1^L(I)(1 - h(e_X^U(1))) - Delta(n) - leak_ec(e_Z(I)) ]
/// ```
///
/// with `n` taken from the `mu_I` stream only. The result always carries the
/// `approximate` flag: the fluctuation recipe behind it is simplified and
/// unconditional security cannot be claimed.
pub fn key_rate_decoy(
    obs: &DecoyObservables,
    ints: &DecoyIntensities,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<RateResult> {
    expect_n_pe(budget, Variant::DecoyThree)?;
    check_ec_consistency(budget, ec)?;

    let mut flags = RateFlags {
        approximate: true,
        ..Default::default()
    };
    let eps_pe = budget.eps_pe;

    // Without vacuum pulses the dark-count estimate falls back to the rate
    // recorded in the vacuum slot (at design stage: the channel model), and
    // the vacuum-related terms drop out through infinite deviations.
    if obs.vacuum.sent == 0 {
        flags.no_vacuum_data = true;
    }
    let f0 = obs.vacuum.rate;
    let f1 = f1_from_rates(obs.key.rate, obs.decoy.rate, f0, ints.mu_i, ints.mu_ii)?;

    // An unused or undetectable key intensity extracts nothing; that is a
    // legal zero-rate outcome, not an error.
    if obs.key.detected == 0 || !(obs.key.rate > 0.0) || ints.q_i == 0.0 {
        flags.no_key = true;
        flags.no_single_photon = true;
        return Ok(RateResult {
            secret_fraction: 0.0,
            key_rate: 0.0,
            key_length: 0,
            bracket: 0.0,
            delta: 0.0,
            leak_ec: 0.0,
            budget: *budget,
            detail: BoundDetail::DecoyThree {
                f0,
                f1,
                y0_lower_key: 0.0,
                y1_lower_key: 0.0,
                ex1_upper: 0.5,
                s_xi: 0.0,
            },
            flags,
        });
    }

    let xi_vac_rate = fluctuation_bound_or_inf(obs.vacuum.sent, 2, eps_pe)?;
    let e0_lower = vacuum_error_lower(obs, eps_pe)?;

    let mut y0 = [0.0f64; 2];
    let mut y1 = [0.0f64; 2];
    for (slot, gamma) in [Intensity::Key, Intensity::Decoy].into_iter().enumerate() {
        let io = obs.get(gamma);
        if !(io.rate > 0.0) {
            continue;
        }
        y0[slot] = ((ints.p_zero(gamma) * f0 - xi_vac_rate) / io.rate).max(0.0);
        let xi_n = fluctuation_bound_or_inf(io.detected, 2, eps_pe)?;
        y1[slot] = ((ints.p_single(gamma) * f1 - xi_n) / io.rate).max(0.0);
    }

    let mut ex1 = 0.5f64;
    let mut best: Option<f64> = None;
    for (slot, gamma) in [Intensity::Key, Intensity::Decoy].into_iter().enumerate() {
        if y1[slot] <= 0.0 {
            continue;
        }
        let io = obs.get(gamma);
        let e_up = io.error_x + fluctuation_bound_or_inf(io.sample_x, 2, eps_pe)?;
        let candidate = (e_up - y0[slot] * e0_lower) / y1[slot];
        best = Some(match best {
            Some(b) => b.min(candidate),
            None => candidate,
        });
    }
    match best {
        Some(e) => {
            if e > 0.5 {
                flags.error_cap = true;
            }
            ex1 = ex1.min(e.clamp(0.0, 0.5));
        }
        None => {
            flags.no_single_photon = true;
        }
    }

    let s_xi = if flags.no_single_photon {
        y0[0]
    } else {
        y0[0] + y1[0] * (1.0 - binary_entropy_unchecked(ex1))
    };

    let counts = SiftedCounts::new(obs.key.detected, obs.p_z)?;
    let n = counts.raw_key_len;
    let delta = delta_correction(n, budget.eps_bar, budget.eps_pa)?;
    let leak = leak_ec(obs.e_z_key, ec, n)?;
    let bracket = s_xi - delta - leak;

    let rate_term = ints.q_i * obs.key.rate * obs.p_z * obs.p_z;
    let key_rate = (rate_term * bracket).max(0.0);
    let ell = (n as f64 * bracket).max(0.0);
    let r = ell / obs.detected_total() as f64;
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
        detail: BoundDetail::DecoyThree {
            f0,
            f1,
            y0_lower_key: y0[0],
            y1_lower_key: y1[0],
            ex1_upper: ex1,
            s_xi,
        },
        flags,
    })
}
