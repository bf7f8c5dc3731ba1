//! Shared oracles for the integration suites.
//!
//! Everything in here is deliberately independent of the library's own
//! computation paths: the asymptotic evaluators re-derive the rates from the
//! channel formulas with their own arithmetic, and the Monte-Carlo channel
//! simulates pulse classes directly. Tests compare the library against these
//! oracles, never the other way round.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Binomial, Distribution};

pub const EPS_TOTAL: f64 = 1e-5;
pub const EPS_EC: f64 = 1e-10;
pub const F_EC: f64 = 1.05;
pub const Q_OPTICAL: f64 = 0.005;
pub const ETA: f64 = 0.1;
pub const P_D: f64 = 1e-5;
pub const VISIBILITY: f64 = 0.99;

pub fn profile_channel(t: f64) -> keyrate::channel::ChannelParams {
    keyrate::channel::ChannelParams::new(t, ETA, P_D, Q_OPTICAL).unwrap()
}

pub fn profile_security() -> keyrate::optimize::SecuritySpec {
    keyrate::optimize::SecuritySpec::new(EPS_TOTAL, EPS_EC, F_EC).unwrap()
}

/// Binary entropy, oracle-local.
pub fn h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn rate_wcp(mu: f64, t: f64) -> f64 {
    1.0 - (1.0 - 2.0 * P_D) * (-mu * t * ETA).exp()
}

fn err_wcp(mu: f64, t: f64) -> f64 {
    let a = (-mu * t * ETA).exp();
    ((1.0 - a) * Q_OPTICAL + a * P_D) / rate_wcp(mu, t)
}

/// Generic two-stage logarithmic maximization used by the asymptotic
/// oracles.
fn scan_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let stage = |lo: f64, hi: f64| -> (f64, f64) {
        let (mut best_v, mut best_x) = (f64::NEG_INFINITY, lo);
        for i in 0..2000 {
            let x = lo * (hi / lo).powf(i as f64 / 1999.0);
            let v = f(x);
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
        (best_v, best_x)
    };
    let (_, x1) = stage(lo, hi);
    let zoom_lo = (x1 * 0.7).max(lo);
    let zoom_hi = (x1 * 1.4).min(hi);
    let (v, x) = stage(zoom_lo, zoom_hi);
    (v.max(0.0), x)
}

/// Asymptotic no-decoy rate: infinite block, unit key-basis probability, no
/// fluctuation or finite-size terms. Returns `(K, mu*)`.
pub fn asymptotic_no_decoy(t: f64) -> (f64, f64) {
    scan_max(
        |mu| {
            let r = rate_wcp(mu, t);
            let e = err_wcp(mu, t);
            if e > 0.5 {
                return f64::NEG_INFINITY;
            }
            let p_multi = 1.0 - (-mu).exp() * (1.0 + mu);
            let y1 = 1.0 - p_multi / r;
            if y1 <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let e1 = (e / y1).min(0.5);
            r * (y1 * (1.0 - h(e1)) - F_EC * h(e))
        },
        1e-4,
        1.0,
    )
}

/// Asymptotic three-intensity decoy rate with the key intensity free and the
/// decoy intensity pinned. All emission weight sits on the key intensity in
/// this limit. Returns `(K, mu_i*)`.
pub fn asymptotic_decoy(t: f64, mu_ii: f64) -> (f64, f64) {
    let f0 = 2.0 * P_D;
    scan_max(
        |mu_i| {
            let r_i = rate_wcp(mu_i, t);
            let r_ii = rate_wcp(mu_ii, t);
            let p1_i = mu_i * (-mu_i).exp();
            let p1_ii = mu_ii * (-mu_ii).exp();
            let f1 = ((r_i * mu_ii / p1_i - r_ii * mu_i / p1_ii) / (mu_ii - mu_i)
                - f0 * (mu_ii + mu_i) / (mu_ii * mu_i))
                .clamp(0.0, 1.0);
            let y0 = (-mu_i).exp() * f0 / r_i;
            let y1 = p1_i * f1 / r_i;
            if y1 <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut e1 = f64::INFINITY;
            for (mu_g, r_g) in [(mu_i, r_i), (mu_ii, r_ii)] {
                let e_g = err_wcp(mu_g, t);
                let y0_g = (-mu_g).exp() * f0 / r_g;
                let y1_g = mu_g * (-mu_g).exp() * f1 / r_g;
                if y1_g > 0.0 {
                    e1 = e1.min((e_g - y0_g * 0.5) / y1_g);
                }
            }
            let e1 = e1.clamp(0.0, 0.5);
            let e_key = err_wcp(mu_i, t);
            if e_key > 0.5 {
                return f64::NEG_INFINITY;
            }
            r_i * (y0 + y1 * (1.0 - h(e1)) - F_EC * h(e_key))
        },
        1e-3,
        mu_ii * (1.0 - 1e-9),
    )
}

/// Entangled-source expected rates, oracle-local term-by-term evaluation.
pub struct EbOracleRates {
    pub r_single: f64,
    pub r_double: f64,
    pub qber: f64,
}

pub fn eb_oracle_rates(y: f64, t: f64) -> EbOracleRates {
    let te = t * ETA;
    let r_pair = y * (te * (1.0 + y * (2.0 - te)));
    let r_dark = y * (2.0 * P_D * ((1.0 - te) + y * (1.0 - te) * (1.0 - te)));
    let r_single = r_pair + r_dark;
    let qber = ((1.0 - VISIBILITY + y) * r_pair + r_dark) / (2.0 * r_single);
    let r_double =
        y * (y * 0.5 * te * te + (1.0 + y * (1.0 - te)) * (te * P_D + (1.0 - te) * P_D * P_D));
    EbOracleRates {
        r_single,
        r_double,
        qber,
    }
}

/// Asymptotic squashing rate for the entangled source. Returns `(K, y*)`.
pub fn asymptotic_eb_squashing(t: f64) -> (f64, f64) {
    scan_max(
        |y| {
            let o = eb_oracle_rates(y, t);
            let r = o.r_single + o.r_double;
            let d2c = o.r_double / r;
            let e = (1.0 - d2c) * o.qber + d2c / 2.0;
            if e > 0.5 {
                return f64::NEG_INFINITY;
            }
            r * (1.0 - h(e) - F_EC * h(e))
        },
        1e-4,
        0.3,
    )
}

/// Asymptotic double-click rate for the entangled source. Returns `(K, y*)`.
pub fn asymptotic_eb_double_click(t: f64) -> (f64, f64) {
    scan_max(
        |y| {
            let o = eb_oracle_rates(y, t);
            let d2c = o.r_double / (o.r_single + o.r_double);
            let f = (1.0 - 4.0 * d2c) / (1.0 - d2c);
            if f <= 0.0 || o.qber > 0.08 * f || o.qber > 0.5 {
                return f64::NEG_INFINITY;
            }
            o.r_single * (f * (1.0 - h(o.qber / f)) - F_EC * h(o.qber))
        },
        1e-4,
        0.3,
    )
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Smallest failure count whose upper tail probability under
/// `Binomial(trials, p)` drops below `alpha`; observing that many or more
/// failures rejects "failure probability <= p" at confidence `1 - alpha`.
pub fn binomial_critical_count(trials: u64, p: f64, alpha: f64) -> u64 {
    // Log-space pmf recurrence, summed from the upper end.
    let n = trials as f64;
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut log_pmf = vec![0.0f64; trials as usize + 1];
    let mut acc = n * lq;
    log_pmf[0] = acc;
    for k in 0..trials as usize {
        acc += ((n - k as f64) / (k as f64 + 1.0)).ln() + lp - lq;
        log_pmf[k + 1] = acc;
    }
    let mut tail = 0.0;
    for k in (0..=trials as usize).rev() {
        tail += log_pmf[k].exp();
        if tail >= alpha {
            return k as u64 + 1;
        }
    }
    0
}

/// Per-class honest-channel model: detection probability for a `k`-photon
/// pulse and the error probability given a detection.
pub fn honest_class(k: u32, t: f64) -> (f64, f64) {
    let te = t * ETA;
    let survive = (1.0 - te).powi(k as i32);
    let f_k = 1.0 - (1.0 - 2.0 * P_D) * survive;
    let e_k = ((1.0 - survive) * Q_OPTICAL + survive * P_D) / f_k;
    (f_k, e_k)
}

/// One simulated intensity of an honest decoy run.
pub struct SimulatedIntensity {
    pub sent: u64,
    pub detected: u64,
    pub detected_by_class: Vec<u64>,
    pub sample_x: u64,
    pub errors_x: u64,
    pub errors_x_single: u64,
    pub sample_x_single: u64,
}

impl SimulatedIntensity {
    pub fn rate(&self) -> f64 {
        self.detected as f64 / self.sent as f64
    }

    pub fn error_x(&self) -> f64 {
        if self.sample_x == 0 {
            0.0
        } else {
            self.errors_x as f64 / self.sample_x as f64
        }
    }
}

/// Simulates `sent` pulses of intensity `mu` through the honest channel.
/// `x_prob` is the probability that a detected event lands in the
/// estimation-basis sample.
pub fn simulate_intensity<R: Rng>(
    rng: &mut R,
    mu: f64,
    t: f64,
    sent: u64,
    x_prob: f64,
) -> SimulatedIntensity {
    const MAX_K: u32 = 20;
    // Photon-number classes by sequential binomial conditioning.
    let mut remaining = sent;
    let mut remaining_p = 1.0f64;
    let mut class_counts = Vec::with_capacity(MAX_K as usize + 1);
    let mut pk = (-mu).exp();
    for k in 0..=MAX_K {
        if k > 0 {
            pk *= mu / k as f64;
        }
        let cond = (pk / remaining_p).clamp(0.0, 1.0);
        let n_k = if remaining == 0 || cond >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, cond).unwrap().sample(rng)
        };
        class_counts.push(n_k);
        remaining -= n_k;
        remaining_p = (remaining_p - pk).max(f64::MIN_POSITIVE);
    }

    let mut out = SimulatedIntensity {
        sent,
        detected: 0,
        detected_by_class: vec![0; MAX_K as usize + 1],
        sample_x: 0,
        errors_x: 0,
        errors_x_single: 0,
        sample_x_single: 0,
    };
    let draw = |rng: &mut R, n: u64, p: f64| -> u64 {
        if n == 0 || p <= 0.0 {
            0
        } else if p >= 1.0 {
            n
        } else {
            Binomial::new(n, p).unwrap().sample(rng)
        }
    };
    for (k, &n_k) in class_counts.iter().enumerate() {
        let (f_k, e_k) = honest_class(k as u32, t);
        let det = draw(rng, n_k, f_k);
        out.detected += det;
        out.detected_by_class[k] = det;
        let x_k = draw(rng, det, x_prob);
        let err_k = draw(rng, x_k, e_k);
        out.sample_x += x_k;
        out.errors_x += err_k;
        if k == 1 {
            out.sample_x_single = x_k;
            out.errors_x_single = err_k;
        }
    }
    out
}
