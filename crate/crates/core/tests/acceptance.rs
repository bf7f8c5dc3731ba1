//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The operating profile throughout is the standard hardware point
//! (eps_total 1e-5, eps_ec 1e-10, f_ec 1.05, Q 0.5 %, eta 0.1, p_d 1e-5,
//! visibility 0.99 for the entangled source). The transmittivity grid for
//! the threshold and dominance criteria is six log-spaced points from
//! 10^-1.25 to 1.
//!
//! Criteria 2 and 3 are expected to fail at some of their stated operating
//! points: under this profile the no-decoy bound yields exactly zero rate
//! for every intensity and block size once t drops below roughly 0.135
//! (dark counts push the observed error rate past what the certified
//! single-photon fraction can pay for), so no optimal intensity or basis
//! probability exists there. The tests state the criteria literally and
//! report the zero-rate evidence when they fail.

mod common;

use std::time::Instant;

use common::*;
use keyrate::decoy::{DecoyIntensities, DecoyObservables};
use keyrate::finite_key::{
    clamp_lower, clamp_upper, delta_correction, fluctuation_bound, SecurityBudget,
};
use keyrate::optimize::{
    evaluate_design, optimize_design, optimize_epsilons, sweep_transmittivity, DesignSpace,
    DesignVars,
};
use keyrate::rate::Variant;
use keyrate::wcp::{multi_photon_fraction, y1_lower, WcpObservables};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t_grid() -> Vec<f64> {
    (0..6)
        .map(|i| 10f64.powf(-1.25 + 0.25 * i as f64))
        .collect()
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} -- {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Criterion 1: with the standard profile, full design optimization gives no
/// key anywhere at N = 1e6 and a positive rate somewhere at N = 1e8, within
/// a minute per N.
#[test]
fn criterion_1_no_decoy_threshold() {
    let space = DesignSpace::defaults(Variant::NoDecoy);
    let sec = profile_security();
    let grid = t_grid();

    let mut ok = true;
    let mut detail = String::new();
    for (n, expect_positive) in [(1_000_000u64, false), (100_000_000u64, true)] {
        let start = Instant::now();
        let rows = sweep_transmittivity(&space, &profile_channel(1.0), &[n], &grid, &sec).unwrap();
        let elapsed = start.elapsed();
        let positive = rows.iter().filter(|r| r.key_rate > 0.0).count();
        detail.push_str(&format!(
            "N=1e{:.0}: {positive}/{} points with key in {elapsed:.2?}; ",
            (n as f64).log10(),
            rows.len()
        ));
        ok &= elapsed.as_secs() < 60;
        ok &= if expect_positive {
            positive > 0
        } else {
            positive == 0
        };
    }
    report("1 (no-decoy threshold)", ok, &detail);
    assert!(ok, "{detail}");
}

/// Criterion 2: optimal no-decoy intensity within a factor of two of t*eta
/// at N = 1e10 for t in {10^-0.5, 10^-1, 10^-1.5}.
///
/// Expected to fail at t = 10^-1 and 10^-1.5: the bound is identically zero
/// there (at every N and intensity), so there is no optimum to compare.
#[test]
fn criterion_2_optimal_intensity() {
    let space = DesignSpace::defaults(Variant::NoDecoy);
    let sec = profile_security();
    let mut ok = true;
    let mut detail = String::new();
    for t in [10f64.powf(-0.5), 0.1, 10f64.powf(-1.5)] {
        let rep = optimize_design(&space, &profile_channel(t), 10_000_000_000, &sec).unwrap();
        let mu = match rep.design {
            DesignVars::NoDecoy { mu, .. } => mu,
            _ => unreachable!(),
        };
        let target = t * ETA;
        let in_range = rep.key_rate > 0.0 && mu >= target / 2.0 && mu <= target * 2.0;
        detail.push_str(&format!(
            "t={t:.4}: K={:.3e} mu={mu:.4} t*eta={target:.4} ratio={:.2} {}; ",
            rep.key_rate,
            mu / target,
            if in_range { "ok" } else { "OUT" }
        ));
        ok &= in_range;
    }
    report("2 (optimal intensity)", ok, &detail);
    assert!(
        ok,
        "no positive rate exists below t ~ 0.135 under this profile, so the optimal \
         intensity is undefined there; {detail}"
    );
}

/// Criterion 3: p_x* scales as N^(-1/4) over N in 1e8..1e14 at t = 0.1 for
/// the no-decoy and squashing variants.
///
/// Expected to fail for the no-decoy variant: its rate is identically zero
/// at t = 0.1 (see criterion 2), so the fitted exponent is meaningless. The
/// squashing variant passes.
#[test]
fn criterion_3_basis_probability_scaling() {
    let sec = profile_security();
    let ch = profile_channel(0.1);
    let mut ok = true;
    let mut detail = String::new();
    for variant in [Variant::NoDecoy, Variant::EbSquashing] {
        let space = DesignSpace::defaults(variant);
        let mut points = Vec::new();
        let mut zero_rates = 0usize;
        for exp in 8..=14u32 {
            let n = 10u64.pow(exp);
            let rep = optimize_design(&space, &ch, n, &sec).unwrap();
            if rep.key_rate == 0.0 {
                zero_rates += 1;
            }
            points.push(((n as f64).log10(), rep.design.p_x().log10()));
        }
        let slope = fit_slope(&points);
        let in_band = zero_rates == 0 && (slope + 0.25).abs() <= 0.05;
        detail.push_str(&format!(
            "{variant}: slope={slope:.3} zero-rate points={zero_rates} {}; ",
            if in_band { "ok" } else { "OUT" }
        ));
        ok &= in_band;
    }
    report("3 (p_x scaling)", ok, &detail);
    assert!(
        ok,
        "the no-decoy variant has no key at t = 0.1 under this profile, so its optimal \
         p_x is undefined; {detail}"
    );
}

/// Criterion 4: the decoy protocol strictly dominates the no-decoy one over
/// the criterion-1 grid at N = 1e8; with mu_II pinned at 0.65 the optimal
/// mu_I stays in [0.35, 0.65]; and the optimal vacuum weight is zero up to
/// N = 1e10 but positive at N = 1e15.
#[test]
fn criterion_4_decoy_superiority() {
    let sec = profile_security();
    let grid = t_grid();
    let no_decoy = DesignSpace::defaults(Variant::NoDecoy);
    let decoy = DesignSpace::defaults(Variant::DecoyThree);

    let mut ok = true;
    let mut detail = String::new();

    let nd_rows = sweep_transmittivity(
        &no_decoy,
        &profile_channel(1.0),
        &[100_000_000],
        &grid,
        &sec,
    )
    .unwrap();
    let dc_rows =
        sweep_transmittivity(&decoy, &profile_channel(1.0), &[100_000_000], &grid, &sec).unwrap();
    let mut dominated = 0;
    for (a, b) in nd_rows.iter().zip(dc_rows.iter()) {
        if b.key_rate > a.key_rate {
            dominated += 1;
        }
    }
    ok &= dominated == nd_rows.len();
    detail.push_str(&format!(
        "strict dominance at {dominated}/{} grid points (N=1e8); ",
        nd_rows.len()
    ));

    let ch = profile_channel(0.1);
    let mut q_empty_by_n = Vec::new();
    for exp in [8u32, 10, 15] {
        let n = 10u64.pow(exp);
        let rep = optimize_design(&decoy, &ch, n, &sec).unwrap();
        match rep.design {
            DesignVars::Decoy { mu_i, q_empty, .. } => {
                q_empty_by_n.push((exp, q_empty));
                if exp == 10 {
                    let mu_ok = (0.35..=0.65).contains(&mu_i);
                    detail.push_str(&format!("mu_I(1e10)={mu_i:.3} in [0.35,0.65]={mu_ok}; "));
                    ok &= mu_ok;
                }
            }
            _ => unreachable!(),
        }
    }
    for (exp, q) in &q_empty_by_n {
        let expected_zero = *exp <= 10;
        let q_ok = if expected_zero { *q == 0.0 } else { *q > 0.0 };
        detail.push_str(&format!(
            "q_empty(1e{exp})={q:.2e} {}; ",
            if q_ok { "ok" } else { "OUT" }
        ));
        ok &= q_ok;
    }

    report("4 (decoy superiority)", ok, &detail);
    assert!(ok, "{detail}");
}

/// Criterion 5: the squashing bound produces key already at N = 1e5 near
/// unit transmittivity, dominates the double-click bound there, and the two
/// bounds agree within 5 % at N = 1e15.
#[test]
fn criterion_5_entanglement_threshold() {
    let sec = profile_security();
    let squash = DesignSpace::defaults(Variant::EbSquashing);
    let two_click = DesignSpace::defaults(Variant::EbDoubleClick);

    let ch = profile_channel(1.0);
    let sq_small = optimize_design(&squash, &ch, 100_000, &sec).unwrap();
    let tc_small = match optimize_design(&two_click, &ch, 100_000, &sec) {
        Ok(rep) => rep.key_rate,
        Err(keyrate::Error::BoundInapplicable(_)) => 0.0,
        Err(other) => panic!("unexpected error: {other}"),
    };

    let ch_far = profile_channel(0.1);
    let sq_large = optimize_design(&squash, &ch_far, 1_000_000_000_000_000, &sec).unwrap();
    let tc_large = optimize_design(&two_click, &ch_far, 1_000_000_000_000_000, &sec).unwrap();
    let rel = (sq_large.key_rate - tc_large.key_rate).abs() / sq_large.key_rate;

    // Supporting check on the optimal pair parameter: around 0.05 at small
    // runs, around 0.1 in the asymptotic regime.
    let y_small = match sq_small.design {
        DesignVars::Eb { y, .. } => y,
        _ => unreachable!(),
    };
    let y_large = match sq_large.design {
        DesignVars::Eb { y, .. } => y,
        _ => unreachable!(),
    };
    let y_ok = (0.02..=0.12).contains(&y_small) && (0.05..=0.2).contains(&y_large);

    let ok = sq_small.key_rate > 0.0 && tc_small <= sq_small.key_rate && rel <= 0.05 && y_ok;
    let detail = format!(
        "K_squash(1e5, t=1)={:.3e} (y={y_small:.3}), K_2click={:.3e}; at 1e15: squash={:.4e} \
         2click={:.4e} rel diff={:.2}% (y={y_large:.3})",
        sq_small.key_rate,
        tc_small,
        sq_large.key_rate,
        tc_large.key_rate,
        rel * 100.0
    );
    report("5 (entanglement threshold)", ok, &detail);
    assert!(ok, "{detail}");
}

/// Criterion 6: at N = 1e15 each variant recovers its analytic asymptotic
/// rate (unit key-basis probability, no fluctuation or finite-size terms)
/// within 5 %. Operating points: t = 1 for no-decoy (the only regime where
/// it is alive, see criterion 2), t = 0.1 for the others.
#[test]
fn criterion_6_asymptotic_recovery() {
    let sec = profile_security();
    let n = 1_000_000_000_000_000u64;
    let mut ok = true;
    let mut detail = String::new();

    let cases: [(Variant, f64, fn(f64) -> (f64, f64)); 4] = [
        (Variant::NoDecoy, 1.0, |t| asymptotic_no_decoy(t)),
        (Variant::DecoyThree, 0.1, |t| asymptotic_decoy(t, 0.65)),
        (Variant::EbSquashing, 0.1, |t| asymptotic_eb_squashing(t)),
        (Variant::EbDoubleClick, 0.1, |t| {
            asymptotic_eb_double_click(t)
        }),
    ];
    for (variant, t, oracle) in cases {
        let space = DesignSpace::defaults(variant);
        let rep = optimize_design(&space, &profile_channel(t), n, &sec).unwrap();
        let (k_asym, _) = oracle(t);
        let rel = (k_asym - rep.key_rate) / k_asym;
        let fits = rep.key_rate <= k_asym * (1.0 + 1e-9) && rel.abs() <= 0.05;
        detail.push_str(&format!(
            "{variant}@t={t}: finite={:.4e} asymptotic={:.4e} gap={:.2}% {}; ",
            rep.key_rate,
            k_asym,
            rel * 100.0,
            if fits { "ok" } else { "OUT" }
        ));
        ok &= fits;
    }
    report("6 (asymptotic recovery)", ok, &detail);
    assert!(ok, "{detail}");
}

/// Criterion 7: the fast property checks, bundled and timed. The full
/// generative suites live in the properties test target; this confirms the
/// named invariants directly and must finish within 30 seconds.
#[test]
fn criterion_7_property_suite() {
    let start = Instant::now();

    // Fluctuation and finite-size monotonicity.
    for d in [2u32, 3] {
        for eps in [1e-9, 1e-5, 0.1] {
            let mut prev = f64::INFINITY;
            for exp in 1..=15u32 {
                let xi = fluctuation_bound(10u64.pow(exp), d, eps).unwrap();
                assert!(xi < prev);
                prev = xi;
            }
        }
    }
    let mut prev = f64::INFINITY;
    for exp in 1..=15u32 {
        let delta = delta_correction(10u64.pow(exp), 1e-6, 1e-6).unwrap();
        assert!(delta < prev);
        prev = delta;
    }

    // Clamp range.
    for lambda in [0.0, 0.3, 1.0] {
        for xi in [0.0, 0.5, 2.0, f64::INFINITY] {
            let u = clamp_upper(lambda, xi).unwrap();
            let l = clamp_lower(lambda, xi).unwrap();
            assert!((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&l));
        }
    }

    // Budget identity to 1e-15 on an optimizer-produced split.
    let (budget, _) = optimize_epsilons(1e-5, 1e-10, 3, |b| -(1.0 / b.eps_bar).ln()).unwrap();
    let sum = budget.eps_ec + budget.eps_bar + 3.0 * budget.eps_pe + budget.eps_pa;
    assert!((sum - budget.eps_total).abs() <= 1e-15);

    // Error-convention round trip to 1e-12.
    let counts = keyrate::finite_key::SiftedCounts::new(1_000_000, 0.9).unwrap();
    let a = keyrate::entanglement::EbObservables::from_raw(counts, 0.011, 0.0108, 0.031, 0.029)
        .unwrap();
    let b =
        keyrate::entanglement::EbObservables::from_squashed(counts, 0.011, 0.0108, a.e_x, a.e_z)
            .unwrap();
    assert!((b.eprime_x - 0.031).abs() <= 1e-12 && (b.eprime_z - 0.029).abs() <= 1e-12);

    // Asymptotic consistency of a finite estimator at synthetic counts 1e18:
    // the estimate equals its asymptotic counterpart minus exactly its
    // fluctuation offset. The offset itself cannot go below ~6.5e-9 at
    // these counts for any failure probability, so the convergence check is
    // phrased against the offset rather than an absolute 1e-9.
    let detected = 1_000_000_000_000_000_000u64;
    let counts = keyrate::finite_key::SiftedCounts::new(detected, 0.7).unwrap();
    let obs = WcpObservables::new(counts, 0.9, 0.01, 0.01, 0.1).unwrap();
    let xi_n = fluctuation_bound(detected, 2, 2.5e-6).unwrap();
    let y1 = y1_lower(&obs, 2.5e-6).unwrap();
    let y1_tilde = 1.0 - multi_photon_fraction(0.1).unwrap() / 0.9;
    assert!((y1 - (y1_tilde - xi_n / 0.9)).abs() <= 1e-9);
    assert!((y1 - y1_tilde).abs() <= xi_n / 0.9 + 1e-9);

    // Determinism: bit-identical repeated optimization.
    let sec = profile_security();
    let space = DesignSpace::defaults(Variant::EbSquashing);
    let r1 = optimize_design(&space, &profile_channel(0.5), 1_000_000, &sec).unwrap();
    let r2 = optimize_design(&space, &profile_channel(0.5), 1_000_000, &sec).unwrap();
    assert_eq!(r1.key_rate.to_bits(), r2.key_rate.to_bits());
    assert_eq!(r1.design, r2.design);

    let elapsed = start.elapsed();
    let ok = elapsed.as_secs() < 30;
    report(
        "7 (property suite)",
        ok,
        &format!("all invariants hold; runtime {elapsed:.2?}"),
    );
    assert!(ok);
}

/// Criterion 8: honest-channel Monte-Carlo coverage of the decoy
/// estimators. Over 1000 simulated runs with ~5e5 detections per intensity,
/// the lower bounds must sit below and the error bound above the realized
/// values in all but a fraction of runs consistent with eps_pe (one-sided
/// binomial test at 99 % confidence against 3 x eps_pe), within 5 minutes.
#[test]
fn criterion_8_honest_channel_coverage() {
    let start = Instant::now();
    // Short link: at lower transmission the single-photon yield bounds are
    // identically zero at desk-scale counts (the deviation exceeds the whole
    // single-photon term), which would make coverage vacuous.
    let t = 1.0;
    let eps_pe = 1e-2;
    let trials = 1000u64;
    let ints = DecoyIntensities::new(0.5, 0.65, 0.1, 0.6, 0.3).unwrap();
    let p_x = 0.1;

    // Sent-pulse budgets chosen so each intensity collects ~5e5 detections.
    let sent_key = 10_250_000u64;
    let sent_decoy = 7_950_000u64;
    let sent_vacuum = 25_000_000_000u64;

    let mut rng = ChaCha8Rng::seed_from_u64(20090211);
    let mut failures = 0u64;
    let mut f1_max = f64::NEG_INFINITY;
    let mut f0_sum = 0.0f64;
    let true_f1 = 1.0 - (1.0 - 2.0 * P_D) * (1.0 - t * ETA);

    for _ in 0..trials {
        let vac = simulate_intensity(&mut rng, 0.0, t, sent_vacuum, 1.0);
        let key = simulate_intensity(&mut rng, 0.5, t, sent_key, p_x * p_x);
        let dec = simulate_intensity(&mut rng, 0.65, t, sent_decoy, p_x);
        f0_sum += vac.rate();

        let build = |s: &SimulatedIntensity| keyrate::decoy::IntensityObservables {
            detected: s.detected,
            sent: s.sent,
            rate: s.rate(),
            error_x: s.error_x(),
            sample_x: s.sample_x,
        };
        let obs = DecoyObservables::new(
            build(&vac),
            build(&key),
            build(&dec),
            key.error_x(),
            1.0 - p_x,
        )
        .unwrap();

        let f1 = keyrate::decoy::f1_estimate(&obs, &ints).unwrap();
        f1_max = f1_max.max(f1);
        let y0_l =
            keyrate::decoy::y0_lower(keyrate::decoy::Intensity::Key, &obs, &ints, eps_pe).unwrap();
        let y1_l =
            keyrate::decoy::y1_lower(keyrate::decoy::Intensity::Key, &obs, &ints, f1, eps_pe)
                .unwrap();
        let y0_pair = (
            y0_l,
            keyrate::decoy::y0_lower(keyrate::decoy::Intensity::Decoy, &obs, &ints, eps_pe)
                .unwrap(),
        );
        let y1_pair = (
            y1_l,
            keyrate::decoy::y1_lower(keyrate::decoy::Intensity::Decoy, &obs, &ints, f1, eps_pe)
                .unwrap(),
        );
        let e1_u = keyrate::decoy::ex1_upper_decoy(&obs, y0_pair, y1_pair, eps_pe).unwrap();

        // Realized per-trial truths at the key intensity.
        let y0_real = key.detected_by_class[0] as f64 / key.detected as f64;
        let y1_real = key.detected_by_class[1] as f64 / key.detected as f64;
        let single_samples = key.sample_x_single + dec.sample_x_single;
        let single_errors = key.errors_x_single + dec.errors_x_single;
        let e1_real = if single_samples == 0 {
            0.0
        } else {
            single_errors as f64 / single_samples as f64
        };

        if y0_l > y0_real || y1_l > y1_real || (single_samples > 0 && e1_u < e1_real) {
            failures += 1;
        }
    }

    let critical = binomial_critical_count(trials, 3.0 * eps_pe, 0.01);
    let elapsed = start.elapsed();
    // The dark-count read-off has no bias: its mean over trials must sit on
    // 2 p_d to well within the sampling noise.
    let f0_mean = f0_sum / trials as f64;
    let f0_ok = (f0_mean / (2.0 * P_D) - 1.0).abs() < 0.02;
    let ok = failures < critical && f1_max <= true_f1 && f0_ok && elapsed.as_secs() < 300;
    report(
        "8 (honest-channel coverage)",
        ok,
        &format!(
            "failures {failures}/{trials} (binomial crit {critical}), max f1 estimate \
             {f1_max:.5} vs true {true_f1:.5}, mean f0 {f0_mean:.3e} vs 2p_d {:.3e}, \
             runtime {elapsed:.2?}",
            2.0 * P_D
        ),
    );
    assert!(
        ok,
        "failures {failures} critical {critical} f1_max {f1_max} true {true_f1} f0 {f0_mean}"
    );
}

/// Criterion 9: solver optimum within 1 % of an exhaustive fine grid over
/// (mu, p_x, epsilon split) for the no-decoy problem. The stated point
/// (N = 1e9, t = 0.1) sits in the zero-rate region, where both approaches
/// agree on zero; a live point at t = 10^-0.5 makes the comparison
/// informative. Reported optima must re-evaluate to their reported rate.
#[test]
fn criterion_9_optimizer_soundness() {
    let sec = profile_security();
    let mut ok = true;
    let mut detail = String::new();

    for t in [0.1, 10f64.powf(-0.5)] {
        let ch = profile_channel(t);
        let report_opt = optimize_design(
            &DesignSpace::defaults(Variant::NoDecoy),
            &ch,
            1_000_000_000,
            &sec,
        )
        .unwrap();

        // Exhaustive grid: 80 x 80 log points over the design box, and at
        // each point the full 21^3 normalized log-grid over the epsilon
        // split.
        let eps_axis: Vec<f64> = (0..21)
            .map(|i| {
                let lo = (1e-3f64).ln();
                (lo + (0.0 - lo) * i as f64 / 20.0).exp()
            })
            .collect();
        let aux = sec.eps_total - sec.eps_ec;
        let ec = sec.ec_model();
        let mut grid_best = 0.0f64;
        for i in 0..80 {
            let mu = 1e-4 * (1.0f64 / 1e-4).powf(i as f64 / 79.0);
            for j in 0..80 {
                let p_x = 1e-4 * (0.5f64 / 1e-4).powf(j as f64 / 79.0);
                let obs = match WcpObservables::expected(mu, &ch, 1_000_000_000, 1.0 - p_x) {
                    Ok(o) => o,
                    Err(_) => continue,
                };
                for v1 in &eps_axis {
                    for v2 in &eps_axis {
                        for v3 in &eps_axis {
                            let scale = aux / (v1 + 2.0 * v2 + v3);
                            let eps_bar = scale * v1;
                            let eps_pe = scale * v2;
                            let eps_pa = scale * v3;
                            let floor = 1e-3 * aux;
                            if eps_bar < floor || eps_pe < floor || eps_pa < floor {
                                continue;
                            }
                            let budget = match SecurityBudget::from_split(
                                sec.eps_total,
                                sec.eps_ec,
                                2,
                                eps_bar,
                                eps_pe,
                            ) {
                                Ok(b) => b,
                                Err(_) => continue,
                            };
                            if let Ok(res) = keyrate::wcp::key_rate_no_decoy(&obs, &budget, &ec) {
                                grid_best = grid_best.max(res.key_rate);
                            }
                        }
                    }
                }
            }
        }

        let diff = (report_opt.key_rate - grid_best).abs();
        let within = diff <= 0.01 * grid_best.max(report_opt.key_rate).max(f64::MIN_POSITIVE);

        // Reproducibility of the reported optimum.
        let again = evaluate_design(
            Variant::NoDecoy,
            &report_opt.design,
            &ch,
            1_000_000_000,
            &report_opt.budget,
            &sec.ec_model(),
        )
        .unwrap();
        let reproducible = (again.key_rate - report_opt.key_rate).abs() <= 1e-12;

        // Nested epsilon optimization agrees with its own exhaustive grid at
        // the reported design point, within 0.5 %.
        let eps_agree = {
            let (_, nested) = optimize_epsilons(sec.eps_total, sec.eps_ec, 2, |b| {
                evaluate_design(
                    Variant::NoDecoy,
                    &report_opt.design,
                    &ch,
                    1_000_000_000,
                    b,
                    &ec,
                )
                .map(|r| r.key_rate)
                .unwrap_or(0.0)
            })
            .unwrap();
            let mut grid_eps_best = 0.0f64;
            if let Ok(obs) = match report_opt.design {
                DesignVars::NoDecoy { mu, p_x } => {
                    WcpObservables::expected(mu, &ch, 1_000_000_000, 1.0 - p_x)
                }
                _ => unreachable!(),
            } {
                for v1 in &eps_axis {
                    for v2 in &eps_axis {
                        for v3 in &eps_axis {
                            let scale = aux / (v1 + 2.0 * v2 + v3);
                            let floor = 1e-3 * aux;
                            let (b1, b2, b3) = (scale * v1, scale * v2, scale * v3);
                            if b1 < floor || b2 < floor || b3 < floor {
                                continue;
                            }
                            if let Ok(budget) =
                                SecurityBudget::from_split(sec.eps_total, sec.eps_ec, 2, b1, b2)
                            {
                                if let Ok(res) = keyrate::wcp::key_rate_no_decoy(&obs, &budget, &ec)
                                {
                                    grid_eps_best = grid_eps_best.max(res.key_rate);
                                }
                            }
                        }
                    }
                }
            }
            (nested - grid_eps_best).abs()
                <= 0.005 * grid_eps_best.max(nested).max(f64::MIN_POSITIVE)
        };

        detail.push_str(&format!(
            "t={t:.4}: solver={:.4e} grid={:.4e} within1%={within} reproducible={reproducible} \
             eps-grid-agree={eps_agree}; ",
            report_opt.key_rate, grid_best
        ));
        ok &= within && reproducible && eps_agree;
    }

    report("9 (optimizer soundness)", ok, &detail);
    assert!(ok, "{detail}");
}
