//! The four subcommands: a-priori design, measured-data rate, transmittivity
//! sweep and budget inspection.

use std::path::Path;

use keyrate::channel::ChannelParams;
use keyrate::decoy::{key_rate_decoy, DecoyIntensities, DecoyObservables, IntensityObservables};
use keyrate::entanglement::{key_rate_double_click, key_rate_squashing, EbObservables};
use keyrate::finite_key::{ErrorCorrectionModel, SecurityBudget, SiftedCounts};
use keyrate::optimize::{
    optimize_design, optimize_epsilons, sweep_transmittivity, DesignVars, OptimizationReport,
};
use keyrate::rate::RateResult;
use keyrate::wcp::{key_rate_no_decoy, WcpObservables};
use keyrate::Variant;

use crate::config::{to_count, ObservablesBlock, RunConfig};
use crate::output::{
    read_record, write_record, write_sweep, DesignRecord, PredictedObservables, RECORD_SCHEMA,
};
use crate::CliError;

pub fn map_core(err: keyrate::Error) -> CliError {
    match err {
        keyrate::Error::InfeasibleConfig(_) => CliError::Infeasible(err.to_string()),
        keyrate::Error::BoundInapplicable(_) => CliError::Inapplicable(format!(
            "{err}; fall back to the eb-squash variant for these data"
        )),
        _ => CliError::Config(err.to_string()),
    }
}

/// Expected observables at a design point, in the exact shape the bound
/// consumes in measured-data mode.
fn predicted_observables(
    variant: Variant,
    vars: &DesignVars,
    ch: &ChannelParams,
    n_detected: u64,
) -> Result<PredictedObservables, CliError> {
    match (variant, *vars) {
        (Variant::NoDecoy, DesignVars::NoDecoy { mu, p_x }) => {
            let observables =
                WcpObservables::expected(mu, ch, n_detected, 1.0 - p_x).map_err(map_core)?;
            Ok(PredictedObservables::NoDecoy { observables })
        }
        (
            Variant::DecoyThree,
            DesignVars::Decoy {
                mu_i,
                mu_ii,
                q_empty,
                q_ii,
                p_x,
            },
        ) => {
            let intensities =
                DecoyIntensities::new(mu_i, mu_ii, q_empty, 1.0 - q_empty - q_ii, q_ii)
                    .map_err(map_core)?;
            let observables = DecoyObservables::expected(&intensities, ch, n_detected, 1.0 - p_x)
                .map_err(map_core)?;
            Ok(PredictedObservables::Decoy {
                observables,
                intensities,
            })
        }
        (Variant::EbSquashing | Variant::EbDoubleClick, DesignVars::Eb { y, p_x }) => {
            let src = keyrate::channel::EbSourceParams::new(y, *ch).map_err(map_core)?;
            let observables =
                EbObservables::expected(&src, n_detected, 1.0 - p_x).map_err(map_core)?;
            Ok(PredictedObservables::Eb { observables })
        }
        _ => Err(CliError::Config(
            "design variables do not match the variant".into(),
        )),
    }
}

fn run_bound(
    variant: Variant,
    pred: &PredictedObservables,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> keyrate::Result<RateResult> {
    match (variant, pred) {
        (Variant::NoDecoy, PredictedObservables::NoDecoy { observables }) => {
            key_rate_no_decoy(observables, budget, ec)
        }
        (
            Variant::DecoyThree,
            PredictedObservables::Decoy {
                observables,
                intensities,
            },
        ) => key_rate_decoy(observables, intensities, budget, ec),
        (Variant::EbSquashing, PredictedObservables::Eb { observables }) => {
            key_rate_squashing(observables, budget, ec)
        }
        (Variant::EbDoubleClick, PredictedObservables::Eb { observables }) => {
            key_rate_double_click(observables, budget, ec)
        }
        _ => Err(keyrate::Error::InfeasibleConfig(
            "observables do not match the variant".into(),
        )),
    }
}

/// Unclamped optimization objective for the epsilon split: prefactor times
/// bracket, negative when no key exists, so the split search keeps its
/// gradient on the zero plateau of the clamped rate.
fn unclamped_objective(
    variant: Variant,
    pred: &PredictedObservables,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> f64 {
    let prefactor = match pred {
        PredictedObservables::NoDecoy { observables } => {
            observables.rate * observables.counts.p_z * observables.counts.p_z
        }
        PredictedObservables::Decoy {
            observables,
            intensities,
        } => intensities.q_i * observables.key.rate * observables.p_z * observables.p_z,
        PredictedObservables::Eb { observables } => {
            let rate = if variant == Variant::EbDoubleClick {
                observables.rate_single
            } else {
                observables.rate
            };
            rate * observables.counts.p_z * observables.counts.p_z
        }
    };
    match run_bound(variant, pred, budget, ec) {
        Ok(res) => prefactor * res.bracket,
        Err(_) => -1e6,
    }
}

fn total_detected(pred: &PredictedObservables) -> u64 {
    match pred {
        PredictedObservables::NoDecoy { observables } => observables.counts.detected,
        PredictedObservables::Decoy { observables, .. } => observables.detected_total(),
        PredictedObservables::Eb { observables } => observables.counts.detected,
    }
}

fn print_budget(budget: &SecurityBudget) {
    let sum = budget.eps_ec + budget.eps_bar + budget.n_pe as f64 * budget.eps_pe + budget.eps_pa;
    println!(
        "  epsilon split: eps_bar={:e} eps_PE={:e} (x{}) eps_PA={:e}",
        budget.eps_bar, budget.eps_pe, budget.n_pe, budget.eps_pa
    );
    println!(
        "  budget check:  eps_EC + eps_bar + n_PE*eps_PE + eps_PA = {:e} (target {:e}, residual {:e})",
        sum,
        budget.eps_total,
        sum - budget.eps_total
    );
}

fn print_design_vars(vars: &DesignVars) {
    match *vars {
        DesignVars::NoDecoy { mu, p_x } => println!("  design: mu={mu} p_X={p_x}"),
        DesignVars::Decoy {
            mu_i,
            mu_ii,
            q_empty,
            q_ii,
            p_x,
        } => println!(
            "  design: mu_I={mu_i} mu_II={mu_ii} q_empty={q_empty} q_II={q_ii} \
             q_I={} p_X={p_x}",
            1.0 - q_empty - q_ii
        ),
        DesignVars::Eb { y, p_x } => println!("  design: y={y} p_X={p_x}"),
    }
}

fn print_predicted(pred: &PredictedObservables) {
    match pred {
        PredictedObservables::NoDecoy { observables: o } => {
            println!(
                "  predicted observables: R={:e} e_X={:e} e_Z={:e}",
                o.rate, o.e_x, o.e_z
            );
        }
        PredictedObservables::Decoy { observables: o, .. } => {
            for (label, io) in [("vacuum", &o.vacuum), ("mu_I", &o.key), ("mu_II", &o.decoy)] {
                println!(
                    "  predicted {label}: sent={} detected={} R={:e} e_X={:e} m={}",
                    io.sent, io.detected, io.rate, io.error_x, io.sample_x
                );
            }
            println!("  predicted e_Z(mu_I)={:e}", o.e_z_key);
        }
        PredictedObservables::Eb { observables: o } => {
            println!(
                "  predicted observables: R={:e} R'={:e} e_X={:e} e_Z={:e} e'_X={:e} e'_Z={:e}",
                o.rate, o.rate_single, o.e_x, o.e_z, o.eprime_x, o.eprime_z
            );
        }
    }
}

fn print_rate_result(res: &RateResult, n_detected: u64) {
    println!("  secret fraction r: {:e}", res.secret_fraction);
    println!("  key rate K:        {:e} per sent signal", res.key_rate);
    println!(
        "  key length ell:    {} (from {} detected signals)",
        res.key_length, n_detected
    );
    if res.flags.no_key {
        println!("  no extractable key at this point (a valid outcome, not an error)");
    }
    let flags = res.flags.to_string();
    if !flags.is_empty() {
        println!("  flags: {flags}");
    }
}

pub fn cmd_design(config: &RunConfig, record_path: Option<&Path>) -> Result<(), CliError> {
    config.expect_model_mode()?;
    let sec = config.security_spec()?;
    let ch = config.channel_params()?;
    let space = config.design_space()?;
    let n_detected = config.n_detected()?;
    let variant: Variant = config.variant.into();

    let report: OptimizationReport =
        optimize_design(&space, &ch, n_detected, &sec).map_err(map_core)?;
    let pred = predicted_observables(variant, &report.design, &ch, n_detected)?;

    println!("design: {variant}");
    println!(
        "  channel: t={} eta={} p_d={:e} Q={}",
        ch.t, ch.eta, ch.p_d, ch.q_optical
    );
    println!("  detected signals: {n_detected}");
    print_design_vars(&report.design);
    print_budget(&report.budget);
    print_predicted(&pred);
    print_rate_result(&report.result, n_detected);
    println!(
        "  optimizer: {} evaluations, converged={}, flat_zero={}",
        report.evaluations, report.converged, report.flat_zero
    );

    let record = DesignRecord {
        schema: RECORD_SCHEMA.into(),
        variant,
        security: sec,
        channel: ch,
        n_detected,
        design: report.design,
        budget: report.budget,
        predicted: pred,
        secret_fraction: report.result.secret_fraction,
        key_rate: report.result.key_rate,
        key_length: report.result.key_length,
    };
    let record_out = record_path.map(|p| p.to_path_buf()).or_else(|| {
        config
            .output
            .as_ref()
            .and_then(|o| o.record.clone().map(Into::into))
    });
    if let Some(path) = record_out {
        write_record(&path, &record)?;
        println!("  record written to {}", path.display());
    }
    Ok(())
}

/// Builds the measured observables from the config block, in the exact
/// structures the bounds consume.
fn measured_observables(
    variant: Variant,
    block: &ObservablesBlock,
) -> Result<PredictedObservables, CliError> {
    let missing = |name: &str| CliError::Config(format!("observables.{name}: missing"));
    let p_x = block.p_x;
    if !(p_x > 0.0 && p_x < 1.0) {
        return Err(CliError::Config(format!(
            "observables.p_x: must be strictly inside (0, 1), got {p_x}"
        )));
    }
    match variant {
        Variant::NoDecoy => {
            let n = to_count(
                "observables.n_detected",
                block.n_detected.ok_or_else(|| missing("n_detected"))?,
            )?;
            let counts = SiftedCounts::new(n, 1.0 - p_x).map_err(map_core)?;
            let observables = WcpObservables::new(
                counts,
                block.rate.ok_or_else(|| missing("rate"))?,
                block.e_x.ok_or_else(|| missing("e_x"))?,
                block.e_z.ok_or_else(|| missing("e_z"))?,
                block.mu.ok_or_else(|| missing("mu"))?,
            )
            .map_err(map_core)?;
            Ok(PredictedObservables::NoDecoy { observables })
        }
        Variant::DecoyThree => {
            let mu_i = block.mu_i.ok_or_else(|| missing("mu_i"))?;
            let mu_ii = block.mu_ii.ok_or_else(|| missing("mu_ii"))?;
            let q_empty = block.q_empty.ok_or_else(|| missing("q_empty"))?;
            let q_ii = block.q_ii.ok_or_else(|| missing("q_ii"))?;
            let intensities =
                DecoyIntensities::new(mu_i, mu_ii, q_empty, 1.0 - q_empty - q_ii, q_ii)
                    .map_err(map_core)?;
            let build = |name: &str,
                         io: &Option<crate::config::IntensityBlock>,
                         default_sample: fn(u64, f64) -> u64|
             -> Result<IntensityObservables, CliError> {
                let io = io
                    .as_ref()
                    .ok_or_else(|| CliError::Config(format!("observables.{name}: missing")))?;
                let sent = to_count(&format!("observables.{name}.sent"), io.sent)?;
                let detected = to_count(&format!("observables.{name}.detected"), io.detected)
                    .or_else(|_| {
                        if io.detected == 0.0 {
                            Ok(0)
                        } else {
                            Err(CliError::Config(format!(
                                "observables.{name}.detected: bad count {}",
                                io.detected
                            )))
                        }
                    })?;
                let rate = io.rate.unwrap_or(detected as f64 / sent as f64);
                let sample_x = match io.sample_x {
                    Some(m) => to_count(&format!("observables.{name}.sample_x"), m)?,
                    None => default_sample(detected, p_x),
                };
                Ok(IntensityObservables {
                    detected,
                    sent,
                    rate,
                    error_x: io.e_x,
                    sample_x,
                })
            };
            let vacuum = build("vacuum", &block.vacuum, |d, _| d)?;
            let key = build("intensity_i", &block.intensity_i, |d, px| {
                (d as f64 * px * px).round() as u64
            })?;
            let decoy = build("intensity_ii", &block.intensity_ii, |d, px| {
                (d as f64 * px).round() as u64
            })?;
            let observables = DecoyObservables::new(
                vacuum,
                key,
                decoy,
                block.e_z_key.ok_or_else(|| missing("e_z_key"))?,
                1.0 - p_x,
            )
            .map_err(map_core)?;
            Ok(PredictedObservables::Decoy {
                observables,
                intensities,
            })
        }
        Variant::EbSquashing | Variant::EbDoubleClick => {
            let n = to_count(
                "observables.n_detected",
                block.n_detected.ok_or_else(|| missing("n_detected"))?,
            )?;
            let counts = SiftedCounts::new(n, 1.0 - p_x).map_err(map_core)?;
            let rate = block.rate.ok_or_else(|| missing("rate"))?;
            let rate_single = block.rate_single.ok_or_else(|| missing("rate_single"))?;
            let observables = match (block.e_x, block.e_z, block.eprime_x, block.eprime_z) {
                (Some(ex), Some(ez), None, None) => {
                    EbObservables::from_squashed(counts, rate, rate_single, ex, ez)
                }
                (None, None, Some(epx), Some(epz)) => {
                    EbObservables::from_raw(counts, rate, rate_single, epx, epz)
                }
                (Some(ex), Some(ez), Some(epx), Some(epz)) => {
                    EbObservables::new_full(counts, rate, rate_single, ex, ez, epx, epz)
                }
                _ => {
                    return Err(CliError::Config(
                        "observables: provide the (e_x, e_z) pair, the (eprime_x, eprime_z) \
                         pair, or all four"
                            .into(),
                    ))
                }
            }
            .map_err(map_core)?;
            Ok(PredictedObservables::Eb { observables })
        }
    }
}

/// Relative differences between measured and predicted scalar observables.
fn compare_with_record(measured: &PredictedObservables, record: &DesignRecord) {
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    match (measured, &record.predicted) {
        (
            PredictedObservables::NoDecoy { observables: m },
            PredictedObservables::NoDecoy { observables: p },
        ) => {
            rows.push(("R".into(), m.rate, p.rate));
            rows.push(("e_X".into(), m.e_x, p.e_x));
            rows.push(("e_Z".into(), m.e_z, p.e_z));
        }
        (
            PredictedObservables::Decoy { observables: m, .. },
            PredictedObservables::Decoy { observables: p, .. },
        ) => {
            for (label, mi, pi) in [
                ("vacuum", &m.vacuum, &p.vacuum),
                ("mu_I", &m.key, &p.key),
                ("mu_II", &m.decoy, &p.decoy),
            ] {
                rows.push((format!("R({label})"), mi.rate, pi.rate));
                rows.push((format!("e_X({label})"), mi.error_x, pi.error_x));
            }
            rows.push(("e_Z(mu_I)".into(), m.e_z_key, p.e_z_key));
        }
        (
            PredictedObservables::Eb { observables: m },
            PredictedObservables::Eb { observables: p },
        ) => {
            rows.push(("R".into(), m.rate, p.rate));
            rows.push(("R'".into(), m.rate_single, p.rate_single));
            rows.push(("e_X".into(), m.e_x, p.e_x));
            rows.push(("e_Z".into(), m.e_z, p.e_z));
        }
        _ => {
            println!("  record comparison skipped: record is for a different variant");
            return;
        }
    }
    println!("  comparison against the design record:");
    for (name, measured, predicted) in rows {
        let scale = predicted.abs().max(1e-300);
        let rel = (measured - predicted) / scale;
        let marker = if rel.abs() > 0.10 { "  DIFFERS" } else { "" };
        println!(
            "    {name}: measured {measured:e} vs predicted {predicted:e} ({:+.2}%){marker}",
            rel * 100.0
        );
    }
}

pub fn cmd_rate(config: &RunConfig, record_path: Option<&Path>) -> Result<(), CliError> {
    let block = config.expect_measured_mode()?;
    let sec = config.security_spec()?;
    let variant: Variant = config.variant.into();
    let measured = measured_observables(variant, block)?;
    let ec = sec.ec_model();
    let n_pe = variant.n_pe();

    // Design values stay as used; only the epsilon split is re-optimized for
    // the measured data.
    let (budget, _) = optimize_epsilons(sec.eps_total, sec.eps_ec, n_pe, |b| {
        unclamped_objective(variant, &measured, b, &ec)
    })
    .map_err(map_core)?;
    let result = run_bound(variant, &measured, &budget, &ec).map_err(map_core)?;

    let n_detected = total_detected(&measured);
    println!("rate: {variant}");
    print_budget(&budget);
    print_rate_result(&result, n_detected);
    println!(
        "  privacy amplification: compress the corrected key to {} bits",
        result.key_length
    );

    if let Some(path) = record_path {
        let record = read_record(path)?;
        compare_with_record(&measured, &record);
    }
    Ok(())
}

pub fn cmd_sweep(
    config: &RunConfig,
    output_override: Option<&Path>,
    effective_config: &str,
) -> Result<(), CliError> {
    config.expect_model_mode()?;
    let sec = config.security_spec()?;
    let ch = config.channel_params()?;
    let space = config.design_space()?;
    let (n_list, t_grid) = config.sweep_grids()?;

    let output = output_override
        .map(|p| p.to_path_buf())
        .or_else(|| {
            config
                .output
                .as_ref()
                .and_then(|o| o.csv.clone().map(Into::into))
        })
        .ok_or_else(|| CliError::Config("output.csv: missing (or pass --output)".into()))?;

    let rows = sweep_transmittivity(&space, &ch, &n_list, &t_grid, &sec).map_err(map_core)?;
    let meta = write_sweep(&output, &rows, effective_config)?;
    println!(
        "sweep: {} rows ({} N values x {} t values) written to {}",
        rows.len(),
        n_list.len(),
        t_grid.len(),
        output.display()
    );
    println!("  metadata sidecar: {}", meta.display());
    let with_key = rows.iter().filter(|r| r.key_rate > 0.0).count();
    println!("  rows with a positive key rate: {with_key}/{}", rows.len());
    Ok(())
}

pub fn cmd_budget(config: &RunConfig) -> Result<(), CliError> {
    config.expect_model_mode()?;
    let sec = config.security_spec()?;
    let ch = config.channel_params()?;
    let space = config.design_space()?;
    let n_detected = config.n_detected()?;
    let variant: Variant = config.variant.into();

    let report = optimize_design(&space, &ch, n_detected, &sec).map_err(map_core)?;
    let pred = predicted_observables(variant, &report.design, &ch, n_detected)?;
    let ec = sec.ec_model();

    println!("budget: {variant} at the optimized design point");
    print_design_vars(&report.design);
    print_budget(&report.budget);
    println!("  key rate at this split: {:e}", report.key_rate);

    // Sensitivity: scale one component by a decade in each direction,
    // letting the total budget absorb the change, and report the rate.
    println!("  sensitivity (K when one component is scaled, others fixed):");
    println!("    component        x10            /10");
    let base = &report.budget;
    let rate_at = |eps_bar: f64, eps_pe: f64, eps_pa: f64| -> Option<f64> {
        let total = sec.eps_ec + eps_bar + base.n_pe as f64 * eps_pe + eps_pa;
        let budget =
            SecurityBudget::from_split(total, sec.eps_ec, base.n_pe, eps_bar, eps_pe).ok()?;
        run_bound(variant, &pred, &budget, &ec)
            .ok()
            .map(|r| r.key_rate)
    };
    for (name, up, down) in [
        (
            "eps_bar",
            rate_at(base.eps_bar * 10.0, base.eps_pe, base.eps_pa),
            rate_at(base.eps_bar / 10.0, base.eps_pe, base.eps_pa),
        ),
        (
            "eps_PE ",
            rate_at(base.eps_bar, base.eps_pe * 10.0, base.eps_pa),
            rate_at(base.eps_bar, base.eps_pe / 10.0, base.eps_pa),
        ),
        (
            "eps_PA ",
            rate_at(base.eps_bar, base.eps_pe, base.eps_pa * 10.0),
            rate_at(base.eps_bar, base.eps_pe, base.eps_pa / 10.0),
        ),
    ] {
        let fmt = |v: Option<f64>| {
            v.map(|k| format!("{k:.6e}"))
                .unwrap_or_else(|| "n/a".into())
        };
        println!("    {name}        {}    {}", fmt(up), fmt(down));
    }
    Ok(())
}
