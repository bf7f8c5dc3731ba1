//! Run configuration: a single TOML document with a versioned schema plus
//! dotted-path command-line overrides. Everything a run needs is in the
//! file, so a run is reproducible from the file alone; no environment
//! variables are consulted.

use std::path::Path;

use keyrate::channel::ChannelParams;
use keyrate::optimize::{DesignSpace, SecuritySpec, VarBounds};
use keyrate::Variant;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub variant: VariantName,
    pub security: SecurityBlock,
    pub channel: Option<ChannelBlock>,
    pub design: Option<DesignBlock>,
    pub observables: Option<ObservablesBlock>,
    pub sweep: Option<SweepBlock>,
    pub output: Option<OutputBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "no-decoy")]
    NoDecoy,
    #[serde(rename = "decoy-3")]
    DecoyThree,
    #[serde(rename = "eb-squash")]
    EbSquashing,
    #[serde(rename = "eb-2click")]
    EbDoubleClick,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Variant {
        match v {
            VariantName::NoDecoy => Variant::NoDecoy,
            VariantName::DecoyThree => Variant::DecoyThree,
            VariantName::EbSquashing => Variant::EbSquashing,
            VariantName::EbDoubleClick => Variant::EbDoubleClick,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityBlock {
    pub eps_total: f64,
    pub eps_ec: f64,
    pub f_ec: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    pub t: f64,
    pub eta: f64,
    pub p_d: f64,
    pub q_optical: Option<f64>,
    pub visibility: Option<f64>,
}

/// A design variable is either pinned to a value or searched in an interval.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum PinOrBounds {
    Pin(f64),
    Bounds([f64; 2]),
}

impl PinOrBounds {
    fn to_bounds(self, name: &str) -> Result<VarBounds, CliError> {
        match self {
            PinOrBounds::Pin(v) => Ok(VarBounds::fixed(v)),
            PinOrBounds::Bounds([lo, hi]) => {
                VarBounds::new(lo, hi).map_err(|e| CliError::Config(format!("design.{name}: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub n_detected: f64,
    pub mu: Option<PinOrBounds>,
    pub mu_i: Option<PinOrBounds>,
    pub mu_ii: Option<PinOrBounds>,
    pub q_empty: Option<PinOrBounds>,
    pub q_ii: Option<PinOrBounds>,
    pub y: Option<PinOrBounds>,
    pub p_x: Option<PinOrBounds>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub n_detected: Vec<f64>,
    /// Explicit transmittivity grid, or a generated one via `t_min`,
    /// `t_max`, `t_points` (log-spaced unless `t_scale = "linear"`).
    pub t_grid: Option<Vec<f64>>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub t_points: Option<u32>,
    pub t_scale: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub csv: Option<String>,
    pub record: Option<String>,
}

/// Measured-data block; which fields apply depends on the variant.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesBlock {
    pub n_detected: Option<f64>,
    pub p_x: f64,
    // no-decoy
    pub mu: Option<f64>,
    pub rate: Option<f64>,
    pub e_x: Option<f64>,
    pub e_z: Option<f64>,
    // decoy-3
    pub mu_i: Option<f64>,
    pub mu_ii: Option<f64>,
    pub q_empty: Option<f64>,
    pub q_ii: Option<f64>,
    pub e_z_key: Option<f64>,
    pub vacuum: Option<IntensityBlock>,
    #[serde(rename = "intensity_i")]
    pub intensity_i: Option<IntensityBlock>,
    #[serde(rename = "intensity_ii")]
    pub intensity_ii: Option<IntensityBlock>,
    // entanglement-based
    pub rate_single: Option<f64>,
    pub eprime_x: Option<f64>,
    pub eprime_z: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityBlock {
    pub sent: f64,
    pub detected: f64,
    pub rate: Option<f64>,
    pub e_x: f64,
    pub sample_x: Option<f64>,
}

/// Loads the TOML document, applies `--param key=value` overrides by dotted
/// path, and deserializes.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let config: RunConfig = value
        .clone()
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            config.schema_version
        )));
    }
    Ok(config)
}

/// Canonical serialization of the effective (post-override) document, used
/// for the config hash in sweep metadata.
pub fn effective_document(path: &Path, overrides: &[String]) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    toml::to_string(&value).map_err(|e| CliError::Config(format!("cannot re-serialize: {e}")))
}

fn apply_override(root: &mut toml::Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--param needs key=value, got `{item}`")))?;
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .map(|t| t["v"].clone())
        .or_else(|_| {
            format!("v = \"{raw}\"")
                .parse::<toml::Table>()
                .map(|t| t["v"].clone())
        })
        .map_err(|e| CliError::Config(format!("--param {path}: bad value `{raw}`: {e}")))?;

    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if i + 1 == segments.len() {
            let table = cursor
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("--param {path}: not a table")))?;
            table.insert(seg.to_string(), parsed);
            return Ok(());
        }
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--param {path}: not a table")))?;
        cursor = table
            .entry(seg.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    unreachable!()
}

impl RunConfig {
    pub fn security_spec(&self) -> Result<SecuritySpec, CliError> {
        SecuritySpec::new(
            self.security.eps_total,
            self.security.eps_ec,
            self.security.f_ec,
        )
        .map_err(|e| CliError::Config(format!("security: {e}")))
    }

    /// Channel block for the modes that predict observables from a model.
    pub fn channel_params(&self) -> Result<ChannelParams, CliError> {
        let ch = self.channel.as_ref().ok_or_else(|| {
            CliError::Config("channel: block is required for this command".into())
        })?;
        let q = match (ch.q_optical, ch.visibility) {
            (Some(q), None) => q,
            (None, Some(v)) => (1.0 - v) / 2.0,
            (Some(q), Some(v)) => {
                if (q - (1.0 - v) / 2.0).abs() > 1e-12 {
                    return Err(CliError::Config(
                        "channel.q_optical and channel.visibility are inconsistent".into(),
                    ));
                }
                q
            }
            (None, None) => {
                return Err(CliError::Config(
                    "channel.q_optical: missing (or provide channel.visibility)".into(),
                ))
            }
        };
        ChannelParams::new(ch.t, ch.eta, ch.p_d, q)
            .map_err(|e| CliError::Config(format!("channel: {e}")))
    }

    /// Search box for the design optimization: library defaults overlaid
    /// with any pins or bounds from the design block.
    pub fn design_space(&self) -> Result<DesignSpace, CliError> {
        let variant: Variant = self.variant.into();
        let mut space = DesignSpace::defaults(variant);
        if let Some(block) = &self.design {
            if let Some(v) = block.mu {
                space.mu = v.to_bounds("mu")?;
            }
            if let Some(v) = block.mu_i {
                space.mu_i = v.to_bounds("mu_i")?;
            }
            if let Some(v) = block.mu_ii {
                space.mu_ii = v.to_bounds("mu_ii")?;
            }
            if let Some(v) = block.q_empty {
                space.q_empty = v.to_bounds("q_empty")?;
            }
            if let Some(v) = block.q_ii {
                space.q_ii = v.to_bounds("q_ii")?;
            }
            if let Some(v) = block.y {
                space.y = v.to_bounds("y")?;
            }
            if let Some(v) = block.p_x {
                space.p_x = v.to_bounds("p_x")?;
            }
        }
        Ok(space)
    }

    pub fn design_block(&self) -> Result<&DesignBlock, CliError> {
        self.design
            .as_ref()
            .ok_or_else(|| CliError::Config("design: block is required for this command".into()))
    }

    pub fn n_detected(&self) -> Result<u64, CliError> {
        let block = self.design_block()?;
        to_count("design.n_detected", block.n_detected)
    }

    /// Enforces the per-command block contract: prediction-driven commands
    /// carry a channel block and no observables; the measured-data command
    /// carries observables and no channel.
    pub fn expect_model_mode(&self) -> Result<(), CliError> {
        if self.observables.is_some() {
            return Err(CliError::Config(
                "observables: block not allowed for this command (it uses the channel model)"
                    .into(),
            ));
        }
        if self.channel.is_none() {
            return Err(CliError::Config("channel: missing block".into()));
        }
        Ok(())
    }

    pub fn expect_measured_mode(&self) -> Result<&ObservablesBlock, CliError> {
        if self.channel.is_some() {
            return Err(CliError::Config(
                "channel: block not allowed for the rate command (it uses measured values)".into(),
            ));
        }
        self.observables
            .as_ref()
            .ok_or_else(|| CliError::Config("observables: missing block".into()))
    }

    pub fn sweep_grids(&self) -> Result<(Vec<u64>, Vec<f64>), CliError> {
        let block = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Config("sweep: missing block".into()))?;
        if block.n_detected.is_empty() {
            return Err(CliError::Config("sweep.n_detected: empty list".into()));
        }
        let mut ns = Vec::with_capacity(block.n_detected.len());
        for (i, &n) in block.n_detected.iter().enumerate() {
            ns.push(to_count(&format!("sweep.n_detected[{i}]"), n)?);
        }
        let ts = match (&block.t_grid, block.t_min, block.t_max, block.t_points) {
            (Some(grid), None, None, None) => {
                if grid.is_empty() {
                    return Err(CliError::Config("sweep.t_grid: empty list".into()));
                }
                grid.clone()
            }
            (None, Some(lo), Some(hi), Some(points)) => {
                if !(lo > 0.0 && hi >= lo && points >= 1) {
                    return Err(CliError::Config(
                        "sweep.t_min/t_max/t_points: need 0 < t_min <= t_max and points >= 1"
                            .into(),
                    ));
                }
                let linear = matches!(block.t_scale.as_deref(), Some("linear"));
                (0..points)
                    .map(|i| {
                        let f = if points == 1 {
                            0.0
                        } else {
                            i as f64 / (points - 1) as f64
                        };
                        if linear {
                            lo + (hi - lo) * f
                        } else {
                            lo * (hi / lo).powf(f)
                        }
                    })
                    .collect()
            }
            _ => {
                return Err(CliError::Config(
                    "sweep: provide either t_grid or the t_min/t_max/t_points triple".into(),
                ))
            }
        };
        Ok((ns, ts))
    }
}

pub fn to_count(name: &str, value: f64) -> Result<u64, CliError> {
    if !(value.is_finite() && (1.0..=1.8e19).contains(&value)) {
        return Err(CliError::Config(format!(
            "{name}: must be a count in [1, 1.8e19], got {value}"
        )));
    }
    Ok(value.round() as u64)
}
