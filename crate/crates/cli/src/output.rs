//! File outputs: the sweep CSV with its metadata sidecar, and the design
//! record used to compare a-priori predictions against measured data.

use std::io::Write;
use std::path::{Path, PathBuf};

use keyrate::channel::ChannelParams;
use keyrate::decoy::{DecoyIntensities, DecoyObservables};
use keyrate::entanglement::EbObservables;
use keyrate::finite_key::SecurityBudget;
use keyrate::optimize::{DesignVars, SecuritySpec, SweepRow};
use keyrate::wcp::WcpObservables;
use keyrate::Variant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Header of the sweep CSV; versioned through the metadata sidecar and kept
/// byte-stable within a tool version.
pub const CSV_HEADER: &str = "variant,N,t,K,pX,mu_or_y,muI,qEmpty,qII,eps_bar,eps_PE,eps_PA,flags";

fn fmt_exp(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_plain(v: f64) -> String {
    format!("{v}")
}

fn opt_plain(v: Option<f64>) -> String {
    v.map(fmt_plain).unwrap_or_default()
}

fn opt_exp(v: Option<f64>) -> String {
    v.map(fmt_exp).unwrap_or_default()
}

pub fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.variant.name(),
            row.n_detected,
            fmt_plain(row.t),
            fmt_exp(row.key_rate),
            opt_plain(row.p_x),
            opt_plain(row.mu_or_y),
            opt_plain(row.mu_i),
            opt_plain(row.q_empty),
            opt_plain(row.q_ii),
            opt_exp(row.eps_bar),
            opt_exp(row.eps_pe),
            opt_exp(row.eps_pa),
            row.flags,
        ));
    }
    out
}

#[derive(Serialize)]
struct SweepMetadata<'a> {
    tool: &'a str,
    version: &'a str,
    csv_schema: &'a str,
    config_sha256: String,
    generated_at: String,
    rows: usize,
}

/// Writes the CSV and a `<path>.meta.json` sidecar. The config hash covers
/// the effective configuration document only; the timestamp stays outside
/// the hash so repeated runs produce byte-identical CSVs and differ only in
/// the sidecar's clock field.
pub fn write_sweep(
    path: &Path,
    rows: &[SweepRow],
    effective_config: &str,
) -> Result<PathBuf, CliError> {
    let csv = render_csv(rows);
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(csv.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;

    let mut hasher = Sha256::new();
    hasher.update(effective_config.as_bytes());
    let digest = hasher.finalize();
    let meta = SweepMetadata {
        tool: "keyrate",
        version: env!("CARGO_PKG_VERSION"),
        csv_schema: "keyrate-sweep-v1",
        config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        generated_at: time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .unwrap_or_else(|_| "unknown".into()),
        rows: rows.len(),
    };
    let meta_path = PathBuf::from(format!("{}.meta.json", path.display()));
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )
    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", meta_path.display())))?;
    Ok(meta_path)
}

/// Predicted observables stored in a design record, exactly as the bound
/// will consume them in measured-data mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictedObservables {
    NoDecoy {
        observables: WcpObservables,
    },
    Decoy {
        observables: DecoyObservables,
        intensities: DecoyIntensities,
    },
    Eb {
        observables: EbObservables,
    },
}

/// Machine-readable outcome of a design run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignRecord {
    pub schema: String,
    pub variant: Variant,
    pub security: SecuritySpec,
    pub channel: ChannelParams,
    pub n_detected: u64,
    pub design: DesignVars,
    pub budget: SecurityBudget,
    pub predicted: PredictedObservables,
    pub secret_fraction: f64,
    pub key_rate: f64,
    pub key_length: u64,
}

pub const RECORD_SCHEMA: &str = "keyrate-design-record-v1";

pub fn write_record(path: &Path, record: &DesignRecord) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| CliError::Io(format!("cannot serialize record: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_record(path: &Path) -> Result<DesignRecord, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let record: DesignRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if record.schema != RECORD_SCHEMA {
        return Err(CliError::Config(format!(
            "{}: unknown record schema `{}`",
            path.display(),
            record.schema
        )));
    }
    Ok(record)
}
