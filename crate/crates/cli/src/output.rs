//! File emission: trajectory CSVs, run-summary JSON, and CSV reading for
//! rate fits. Floats are serialized with 17 significant digits so files
//! round-trip bit-faithfully, and every output embeds the resolved config
//! hash.

use std::fs;
use std::path::Path;

use dimix_core::engine::{RunConfig, TrajectoryRecord};
use serde_json::json;

use crate::CliError;

/// FNV-1a over the canonical JSON encoding of the resolved config.
pub fn config_hash(config: &RunConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configs are serializable");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// 17 significant digits; parses back to the identical f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_HEADER: &str =
    "t,net_variance,grad_norm_sq_at_mean,f_at_mean,max_row_norm_sq,alpha_t,beta_t";

pub fn trajectory_csv(record: &TrajectoryRecord, hash: &str) -> String {
    let mut out = String::with_capacity(record.rows.len() * 160 + 128);
    out.push_str(&format!("# config_hash={hash}\n{TRAJECTORY_HEADER}\n"));
    for row in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.t,
            format_f64(row.net_variance),
            format_f64(row.grad_norm_sq_at_mean),
            format_f64(row.f_at_mean),
            format_f64(row.max_row_norm_sq),
            format_f64(row.alpha),
            format_f64(row.beta),
        ));
    }
    out
}

pub fn run_summary_json(config: &RunConfig, record: &TrajectoryRecord, hash: &str) -> serde_json::Value {
    let last = record.final_row();
    json!({
        "config": config,
        "config_hash": hash,
        "schedule_descriptor": record.schedule_descriptor,
        "gamma_bound": record.gamma_bound,
        "smoothness": record.smoothness,
        "sigma_sq": record.sigma_sq,
        "realized_r": record.realized_r,
        "final": last,
        "diverged": record.divergence.is_some(),
        "divergence": record.divergence,
        "norm_cap_exceeded": record.norm_cap_exceeded,
        "max_row_norm_sq_observed": record.max_row_norm_sq_observed,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Read `(t, column)` pairs back from a trajectory CSV, skipping `#`
/// comment lines.
pub fn read_series_csv(path: &Path, column: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty csv", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let t_idx = cols.iter().position(|c| *c == "t").ok_or_else(|| {
        CliError::Validation(format!("{}: no `t` column", path.display()))
    })?;
    let v_idx = cols.iter().position(|c| *c == column).ok_or_else(|| {
        CliError::Validation(format!(
            "{}: no `{column}` column (have: {})",
            path.display(),
            cols.join(", ")
        ))
    })?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Validation(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                fields.len(),
                cols.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        };
        out.push((parse(fields[t_idx])?, parse(fields[v_idx])?));
    }
    Ok(out)
}
