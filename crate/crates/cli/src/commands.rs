//! Command implementations behind the CLI verbs.

use std::path::{Path, PathBuf};

use dimix_core::engine::{self, RunConfig, ScheduleSpec, TrajectoryRecord};
use dimix_core::metrics::{fit_rate, log_checkpoints, m_one_prefix, predicted_exponent};
use rayon::prelude::*;
use serde_json::json;

use crate::output::{config_hash, read_series_csv, run_summary_json, trajectory_csv, write_text};
use crate::presets::{expand, preset, Preset};
use crate::theory::run_theory_checks;
use crate::CliError;

/// Parse and validate a config document, echoing warnings to stderr.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Validation(format!("config parse: {e}")))?;
    config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    if let ScheduleSpec::Diminishing { alpha0, tau, .. } = config.schedule {
        if alpha0 >= 1.0 {
            eprintln!(
                "warning: alpha0 = {alpha0} lies outside (0, 1); \
                 large shifts (tau = {tau}) keep early steps small, proceeding"
            );
        }
    }
    Ok(config)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Execute one run and write `<stem>.csv` + `<stem>.summary.json` into
/// `out_dir`. Divergence still writes the partial outputs, then reports.
pub fn run_single(
    config: &RunConfig,
    out_dir: &Path,
    stem: &str,
) -> Result<(TrajectoryRecord, PathBuf), CliError> {
    let record = engine::run(config).map_err(|e| CliError::Validation(e.to_string()))?;
    let hash = config_hash(config);
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_text(&csv_path, &trajectory_csv(&record, &hash))?;
    let summary = run_summary_json(config, &record, &hash);
    write_text(
        &out_dir.join(format!("{stem}.summary.json")),
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("serializable")),
    )?;
    Ok((record, csv_path))
}

/// `run <config>` verb.
pub fn cmd_run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config = parse_config_file(config_path)?;
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let (record, csv_path) = run_single(&config, out_dir, &stem)?;
    println!("wrote {}", csv_path.display());
    if let Some(info) = record.divergence {
        return Err(CliError::Divergence(format!(
            "aborted at t = {} (agent {}, row norm^2 {:.3e})",
            info.t, info.agent, info.row_norm_sq
        )));
    }
    Ok(())
}

/// Multi-seed aggregate: mean gradient-norm series at checkpoints, the
/// running-mean measure derived from it, and an optional rate fit.
fn aggregate_json(
    p: &Preset,
    configs: &[RunConfig],
    records: &[TrajectoryRecord],
) -> serde_json::Value {
    let runs: Vec<serde_json::Value> = configs
        .iter()
        .zip(records)
        .map(|(c, rec)| {
            json!({
                "seed": c.seed,
                "config_hash": config_hash(c),
                "diverged": rec.divergence.is_some(),
                "final": rec.final_row(),
            })
        })
        .collect();

    let mut value = json!({
        "preset": p.name,
        "runs": runs,
        "seed_count": configs.len(),
    });

    // Rate section needs every run to carry a dense gradient-norm series of
    // the full horizon.
    let horizon = configs[0].horizon;
    let dense: Option<Vec<&Vec<f64>>> = records
        .iter()
        .map(|r| r.dense_grad_norm_sq.as_ref().filter(|v| v.len() == horizon as usize))
        .collect();
    if let Some(series_set) = dense {
        let mut mean = vec![0.0f64; horizon as usize];
        for series in &series_set {
            for (m, v) in mean.iter_mut().zip(series.iter()) {
                *m += v / series_set.len() as f64;
            }
        }
        let checkpoints = log_checkpoints(1, horizon, 20);
        let m1_points = m_one_prefix(&mean, &checkpoints);
        value["mean_grad_norm_sq"] = json!(checkpoints
            .iter()
            .map(|&t| json!({"t": t, "value": mean[(t - 1) as usize]}))
            .collect::<Vec<_>>());
        value["m1"] = json!(m1_points
            .iter()
            .map(|&(t, v)| json!({"t": t, "value": v}))
            .collect::<Vec<_>>());
        if let Some(window) = p.fit_window {
            if let Ok(fit) = fit_rate(&m1_points, window) {
                value["m1_fit"] = json!(fit);
            }
        }
        if let ScheduleSpec::Diminishing { nu, mu, .. } = configs[0].schedule {
            if let Ok((exponent, boundary)) = predicted_exponent(nu, mu) {
                value["predicted_exponent"] =
                    json!({"exponent": exponent, "boundary_log_factor": boundary});
            }
        }
    }
    value
}

pub struct PresetOutcome {
    pub records: Vec<TrajectoryRecord>,
    pub csv_paths: Vec<PathBuf>,
    pub aggregate_path: Option<PathBuf>,
}

/// `preset <name>` verb: expand, run (sweeps in parallel), write per-run
/// files and an aggregate for multi-seed presets.
pub fn cmd_preset(
    name: &str,
    base_seed: Option<u64>,
    out_dir: &Path,
    threads: usize,
) -> Result<PresetOutcome, CliError> {
    let p = preset(name).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown preset `{name}`; available: {}",
            crate::presets::PRESET_NAMES.join(", ")
        ))
    })?;
    let configs = expand(&p, base_seed.unwrap_or(p.config.seed));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let records: Vec<TrajectoryRecord> = pool.install(|| {
        configs
            .par_iter()
            .map(|c| engine::run(c).map_err(|e| CliError::Validation(e.to_string())))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut csv_paths = Vec::new();
    for (config, record) in configs.iter().zip(&records) {
        let stem = format!("{}-seed{}", p.name, config.seed);
        let hash = config_hash(config);
        let csv_path = out_dir.join(format!("{stem}.csv"));
        write_text(&csv_path, &trajectory_csv(record, &hash))?;
        write_text(
            &out_dir.join(format!("{stem}.summary.json")),
            &format!(
                "{}\n",
                serde_json::to_string_pretty(&run_summary_json(config, record, &hash))
                    .expect("serializable")
            ),
        )?;
        csv_paths.push(csv_path);
    }
    let aggregate_path = if configs.len() > 1 {
        let path = out_dir.join(format!("{}-aggregate.json", p.name));
        let value = aggregate_json(&p, &configs, &records);
        write_text(&path, &format!("{}\n", serde_json::to_string_pretty(&value).unwrap()))?;
        Some(path)
    } else {
        None
    };

    if let Some(diverged) = records.iter().find_map(|r| r.divergence) {
        return Err(CliError::Divergence(format!(
            "a run aborted at t = {} (agent {})",
            diverged.t, diverged.agent
        )));
    }
    Ok(PresetOutcome { records, csv_paths, aggregate_path })
}

/// `check-theory` verb.
pub fn cmd_check_theory(seed: u64, report_path: Option<&Path>) -> Result<bool, CliError> {
    let report = run_theory_checks(seed);
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable"));
    match report_path {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    for lemma in &report.lemmas {
        println!(
            "{}: {} (draws {}, max violation {:.3e})",
            lemma.name,
            if lemma.pass { "pass" } else { "FAIL" },
            lemma.draws,
            lemma.max_violation
        );
    }
    Ok(report.pass)
}

/// `fit-rate <csv>` verb: log-log slope of one column over a window.
pub fn cmd_fit_rate(
    csv_path: &Path,
    window: Option<(f64, f64)>,
    column: &str,
    out_path: Option<&Path>,
) -> Result<(), CliError> {
    let series = read_series_csv(csv_path, column)?;
    let window = window.unwrap_or_else(|| {
        let lo = series.first().map(|p| p.0).unwrap_or(1.0);
        let hi = series.last().map(|p| p.0).unwrap_or(1.0);
        (lo, hi)
    });
    let fit = fit_rate(&series, window).map_err(|e| CliError::Validation(e.to_string()))?;
    let csv = format!(
        "column,slope,intercept,window_lo,window_hi,residual,points\n{},{},{},{},{},{},{}\n",
        column,
        crate::output::format_f64(fit.slope),
        crate::output::format_f64(fit.intercept),
        fit.window.0,
        fit.window.1,
        crate::output::format_f64(fit.residual),
        fit.points
    );
    match out_path {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
