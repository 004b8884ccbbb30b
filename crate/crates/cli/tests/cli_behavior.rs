//! File-level behavior of the orchestration layer: outputs, hashes,
//! round trips, and determinism across worker counts.

use std::fs;
use std::path::PathBuf;

use dimix_cli::commands::{cmd_fit_rate, cmd_preset, parse_config, run_single};
use dimix_cli::output::{config_hash, read_series_csv};
use dimix_cli::presets::{expand, preset};

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dimix-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const TOY: &str = r#"{
    "agents": 4,
    "loss": {"kind": "quadratic_toy", "n_points": 200, "dim": 6},
    "topology": {"kind": "cycle_fixed"},
    "horizon": 500,
    "record_every": 5
}"#;

#[test]
fn config_round_trip_through_emission() {
    let config = parse_config(TOY).unwrap();
    let emitted = serde_json::to_string_pretty(&config).unwrap();
    let back = parse_config(&emitted).unwrap();
    assert_eq!(back, config);
    assert_eq!(config_hash(&back), config_hash(&config));
}

#[test]
fn single_run_writes_csv_and_summary() {
    let dir = temp_dir("single");
    let config = parse_config(TOY).unwrap();
    let (record, csv_path) = run_single(&config, &dir, "toy").unwrap();
    assert!(record.divergence.is_none());
    let csv = fs::read_to_string(&csv_path).unwrap();
    let hash = config_hash(&config);
    assert!(csv.starts_with(&format!("# config_hash={hash}\n")));
    assert!(csv.lines().nth(1).unwrap().starts_with("t,net_variance,"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("toy.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], serde_json::json!(hash));
    assert_eq!(summary["diverged"], serde_json::json!(false));
    assert_eq!(summary["config"]["agents"], serde_json::json!(4));
    // Re-running the same config is byte-identical.
    let (_, csv2) = run_single(&config, &dir, "toy2").unwrap();
    assert_eq!(fs::read(&csv_path).unwrap(), fs::read(&csv2).unwrap());
}

#[test]
fn sweep_writes_per_seed_files_and_aggregate() {
    let dir = temp_dir("sweep");
    let outcome = cmd_preset("rate-smoke", Some(100), &dir, 2).unwrap();
    assert_eq!(outcome.csv_paths.len(), 5);
    for seed in 100..105 {
        assert!(dir.join(format!("rate-smoke-seed{seed}.csv")).exists());
        assert!(dir.join(format!("rate-smoke-seed{seed}.summary.json")).exists());
    }
    let agg_path = outcome.aggregate_path.unwrap();
    let agg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&agg_path).unwrap()).unwrap();
    assert_eq!(agg["seed_count"], serde_json::json!(5));
    // Aggregate references each constituent run hash.
    let p = preset("rate-smoke").unwrap();
    let configs = expand(&p, 100);
    for (i, c) in configs.iter().enumerate() {
        assert_eq!(agg["runs"][i]["config_hash"], serde_json::json!(config_hash(c)));
    }
    // Mean gradient-norm series present (dense recording is on).
    assert!(agg["m1"].as_array().unwrap().len() >= 10);
}

#[test]
fn fit_rate_command_round_trip() {
    let dir = temp_dir("fit");
    // Synthesize a trajectory csv with a known power law in one column.
    let mut csv = String::from("# config_hash=0000000000000000\nt,net_variance,f_at_mean\n");
    for t in 1..=300u64 {
        let v = 5.0 * (t as f64).powf(-0.75);
        csv.push_str(&format!("{t},{v:.16e},{:.16e}\n", 1.0));
    }
    let path = dir.join("synth.csv");
    fs::write(&path, csv).unwrap();
    let out = dir.join("fit.csv");
    cmd_fit_rate(&path, Some((10.0, 300.0)), "net_variance", Some(&out)).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let data_line = text.lines().nth(1).unwrap();
    let slope: f64 = data_line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((slope + 0.75).abs() < 1e-10, "slope {slope}");

    let series = read_series_csv(&path, "f_at_mean").unwrap();
    assert_eq!(series.len(), 300);
    assert!(read_series_csv(&path, "missing").is_err());
}

#[test]
fn sweeps_are_identical_across_worker_counts() {
    let dir1 = temp_dir("workers1");
    let dir4 = temp_dir("workers4");
    cmd_preset("rate-smoke", None, &dir1, 1).unwrap();
    cmd_preset("rate-smoke", None, &dir4, 4).unwrap();
    for seed in 0..5 {
        let a = fs::read(dir1.join(format!("rate-smoke-seed{seed}.csv"))).unwrap();
        let b = fs::read(dir4.join(format!("rate-smoke-seed{seed}.csv"))).unwrap();
        assert_eq!(a, b, "seed {seed} differs across worker counts");
    }
    let a = fs::read(dir1.join("rate-smoke-aggregate.json")).unwrap();
    let b = fs::read(dir4.join("rate-smoke-aggregate.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn divergence_maps_to_partial_outputs() {
    let dir = temp_dir("diverge");
    let config = parse_config(
        r#"{
            "agents": 2,
            "loss": {"kind": "quadratic_toy", "n_points": 20, "dim": 4, "condition": 10000.0},
            "topology": {"kind": "cyclic_gossip"},
            "channel": {"kind": "gaussian", "zeta": 1.0},
            "schedule": {"mode": "fixed", "alpha": 0.99, "beta": 0.99},
            "horizon": 200000,
            "init": {"kind": "uniform", "scale": 1.0},
            "seed": 1
        }"#,
    )
    .unwrap();
    let (record, csv_path) = run_single(&config, &dir, "boom").unwrap();
    assert!(record.divergence.is_some());
    // Partial outputs retained and flagged.
    assert!(csv_path.exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("boom.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["diverged"], serde_json::json!(true));
    assert!(summary["divergence"]["t"].as_u64().unwrap() > 1);
}
