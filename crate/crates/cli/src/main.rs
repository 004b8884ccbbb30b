use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dimix_cli::commands::{cmd_check_theory, cmd_fit_rate, cmd_preset, cmd_run};
use dimix_cli::presets::PRESET_NAMES;
use dimix_cli::CliError;

const USAGE: &str = "\
dimix - two time-scale decentralized gradient descent simulator

USAGE:
    dimix run <config.json> [--out DIR]
    dimix preset <name> [--seed K] [--out DIR] [--threads N]
    dimix preset --list
    dimix check-theory [--seed K] [--report PATH]
    dimix fit-rate <trajectory.csv> [--window A,B] [--column NAME] [--out PATH]

Exit codes: 0 success, 1 validation or check failure, 2 divergence, 3 I/O.
";

struct Args {
    positional: Vec<String>,
    flags: std::collections::BTreeMap<String, String>,
    switches: Vec<String>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut positional = Vec::new();
    let mut flags = std::collections::BTreeMap::new();
    let mut switches = Vec::new();
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            match name {
                "list" | "help" => switches.push(name.to_string()),
                "seed" | "out" | "report" | "window" | "column" | "threads" => {
                    let value = it.next().ok_or_else(|| format!("--{name} needs a value"))?;
                    flags.insert(name.to_string(), value.clone());
                }
                other => return Err(format!("unknown flag --{other}")),
            }
        } else {
            positional.push(arg.clone());
        }
    }
    Ok(Args { positional, flags, switches })
}

fn dispatch(argv: &[String]) -> Result<(), CliError> {
    let args = parse_args(argv).map_err(CliError::Validation)?;
    if args.switches.contains(&"help".to_string()) || args.positional.is_empty() {
        print!("{USAGE}");
        return if args.positional.is_empty() && args.switches.is_empty() {
            Err(CliError::Validation("missing verb".into()))
        } else {
            Ok(())
        };
    }
    let out_dir = args
        .flags
        .get("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = args
        .flags
        .get("seed")
        .map(|s| s.parse::<u64>().map_err(|e| CliError::Validation(format!("--seed: {e}"))))
        .transpose()?;

    match args.positional[0].as_str() {
        "run" => {
            let config = args
                .positional
                .get(1)
                .ok_or_else(|| CliError::Validation("run needs a config path".into()))?;
            cmd_run(Path::new(config), &out_dir)
        }
        "preset" => {
            if args.switches.contains(&"list".to_string()) {
                for name in PRESET_NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let name = args
                .positional
                .get(1)
                .ok_or_else(|| CliError::Validation("preset needs a name (or --list)".into()))?;
            let threads = args
                .flags
                .get("threads")
                .map(|s| {
                    s.parse::<usize>().map_err(|e| CliError::Validation(format!("--threads: {e}")))
                })
                .transpose()?
                .unwrap_or(0);
            let outcome = cmd_preset(name, seed, &out_dir, threads)?;
            for path in &outcome.csv_paths {
                println!("wrote {}", path.display());
            }
            if let Some(agg) = &outcome.aggregate_path {
                println!("wrote {}", agg.display());
            }
            Ok(())
        }
        "check-theory" => {
            let report = args.flags.get("report").map(PathBuf::from);
            let pass = cmd_check_theory(seed.unwrap_or(0), report.as_deref())?;
            if pass {
                Ok(())
            } else {
                Err(CliError::Validation("theory checks failed".into()))
            }
        }
        "fit-rate" => {
            let csv = args
                .positional
                .get(1)
                .ok_or_else(|| CliError::Validation("fit-rate needs a csv path".into()))?;
            let window = args
                .flags
                .get("window")
                .map(|w| -> Result<(f64, f64), CliError> {
                    let (a, b) = w
                        .split_once(',')
                        .ok_or_else(|| CliError::Validation("--window wants A,B".into()))?;
                    let lo =
                        a.trim().parse().map_err(|e| CliError::Validation(format!("--window: {e}")))?;
                    let hi =
                        b.trim().parse().map_err(|e| CliError::Validation(format!("--window: {e}")))?;
                    Ok((lo, hi))
                })
                .transpose()?;
            let column = args.flags.get("column").map(String::as_str).unwrap_or("net_variance");
            let out = args.flags.get("out").map(PathBuf::from);
            cmd_fit_rate(Path::new(csv), window, column, out.as_deref())
        }
        other => Err(CliError::Validation(format!("unknown verb `{other}`"))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
