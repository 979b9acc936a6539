use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hsmsim::scenario::{check_unique_ids, CANNED};
use hsmsim::{
    canned_scenario, canned_suite, check_result, load_scenario, parse_override, run_suite, write_csv, Scenario,
    SimError, Status,
};

/// Run storage-access scenarios and write one CSV per scenario.
#[derive(Parser, Debug)]
#[command(name = "simulate", version)]
struct Args {
    /// Scenario file to run; repeatable.
    #[arg(long = "scenario", value_name = "FILE")]
    scenarios: Vec<PathBuf>,
    /// `all`, or a comma-separated list of canned scenario ids.
    #[arg(long)]
    suite: Option<String>,
    /// Directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Evaluate each scenario's expected-shape checks; exit 1 on violation.
    #[arg(long)]
    check: bool,
    /// List canned scenarios and exit.
    #[arg(long)]
    list: bool,
    /// Override a scenario key, e.g. `transfer.file_size=1e9` or `sweep.values=[1,2]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Scenarios to run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn gather(args: &Args) -> Result<Vec<Scenario>, SimError> {
    let overrides = args
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<Result<Vec<_>, _>>()?;
    let mut scenarios = Vec::new();
    match args.suite.as_deref() {
        None => {}
        Some("all") => scenarios.extend(canned_suite(&overrides)?),
        Some(list) => {
            for id in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                scenarios.push(canned_scenario(id, &overrides)?);
            }
        }
    }
    for path in &args.scenarios {
        scenarios.push(load_scenario(path, &overrides)?);
    }
    check_unique_ids(&scenarios)?;
    Ok(scenarios)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if args.list {
        for (id, _) in CANNED {
            let s = canned_scenario(id, &[]).expect("canned scenarios are valid");
            println!("{id:<16} {}", s.description);
        }
        return ExitCode::SUCCESS;
    }
    let scenarios = match gather(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if scenarios.is_empty() {
        log::warn!("empty suite: nothing to run");
        return ExitCode::SUCCESS;
    }
    let results = match run_suite(&scenarios, args.jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut failed = false;
    for (s, r) in scenarios.iter().zip(&results) {
        for note in &r.notes {
            log::warn!("{}: {note}", r.id);
        }
        match write_csv(&args.out, r) {
            Ok(path) => log::info!("wrote {}", path.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        if args.check {
            for c in check_result(r, s) {
                println!("{c}");
                failed |= c.status == Status::Fail;
            }
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
