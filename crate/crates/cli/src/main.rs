use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gk_core::scenario::{parse_scenario, run_scenario, Scenario, PIPELINES};
use gk_core::toric::BUILTIN_POTENTIALS;

#[derive(Parser)]
#[command(name = "gk-workbench", version, about = "Numeric checks of twisted generalized Kähler constructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print its report.
    Check(CheckArgs),
    /// List builtin symplectic potentials and pipelines.
    ListBuiltins,
}

#[derive(clap::Args)]
struct CheckArgs {
    scenario: PathBuf,
    /// Grid size and fiber count (toric) or a point budget N*M (flat charts).
    #[arg(long, value_name = "NxM", value_parser = parse_samples)]
    samples: Option<(usize, usize)>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "R")]
    tol_abs: Option<f64>,
    #[arg(long, value_name = "R")]
    tol_rel: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, value_enum)]
    strict_invariance: Option<Switch>,
    #[arg(long, value_enum)]
    end_to_end: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

fn parse_samples(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s.split_once(['x', 'X']).ok_or("expected NxM, e.g. 4x2")?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad N in `{s}`"))?;
    let m: usize = m.trim().parse().map_err(|_| format!("bad M in `{s}`"))?;
    if n == 0 || m == 0 {
        return Err("N and M must be positive".into());
    }
    Ok((n, m))
}

fn apply(args: &CheckArgs, s: &mut Scenario) {
    if let Some((n, m)) = args.samples {
        s.sampling.grid = n;
        s.sampling.fibers = m;
    }
    if let Some(seed) = args.seed {
        s.sampling.seed = seed;
    }
    if let Some(t) = args.tol_abs {
        s.tolerance.abs = t;
    }
    if let Some(t) = args.tol_rel {
        s.tolerance.rel = t;
    }
    if let Some(v) = args.strict_invariance {
        s.checks.strict_invariance = v.into();
    }
    if let Some(v) = args.end_to_end {
        s.checks.end_to_end = v.into();
    }
}

fn check(args: CheckArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    apply(&args, &mut scenario);
    let report = match catch_unwind(AssertUnwindSafe(|| run_scenario(&scenario))) {
        Ok(r) => r,
        Err(_) => {
            eprintln!("error: internal failure while running {}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let out = match args.format {
        Format::Text => report.to_text(),
        Format::Machine => report.to_machine() + "\n",
    };
    // a closed pipe (e.g. `| head`) is not an error of the run
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn list_builtins() -> ExitCode {
    println!("potentials:");
    for (name, params, desc) in BUILTIN_POTENTIALS {
        let params = if params.is_empty() { "-" } else { params };
        println!("  {name:<18} params: {params:<8} {desc}");
    }
    println!("pipelines:");
    for (name, desc) in PIPELINES {
        println!("  {name:<24} {desc}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Check(args) => check(args),
        Command::ListBuiltins => list_builtins(),
    }
}
