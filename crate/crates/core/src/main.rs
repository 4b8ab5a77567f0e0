use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ahmpc::cli::{self, parse_config};

#[derive(Parser)]
#[command(
    name = "ahmpc",
    version,
    about = "Adaptive-horizon MPC experiment runner"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a configured experiment and write the CSV log and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to $AHMPC_OUT, then the working directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the number of plant steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the grid-oracle property suite on the built-in instances.
    Check,
}

fn run(config: PathBuf, out_dir: Option<PathBuf>, steps: Option<usize>) -> Result<bool, String> {
    let text = fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", config.display()))?;
    if let Some(steps) = steps {
        if steps == 0 {
            return Err("--steps must be at least 1".into());
        }
        cfg.steps = steps;
    }
    let out_dir = out_dir
        .or_else(|| env::var_os("AHMPC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let summary = cli::run_experiment(&cfg, &out_dir).map_err(|e| e.to_string())?;
    let log = &summary.log;
    println!(
        "{} plant steps, {} decisions, final |x| = {:.3e}",
        log.plant_steps(),
        log.records.len(),
        log.final_state.norm()
    );
    for path in [&summary.csv, &summary.angles, &summary.horizon] {
        println!("wrote {}", path.display());
    }
    for d in &summary.diagnostics {
        eprintln!("stabilization failure: {d}");
    }
    Ok(summary.diagnostics.is_empty())
}

fn check() -> Result<bool, String> {
    let reports = cli::check_builtin().map_err(|e| e.to_string())?;
    let mut ok = true;
    for r in &reports {
        println!(
            "{:<16} {} nested={} mismatches={} decrement={}/{} descent_violations={}/{}",
            r.instance,
            if r.passed() { "PASS" } else { "FAIL" },
            r.nested,
            r.agreement_mismatches,
            r.decrement_holds,
            r.trajectories,
            r.descent_violations,
            r.descent_steps
        );
        for x in &r.decrement_exceptions {
            println!("  decrement exception at {:?}", x.as_slice());
        }
        ok &= r.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run {
            config,
            out_dir,
            steps,
        } => run(config, out_dir, steps),
        Command::Check => check(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
