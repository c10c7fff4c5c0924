use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rpimon_cli::{execute, parse_config_with_overrides, CliError};

/// Continuous-measurement simulator: conditioned trajectories, master
/// equations and lattice restricted path integrals.
#[derive(Parser, Debug)]
#[command(name = "rpimon", version)]
struct Args {
    /// Run configuration (`key = value` lines, optional `[section]` headers).
    config: PathBuf,
    /// Override a configuration value, e.g. `--set monitor.kappa=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for ensemble sampling.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("rpimon: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(&CliError::Io(format!("{}: {e}", args.config.display()))),
    };
    let cfg = match parse_config_with_overrides(&text, &args.set) {
        Ok(c) => c,
        Err(errs) => return fail(&CliError::Config(format!("{}\n{errs}", args.config.display()))),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return fail(&CliError::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return fail(&CliError::Io(format!("thread pool: {e}"))),
    };
    match pool.install(|| execute(&cfg, args.out.as_deref())) {
        Ok((result, paths)) => {
            for line in &result.summary {
                println!("{line}");
            }
            for p in &paths {
                println!("wrote {}", p.display());
            }
            if result.failed {
                eprintln!("rpimon: some checks failed");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
