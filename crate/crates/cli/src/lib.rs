//! The `gaugekit` command-line tool.

pub mod args;
pub mod commands;
pub mod config;
pub mod export;

use std::ffi::OsString;

use clap::Parser;

use args::Cli;
use config::RunConfig;
use gaugekit::{Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Caps the rayon pool at `GAUGEKIT_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GAUGEKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("GAUGEKIT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

/// Combines `--config` (if any) with the explicit flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let (flags, path) = cli.group.to_config();
    let Some(path) = path else {
        return Ok(flags);
    };
    let mut cfg = RunConfig::load(&path)?;
    if cfg.command != flags.command {
        return Err(Error::Config(format!(
            "config `{}` is for `{}`, not `{}`",
            path.display(),
            cfg.command,
            flags.command
        )));
    }
    cfg.overlay(&flags);
    Ok(cfg)
}

fn exit_for(e: &Error) -> u8 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_INVALID
    }
}

/// Parses `argv`, runs the command and maps the result onto an exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = configure_threads().and_then(|_| resolve(&cli)).and_then(|cfg| commands::execute(&cfg));
    match outcome {
        Ok(o) => {
            print!("{}", o.report.to_text());
            for a in &o.artifacts {
                eprintln!("wrote {}", a.display());
            }
            if o.report.passed() {
                EXIT_OK
            } else {
                let failed: Vec<&str> = o.report.verdicts.iter().filter(|v| !v.1).map(|v| v.0.as_str()).collect();
                eprintln!("error: tolerance check failed: {}", failed.join(", "));
                EXIT_NUMERIC
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
