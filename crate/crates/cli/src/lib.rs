//! Command-line front end for the `regforge` library, plus the study server.

pub mod cli;
pub mod commands;
pub mod config;
pub mod server;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::cli::Cli;
use crate::commands::Ctx;
use crate::config::Config;

/// Exit code for usage errors.
pub const EXIT_USAGE: i32 = 2;

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|cause| cause.downcast_ref::<regforge::Error>())
        .map_or("error", regforge::Error::kind)
}

fn report_error(json: bool, kind: &str, message: &str) {
    let mut stderr = std::io::stderr().lock();
    if json {
        let body = serde_json::json!({ "error": kind, "message": message });
        let _ = writeln!(stderr, "{body}");
    } else {
        let _ = writeln!(stderr, "error: {message}");
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_errors = args.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) if json_errors => {
            report_error(true, "usage", e.to_string().trim());
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(cli.json_errors, error_kind(&e), &format!("{e:#}"));
            1
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    config.apply_env()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let ctx = Ctx {
        config,
        dry_run: cli.dry_run,
    };
    commands::dispatch(&ctx, &cli.command)
}
