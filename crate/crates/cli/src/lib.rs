//! Command-line front end for the reconstruction library: file formats,
//! run manifests, and the subcommands behind the `cassi` binary.

pub mod args;
pub mod cie;
pub mod commands;
pub mod digest;
pub mod error;
pub mod manifest;
pub mod scube;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::Path;

use clap::Parser;

use crate::args::{Cli, Command};
pub use crate::error::{exit, CliError, Result};

pub const THREADS_ENV: &str = "SCI_RECON_THREADS";

/// Writes `bytes` to `path`, creating parent directories. Without `force`
/// an existing file is an error and is left untouched.
pub fn write_output(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    let werr = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(werr)?;
    }
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut f = opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            CliError::Exists(path.to_path_buf())
        } else {
            werr(e)
        }
    })?;
    f.write_all(bytes).map_err(werr)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Render(a) => commands::render(a),
        Command::Replay(a) => commands::replay(a),
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match configure_threads().and_then(|()| dispatch(&cli.command)) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
