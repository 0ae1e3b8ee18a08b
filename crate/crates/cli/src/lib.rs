//! Command-line front end: configuration, assumption checks and the
//! subcommands of the `mfg` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod validate;

use clap::Parser;

use crate::commands::Cli;
use crate::error::{EXIT_FAILURE, EXIT_OK};

/// Parses `args`, runs the selected command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    }
    match commands::run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
