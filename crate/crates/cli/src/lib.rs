//! Operator surface: the `mimi` subcommands and the live session server.

pub mod commands;
pub mod session;
pub mod wire;

use clap::Parser;

pub use commands::{Cli, Commands};
pub use session::{default_bind, Server, SessionConfig, SessionReport, BIND_ENV, CLIENT_TIMEOUT, DEFAULT_BIND, TICK_HZ};
pub use wire::{MessageKind, WireMessage};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Parses `args` and runs the subcommand. Returns the process exit code:
/// 0 on success, 2 on a usage error, 1 on any other failure.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
